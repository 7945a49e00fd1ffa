//! Task execution. Every task writes its files into the output directory
//! and returns their paths; nothing depends on wall-clock time or thread
//! scheduling, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use patchtooth::assembly::{
    assemble_patch_1d, assemble_patch_1d_unchecked, assemble_patch_2d, assemble_patch_2d_unchecked,
    assemble_wave,
};
use patchtooth::geometry::ratio_for_spacing;
use patchtooth::homogenize::{
    extract_coefficients, predict_macroscale_eigenvalues, slow_branch_csv,
};
use patchtooth::microscale::{full_lattice_spectrum_1d, full_lattice_spectrum_2d};
use patchtooth::spectra::{eigen_general, eigen_symmetric, error_table, wave_spectrum};
use patchtooth::timestep::{
    conserved_mass, evolve_exact, evolve_rk4_at, stability_limit, wave_energy, MassReport,
};
use patchtooth::{
    AssembledOperator, CouplingSpec, DiffusivityProfile1D, PatchError, PatchGrid1D, PatchGrid2D,
    SpectrumReport, SymmetryReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    Geometry, MatrixFormat, Method, Model, Prepared, Reference, RunConfig, SweepAxis, SweepOptions,
    Task,
};

/// Environment variable bounding the sweep worker pool.
pub const WORKERS_ENV: &str = "PATCHTOOTH_WORKERS";

struct Built {
    op: AssembledOperator,
    /// For the wave model: the diffusion part `A` and damping part `B`.
    wave_parts: Option<(AssembledOperator, AssembledOperator)>,
}

fn build(
    config: &RunConfig,
    geometry: &Geometry,
    couplings: (CouplingSpec, CouplingSpec),
) -> patchtooth::Result<Built> {
    let checked = !config.allow_incompatible;
    match geometry {
        Geometry::One(grid, profile) => {
            let one = |prof: &DiffusivityProfile1D| {
                if checked {
                    assemble_patch_1d(grid, prof, couplings.0, config.ensemble)
                } else {
                    assemble_patch_1d_unchecked(grid, prof, couplings.0, config.ensemble)
                }
            };
            let a = one(profile)?;
            if config.model == Model::Wave1d {
                let unit = DiffusivityProfile1D::new(vec![1.0; profile.period()])?;
                let b = one(&unit)?;
                let op = assemble_wave(&a, &b, config.damping)?;
                Ok(Built {
                    op,
                    wave_parts: Some((a, b)),
                })
            } else {
                Ok(Built {
                    op: a,
                    wave_parts: None,
                })
            }
        }
        Geometry::Two(grid, profile) => {
            let op = if checked {
                assemble_patch_2d(grid, profile, couplings, config.ensemble)?
            } else {
                assemble_patch_2d_unchecked(grid, profile, couplings, config.ensemble)?
            };
            Ok(Built {
                op,
                wave_parts: None,
            })
        }
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

pub fn run(prepared: &Prepared, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut out = Output {
        dir: out_dir.to_path_buf(),
        written: Vec::new(),
    };
    let config = &prepared.config;
    match config.task {
        Task::Eigen => eigen(prepared, &mut out)?,
        Task::Simulate => simulate(prepared, &mut out)?,
        Task::Homogenize => homogenize(prepared, &mut out)?,
        Task::Sweep => sweep(prepared, &mut out)?,
        Task::Check => check(prepared, &mut out)?,
    }
    Ok(out.written)
}

fn dumps(config: &RunConfig, built: &Built, out: &mut Output) -> Result<()> {
    match config.output.matrix {
        MatrixFormat::None => {}
        MatrixFormat::Csv => out.write("operator.csv", built.op.to_csv())?,
        MatrixFormat::Binary => {
            let mut bytes = Vec::new();
            built.op.write_binary(&mut bytes)?;
            out.write("operator.bin", bytes)?;
        }
    }
    if config.output.weights {
        let weights = match &built.wave_parts {
            Some((a, _)) => a.weights(),
            None => built.op.weights(),
        };
        match weights {
            [one] => out.write("weights.csv", one.to_csv())?,
            [x, y] => {
                out.write("weights_x.csv", x.to_csv())?;
                out.write("weights_y.csv", y.to_csv())?;
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct WaveSummary {
    dimension: usize,
    damping: f64,
    max_real_part: f64,
    max_abs_imag_part: f64,
}

fn eigen(p: &Prepared, out: &mut Output) -> Result<()> {
    let config = &p.config;
    let built = build(config, &p.geometry, config.couplings())?;
    dumps(config, &built, out)?;
    if let Some((a, b)) = &built.wave_parts {
        let spectrum = wave_spectrum(a, b, config.damping)?;
        out.write(
            "eigenvalues.csv",
            limit_rows(&spectrum.to_csv(), config.eigen.rows),
        )?;
        out.write(
            "summary.json",
            json(&WaveSummary {
                dimension: spectrum.eigenvalues.len(),
                damping: config.damping,
                max_real_part: spectrum.max_real_part(),
                max_abs_imag_part: spectrum.max_abs_imag_part(),
            }),
        )?;
        return Ok(());
    }
    let report = eigen_symmetric(&built.op)?;
    out.write(
        "eigenvalues.csv",
        limit_rows(&report.to_csv(), config.eigen.rows),
    )?;
    let mut summary = report.summary_json();
    summary.push('\n');
    out.write("summary.json", summary)
}

fn limit_rows(csv: &str, rows: Option<usize>) -> String {
    match rows {
        None => csv.to_string(),
        Some(k) => csv.lines().take(k + 1).map(|l| format!("{l}\n")).collect(),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    method: Method,
    dt: Option<f64>,
    snapshots: usize,
    mass_drift: f64,
    relative_mass_drift: f64,
    /// `-uᵀAu + vᵀv` per snapshot, wave model only.
    energy: Option<Vec<f64>>,
}

fn simulate(p: &Prepared, out: &mut Output) -> Result<()> {
    let config = &p.config;
    let opts = config.simulate.as_ref().expect("validated");
    let built = build(config, &p.geometry, config.couplings())?;
    dumps(config, &built, out)?;
    let u0 = opts.initial.sample(built.op.layout());
    let method = opts.method.unwrap_or(if config.model == Model::Wave1d {
        Method::Rk4
    } else {
        Method::Exact
    });
    let (traj, dt) = match method {
        Method::Exact => (evolve_exact(&built.op, &u0, &opts.times)?, None),
        Method::Rk4 => {
            let dt = opts.dt.unwrap_or_else(|| 0.5 * stability_limit(&built.op));
            (evolve_rk4_at(&built.op, &u0, &opts.times, dt)?, Some(dt))
        }
    };
    out.write("trajectory.csv", traj.to_csv(built.op.layout()))?;
    let MassReport {
        drift,
        relative_drift,
        ..
    } = conserved_mass(&traj);
    let energy = built.wave_parts.as_ref().map(|(a, _)| {
        traj.states
            .iter()
            .map(|s| wave_energy(a.matrix(), s))
            .collect()
    });
    out.write(
        "summary.json",
        json(&SimulateSummary {
            method,
            dt,
            snapshots: traj.times.len(),
            mass_drift: drift,
            relative_mass_drift: relative_drift,
            energy,
        }),
    )
}

#[derive(Serialize)]
struct Prediction {
    q: f64,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct HomogenizeSummary {
    #[serde(rename = "K2")]
    k2: f64,
    #[serde(rename = "K4")]
    k4: f64,
    beta: f64,
    d: f64,
    fit_residual: f64,
    predictions: Vec<Prediction>,
}

fn homogenize(p: &Prepared, out: &mut Output) -> Result<()> {
    let config = &p.config;
    let Geometry::One(grid, profile) = &p.geometry else {
        unreachable!("validation restricts homogenize to 1D");
    };
    let c = extract_coefficients(profile, grid.spacing())?;
    let qs = config.homogenize.wavenumbers.clone().unwrap_or_else(|| {
        let unit = 2.0 * std::f64::consts::PI / grid.length();
        (1..=(grid.patches().saturating_sub(1) / 2))
            .map(|k| k as f64 * unit)
            .collect()
    });
    let predictions = qs
        .iter()
        .zip(predict_macroscale_eigenvalues(&c, &qs))
        .map(|(&q, eigenvalue)| Prediction { q, eigenvalue })
        .collect();
    out.write(
        "homogenized.json",
        json(&HomogenizeSummary {
            k2: c.k2,
            k4: c.k4,
            beta: c.beta,
            d: c.d,
            fit_residual: c.fit_residual,
            predictions,
        }),
    )?;
    if !config.homogenize.samples.is_empty() {
        out.write(
            "slow_branch.csv",
            slow_branch_csv(profile, &config.homogenize.samples)?,
        )?;
    }
    Ok(())
}

// One sweep point: the varied grid/coupling, ready to assemble.
fn sweep_point(
    config: &RunConfig,
    base: &Geometry,
    s: &SweepOptions,
    value: f64,
) -> patchtooth::Result<(Geometry, (CouplingSpec, CouplingSpec))> {
    let mut couplings = config.couplings();
    let vary = |g: &PatchGrid1D| -> patchtooth::Result<PatchGrid1D> {
        let (mut n_patches, mut points, mut r) = (g.patches(), g.points(), g.ratio());
        match s.axis {
            SweepAxis::Patches => n_patches = value as usize,
            SweepAxis::Points => points = value as usize,
            SweepAxis::Ratio => r = value,
            SweepAxis::Order => {}
        }
        if let Some(d) = s.spacing {
            r = ratio_for_spacing(g.length(), n_patches, points, d);
        }
        PatchGrid1D::new(g.length(), n_patches, points, r)
    };
    if s.axis == SweepAxis::Order {
        let order = value as usize;
        couplings = (
            CouplingSpec::Lagrangian { order },
            CouplingSpec::Lagrangian { order },
        );
    }
    let geometry = match base {
        Geometry::One(g, prof) => Geometry::One(vary(g)?, prof.clone()),
        Geometry::Two(g, prof) => {
            Geometry::Two(PatchGrid2D::new(vary(&g.x)?, vary(&g.y)?), prof.clone())
        }
    };
    Ok((geometry, couplings))
}

fn lattice_reference(geometry: &Geometry, count: usize) -> patchtooth::Result<SpectrumReport> {
    let points = |g: &PatchGrid1D, p: usize| -> patchtooth::Result<usize> {
        match g.points_per_spacing() {
            Some(q) if q % p == 0 => Ok(q * g.patches()),
            _ => Err(PatchError::Incompatible(format!(
                "H/d = {} is not an integer multiple of the period {p}; no full-lattice reference",
                g.macro_spacing() / g.spacing()
            ))),
        }
    };
    let values = match geometry {
        Geometry::One(g, prof) => {
            full_lattice_spectrum_1d(prof, points(g, prof.period())?, g.spacing())?
        }
        Geometry::Two(g, prof) => {
            let (px, py) = prof.periods();
            full_lattice_spectrum_2d(
                prof,
                (points(&g.x, px)?, points(&g.y, py)?),
                (g.x.spacing(), g.y.spacing()),
            )?
        }
    };
    Ok(SpectrumReport::from_values(values, count))
}

struct SweepRow {
    index: usize,
    value: f64,
    patches: String,
    points: String,
    ratio: String,
    table: patchtooth::ErrorTable,
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n| *n > 0)
}

fn sweep(p: &Prepared, out: &mut Output) -> Result<()> {
    let config = &p.config;
    let s = config.sweep.as_ref().expect("validated");
    let point = |(index, &value): (usize, &f64)| -> patchtooth::Result<SweepRow> {
        let (geometry, couplings) = sweep_point(config, &p.geometry, s, value)?;
        let test = eigen_symmetric(&build(config, &geometry, couplings)?.op)?;
        let reference = match s.reference {
            Reference::Spectral => eigen_symmetric(
                &build(
                    config,
                    &geometry,
                    (CouplingSpec::Spectral, CouplingSpec::Spectral),
                )?
                .op,
            )?,
            Reference::Lattice => lattice_reference(&geometry, test.macro_count)?,
        };
        let table = error_table(&test, &reference, s.modes)?;
        let axis = |f: &dyn Fn(&PatchGrid1D) -> String| match &geometry {
            Geometry::One(g, _) => f(g),
            Geometry::Two(g, _) => format!("{}x{}", f(&g.x), f(&g.y)),
        };
        Ok(SweepRow {
            index,
            value,
            patches: axis(&|g| g.patches().to_string()),
            points: axis(&|g| g.points().to_string()),
            ratio: axis(&|g| format!("{:.17e}", g.ratio())),
            table,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting the sweep worker pool")?;
    // collect keeps input order, so the merge is by sweep index
    let rows: Vec<patchtooth::Result<SweepRow>> =
        pool.install(|| s.values.par_iter().enumerate().map(point).collect());
    let axis_name = match s.axis {
        SweepAxis::Order => "order",
        SweepAxis::Patches => "patches",
        SweepAxis::Points => "points",
        SweepAxis::Ratio => "ratio",
    };
    let mut csv = format!("index,{axis_name},N,n,r,mode,test,reference,relative_error\n");
    for row in rows {
        let row = row?;
        for e in &row.table.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{:.17e},{:.17e},{:.17e}\n",
                row.index,
                row.value,
                row.patches,
                row.points,
                row.ratio,
                e.mode,
                e.test,
                e.reference,
                e.relative_error
            ));
        }
    }
    out.write("sweep.csv", csv)
}

#[derive(Serialize)]
struct Consistency {
    reference: &'static str,
    lattice_points: Vec<usize>,
    compared_modes: usize,
    worst_relative_difference: f64,
}

#[derive(Serialize)]
struct CheckReport {
    dimension: usize,
    symmetry: SymmetryReport,
    kernel_defect: f64,
    symmetric_path: bool,
    macro_count: Option<usize>,
    gap_ratio: Option<f64>,
    zero_mode_magnitude: Option<f64>,
    max_eigenvalue: Option<f64>,
    /// Largest real part of the (possibly complex) spectrum; for the wave
    /// model, of the full first-order system.
    max_real_part: f64,
    consistency: Option<Consistency>,
    consistency_skipped: Option<String>,
    warnings: Vec<String>,
}

fn check(p: &Prepared, out: &mut Output) -> Result<()> {
    let config = &p.config;
    let built = build(config, &p.geometry, config.couplings())?;
    dumps(config, &built, out)?;
    let diffusion = built.wave_parts.as_ref().map_or(&built.op, |(a, _)| a);
    let symmetry = diffusion.symmetry_defect();
    let spectrum = eigen_symmetric(diffusion).ok();
    let max_real_part = match &built.wave_parts {
        Some((a, b)) => wave_spectrum(a, b, config.damping)?.max_real_part(),
        None => match &spectrum {
            Some(s) => s.max_eigenvalue(),
            None => eigen_general(diffusion).max_real_part(),
        },
    };
    let (consistency, consistency_skipped) =
        match (&spectrum, consistency_check(config, &p.geometry)) {
            (None, _) => (None, Some("operator is not symmetric".to_string())),
            (Some(_), Err(reason)) => (None, Some(reason)),
            (Some(s), Ok(points)) => {
                let reference = lattice_reference(&p.geometry, s.macro_count)?;
                let test = s.macro_modes();
                let refs = reference.macro_modes();
                // the zero mode is measured against the first nonzero eigenvalue
                let floor = refs.get(1).map_or(1.0, |v| v.abs());
                let worst = test
                    .iter()
                    .zip(refs)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
                    .fold(0.0, f64::max);
                (
                    Some(Consistency {
                        reference: "full lattice",
                        lattice_points: points,
                        compared_modes: test.len(),
                        worst_relative_difference: worst,
                    }),
                    None,
                )
            }
        };
    let report = CheckReport {
        dimension: diffusion.dimension(),
        symmetry,
        kernel_defect: diffusion.kernel_defect(),
        symmetric_path: spectrum.is_some(),
        macro_count: spectrum.as_ref().map(|s| s.macro_count),
        gap_ratio: spectrum
            .as_ref()
            .and_then(|s| s.gap_ratio.is_finite().then_some(s.gap_ratio)),
        zero_mode_magnitude: spectrum.as_ref().map(|s| s.zero_mode_magnitude),
        max_eigenvalue: spectrum.as_ref().map(|s| s.max_eigenvalue()),
        max_real_part,
        consistency,
        consistency_skipped,
        warnings: p.warnings.iter().map(|w| w.to_string()).collect(),
    };
    out.write("check.json", json(&report))
}

// Lattice sizes when the macroscale modes should reproduce the full
// lattice exactly: spectral coupling, one phase, and H/d a multiple of p.
fn consistency_check(
    config: &RunConfig,
    geometry: &Geometry,
) -> std::result::Result<Vec<usize>, String> {
    let (cx, cy) = config.couplings();
    if cx != CouplingSpec::Spectral
        || (matches!(geometry, Geometry::Two(..)) && cy != CouplingSpec::Spectral)
    {
        return Err("needs spectral coupling".into());
    }
    if config.ensemble {
        return Err("ensemble macroscale modes repeat per decoupled chain".into());
    }
    let axis = |g: &PatchGrid1D, p: usize| match g.points_per_spacing() {
        Some(q) if q % p == 0 && g.points().is_multiple_of(p) => Ok(q * g.patches()),
        _ => Err(format!("H/d is not an integer multiple of the period {p}")),
    };
    match geometry {
        Geometry::One(g, prof) => Ok(vec![axis(g, prof.period())?]),
        Geometry::Two(g, prof) => {
            let (px, py) = prof.periods();
            Ok(vec![axis(&g.x, px)?, axis(&g.y, py)?])
        }
    }
}

/// Exit status for a failed run: configuration problems that only show up
/// while running count as validation failures, everything else as a
/// numerical precondition failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PatchError>() {
        Some(PatchError::InvalidParameter { .. })
        | Some(PatchError::PeriodMismatch { .. })
        | Some(PatchError::DimensionMismatch { .. })
        | Some(PatchError::Incompatible(_)) => 1,
        _ => 2,
    }
}
