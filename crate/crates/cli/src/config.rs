//! Run configuration: one JSON file per run. The accepted shape is
//! published as `docs/config.schema.json`; [`RunConfig::parse`] enforces it
//! and then checks every numeric bound, reporting each problem against its
//! dotted field path.

use patchtooth::geometry::{validate_compatibility, validate_compatibility_2d};
use patchtooth::microscale::{random_lognormal_profile, random_lognormal_profile_2d};
use patchtooth::timestep::InitialCondition;
use patchtooth::{
    CouplingSpec, Diagnostic, DiffusivityProfile1D, DiffusivityProfile2D, PatchGrid1D, PatchGrid2D,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Diffusion1d,
    Diffusion2d,
    Wave1d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Eigen,
    Simulate,
    Homogenize,
    Sweep,
    Check,
}

/// A scalar, or one value per axis in 2D. A scalar in 2D applies to both.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Two([T; 2]),
}

impl<T: Copy> Axis<T> {
    fn pair(self) -> [T; 2] {
        match self {
            Axis::One(v) => [v, v],
            Axis::Two(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub length: Axis<f64>,
    #[serde(rename = "N")]
    pub patches: Axis<usize>,
    pub n: Axis<usize>,
    pub r: Axis<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalConfig {
    pub p: Axis<usize>,
    pub sigma: f64,
    pub seed: u64,
}

/// Exactly one of the three forms: `{period, values}`, `{periods, kx, ky}`
/// or `{lognormal}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub period: Option<usize>,
    pub values: Option<Vec<f64>>,
    pub periods: Option<[usize; 2]>,
    pub kx: Option<Vec<Vec<f64>>>,
    pub ky: Option<Vec<Vec<f64>>>,
    pub lognormal: Option<LognormalConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    /// Only the first `rows` eigenvalues by magnitude go to the CSV.
    pub rows: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    pub times: Vec<f64>,
    pub initial: InitialCondition,
    /// Defaults to `exact` for diffusion and `rk4` for the wave model.
    pub method: Option<Method>,
    /// Largest RK4 step; half the stability limit when absent.
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeOptions {
    /// Grid-scaled wavenumbers at which the slow branch is written to CSV.
    #[serde(default)]
    pub samples: Vec<f64>,
    /// Physical wavenumbers for eigenvalue predictions; `1..=(N-1)/2` when
    /// absent.
    pub wavenumbers: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Order,
    Patches,
    Points,
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Spectral,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_reference")]
    pub reference: Reference,
    /// Holds the microscale spacing fixed: each point solves for `r`.
    pub spacing: Option<f64>,
}

fn default_modes() -> usize {
    5
}

fn default_reference() -> Reference {
    Reference::Spectral
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    None,
    Csv,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_matrix")]
    pub matrix: MatrixFormat,
    #[serde(default)]
    pub weights: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            matrix: default_matrix(),
            weights: false,
        }
    }
}

fn default_dir() -> String {
    "patchtooth-out".into()
}

fn default_matrix() -> MatrixFormat {
    MatrixFormat::None
}

fn default_damping() -> f64 {
    patchtooth::assembly::DEFAULT_WAVE_DAMPING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub grid: GridConfig,
    pub profile: ProfileConfig,
    pub coupling: CouplingSpec,
    /// y-axis coupling in 2D; the x coupling when absent.
    pub coupling_y: Option<CouplingSpec>,
    #[serde(default)]
    pub ensemble: bool,
    /// Assemble even when the period does not divide the patch size. The
    /// operator is then not symmetric and eigen/simulate exit with status 2.
    #[serde(default)]
    pub allow_incompatible: bool,
    #[serde(default = "default_damping")]
    pub damping: f64,
    pub task: Task,
    #[serde(default)]
    pub eigen: EigenOptions,
    pub simulate: Option<SimulateOptions>,
    #[serde(default)]
    pub homogenize: HomogenizeOptions,
    pub sweep: Option<SweepOptions>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// The validated pieces a run works from.
#[derive(Clone, Debug)]
pub enum Geometry {
    One(PatchGrid1D, DiffusivityProfile1D),
    Two(PatchGrid2D, DiffusivityProfile2D),
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub geometry: Geometry,
    pub warnings: Vec<Diagnostic>,
}

impl RunConfig {
    /// Parses and validates. On failure every problem found is returned,
    /// not just the first.
    pub fn parse(text: &str, task: Option<Task>) -> Result<Prepared, Vec<Diagnostic>> {
        let mut config: RunConfig = serde_json::from_str(text)
            .map_err(|e| vec![Diagnostic::error(field_of_serde_error(&e), format!("{e}"))])?;
        if let Some(t) = task {
            config.task = t;
        }
        config.validate()
    }

    fn two_d(&self) -> bool {
        self.model == Model::Diffusion2d
    }

    pub fn couplings(&self) -> (CouplingSpec, CouplingSpec) {
        (self.coupling, self.coupling_y.unwrap_or(self.coupling))
    }

    fn validate(self) -> Result<Prepared, Vec<Diagnostic>> {
        let mut out = Vec::new();
        let two_d = self.two_d();
        self.check_grid_arity(&mut out);
        let grid = self.build_grid(&mut out);
        let profile = self.build_profile(&mut out);
        let (cx, cy) = self.couplings();
        if let Some(g) = &grid {
            let patches = g.patches();
            check_coupling(&mut out, "coupling", cx, patches[0]);
            if two_d {
                check_coupling(&mut out, "coupling_y", cy, patches[1]);
            }
        }
        if !two_d && self.coupling_y.is_some() {
            out.push(Diagnostic::error(
                "coupling_y",
                "only meaningful for diffusion2d",
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            out.push(Diagnostic::error(
                "damping",
                format!("must be finite and nonnegative, got {}", self.damping),
            ));
        }
        self.check_task(&mut out);

        let geometry = match (grid, profile) {
            (Some(GridBuild::One(g)), Some(ProfileBuild::One(p))) => Some(Geometry::One(g, p)),
            (Some(GridBuild::Two(g)), Some(ProfileBuild::Two(p))) => Some(Geometry::Two(g, p)),
            (Some(_), Some(_)) => {
                out.push(Diagnostic::error(
                    "profile",
                    "profile dimension does not match the model (1D profiles use period/values, 2D use periods/kx/ky)",
                ));
                None
            }
            _ => None,
        };
        if let Some(geom) = &geometry {
            let diags = match geom {
                Geometry::One(g, p) => validate_compatibility(g, p, self.ensemble),
                Geometry::Two(g, p) => validate_compatibility_2d(g, p, self.ensemble),
            };
            for d in diags {
                let field = format!("grid.{}", d.field);
                if d.is_error() && !self.allow_incompatible {
                    out.push(Diagnostic::error(field, d.message));
                } else {
                    out.push(Diagnostic::warning(field, d.message));
                }
            }
        }

        if out.iter().any(Diagnostic::is_error) {
            return Err(out);
        }
        Ok(Prepared {
            geometry: geometry.expect("validated geometry"),
            config: self,
            warnings: out,
        })
    }

    fn check_grid_arity(&self, out: &mut Vec<Diagnostic>) {
        if self.two_d() {
            return;
        }
        let g = &self.grid;
        let two = [
            ("grid.L", matches!(g.length, Axis::Two(_))),
            ("grid.N", matches!(g.patches, Axis::Two(_))),
            ("grid.n", matches!(g.n, Axis::Two(_))),
            ("grid.r", matches!(g.r, Axis::Two(_))),
        ];
        for (field, is_pair) in two {
            if is_pair {
                out.push(Diagnostic::error(field, "1D models take a single value"));
            }
        }
    }

    fn build_grid(&self, out: &mut Vec<Diagnostic>) -> Option<GridBuild> {
        let g = &self.grid;
        let (ls, ns, ps, rs) = (g.length.pair(), g.patches.pair(), g.n.pair(), g.r.pair());
        let axes = if self.two_d() { 2 } else { 1 };
        let suffix = |a: usize| {
            if axes == 1 {
                String::new()
            } else {
                format!("[{a}]")
            }
        };
        let before = out.len();
        for a in 0..axes {
            if !(ls[a] > 0.0 && ls[a].is_finite()) {
                out.push(Diagnostic::error(
                    format!("grid.L{}", suffix(a)),
                    format!("domain length must be positive, got {}", ls[a]),
                ));
            }
            if ns[a] == 0 {
                out.push(Diagnostic::error(
                    format!("grid.N{}", suffix(a)),
                    "need at least one patch",
                ));
            }
            if ps[a] == 0 {
                out.push(Diagnostic::error(
                    format!("grid.n{}", suffix(a)),
                    "need at least one interior point per patch",
                ));
            }
            if !(rs[a] > 0.0 && rs[a] <= 1.0) {
                out.push(Diagnostic::error(
                    format!("grid.r{}", suffix(a)),
                    format!("patch ratio must lie in (0, 1], got {}", rs[a]),
                ));
            }
        }
        if out.len() > before {
            return None;
        }
        let axis = |a: usize| PatchGrid1D::new(ls[a], ns[a], ps[a], rs[a]).expect("bounds checked");
        Some(if axes == 1 {
            GridBuild::One(axis(0))
        } else {
            GridBuild::Two(PatchGrid2D::new(axis(0), axis(1)))
        })
    }

    fn build_profile(&self, out: &mut Vec<Diagnostic>) -> Option<ProfileBuild> {
        let p = &self.profile;
        let one = p.values.is_some() || p.period.is_some();
        let two = p.kx.is_some() || p.ky.is_some() || p.periods.is_some();
        let random = p.lognormal.is_some();
        if [one, two, random].iter().filter(|b| **b).count() != 1 {
            out.push(Diagnostic::error(
                "profile",
                "give exactly one of {period, values}, {periods, kx, ky} or {lognormal}",
            ));
            return None;
        }
        if let Some(ln) = &p.lognormal {
            if !(ln.sigma >= 0.0 && ln.sigma.is_finite()) {
                out.push(Diagnostic::error(
                    "profile.lognormal.sigma",
                    "must be finite and nonnegative",
                ));
                return None;
            }
            return match (self.two_d(), ln.p) {
                (false, Axis::One(period)) => random_lognormal_profile(period, ln.sigma, ln.seed)
                    .map(ProfileBuild::One)
                    .map_err(|e| out.push(Diagnostic::error("profile.lognormal.p", e.to_string())))
                    .ok(),
                (false, Axis::Two(_)) => {
                    out.push(Diagnostic::error(
                        "profile.lognormal.p",
                        "1D models take a single period",
                    ));
                    None
                }
                (true, periods) => {
                    let [px, py] = periods.pair();
                    random_lognormal_profile_2d((px, py), ln.sigma, ln.seed)
                        .map(ProfileBuild::Two)
                        .map_err(|e| {
                            out.push(Diagnostic::error("profile.lognormal.p", e.to_string()))
                        })
                        .ok()
                }
            };
        }
        if one {
            let Some(values) = p.values.clone() else {
                out.push(Diagnostic::error("profile.values", "missing"));
                return None;
            };
            if let Some(period) = p.period {
                if period != values.len() {
                    out.push(Diagnostic::error(
                        "profile.period",
                        format!("period {period} but {} values", values.len()),
                    ));
                    return None;
                }
            }
            return DiffusivityProfile1D::new(values)
                .map(ProfileBuild::One)
                .map_err(|e| out.push(Diagnostic::error("profile.values", e.to_string())))
                .ok();
        }
        let (Some(kx), Some(ky)) = (&p.kx, &p.ky) else {
            out.push(Diagnostic::error(
                "profile",
                "2D profiles need both kx and ky",
            ));
            return None;
        };
        let built = DiffusivityProfile2D::from_rows(kx, ky)
            .map_err(|e| out.push(Diagnostic::error("profile.kx", e.to_string())))
            .ok()?;
        if let Some(periods) = p.periods {
            let (a, b) = built.periods();
            if periods != [a, b] {
                out.push(Diagnostic::error(
                    "profile.periods",
                    format!("declared {periods:?} but the grids are {a}x{b}"),
                ));
                return None;
            }
        }
        Some(ProfileBuild::Two(built))
    }

    fn check_task(&self, out: &mut Vec<Diagnostic>) {
        match self.task {
            Task::Simulate => match &self.simulate {
                None => out.push(Diagnostic::error(
                    "simulate",
                    "required for the simulate task",
                )),
                Some(s) => check_simulate(out, s, self.model),
            },
            Task::Sweep => match &self.sweep {
                None => out.push(Diagnostic::error("sweep", "required for the sweep task")),
                Some(s) => self.check_sweep(out, s),
            },
            Task::Homogenize => {
                if self.two_d() {
                    out.push(Diagnostic::error(
                        "model",
                        "homogenize works on 1D profiles",
                    ));
                }
                if let Some(bad) = self.homogenize.samples.iter().find(|k| !k.is_finite()) {
                    out.push(Diagnostic::error(
                        "homogenize.samples",
                        format!("not finite: {bad}"),
                    ));
                }
                if let Some(ws) = &self.homogenize.wavenumbers {
                    if let Some(bad) = ws.iter().find(|k| !k.is_finite()) {
                        out.push(Diagnostic::error(
                            "homogenize.wavenumbers",
                            format!("not finite: {bad}"),
                        ));
                    }
                }
            }
            Task::Eigen => {
                if self.eigen.rows == Some(0) {
                    out.push(Diagnostic::error("eigen.rows", "must be at least 1"));
                }
            }
            Task::Check => {}
        }
    }

    fn check_sweep(&self, out: &mut Vec<Diagnostic>, s: &SweepOptions) {
        if self.model == Model::Wave1d {
            out.push(Diagnostic::error(
                "model",
                "sweeps compare real spectra; use diffusion1d or diffusion2d",
            ));
        }
        if s.values.is_empty() {
            out.push(Diagnostic::error("sweep.values", "need at least one value"));
        }
        if s.modes == 0 {
            out.push(Diagnostic::error("sweep.modes", "must be at least 1"));
        }
        let min_patches = self.grid.patches.pair().into_iter().min().unwrap_or(0);
        for (k, &v) in s.values.iter().enumerate() {
            let field = format!("sweep.values[{k}]");
            let integer = v.fract() == 0.0 && v >= 1.0 && v.is_finite();
            match s.axis {
                SweepAxis::Order => {
                    if !integer {
                        out.push(Diagnostic::error(
                            field,
                            format!("order must be a positive integer, got {v}"),
                        ));
                    } else if 2 * (v as usize) + 1 > min_patches {
                        out.push(Diagnostic::error(
                            field,
                            format!("order {v} needs 2P+1 <= N = {min_patches} patches"),
                        ));
                    }
                }
                SweepAxis::Patches | SweepAxis::Points => {
                    if !integer {
                        out.push(Diagnostic::error(
                            field,
                            format!("must be a positive integer, got {v}"),
                        ));
                    }
                }
                SweepAxis::Ratio => {
                    if !(v > 0.0 && v <= 1.0) {
                        out.push(Diagnostic::error(
                            field,
                            format!("patch ratio must lie in (0, 1], got {v}"),
                        ));
                    }
                }
            }
        }
        if let Some(d) = s.spacing {
            if !(d > 0.0 && d.is_finite()) {
                out.push(Diagnostic::error("sweep.spacing", "must be positive"));
            }
            if s.axis == SweepAxis::Ratio {
                out.push(Diagnostic::error(
                    "sweep.spacing",
                    "a fixed spacing determines r, so it cannot be swept",
                ));
            }
        }
    }
}

enum GridBuild {
    One(PatchGrid1D),
    Two(PatchGrid2D),
}

impl GridBuild {
    fn patches(&self) -> [usize; 2] {
        match self {
            GridBuild::One(g) => [g.patches(), g.patches()],
            GridBuild::Two(g) => [g.x.patches(), g.y.patches()],
        }
    }
}

enum ProfileBuild {
    One(DiffusivityProfile1D),
    Two(DiffusivityProfile2D),
}

fn check_coupling(out: &mut Vec<Diagnostic>, field: &str, c: CouplingSpec, patches: usize) {
    if let CouplingSpec::Lagrangian { order } = c {
        if order == 0 {
            out.push(Diagnostic::error(
                format!("{field}.order"),
                "must be at least 1",
            ));
        } else if 2 * order + 1 > patches {
            out.push(Diagnostic::error(
                format!("{field}.order"),
                format!("order {order} needs 2P+1 <= N = {patches} patches"),
            ));
        }
    }
}

fn check_simulate(out: &mut Vec<Diagnostic>, s: &SimulateOptions, model: Model) {
    if s.times.is_empty() {
        out.push(Diagnostic::error(
            "simulate.times",
            "need at least one output time",
        ));
    }
    if s.times.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
        || s.times.windows(2).any(|w| w[1] <= w[0])
    {
        out.push(Diagnostic::error(
            "simulate.times",
            "must be nonnegative and strictly increasing",
        ));
    }
    if let Some(dt) = s.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            out.push(Diagnostic::error(
                "simulate.dt",
                format!("must be positive, got {dt}"),
            ));
        }
    }
    if model == Model::Wave1d && s.method == Some(Method::Exact) {
        out.push(Diagnostic::error(
            "simulate.method",
            "the wave operator is not symmetric; use rk4",
        ));
    }
    let finite = |v: f64| v.is_finite();
    match &s.initial {
        InitialCondition::Sinusoid { amplitude, q, qy } => {
            if !(finite(*amplitude) && finite(*q) && qy.is_none_or(finite)) {
                out.push(Diagnostic::error(
                    "simulate.initial",
                    "parameters must be finite",
                ));
            }
        }
        InitialCondition::Gaussian {
            amplitude,
            centre,
            width,
        } => {
            if !(finite(*amplitude) && centre.iter().all(|c| c.is_finite())) {
                out.push(Diagnostic::error(
                    "simulate.initial",
                    "parameters must be finite",
                ));
            }
            if !(*width > 0.0 && width.is_finite()) {
                out.push(Diagnostic::error(
                    "simulate.initial.width",
                    format!("must be positive, got {width}"),
                ));
            }
        }
        InitialCondition::NoisySinusoid {
            amplitude,
            q,
            qy,
            noise,
            ..
        } => {
            if !(finite(*amplitude) && finite(*q) && qy.is_none_or(finite)) {
                out.push(Diagnostic::error(
                    "simulate.initial",
                    "parameters must be finite",
                ));
            }
            if !(*noise >= 0.0 && noise.is_finite()) {
                out.push(Diagnostic::error(
                    "simulate.initial.noise",
                    format!("must be nonnegative, got {noise}"),
                ));
            }
        }
    }
}

// serde_json messages name the offending key for unknown and missing
// fields; point the diagnostic at it when we can.
fn field_of_serde_error(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "config".into()
}
