//! Eigenvalue reports, macro/micro separation and error tables.
//!
//! Spectra are ordered by ascending magnitude, so the slow macroscale modes
//! come first and the fast sub-patch modes after them.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{symmetry_defect, AssembledOperator, SymmetryReport};
use crate::error::{PatchError, Result};

/// Largest relative asymmetry accepted by the symmetric eigensolver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Relative spread within which neighbouring eigenvalues count as one.
pub const DEGENERACY_THRESHOLD: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted by ascending magnitude.
    pub eigenvalues: Vec<f64>,
    pub macro_count: usize,
    /// `|first micro| / |largest nonzero macro|`; infinite when either side
    /// is missing.
    pub gap_ratio: f64,
    pub zero_mode_magnitude: f64,
    pub symmetry: Option<SymmetryReport>,
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    dimension: usize,
    macro_count: usize,
    gap_ratio: Option<f64>,
    zero_mode_magnitude: f64,
    symmetry: &'a Option<SymmetryReport>,
}

impl SpectrumReport {
    /// Builds a report from eigenvalues in any order.
    pub fn from_values(mut eigenvalues: Vec<f64>, macro_count: usize) -> Self {
        eigenvalues.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
        let macro_count = macro_count.min(eigenvalues.len());
        let zero_mode_magnitude = eigenvalues.first().map_or(0.0, |v| v.abs());
        let largest_macro = eigenvalues[..macro_count].last().map_or(0.0, |v| v.abs());
        let first_micro = eigenvalues.get(macro_count).map(|v| v.abs());
        let tiny = 1e-12 * eigenvalues.last().map_or(0.0, |v| v.abs());
        let gap_ratio = match first_micro {
            Some(m) if largest_macro > tiny => m / largest_macro,
            _ => f64::INFINITY,
        };
        Self {
            eigenvalues,
            macro_count,
            gap_ratio,
            zero_mode_magnitude,
            symmetry: None,
        }
    }

    pub fn macro_modes(&self) -> &[f64] {
        &self.eigenvalues[..self.macro_count]
    }

    pub fn micro_modes(&self) -> &[f64] {
        &self.eigenvalues[self.macro_count..]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One row per eigenvalue: `rank,eigenvalue,class`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,eigenvalue,class\n");
        for (k, v) in self.eigenvalues.iter().enumerate() {
            let class = if k < self.macro_count {
                "macro"
            } else {
                "micro"
            };
            s.push_str(&format!("{k},{v:.17e},{class}\n"));
        }
        s
    }

    /// Scalars only: dimension, macro count, gap ratio (null when
    /// infinite), zero-mode magnitude and symmetry defect.
    pub fn summary_json(&self) -> String {
        let summary = SpectrumSummary {
            dimension: self.eigenvalues.len(),
            macro_count: self.macro_count,
            gap_ratio: self.gap_ratio.is_finite().then_some(self.gap_ratio),
            zero_mode_magnitude: self.zero_mode_magnitude,
            symmetry: &self.symmetry,
        };
        serde_json::to_string_pretty(&summary).expect("summary serialises")
    }
}

/// Real spectrum of a symmetric operator. The macroscale count is taken
/// from the operator, or the whole spectrum when it has none.
pub fn eigen_symmetric(op: &AssembledOperator) -> Result<SpectrumReport> {
    let count = op.macro_modes().unwrap_or(op.dimension());
    eigen_symmetric_with(op, count)
}

pub fn eigen_symmetric_with(op: &AssembledOperator, macro_count: usize) -> Result<SpectrumReport> {
    let sym = op.symmetry_defect();
    if sym.relative > SYMMETRY_TOLERANCE {
        return Err(PatchError::NotSymmetric {
            defect: sym.relative,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    let m = op.matrix();
    let symmetric = (m + m.transpose()) * 0.5;
    let values = symmetric.symmetric_eigenvalues().iter().copied().collect();
    let mut report = SpectrumReport::from_values(values, macro_count);
    report.symmetry = Some(sym);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    /// Sorted by ascending magnitude.
    pub eigenvalues: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| {
            a.norm()
                .total_cmp(&b.norm())
                .then(a.re.total_cmp(&b.re))
                .then(a.im.total_cmp(&b.im))
        });
        Self { eigenvalues }
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_imag_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }

    /// `rank,re,im`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,re,im\n");
        for (k, z) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{k},{:.17e},{:.17e}\n", z.re, z.im));
        }
        s
    }
}

/// Complex spectrum of an arbitrary square operator via a real Schur form.
pub fn eigen_general(op: &AssembledOperator) -> ComplexSpectrum {
    eigen_general_matrix(op.matrix())
}

pub fn eigen_general_matrix(m: &DMatrix<f64>) -> ComplexSpectrum {
    ComplexSpectrum::new(m.complex_eigenvalues().iter().copied().collect())
}

/// Spectrum of the wave operator `[[0, I], [A, ε B]]` built from a
/// symmetric `A` and `B`.
///
/// The kernel of `A` gives a defective double eigenvalue at zero, which a
/// general eigensolver smears to `±sqrt(machine epsilon · |A|)`. Here that
/// kernel is split off exactly: with `A = Q Λ Qᵀ`, the constants-like
/// kernel vectors contribute exact zeros, provided `B` annihilates them
/// too. On the remaining modes, scaling `u` by `D = sqrt(-Λ)` gives the
/// balanced matrix `[[0, D], [-D, ε QᵀBQ]]`, which has the same eigenvalues
/// and whose undamped part is skew-symmetric.
pub fn wave_spectrum(
    a: &AssembledOperator,
    b: &AssembledOperator,
    damping: f64,
) -> Result<ComplexSpectrum> {
    let m = a.dimension();
    if b.dimension() != m {
        return Err(PatchError::DimensionMismatch {
            expected: m,
            found: b.dimension(),
        });
    }
    for op in [a, b] {
        let sym = op.symmetry_defect();
        if sym.relative > SYMMETRY_TOLERANCE {
            return Err(PatchError::NotSymmetric {
                defect: sym.relative,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
    }
    let am = a.matrix();
    let eig = SymmetricEigen::new((am + am.transpose()) * 0.5);
    let scale = eig.eigenvalues.amax();
    let zero_tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let (kernel, active): (Vec<usize>, Vec<usize>) =
        (0..m).partition(|&k| eig.eigenvalues[k].abs() <= zero_tol);
    if let Some(&k) = active.iter().find(|&&k| eig.eigenvalues[k] > 0.0) {
        return Err(PatchError::Consistency(format!(
            "wave operator needs a nonpositive A, found eigenvalue {:e}",
            eig.eigenvalues[k]
        )));
    }
    let bm = b.matrix();
    let b_scale = bm.amax().max(f64::MIN_POSITIVE);
    for &k in &kernel {
        let image = bm * eig.eigenvectors.column(k);
        if image.amax() > 1e-9 * b_scale {
            return Err(PatchError::Consistency(
                "damping operator does not annihilate the kernel of A".into(),
            ));
        }
    }
    let q = eig.eigenvectors.select_columns(&active);
    let r = active.len();
    let c = q.transpose() * bm * &q * damping;
    let mut w = DMatrix::zeros(2 * r, 2 * r);
    for (col, &k) in active.iter().enumerate() {
        let root = (-eig.eigenvalues[k]).sqrt();
        w[(col, r + col)] = root;
        w[(r + col, col)] = -root;
    }
    w.view_mut((r, r), (r, r)).copy_from(&c);
    let mut values: Vec<Complex64> = w.complex_eigenvalues().iter().copied().collect();
    values.extend(std::iter::repeat_n(
        Complex64::new(0.0, 0.0),
        2 * kernel.len(),
    ));
    Ok(ComplexSpectrum::new(values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub mode: usize,
    pub test: f64,
    pub reference: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.relative_error).collect()
    }

    /// `mode,test,reference,relative_error`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,test,reference,relative_error\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.mode, r.test, r.reference, r.relative_error
            ));
        }
        s
    }
}

/// Unique nonzero values of a magnitude-sorted list: runs of neighbours
/// within [`DEGENERACY_THRESHOLD`] of each other are averaged, and a run
/// indistinguishable from zero is dropped.
pub fn unique_nonzero(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &v in values {
        match groups.last_mut() {
            Some(g) if near(*g.last().unwrap(), v) => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups
        .into_iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .filter(|m| m.abs() > 1e-9 * scale.max(1e-300) && m.abs() > 1e-12)
        .collect()
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEGENERACY_THRESHOLD * a.abs().max(b.abs())
}

/// Relative errors of the first `count` unique nonzero macroscale
/// eigenvalues of `test` against `reference`, paired by magnitude rank.
pub fn error_table(
    test: &SpectrumReport,
    reference: &SpectrumReport,
    count: usize,
) -> Result<ErrorTable> {
    let t = unique_nonzero(test.macro_modes());
    let r = unique_nonzero(reference.macro_modes());
    let available = t.len().min(r.len());
    if available < count {
        return Err(PatchError::InsufficientModes {
            needed: count,
            available,
        });
    }
    let rows = t
        .iter()
        .zip(&r)
        .take(count)
        .enumerate()
        .map(|(k, (&test, &reference))| ErrorRow {
            mode: k + 1,
            test,
            reference,
            relative_error: (test - reference).abs() / reference.abs(),
        })
        .collect();
    Ok(ErrorTable { rows })
}

/// Least-squares slope of `ln error` against `ln N`.
pub fn convergence_slope(patch_counts: &[f64], errors: &[f64]) -> Result<f64> {
    if patch_counts.len() != errors.len() {
        return Err(PatchError::DimensionMismatch {
            expected: patch_counts.len(),
            found: errors.len(),
        });
    }
    if errors.len() < 3 {
        return Err(PatchError::invalid("errors", "need at least three points"));
    }
    if let Some(bad) = errors
        .iter()
        .chain(patch_counts)
        .find(|v| !(**v > 0.0 && v.is_finite()))
    {
        return Err(PatchError::invalid(
            "errors",
            format!("values must be positive, found {bad}"),
        ));
    }
    let xs: Vec<f64> = patch_counts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(PatchError::invalid(
            "N",
            "patch counts must not all be equal",
        ));
    }
    Ok(sxy / sxx)
}

/// Symmetry report of a bare matrix.
pub fn matrix_symmetry(m: &DMatrix<f64>) -> SymmetryReport {
    symmetry_defect(m)
}
