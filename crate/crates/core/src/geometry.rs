//! Patch-grid geometry.
//!
//! Patches are numbered from zero in code. Patch `I` is centred at
//! `X^I = (I + 1) H`, so the domain is `[H/2, L + H/2)` taken modulo `L`.
//! Its points sit at `x^I_i = X^I + (i - (n+1)/2) d` for `i = 0..=n+1`;
//! `i = 0` and `i = n+1` are the edge points, `1..=n` the interior.

use serde::{Deserialize, Serialize};

use crate::error::{PatchError, Result};
use crate::microscale::{DiffusivityProfile1D, DiffusivityProfile2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Grid1DRecord", into = "Grid1DRecord")]
pub struct PatchGrid1D {
    length: f64,
    patches: usize,
    points: usize,
    ratio: f64,
}

// H, h and d are written out for readers but ignored on input.
#[derive(Serialize, Deserialize)]
struct Grid1DRecord {
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "N")]
    patches: usize,
    n: usize,
    r: f64,
    #[serde(rename = "H", default, skip_deserializing)]
    big_h: f64,
    #[serde(default, skip_deserializing)]
    h: f64,
    #[serde(default, skip_deserializing)]
    d: f64,
}

impl TryFrom<Grid1DRecord> for PatchGrid1D {
    type Error = PatchError;

    fn try_from(rec: Grid1DRecord) -> Result<Self> {
        PatchGrid1D::new(rec.length, rec.patches, rec.n, rec.r)
    }
}

impl From<PatchGrid1D> for Grid1DRecord {
    fn from(g: PatchGrid1D) -> Self {
        Grid1DRecord {
            length: g.length,
            patches: g.patches,
            n: g.points,
            r: g.ratio,
            big_h: g.macro_spacing(),
            h: g.patch_width(),
            d: g.spacing(),
        }
    }
}

impl PatchGrid1D {
    /// `length` is the periodic domain length `L`, `patches` the count `N`,
    /// `points` the interior count `n` and `ratio` the size ratio `r = h/H`.
    pub fn new(length: f64, patches: usize, points: usize, ratio: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(PatchError::invalid(
                "L",
                format!("domain length must be positive, got {length}"),
            ));
        }
        if patches == 0 {
            return Err(PatchError::invalid("N", "need at least one patch"));
        }
        if points == 0 {
            return Err(PatchError::invalid(
                "n",
                "need at least one interior point per patch",
            ));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(PatchError::invalid(
                "r",
                format!("size ratio must lie in (0, 1], got {ratio}"),
            ));
        }
        Ok(Self {
            length,
            patches,
            points,
            ratio,
        })
    }

    /// Same grid but with the ratio chosen so the microscale spacing is `d`.
    pub fn with_spacing(length: f64, patches: usize, points: usize, d: f64) -> Result<Self> {
        Self::new(
            length,
            patches,
            points,
            ratio_for_spacing(length, patches, points, d),
        )
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// `H = L/N`.
    pub fn macro_spacing(&self) -> f64 {
        self.length / self.patches as f64
    }

    /// `h = r H`.
    pub fn patch_width(&self) -> f64 {
        self.ratio * self.macro_spacing()
    }

    /// `d = h/n`.
    pub fn spacing(&self) -> f64 {
        self.patch_width() / self.points as f64
    }

    pub fn centre(&self, patch: usize) -> f64 {
        (patch + 1) as f64 * self.macro_spacing()
    }

    /// `x^I_i` for `i` in `0..=n+1`.
    pub fn position(&self, patch: usize, i: usize) -> f64 {
        let offset = i as f64 - (self.points as f64 + 1.0) / 2.0;
        self.centre(patch) + offset * self.spacing()
    }

    /// Interior positions, patch-major.
    pub fn interior_positions(&self) -> Vec<f64> {
        (0..self.patches)
            .flat_map(|p| (1..=self.points).map(move |i| (p, i)))
            .map(|(p, i)| self.position(p, i))
            .collect()
    }

    /// Lattice points spanned by one macroscale spacing, `H/d = n/r`, when
    /// that is an integer.
    pub fn points_per_spacing(&self) -> Option<usize> {
        let q = self.points as f64 / self.ratio;
        let rounded = q.round();
        ((q - rounded).abs() <= 1e-9 * q.max(1.0) && rounded >= 1.0).then_some(rounded as usize)
    }
}

/// Size ratio `r = n d N / L` giving microscale spacing `d`.
pub fn ratio_for_spacing(length: f64, patches: usize, points: usize, d: f64) -> f64 {
    points as f64 * d * patches as f64 / length
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid2D {
    pub x: PatchGrid1D,
    pub y: PatchGrid1D,
}

impl PatchGrid2D {
    pub fn new(x: PatchGrid1D, y: PatchGrid1D) -> Self {
        Self { x, y }
    }

    pub fn patch_count(&self) -> usize {
        self.x.patches() * self.y.patches()
    }

    pub fn points_per_patch(&self) -> usize {
        self.x.points() * self.y.points()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn warning(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

fn axis_diagnostics(
    out: &mut Vec<Diagnostic>,
    axis: &str,
    grid: &PatchGrid1D,
    period: usize,
    ensemble: bool,
) {
    let n = grid.points();
    if !ensemble && !n.is_multiple_of(period) {
        out.push(Diagnostic::error(
            format!("n{axis}"),
            format!(
                "patch size {n} is not a multiple of the diffusivity period {period}; \
                 the operator would not be symmetric (enable the ensemble)"
            ),
        ));
    }
    match grid.points_per_spacing() {
        Some(q) if q % period == 0 => {}
        _ => out.push(Diagnostic::warning(
            format!("r{axis}"),
            format!(
                "H/d = {:.6} is not an integer multiple of the period {period}; \
                 no full-lattice reference is available",
                n as f64 / grid.ratio()
            ),
        )),
    }
}

/// Checks that the patch scheme built from `grid` and `profile` is
/// self-adjoint, and whether a full-lattice reference exists.
pub fn validate_compatibility(
    grid: &PatchGrid1D,
    profile: &DiffusivityProfile1D,
    ensemble: bool,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    axis_diagnostics(&mut out, "", grid, profile.period(), ensemble);
    out
}

pub fn validate_compatibility_2d(
    grid: &PatchGrid2D,
    profile: &DiffusivityProfile2D,
    ensemble: bool,
) -> Vec<Diagnostic> {
    let (px, py) = profile.periods();
    let mut out = Vec::new();
    axis_diagnostics(&mut out, "_x", &grid.x, px, ensemble);
    axis_diagnostics(&mut out, "_y", &grid.y, py, ensemble);
    out
}
