//! Assembly of the global patch operator `L = D + C`.
//!
//! Only interior values are unknowns. Edge values are eliminated through the
//! interpolation weights, so rows next to an edge pick up `κ ℐ` blocks that
//! reach into other patches.
//!
//! Unknown ordering, member index innermost in every case:
//!
//! - 1D: `((I n) + (i - 1)) p_e + l` for patch `I`, interior point `i` in
//!   `1..=n` and member `l`; `p_e` is 1 without an ensemble.
//! - 2D: `((I + N_x J) n_x n_y + (i - 1) + n_x (j - 1)) p_e + m`.
//!
//! Inside patch `I`, bond `i + 1/2` of a single-phase system has diffusivity
//! `κ_{i+1/2}` in local numbering, and member `l` of an ensemble sees
//! `κ_{i+l+1/2}`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingSpec, InterpolationWeights};
use crate::ensemble::{build_ensemble_1d, build_permutations_2d};
use crate::error::{PatchError, Result};
use crate::geometry::{
    validate_compatibility, validate_compatibility_2d, Diagnostic, PatchGrid1D, PatchGrid2D,
};
use crate::microscale::{DiffusivityProfile1D, DiffusivityProfile2D};

#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    FullLattice1D {
        points: usize,
        spacing: f64,
    },
    FullLattice2D {
        points: (usize, usize),
        spacing: (f64, f64),
    },
    Patch1D {
        grid: PatchGrid1D,
        members: usize,
    },
    Patch2D {
        grid: PatchGrid2D,
        members: usize,
    },
    /// `(u, v)` stacked, each laid out as `field`.
    Wave {
        field: Box<Layout>,
    },
    /// A bare matrix with no geometric meaning.
    Plain {
        dimension: usize,
    },
}

impl Layout {
    pub fn dimension(&self) -> usize {
        match self {
            Layout::FullLattice1D { points, .. } => *points,
            Layout::FullLattice2D { points, .. } => points.0 * points.1,
            Layout::Patch1D { grid, members } => grid.patches() * grid.points() * members,
            Layout::Patch2D { grid, members } => {
                grid.patch_count() * grid.points_per_patch() * members
            }
            Layout::Wave { field } => 2 * field.dimension(),
            Layout::Plain { dimension } => *dimension,
        }
    }

    pub fn members(&self) -> usize {
        match self {
            Layout::Patch1D { members, .. } | Layout::Patch2D { members, .. } => *members,
            Layout::Wave { field } => field.members(),
            _ => 1,
        }
    }

    /// Physical coordinates of every unknown; `y` is 0 in 1D. A wave layout
    /// repeats the field coordinates for `v`.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        match self {
            Layout::FullLattice1D { points, spacing } => {
                (0..*points).map(|g| (g as f64 * spacing, 0.0)).collect()
            }
            Layout::FullLattice2D { points, spacing } => (0..points.0 * points.1)
                .map(|k| {
                    (
                        (k % points.0) as f64 * spacing.0,
                        (k / points.0) as f64 * spacing.1,
                    )
                })
                .collect(),
            Layout::Patch1D { .. } | Layout::Patch2D { .. } => (0..self.dimension())
                .map(|k| match self.site(k) {
                    Site::Patch1D { x, .. } => (x, 0.0),
                    Site::Patch2D { x, y, .. } => (x, y),
                    _ => unreachable!(),
                })
                .collect(),
            Layout::Wave { field } => {
                let mut p = field.positions();
                p.extend_from_within(..);
                p
            }
            Layout::Plain { dimension } => vec![(0.0, 0.0); *dimension],
        }
    }

    /// Decodes an unknown index.
    pub fn site(&self, index: usize) -> Site {
        match self {
            Layout::Patch1D { grid, members } => {
                let member = index % members;
                let site = index / members;
                let (patch, i) = (site / grid.points(), site % grid.points() + 1);
                Site::Patch1D {
                    patch,
                    i,
                    member,
                    x: grid.position(patch, i),
                }
            }
            Layout::Patch2D { grid, members } => {
                let member = index % members;
                let site = index / members;
                let per = grid.points_per_patch();
                let (patch, local) = (site / per, site % per);
                let (big_i, big_j) = (patch % grid.x.patches(), patch / grid.x.patches());
                let (i, j) = (local % grid.x.points() + 1, local / grid.x.points() + 1);
                Site::Patch2D {
                    patch: (big_i, big_j),
                    point: (i, j),
                    member,
                    x: grid.x.position(big_i, i),
                    y: grid.y.position(big_j, j),
                }
            }
            Layout::Wave { field } => {
                let m = field.dimension();
                Site::Wave {
                    velocity: index >= m,
                    inner: Box::new(field.site(index % m)),
                }
            }
            _ => Site::Plain { index },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Site {
    Patch1D {
        patch: usize,
        i: usize,
        member: usize,
        x: f64,
    },
    Patch2D {
        patch: (usize, usize),
        point: (usize, usize),
        member: usize,
        x: f64,
        y: f64,
    },
    Wave {
        velocity: bool,
        inner: Box<Site>,
    },
    Plain {
        index: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `max |L[a][b] - L[b][a]|`
    pub defect: f64,
    /// `max |L[a][b]|`
    pub scale: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembledOperator {
    matrix: DMatrix<f64>,
    layout: Layout,
    macro_modes: Option<usize>,
    weights: Vec<InterpolationWeights>,
}

impl AssembledOperator {
    pub fn new(matrix: DMatrix<f64>, layout: Layout, macro_modes: Option<usize>) -> Self {
        Self {
            matrix,
            layout,
            macro_modes,
            weights: Vec::new(),
        }
    }

    /// Wraps an arbitrary square matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(PatchError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let dimension = matrix.nrows();
        Ok(Self::new(matrix, Layout::Plain { dimension }, None))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of slow eigenvalues the scheme supports, when known.
    pub fn macro_modes(&self) -> Option<usize> {
        self.macro_modes
    }

    /// Interpolation weights used in assembly, one set per axis.
    pub fn weights(&self) -> &[InterpolationWeights] {
        &self.weights
    }

    pub fn symmetry_defect(&self) -> SymmetryReport {
        symmetry_defect(&self.matrix)
    }

    /// `max |L·1| / max |L|`.
    pub fn kernel_defect(&self) -> f64 {
        let scale = self.matrix.amax();
        if scale == 0.0 {
            return 0.0;
        }
        self.matrix
            .row_iter()
            .map(|r| r.sum().abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Dense matrix as CSV, one matrix row per line, no header.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.dimension() * self.dimension() * 24);
        for row in self.matrix.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Binary dump: the 8 bytes `PTOPMAT1`, row and column counts as
    /// little-endian `u64`, then the entries as little-endian `f64` in
    /// row-major order.
    pub fn write_binary(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.matrix.nrows() as u64).to_le_bytes())?;
        out.write_all(&(self.matrix.ncols() as u64).to_le_bytes())?;
        for row in self.matrix.row_iter() {
            for v in row.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

const BINARY_MAGIC: &[u8; 8] = b"PTOPMAT1";

/// Reads a matrix written by [`AssembledOperator::write_binary`].
pub fn read_binary(mut input: impl Read) -> std::io::Result<DMatrix<f64>> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(bad("not a patch operator dump"));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        input.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn symmetry_defect(m: &DMatrix<f64>) -> SymmetryReport {
    let n = m.nrows();
    let mut defect: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            defect = defect.max((m[(a, b)] - m[(b, a)]).abs());
        }
    }
    let scale = m.amax();
    let relative = if scale > 0.0 { defect / scale } else { 0.0 };
    SymmetryReport {
        defect,
        scale,
        relative,
    }
}

fn reject_errors(diags: Vec<Diagnostic>) -> Result<()> {
    let errors: Vec<String> = diags
        .iter()
        .filter(|d| d.is_error())
        .map(|d| d.to_string())
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(PatchError::Incompatible(errors.join("; ")))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Assembles the 1D patch operator, rejecting configurations that would not
/// be self-adjoint.
pub fn assemble_patch_1d(
    grid: &PatchGrid1D,
    profile: &DiffusivityProfile1D,
    coupling: CouplingSpec,
    ensemble: bool,
) -> Result<AssembledOperator> {
    reject_errors(validate_compatibility(grid, profile, ensemble))?;
    assemble_patch_1d_unchecked(grid, profile, coupling, ensemble)
}

/// As [`assemble_patch_1d`] without the compatibility check, for measuring
/// what goes wrong when `p` does not divide `n`.
pub fn assemble_patch_1d_unchecked(
    grid: &PatchGrid1D,
    profile: &DiffusivityProfile1D,
    coupling: CouplingSpec,
    ensemble: bool,
) -> Result<AssembledOperator> {
    let big_n = grid.patches();
    let n = grid.points();
    let p = profile.period();
    let weights = coupling.weights(big_n, grid.ratio())?;
    let spec = build_ensemble_1d(profile);
    let members = if ensemble { p } else { 1 };
    let kappa = |l: usize, half: usize| profile.kappa_at((half + l) as i64);
    let left_partner = |l: usize| if ensemble { spec.left_partner(l, n) } else { l };
    let right_partner = |l: usize| {
        if ensemble {
            spec.right_partner(l, n)
        } else {
            l
        }
    };
    let idx = |patch: usize, i: usize, l: usize| (patch * n + i - 1) * members + l;

    let dim = big_n * n * members;
    let scale = grid.spacing().powi(-2);
    let mut a = DMatrix::zeros(dim, dim);
    for patch in 0..big_n {
        for i in 1..=n {
            for l in 0..members {
                let row = idx(patch, i, l);
                let kl = kappa(l, i - 1) * scale;
                let kr = kappa(l, i) * scale;
                a[(row, row)] -= kl + kr;
                if i > 1 {
                    a[(row, idx(patch, i - 1, l))] += kl;
                } else {
                    let src = left_partner(l);
                    for other in 0..big_n {
                        let w = weights.w_left[(other + big_n - patch) % big_n];
                        a[(row, idx(other, n, src))] += kl * w;
                    }
                }
                if i < n {
                    a[(row, idx(patch, i + 1, l))] += kr;
                } else {
                    let src = right_partner(l);
                    for other in 0..big_n {
                        let w = weights.w_right[(other + big_n - patch) % big_n];
                        a[(row, idx(other, 1, src))] += kr * w;
                    }
                }
            }
        }
    }
    let slow = if ensemble { big_n * gcd(n, p) } else { big_n };
    Ok(AssembledOperator {
        matrix: a,
        layout: Layout::Patch1D {
            grid: grid.clone(),
            members,
        },
        macro_modes: Some(slow),
        weights: vec![weights],
    })
}

/// Assembles the 2D patch operator with independent couplings along x and y.
pub fn assemble_patch_2d(
    grid: &PatchGrid2D,
    profile: &DiffusivityProfile2D,
    coupling: (CouplingSpec, CouplingSpec),
    ensemble: bool,
) -> Result<AssembledOperator> {
    reject_errors(validate_compatibility_2d(grid, profile, ensemble))?;
    assemble_patch_2d_unchecked(grid, profile, coupling, ensemble)
}

pub fn assemble_patch_2d_unchecked(
    grid: &PatchGrid2D,
    profile: &DiffusivityProfile2D,
    coupling: (CouplingSpec, CouplingSpec),
    ensemble: bool,
) -> Result<AssembledOperator> {
    let (gx, gy) = (&grid.x, &grid.y);
    let (bnx, bny) = (gx.patches(), gy.patches());
    let (nx, ny) = (gx.points(), gy.points());
    let (ppx, ppy) = profile.periods();
    let wx = coupling.0.weights(bnx, gx.ratio())?;
    let wy = coupling.1.weights(bny, gy.ratio())?;
    let spec = build_permutations_2d(profile, nx, ny)?;
    let members = if ensemble { spec.size() } else { 1 };

    let kx = |m: usize, i: usize, j: usize| {
        if ensemble {
            spec.kx(m, i as i64, j as i64)
        } else {
            profile.kx(i as i64, j as i64)
        }
    };
    let ky = |m: usize, i: usize, j: usize| {
        if ensemble {
            spec.ky(m, i as i64, j as i64)
        } else {
            profile.ky(i as i64, j as i64)
        }
    };
    let partner = |m: usize, f: fn(&crate::ensemble::EnsembleSpec2D, usize) -> usize| {
        if ensemble {
            f(&spec, m)
        } else {
            m
        }
    };
    let idx = |bi: usize, bj: usize, i: usize, j: usize, m: usize| {
        (((bi + bnx * bj) * nx * ny) + (i - 1) + nx * (j - 1)) * members + m
    };

    let dim = bnx * bny * nx * ny * members;
    let (sx, sy) = (gx.spacing().powi(-2), gy.spacing().powi(-2));
    let mut a = DMatrix::zeros(dim, dim);
    for bj in 0..bny {
        for bi in 0..bnx {
            for j in 1..=ny {
                for i in 1..=nx {
                    for m in 0..members {
                        let row = idx(bi, bj, i, j, m);
                        let west = kx(m, i - 1, j) * sx;
                        let east = kx(m, i, j) * sx;
                        let south = ky(m, i, j - 1) * sy;
                        let north = ky(m, i, j) * sy;
                        a[(row, row)] -= west + east + south + north;

                        if i > 1 {
                            a[(row, idx(bi, bj, i - 1, j, m))] += west;
                        } else {
                            let src = partner(m, |s, m| s.left_partner_x(m));
                            for o in 0..bnx {
                                let w = wx.w_left[(o + bnx - bi) % bnx];
                                a[(row, idx(o, bj, nx, j, src))] += west * w;
                            }
                        }
                        if i < nx {
                            a[(row, idx(bi, bj, i + 1, j, m))] += east;
                        } else {
                            let src = partner(m, |s, m| s.right_partner_x(m));
                            for o in 0..bnx {
                                let w = wx.w_right[(o + bnx - bi) % bnx];
                                a[(row, idx(o, bj, 1, j, src))] += east * w;
                            }
                        }
                        if j > 1 {
                            a[(row, idx(bi, bj, i, j - 1, m))] += south;
                        } else {
                            let src = partner(m, |s, m| s.left_partner_y(m));
                            for o in 0..bny {
                                let w = wy.w_left[(o + bny - bj) % bny];
                                a[(row, idx(bi, o, i, ny, src))] += south * w;
                            }
                        }
                        if j < ny {
                            a[(row, idx(bi, bj, i, j + 1, m))] += north;
                        } else {
                            let src = partner(m, |s, m| s.right_partner_y(m));
                            for o in 0..bny {
                                let w = wy.w_right[(o + bny - bj) % bny];
                                a[(row, idx(bi, o, i, 1, src))] += north * w;
                            }
                        }
                    }
                }
            }
        }
    }
    let slow = if ensemble {
        bnx * bny * gcd(nx, ppx) * gcd(ny, ppy)
    } else {
        bnx * bny
    };
    Ok(AssembledOperator {
        matrix: a,
        layout: Layout::Patch2D {
            grid: grid.clone(),
            members,
        },
        macro_modes: Some(slow),
        weights: vec![wx, wy],
    })
}

/// Weakly damped wave system `u_t = v`, `v_t = A u + ε B v` as the block
/// operator `[[0, I], [A, ε B]]` on the stacked state `(u, v)`.
pub fn assemble_wave(
    a: &AssembledOperator,
    b: &AssembledOperator,
    damping: f64,
) -> Result<AssembledOperator> {
    let m = a.dimension();
    if b.dimension() != m {
        return Err(PatchError::DimensionMismatch {
            expected: m,
            found: b.dimension(),
        });
    }
    if !damping.is_finite() {
        return Err(PatchError::invalid("damping", "must be finite"));
    }
    let mut w = DMatrix::zeros(2 * m, 2 * m);
    w.view_mut((0, m), (m, m)).fill_with_identity();
    w.view_mut((m, 0), (m, m)).copy_from(a.matrix());
    w.view_mut((m, m), (m, m))
        .copy_from(&(b.matrix() * damping));
    Ok(AssembledOperator {
        matrix: w,
        layout: Layout::Wave {
            field: Box::new(a.layout().clone()),
        },
        macro_modes: None,
        weights: a.weights.clone(),
    })
}

/// The wave operator on a 1D patch grid; the damping operator is the same
/// patch scheme with unit diffusivity.
pub fn assemble_wave_1d(
    grid: &PatchGrid1D,
    profile: &DiffusivityProfile1D,
    coupling: CouplingSpec,
    ensemble: bool,
    damping: f64,
) -> Result<(AssembledOperator, AssembledOperator)> {
    let a = assemble_patch_1d(grid, profile, coupling, ensemble)?;
    let unit = DiffusivityProfile1D::new(vec![1.0; profile.period()])?;
    let b = assemble_patch_1d(grid, &unit, coupling, ensemble)?;
    Ok((assemble_wave(&a, &b, damping)?, a))
}

/// Default damping of the wave variant.
pub const DEFAULT_WAVE_DAMPING: f64 = 0.02;
