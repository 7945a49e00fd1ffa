//! Ensembles of all phase shifts of a periodic diffusivity.
//!
//! Member `l` of a 1D ensemble sees `κ_{m+l+1/2}` wherever the base profile
//! has `κ_{m+1/2}`. Because the shifts run over a full period, the edge bond
//! of some member always matches the opposite edge bond of another member,
//! whatever the patch size. Coupling each member to its match keeps the
//! operator symmetric.
//!
//! 2D members are the pairs `(φ, ψ)` of x and y shifts, stored at index
//! `φ p_y + ψ`. In every state vector the member index is innermost.

use nalgebra::DMatrix;

use crate::error::{PatchError, Result};
use crate::microscale::{DiffusivityProfile1D, DiffusivityProfile2D};

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec1D {
    base: DiffusivityProfile1D,
}

impl EnsembleSpec1D {
    pub fn new(base: DiffusivityProfile1D) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &DiffusivityProfile1D {
        &self.base
    }

    pub fn size(&self) -> usize {
        self.base.period()
    }

    pub fn member(&self, l: usize) -> DiffusivityProfile1D {
        self.base.shifted(l as i64)
    }

    pub fn members(&self) -> Vec<DiffusivityProfile1D> {
        (0..self.size()).map(|l| self.member(l)).collect()
    }

    /// Member whose right edge bond matches the left edge bond of member `l`
    /// for patches of `n` interior points.
    pub fn left_partner(&self, l: usize, n: usize) -> usize {
        let p = self.size();
        (l + p - n % p) % p
    }

    pub fn right_partner(&self, l: usize, n: usize) -> usize {
        (l + n) % self.size()
    }
}

pub fn build_ensemble_1d(profile: &DiffusivityProfile1D) -> EnsembleSpec1D {
    EnsembleSpec1D::new(profile.clone())
}

/// The `p × p` matrix `K` with `K[l][(l - n) mod p] = κ_{l+1/2}`.
///
/// The left-edge coupling block is `K ⊗ ℐ_1n` and the right-edge block
/// `Kᵀ ⊗ ℐ_n1`: member `l` takes its left edge from member `l - n`, whose
/// right edge bond `κ_{n+(l-n)+1/2}` equals `κ_{l+1/2}`.
pub fn build_shift_matrix(profile: &DiffusivityProfile1D, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(PatchError::invalid("n", "patch size must be at least 1"));
    }
    let spec = EnsembleSpec1D::new(profile.clone());
    let p = profile.period();
    let mut k = DMatrix::zeros(p, p);
    for l in 0..p {
        k[(l, spec.left_partner(l, n))] = profile.values()[l];
    }
    Ok(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec2D {
    base: DiffusivityProfile2D,
    px: DMatrix<f64>,
    py: DMatrix<f64>,
    nx: usize,
    ny: usize,
}

impl EnsembleSpec2D {
    pub fn base(&self) -> &DiffusivityProfile2D {
        &self.base
    }

    pub fn size(&self) -> usize {
        let (a, b) = self.base.periods();
        a * b
    }

    /// `(φ, ψ)` of member index `m`.
    pub fn phases(&self, m: usize) -> (usize, usize) {
        let py = self.base.periods().1;
        (m / py, m % py)
    }

    pub fn index(&self, phi: usize, psi: usize) -> usize {
        let (px, py) = self.base.periods();
        (phi % px) * py + psi % py
    }

    /// `κ_{i+1/2, j}` seen by member `m`.
    pub fn kx(&self, m: usize, i: i64, j: i64) -> f64 {
        let (phi, psi) = self.phases(m);
        self.base.kx(i + phi as i64, j + psi as i64)
    }

    /// `κ_{i, j+1/2}` seen by member `m`.
    pub fn ky(&self, m: usize, i: i64, j: i64) -> f64 {
        let (phi, psi) = self.phases(m);
        self.base.ky(i + phi as i64, j + psi as i64)
    }

    pub fn permutation_x(&self) -> &DMatrix<f64> {
        &self.px
    }

    pub fn permutation_y(&self) -> &DMatrix<f64> {
        &self.py
    }

    /// Member feeding the left x-edge of member `m`.
    pub fn left_partner_x(&self, m: usize) -> usize {
        let (phi, psi) = self.phases(m);
        let px = self.base.periods().0;
        self.index(phi + px - self.nx % px, psi)
    }

    pub fn right_partner_x(&self, m: usize) -> usize {
        let (phi, psi) = self.phases(m);
        self.index(phi + self.nx, psi)
    }

    pub fn left_partner_y(&self, m: usize) -> usize {
        let (phi, psi) = self.phases(m);
        let py = self.base.periods().1;
        self.index(phi, psi + py - self.ny % py)
    }

    pub fn right_partner_y(&self, m: usize) -> usize {
        let (phi, psi) = self.phases(m);
        self.index(phi, psi + self.ny)
    }
}

/// Builds the 2D ensemble and the permutations `P_x`, `P_y` with
/// `P_x[a][b] = 1` when `a = ((φ_b + n_x) mod p_x, ψ_b)`, likewise for `P_y`.
///
/// `P_x` carries right-edge member order to left-edge member order: the left
/// x-edge of member `a` reads member `b` with `P_x[a][b] = 1`, and the bond
/// diffusivities at those two edges agree for every row `j`. The identity is
/// checked here before the ensemble is returned.
pub fn build_permutations_2d(
    profile: &DiffusivityProfile2D,
    nx: usize,
    ny: usize,
) -> Result<EnsembleSpec2D> {
    if nx == 0 || ny == 0 {
        return Err(PatchError::invalid("n", "patch sizes must be at least 1"));
    }
    let (ppx, ppy) = profile.periods();
    let p = ppx * ppy;
    let mut spec = EnsembleSpec2D {
        base: profile.clone(),
        px: DMatrix::zeros(p, p),
        py: DMatrix::zeros(p, p),
        nx,
        ny,
    };
    for b in 0..p {
        let (ax, ay) = (spec.right_partner_x(b), spec.right_partner_y(b));
        spec.px[(ax, b)] = 1.0;
        spec.py[(ay, b)] = 1.0;
    }
    for a in 0..p {
        let bx = spec.left_partner_x(a);
        let by = spec.left_partner_y(a);
        if spec.px[(a, bx)] != 1.0 || spec.py[(a, by)] != 1.0 {
            return Err(PatchError::Consistency(format!(
                "member {a} partner lookup disagrees with the permutations"
            )));
        }
        for t in 0..ppx.max(ppy) as i64 {
            let left_x = spec.kx(a, 0, t);
            let right_x = spec.kx(bx, nx as i64, t);
            let left_y = spec.ky(a, t, 0);
            let right_y = spec.ky(by, t, ny as i64);
            if left_x != right_x || left_y != right_y {
                return Err(PatchError::Consistency(format!(
                    "edge diffusivities of member {a} do not match its partners"
                )));
            }
        }
    }
    Ok(spec)
}

/// Pointwise mean over the `p` members of a member-innermost state.
pub fn ensemble_mean(state: &[f64], members: usize) -> Result<Vec<f64>> {
    if members == 0 {
        return Err(PatchError::invalid(
            "members",
            "ensemble must have at least one member",
        ));
    }
    if !state.len().is_multiple_of(members) {
        return Err(PatchError::DimensionMismatch {
            expected: (state.len() / members + 1) * members,
            found: state.len(),
        });
    }
    Ok(state
        .chunks_exact(members)
        .map(|c| c.iter().sum::<f64>() / members as f64)
        .collect())
}
