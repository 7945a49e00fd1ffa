//! Fourier symbol of the phase-shift ensemble and homogenised coefficients.
//!
//! Seeking ensemble solutions `u_{i,l} ∝ e^{i k i}` turns the lattice into
//! the `p × p` Hermitian symbol `A(k)`, stored as `d² ∂t`. Its slow
//! eigenvalue branch expands as `λ(k) = -K2 k² + K4 k⁴ - ⋯`, which gives the
//! homogenised equation `u_t = K2 u_xx + K4 d² u_xxxx + ⋯`.
//!
//! `K2` has the closed harmonic-mean form. `K4` comes from the Taylor
//! coefficients of the slow branch, read off by a discrete Cauchy integral on
//! a circle of complex wavenumbers where the branch is analytic. A least
//! squares fit on real wavenumbers suffers cancellation in the quartic term
//! and does not reach six digits.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PatchError, Result};
use crate::microscale::DiffusivityProfile1D;

#[derive(Clone, Debug, PartialEq)]
pub struct FourierSymbol {
    pub k: Complex64,
    pub matrix: DMatrix<Complex64>,
}

impl FourierSymbol {
    pub fn hermitian_defect(&self) -> f64 {
        let m = &self.matrix;
        (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of a real-wavenumber symbol, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Symbol at real wavenumber `k` (grid-scaled, so `k = q d`).
pub fn fourier_symbol(profile: &DiffusivityProfile1D, k: f64) -> FourierSymbol {
    symbol_at(profile, Complex64::new(k, 0.0))
}

fn symbol_at(profile: &DiffusivityProfile1D, k: Complex64) -> FourierSymbol {
    let p = profile.period();
    let forward = (Complex64::i() * k).exp();
    let backward = (-Complex64::i() * k).exp();
    let mut m = DMatrix::zeros(p, p);
    for l in 0..p {
        let right = profile.kappa_at(l as i64);
        let left = profile.kappa_at(l as i64 - 1);
        m[(l, l)] -= Complex64::from(right + left);
        m[(l, (l + 1) % p)] += forward * right;
        m[(l, (l + p - 1) % p)] += backward * left;
    }
    FourierSymbol { k, matrix: m }
}

/// The slow eigenvalue at real wavenumber `k`, refusing wavenumbers where
/// it comes within half the `k = 0` gap of another branch.
pub fn slow_branch(profile: &DiffusivityProfile1D, k: f64) -> Result<f64> {
    let vals = fourier_symbol(profile, k).eigenvalues();
    let slow_at = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("symbol has at least one eigenvalue");
    let slow = vals[slow_at];
    if vals.len() > 1 {
        let gap0 = zero_gap(profile);
        let nearest = vals
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != slow_at)
            .map(|(_, v)| (v - slow).abs())
            .fold(f64::INFINITY, f64::min);
        if nearest < 0.5 * gap0 {
            return Err(PatchError::BranchSeparation { k });
        }
    }
    Ok(slow)
}

// |largest nonzero eigenvalue| at k = 0, i.e. the distance from the zero
// eigenvalue to the next branch.
fn zero_gap(profile: &DiffusivityProfile1D) -> f64 {
    let vals = fourier_symbol(profile, 0.0).eigenvalues();
    vals.iter()
        .map(|v| v.abs())
        .filter(|v| *v > 1e-12 * profile.values().iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenisedCoefficients {
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K4")]
    pub k4: f64,
    pub beta: f64,
    pub d: f64,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Real wavenumbers where the truncated series is checked against the
    /// slow branch.
    pub check_nodes: Vec<f64>,
    /// Points on the integration circle.
    pub contour_points: usize,
    /// Circle radius; `None` picks `min(0.3, π/(2p))`.
    pub radius: Option<f64>,
    /// Bound on the series residual relative to `K2 k²`.
    pub residual_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            check_nodes: (1..=6).map(|m| 0.05 * m as f64).collect(),
            contour_points: 64,
            radius: None,
            residual_tolerance: 1e-10,
        }
    }
}

impl FitOptions {
    /// Defaults with the check nodes pulled in by `4/p` for periods above 4.
    /// The zone edge sits at `π/p`, and near it the slow branch meets the
    /// next one, so the fixed nodes up to 0.3 stop being usable for long
    /// periods.
    pub fn for_period(p: usize) -> Self {
        let scale = (4.0 / p as f64).min(1.0);
        let mut opts = Self::default();
        for k in &mut opts.check_nodes {
            *k *= scale;
        }
        opts
    }
}

/// `K2 = p / Σ 1/κ`.
pub fn harmonic_k2(profile: &DiffusivityProfile1D) -> f64 {
    profile.harmonic_mean()
}

/// `β = 2π² min κ / (p² d²)`.
pub fn decay_bound(profile: &DiffusivityProfile1D, d: f64) -> f64 {
    let p = profile.period() as f64;
    2.0 * PI * PI * profile.min() / (p * p * d * d)
}

pub fn extract_coefficients(
    profile: &DiffusivityProfile1D,
    d: f64,
) -> Result<HomogenisedCoefficients> {
    extract_coefficients_with(profile, d, &FitOptions::for_period(profile.period()))
}

pub fn extract_coefficients_with(
    profile: &DiffusivityProfile1D,
    d: f64,
    opts: &FitOptions,
) -> Result<HomogenisedCoefficients> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(PatchError::invalid("d", "spacing must be positive"));
    }
    if opts.contour_points < 8 {
        return Err(PatchError::invalid(
            "contour_points",
            "need at least 8 points",
        ));
    }
    let k2 = harmonic_k2(profile);
    let coeffs = taylor_coefficients(profile, k2, opts)?;
    let k2_fit = -coeffs[2];
    if ((k2_fit - k2) / k2).abs() > 1e-9 {
        return Err(PatchError::Consistency(format!(
            "slow-branch quadratic coefficient {k2_fit} disagrees with the harmonic mean {k2}"
        )));
    }
    let k4 = coeffs[4];

    let mut residual: f64 = 0.0;
    for &k in &opts.check_nodes {
        let direct = slow_branch(profile, k)?;
        let series: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * k.powi(j as i32))
            .sum();
        residual = residual.max((series - direct).abs() / (k2 * k * k));
    }
    if residual > opts.residual_tolerance {
        return Err(PatchError::FitResidual {
            residual,
            tolerance: opts.residual_tolerance,
        });
    }
    Ok(HomogenisedCoefficients {
        k2,
        k4,
        beta: decay_bound(profile, d),
        d,
        fit_residual: residual,
    })
}

// Taylor coefficients c_j of the slow branch, j < M/2, from the discrete
// Cauchy integral c_j = (1/M) Σ λ(ρ e^{iθ}) e^{-ijθ} / ρ^j. The branch is
// followed around the circle by continuity from its k² behaviour.
fn taylor_coefficients(
    profile: &DiffusivityProfile1D,
    k2: f64,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    let p = profile.period();
    let m = opts.contour_points;
    let rho = opts
        .radius
        .unwrap_or_else(|| (0.5 * PI / p as f64).min(0.3));
    let mut samples = Vec::with_capacity(m);
    let mut previous: Option<Complex64> = None;
    for t in 0..m {
        let theta = 2.0 * PI * t as f64 / m as f64;
        let k = Complex64::from_polar(rho, theta);
        let guess = previous.unwrap_or(-k * k * k2);
        let value = if p == 1 {
            symbol_at(profile, k).matrix[(0, 0)]
        } else {
            let eig = symbol_at(profile, k)
                .matrix
                .eigenvalues()
                .ok_or_else(|| PatchError::Consistency("complex eigen-solve failed".into()))?;
            let mut best = eig[0];
            let mut second = f64::INFINITY;
            for z in eig.iter().skip(1) {
                let dist = (z - guess).norm();
                if dist < (best - guess).norm() {
                    second = (best - guess).norm();
                    best = *z;
                } else {
                    second = second.min(dist);
                }
            }
            if second < 2.0 * (best - guess).norm() {
                return Err(PatchError::BranchSeparation { k: k.norm() });
            }
            best
        };
        samples.push(value);
        previous = Some(value);
    }
    let keep = m / 2;
    Ok((0..keep)
        .map(|j| {
            let c: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(t, s)| s * Complex64::from_polar(1.0, -2.0 * PI * (j * t) as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64;
            c.re / rho.powi(j as i32)
        })
        .collect())
}

/// `λ = -K2 q² + K4 d² q⁴` for each physical wavenumber `q`.
pub fn predict_macroscale_eigenvalues(
    coeffs: &HomogenisedCoefficients,
    wavenumbers: &[f64],
) -> Vec<f64> {
    wavenumbers
        .iter()
        .map(|q| -coeffs.k2 * q * q + coeffs.k4 * coeffs.d * coeffs.d * q.powi(4))
        .collect()
}

/// `(k, slow eigenvalue)` samples as CSV.
pub fn slow_branch_csv(profile: &DiffusivityProfile1D, ks: &[f64]) -> Result<String> {
    let mut s = String::from("k,lambda\n");
    for &k in ks {
        s.push_str(&format!("{k:.17e},{:.17e}\n", slow_branch(profile, k)?));
    }
    Ok(s)
}
