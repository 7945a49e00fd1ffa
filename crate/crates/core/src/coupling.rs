//! Inter-patch interpolation weights.
//!
//! Edge values come from circulant interpolation over patches of the
//! next-to-edge values:
//!
//! ```text
//! u^I_{n+1} = Σ_J w_right[(J - I) mod N] u^J_1
//! u^I_0     = Σ_J w_left [(J - I) mod N] u^J_n
//! ```
//!
//! The weights depend only on `N`, `r` and the scheme, never on the
//! diffusivities, and `w_left[m] = w_right[-m]`. That mirror relation is what
//! keeps the assembled operator symmetric.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PatchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum CouplingSpec {
    /// Global trigonometric interpolation over all patches.
    Spectral,
    /// Degree-`2P` polynomial interpolation through the `P` nearest patches
    /// on each side.
    Lagrangian { order: usize },
}

impl CouplingSpec {
    pub fn weights(&self, patches: usize, ratio: f64) -> Result<InterpolationWeights> {
        match *self {
            CouplingSpec::Spectral => spectral_weights(patches, ratio),
            CouplingSpec::Lagrangian { order } => lagrangian_weights(patches, ratio, order),
        }
    }
}

impl std::fmt::Display for CouplingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CouplingSpec::Spectral => write!(f, "spectral"),
            CouplingSpec::Lagrangian { order } => write!(f, "lagrangian(P={order})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationWeights {
    pub w_right: Vec<f64>,
    pub w_left: Vec<f64>,
}

impl InterpolationWeights {
    pub fn patches(&self) -> usize {
        self.w_right.len()
    }

    /// Rows as `offset,w_right,w_left` with offsets `0..N`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("offset,w_right,w_left\n");
        for (m, (r, l)) in self.w_right.iter().zip(&self.w_left).enumerate() {
            s.push_str(&format!("{m},{r:.17e},{l:.17e}\n"));
        }
        s
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(PatchError::invalid(
            "r",
            format!("size ratio must lie in (0, 1], got {r}"),
        ));
    }
    Ok(())
}

/// Trigonometric interpolation weights over the `N` wavenumbers centred on
/// zero. For even `N` the unpaired Nyquist mode contributes `cos(π(r - m))`,
/// the average of its `±` partners, so the weights stay real.
pub fn spectral_weights(patches: usize, r: f64) -> Result<InterpolationWeights> {
    if patches == 0 {
        return Err(PatchError::invalid("N", "need at least one patch"));
    }
    check_ratio(r)?;
    let w = |shift: f64| -> Vec<f64> {
        (0..patches)
            .map(|m| {
                // wrap the offset by whole periods first, so the kernel never
                // sees a large argument that is nearly a multiple of N
                let wraps = ((shift - m as f64) / patches as f64).round() as i64;
                let offset = m as i64 + wraps * patches as i64;
                trig_sum(patches, shift - offset as f64) / patches as f64
            })
            .collect()
    };
    Ok(InterpolationWeights {
        w_right: w(r),
        w_left: w(-r),
    })
}

// Σ_κ cos(2π κ s / N) over the symmetric wavenumber set.
fn trig_sum(n: usize, s: f64) -> f64 {
    let half = ((n - 1) / 2) as i64;
    let theta = 2.0 * PI * s / n as f64;
    let mut sum = if (theta / 2.0).sin().abs() < 1e-8 {
        (-half..=half).map(|k| (k as f64 * theta).cos()).sum()
    } else {
        // Dirichlet kernel
        ((half as f64 + 0.5) * theta).sin() / (theta / 2.0).sin()
    };
    if n.is_multiple_of(2) {
        sum += (PI * s).cos();
    }
    sum
}

/// Weights from the central-difference expansion of the shift operator
///
/// ```text
/// E^r = 1 + Σ_{k=1..P} Π_{l<k}(r² - l²) [ (2k/r) μδ^{2k-1} + δ^{2k} ] / (2k)!
/// ```
///
/// truncated after `δ^{2P}`, which reproduces degree-`2P` polynomials through
/// the patches `-P..=P`.
pub fn lagrangian_weights(patches: usize, r: f64, order: usize) -> Result<InterpolationWeights> {
    if order == 0 {
        return Err(PatchError::invalid(
            "order",
            "Lagrangian order must be at least 1",
        ));
    }
    if 2 * order + 1 > patches {
        return Err(PatchError::invalid(
            "order",
            format!(
                "stencil of {} patches is wider than the {patches} available",
                2 * order + 1
            ),
        ));
    }
    check_ratio(r)?;
    let wrap = |stencil: Vec<f64>| -> Vec<f64> {
        let mut w = vec![0.0; patches];
        for (j, c) in stencil.into_iter().enumerate() {
            let offset = j as i64 - order as i64;
            w[offset.rem_euclid(patches as i64) as usize] = c;
        }
        w
    };
    let right = shift_stencil(r, order);
    let left = shift_stencil(-r, order);
    #[cfg(debug_assertions)]
    for (s, w) in [(r, &right), (-r, &left)] {
        for (j, c) in w.iter().enumerate() {
            let exact = lagrange_basis(order, j, s);
            debug_assert!(
                (c - exact).abs() <= 1e-11 * (1.0 + exact.abs()),
                "shift expansion disagrees with interpolation at node {j}: {c} vs {exact}"
            );
        }
    }
    Ok(InterpolationWeights {
        w_right: wrap(right),
        w_left: wrap(left),
    })
}

// Coefficients of E^s on offsets -P..=P.
fn shift_stencil(s: f64, order: usize) -> Vec<f64> {
    let width = 2 * order + 1;
    let mid = order;
    let mut out = vec![0.0; width];
    out[mid] = 1.0;
    let second = [1.0, -2.0, 1.0];
    let mean_first = [-0.5, 0.0, 0.5];
    // (δ²)^{k-1}, centred
    let mut even = vec![1.0];
    let mut product = 1.0; // Π_{1≤l<k}(s² - l²)
    let mut factorial = 1.0; // (2k)!
    for k in 1..=order {
        factorial *= (2 * k - 1) as f64 * (2 * k) as f64;
        let odd = convolve(&even, &mean_first);
        let next_even = convolve(&even, &second);
        let c_odd = 2.0 * k as f64 * s * product / factorial;
        let c_even = s * s * product / factorial;
        let half = next_even.len() / 2;
        for (j, (o, e)) in odd.iter().zip(&next_even).enumerate() {
            out[mid + j - half] += c_odd * o + c_even * e;
        }
        product *= s * s - (k * k) as f64;
        even = next_even;
    }
    out
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(debug_assertions)]
fn lagrange_basis(order: usize, node: usize, x: f64) -> f64 {
    let xj = node as f64 - order as f64;
    (0..=2 * order)
        .filter(|&m| m != node)
        .map(|m| {
            let xm = m as f64 - order as f64;
            (x - xm) / (xj - xm)
        })
        .product()
}

/// Edge values `(u_0, u_{n+1})` from next-to-edge values `u_1` and `u_n`,
/// one entry per patch.
pub fn apply_edges_1d(
    weights: &InterpolationWeights,
    u1: &[f64],
    un: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = weights.patches();
    for v in [u1, un] {
        if v.len() != n {
            return Err(PatchError::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    let circulant = |w: &[f64], v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| w[(j + n - i) % n] * v[j]).sum())
            .collect()
    };
    Ok((
        circulant(&weights.w_left, un),
        circulant(&weights.w_right, u1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spectral_unit_ratio_is_a_shift() {
        let w = spectral_weights(3, 1.0).unwrap();
        for (got, want) in w.w_right.iter().zip([0.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        for (got, want) in w.w_left.iter().zip([0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn spectral_single_patch() {
        let w = spectral_weights(1, 0.37).unwrap();
        assert_eq!(w.w_right, vec![1.0]);
        assert_eq!(w.w_left, vec![1.0]);
    }

    #[test]
    fn spectral_rows_sum_to_one_and_mirror() {
        for n in 1..=12 {
            let w = spectral_weights(n, 0.3).unwrap();
            assert_abs_diff_eq!(w.w_right.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(w.w_left.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            for m in 0..n {
                assert_abs_diff_eq!(w.w_left[m], w.w_right[(n - m) % n], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn spectral_matches_direct_fourier_sum() {
        let (n, r) = (9usize, 0.3);
        let w = spectral_weights(n, r).unwrap();
        for m in 0..n {
            let direct: f64 = (-4i64..=4)
                .map(|k| (2.0 * PI * k as f64 * (r - m as f64) / n as f64).cos())
                .sum::<f64>()
                / n as f64;
            assert_abs_diff_eq!(w.w_right[m], direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn lagrangian_nearest_neighbour() {
        let r = 0.3;
        let w = lagrangian_weights(5, r, 1).unwrap();
        assert_abs_diff_eq!(w.w_right[4], r * (r - 1.0) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w_right[0], 1.0 - r * r, epsilon = 1e-15);
        assert_abs_diff_eq!(w.w_right[1], r * (r + 1.0) / 2.0, epsilon = 1e-15);
        assert_eq!(w.w_right[2], 0.0);
        assert_eq!(w.w_right[3], 0.0);
        let exact = lagrangian_weights(3, 1.0, 1).unwrap();
        assert_eq!(exact.w_right, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn lagrangian_rejects_wide_stencil() {
        assert!(lagrangian_weights(4, 0.5, 2).is_err());
        assert!(lagrangian_weights(5, 0.5, 2).is_ok());
        assert!(lagrangian_weights(5, 0.5, 0).is_err());
    }

    #[test]
    fn edges_of_constants_and_shift() {
        let w = spectral_weights(5, 1.0).unwrap();
        let u1: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let un: Vec<f64> = (0..5).map(|i| 10.0 + i as f64).collect();
        let (u0, unp1) = apply_edges_1d(&w, &u1, &un).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(unp1[i], u1[(i + 1) % 5], epsilon = 1e-13);
            assert_abs_diff_eq!(u0[i], un[(i + 4) % 5], epsilon = 1e-13);
        }
        let c = vec![2.5; 5];
        let (a, b) = apply_edges_1d(&lagrangian_weights(5, 0.2, 2).unwrap(), &c, &c).unwrap();
        for v in a.iter().chain(&b) {
            assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-14);
        }
        assert!(apply_edges_1d(&w, &c[..4], &c).is_err());
    }

    #[test]
    fn csv_export() {
        let csv = spectral_weights(3, 1.0).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("offset,w_right,w_left\n0,"));
    }
}
