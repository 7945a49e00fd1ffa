//! Periodic heterogeneous diffusivities and full-lattice reference operators.
//!
//! A 1D profile of period `p` stores `values[l] = κ_{l+1/2}`, the diffusivity
//! of the bond between lattice points `l` and `l + 1`; any half index wraps
//! modulo `p`. In 2D, `kx[i][j] = κ_{i+1/2, j}` and `ky[i][j] = κ_{i, j+1/2}`
//! share the same `(p_x, p_y)` periods.
//!
//! Full-lattice operators are the microscale systems themselves, assembled on
//! a periodic lattice whose point count is a multiple of the period. 2D
//! unknowns are ordered with `i` fastest: index `i + M_x * j`.
//!
//! Random profiles use `ChaCha8Rng::seed_from_u64(seed)` from `rand_chacha`
//! 0.9 and the `StandardNormal` sampler from `rand_distr` 0.5. Both are
//! portable, so a seed reproduces the same profile bit-for-bit everywhere.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledOperator, Layout};
use crate::error::{PatchError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Profile1DRecord", into = "Profile1DRecord")]
pub struct DiffusivityProfile1D {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Profile1DRecord {
    period: usize,
    values: Vec<f64>,
}

impl TryFrom<Profile1DRecord> for DiffusivityProfile1D {
    type Error = PatchError;

    fn try_from(rec: Profile1DRecord) -> Result<Self> {
        if rec.period != rec.values.len() {
            return Err(PatchError::invalid(
                "period",
                format!("period {} but {} values", rec.period, rec.values.len()),
            ));
        }
        DiffusivityProfile1D::new(rec.values)
    }
}

impl From<DiffusivityProfile1D> for Profile1DRecord {
    fn from(p: DiffusivityProfile1D) -> Self {
        Profile1DRecord {
            period: p.values.len(),
            values: p.values,
        }
    }
}

fn check_positive(field: &'static str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(PatchError::invalid(
            field,
            "at least one diffusivity is required",
        ));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(PatchError::invalid(
            field,
            format!("diffusivities must be finite and positive, found {bad}"),
        ));
    }
    Ok(())
}

impl DiffusivityProfile1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_positive("values", &values)?;
        Ok(Self { values })
    }

    pub fn constant(kappa: f64) -> Result<Self> {
        Self::new(vec![kappa])
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `κ_{m+1/2}` for any integer `m`.
    pub fn kappa_at(&self, half_index: i64) -> f64 {
        let p = self.values.len() as i64;
        self.values[half_index.rem_euclid(p) as usize]
    }

    /// The profile cyclically shifted so that `shifted.kappa_at(m) == self.kappa_at(m + shift)`.
    pub fn shifted(&self, shift: i64) -> Self {
        let p = self.period() as i64;
        let values = (0..p).map(|m| self.kappa_at(m + shift)).collect();
        Self { values }
    }

    /// Harmonic mean of one period.
    pub fn harmonic_mean(&self) -> f64 {
        self.period() as f64 / self.values.iter().map(|k| k.recip()).sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Profile2DRecord", into = "Profile2DRecord")]
pub struct DiffusivityProfile2D {
    periods: (usize, usize),
    // both stored row-major: entry (i, j) at i * p_y + j
    kx: Vec<f64>,
    ky: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Profile2DRecord {
    periods: [usize; 2],
    kx: Vec<Vec<f64>>,
    ky: Vec<Vec<f64>>,
}

impl TryFrom<Profile2DRecord> for DiffusivityProfile2D {
    type Error = PatchError;

    fn try_from(rec: Profile2DRecord) -> Result<Self> {
        let p = DiffusivityProfile2D::from_rows(&rec.kx, &rec.ky)?;
        if [p.periods.0, p.periods.1] != rec.periods {
            return Err(PatchError::invalid(
                "periods",
                format!(
                    "declared periods {:?} but grids are {}x{}",
                    rec.periods, p.periods.0, p.periods.1
                ),
            ));
        }
        Ok(p)
    }
}

impl From<DiffusivityProfile2D> for Profile2DRecord {
    fn from(p: DiffusivityProfile2D) -> Self {
        let (px, py) = p.periods;
        let rows = |v: &[f64]| (0..px).map(|i| v[i * py..(i + 1) * py].to_vec()).collect();
        Profile2DRecord {
            periods: [px, py],
            kx: rows(&p.kx),
            ky: rows(&p.ky),
        }
    }
}

impl DiffusivityProfile2D {
    /// Builds a profile from `p_x` rows of `p_y` entries each.
    pub fn from_rows(kx: &[Vec<f64>], ky: &[Vec<f64>]) -> Result<Self> {
        let px = kx.len();
        if px == 0 || kx[0].is_empty() {
            return Err(PatchError::invalid("kx", "empty diffusivity grid"));
        }
        let py = kx[0].len();
        let flat = |field: &'static str, g: &[Vec<f64>]| -> Result<Vec<f64>> {
            if g.len() != px || g.iter().any(|row| row.len() != py) {
                return Err(PatchError::invalid(
                    field,
                    format!("grid must be {px}x{py}"),
                ));
            }
            let v: Vec<f64> = g.iter().flatten().copied().collect();
            check_positive(field, &v)?;
            Ok(v)
        };
        Ok(Self {
            periods: (px, py),
            kx: flat("kx", kx)?,
            ky: flat("ky", ky)?,
        })
    }

    /// Uniform diffusivity `kappa` with the given periods.
    pub fn constant(kappa: f64, periods: (usize, usize)) -> Result<Self> {
        let (px, py) = periods;
        let row = vec![vec![kappa; py]; px];
        Self::from_rows(&row, &row)
    }

    pub fn periods(&self) -> (usize, usize) {
        self.periods
    }

    /// `κ_{i+1/2, j}` with both indices taken modulo the periods.
    pub fn kx(&self, i: i64, j: i64) -> f64 {
        self.kx[self.flat_index(i, j)]
    }

    /// `κ_{i, j+1/2}` with both indices taken modulo the periods.
    pub fn ky(&self, i: i64, j: i64) -> f64 {
        self.ky[self.flat_index(i, j)]
    }

    fn flat_index(&self, i: i64, j: i64) -> usize {
        let (px, py) = (self.periods.0 as i64, self.periods.1 as i64);
        (i.rem_euclid(px) * py + j.rem_euclid(py)) as usize
    }
}

/// Periodic 1D lattice operator of `points` points, spacing `d`.
pub fn full_lattice_operator_1d(
    profile: &DiffusivityProfile1D,
    points: usize,
    d: f64,
) -> Result<AssembledOperator> {
    if points < 3 {
        return Err(PatchError::invalid(
            "points",
            "need at least 3 lattice points",
        ));
    }
    if !(d > 0.0) {
        return Err(PatchError::invalid("d", "spacing must be positive"));
    }
    if !points.is_multiple_of(profile.period()) {
        return Err(PatchError::PeriodMismatch {
            points,
            period: profile.period(),
        });
    }
    let scale = d.powi(-2);
    let mut a = DMatrix::zeros(points, points);
    for g in 0..points {
        let right = profile.kappa_at(g as i64) * scale;
        let left = profile.kappa_at(g as i64 - 1) * scale;
        a[(g, g)] -= right + left;
        a[(g, (g + 1) % points)] += right;
        a[(g, (g + points - 1) % points)] += left;
    }
    Ok(AssembledOperator::new(
        a,
        Layout::FullLattice1D { points, spacing: d },
        None,
    ))
}

/// Periodic 2D lattice operator on `points.0 × points.1` points with the
/// five-point heterogeneous stencil; unknown `(i, j)` sits at `i + M_x * j`.
pub fn full_lattice_operator_2d(
    profile: &DiffusivityProfile2D,
    points: (usize, usize),
    spacing: (f64, f64),
) -> Result<AssembledOperator> {
    let (mx, my) = points;
    let (px, py) = profile.periods();
    check_lattice_2d(points, (px, py), spacing)?;
    let (sx, sy) = (spacing.0.powi(-2), spacing.1.powi(-2));
    let n = mx * my;
    let idx = |i: usize, j: usize| (i % mx) + mx * (j % my);
    let mut a = DMatrix::zeros(n, n);
    for j in 0..my {
        for i in 0..mx {
            let row = idx(i, j);
            let (ii, jj) = (i as i64, j as i64);
            let east = profile.kx(ii, jj) * sx;
            let west = profile.kx(ii - 1, jj) * sx;
            let north = profile.ky(ii, jj) * sy;
            let south = profile.ky(ii, jj - 1) * sy;
            a[(row, row)] -= east + west + north + south;
            a[(row, idx(i + 1, j))] += east;
            a[(row, idx(i + mx - 1, j))] += west;
            a[(row, idx(i, j + 1))] += north;
            a[(row, idx(i, j + my - 1))] += south;
        }
    }
    Ok(AssembledOperator::new(
        a,
        Layout::FullLattice2D { points, spacing },
        None,
    ))
}

fn check_lattice_2d(
    points: (usize, usize),
    periods: (usize, usize),
    spacing: (f64, f64),
) -> Result<()> {
    if points.0 == 0 || points.1 == 0 {
        return Err(PatchError::invalid("points", "lattice must be non-empty"));
    }
    if !(spacing.0 > 0.0 && spacing.1 > 0.0) {
        return Err(PatchError::invalid("spacing", "spacings must be positive"));
    }
    if !points.0.is_multiple_of(periods.0) {
        return Err(PatchError::PeriodMismatch {
            points: points.0,
            period: periods.0,
        });
    }
    if !points.1.is_multiple_of(periods.1) {
        return Err(PatchError::PeriodMismatch {
            points: points.1,
            period: periods.1,
        });
    }
    Ok(())
}

/// Eigenvalues of [`full_lattice_operator_1d`] via Bloch reduction over
/// whole periods: one `p × p` Hermitian block per cell wavenumber. Sorted
/// ascending.
pub fn full_lattice_spectrum_1d(
    profile: &DiffusivityProfile1D,
    points: usize,
    d: f64,
) -> Result<Vec<f64>> {
    let p2 = DiffusivityProfile2D::from_rows(
        &profile
            .values()
            .iter()
            .map(|&k| vec![k])
            .collect::<Vec<_>>(),
        &vec![vec![1.0]; profile.period()],
    )?;
    // a 1D lattice is a 2D lattice one point tall with no y-bonds in play
    let mut values = bloch_spectrum(&p2, (points, 1), (d, 1.0), false)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigenvalues of [`full_lattice_operator_2d`] via Bloch reduction over
/// periodic cells, without forming the `M_x M_y`-square dense matrix.
/// Sorted ascending.
pub fn full_lattice_spectrum_2d(
    profile: &DiffusivityProfile2D,
    points: (usize, usize),
    spacing: (f64, f64),
) -> Result<Vec<f64>> {
    let mut values = bloch_spectrum(profile, points, spacing, true)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn bloch_spectrum(
    profile: &DiffusivityProfile2D,
    points: (usize, usize),
    spacing: (f64, f64),
    with_y: bool,
) -> Result<Vec<f64>> {
    let (px, py) = profile.periods();
    check_lattice_2d(points, (px, py), spacing)?;
    if !with_y && points.0 < 3 {
        return Err(PatchError::invalid(
            "points",
            "need at least 3 lattice points",
        ));
    }
    let (cx, cy) = (points.0 / px, points.1 / py);
    let (sx, sy) = (spacing.0.powi(-2), spacing.1.powi(-2));
    let cell = px * py;
    let local = |i: usize, j: usize| i + px * j;
    let mut out = Vec::with_capacity(points.0 * points.1);
    for b in 0..cy {
        let phase_y = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * b as f64 / cy as f64);
        for a in 0..cx {
            let phase_x =
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * a as f64 / cx as f64);
            let mut m = DMatrix::<Complex64>::zeros(cell, cell);
            for j in 0..py {
                for i in 0..px {
                    let row = local(i, j);
                    let (ii, jj) = (i as i64, j as i64);
                    let east = profile.kx(ii, jj) * sx;
                    let west = profile.kx(ii - 1, jj) * sx;
                    m[(row, row)] -= Complex64::from(east + west);
                    let (ie, pe) = if i + 1 == px {
                        (0, phase_x)
                    } else {
                        (i + 1, 1.0.into())
                    };
                    let (iw, pw) = if i == 0 {
                        (px - 1, phase_x.conj())
                    } else {
                        (i - 1, 1.0.into())
                    };
                    m[(row, local(ie, j))] += pe * east;
                    m[(row, local(iw, j))] += pw * west;
                    if with_y {
                        let north = profile.ky(ii, jj) * sy;
                        let south = profile.ky(ii, jj - 1) * sy;
                        m[(row, row)] -= Complex64::from(north + south);
                        let (jn, pn) = if j + 1 == py {
                            (0, phase_y)
                        } else {
                            (j + 1, 1.0.into())
                        };
                        let (js, ps) = if j == 0 {
                            (py - 1, phase_y.conj())
                        } else {
                            (j - 1, 1.0.into())
                        };
                        m[(row, local(i, jn))] += pn * north;
                        m[(row, local(i, js))] += ps * south;
                    }
                }
            }
            out.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
        }
    }
    Ok(out)
}

/// Log-normal profile `κ = exp(sigma · z)` with `z` standard normal.
pub fn random_lognormal_profile(p: usize, sigma: f64, seed: u64) -> Result<DiffusivityProfile1D> {
    if p == 0 {
        return Err(PatchError::invalid("p", "period must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PatchError::invalid(
            "sigma",
            "must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (sigma * z).exp()
        })
        .collect();
    DiffusivityProfile1D::new(values)
}

/// 2D log-normal profile; `kx` entries are drawn first, then `ky`, each in
/// row-major order.
pub fn random_lognormal_profile_2d(
    periods: (usize, usize),
    sigma: f64,
    seed: u64,
) -> Result<DiffusivityProfile2D> {
    let (px, py) = periods;
    if px == 0 || py == 0 {
        return Err(PatchError::invalid("periods", "periods must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PatchError::invalid(
            "sigma",
            "must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = || -> Vec<Vec<f64>> {
        (0..px)
            .map(|_| {
                (0..py)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (sigma * z).exp()
                    })
                    .collect()
            })
            .collect()
    };
    let kx = grid();
    let ky = grid();
    DiffusivityProfile2D::from_rows(&kx, &ky)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p123() -> DiffusivityProfile1D {
        DiffusivityProfile1D::new(vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn kappa_lookup_wraps() {
        let p = p123();
        assert_eq!(p.kappa_at(0), 1.0);
        assert_eq!(p.kappa_at(3), 1.0);
        assert_eq!(p.kappa_at(-1), 3.0);
        assert_eq!(p.kappa_at(-4), 3.0);
    }

    #[test]
    fn rejects_nonpositive_diffusivity() {
        assert!(DiffusivityProfile1D::new(vec![1.0, 0.0]).is_err());
        assert!(DiffusivityProfile1D::new(vec![1.0, f64::NAN]).is_err());
        assert!(DiffusivityProfile1D::new(vec![]).is_err());
    }

    #[test]
    fn homogeneous_second_difference() {
        let p = DiffusivityProfile1D::constant(1.0).unwrap();
        let a = full_lattice_operator_1d(&p, 4, 1.0).unwrap();
        let m = a.matrix();
        for row in 0..4 {
            for col in 0..4 {
                let expected = match (col + 4 - row) % 4 {
                    0 => -2.0,
                    1 | 3 => 1.0,
                    _ => 0.0,
                };
                assert_eq!(m[(row, col)], expected);
            }
        }
    }

    #[test]
    fn two_periodic_row_by_hand() {
        // κ_{1/2} = 1 joins points 0 and 1; κ_{-1/2} = κ_{3/2} = 2 joins 3 and 0.
        let p = DiffusivityProfile1D::new(vec![1.0, 2.0]).unwrap();
        let a = full_lattice_operator_1d(&p, 4, 1.0).unwrap();
        let row: Vec<f64> = a.matrix().row(0).iter().copied().collect();
        assert_eq!(row, vec![-3.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn rejects_point_count_not_multiple_of_period() {
        let err = full_lattice_operator_1d(&p123(), 7, 1.0).unwrap_err();
        assert_eq!(
            err,
            PatchError::PeriodMismatch {
                points: 7,
                period: 3
            }
        );
        assert!(full_lattice_operator_1d(&p123(), 2, 1.0).is_err());
    }

    #[test]
    fn homogeneous_2d_rows() {
        let p = DiffusivityProfile2D::constant(1.0, (1, 1)).unwrap();
        let a = full_lattice_operator_2d(&p, (3, 3), (1.0, 1.0)).unwrap();
        for r in 0..9 {
            assert_eq!(a.matrix()[(r, r)], -4.0);
            assert_abs_diff_eq!(a.matrix().row(r).sum(), 0.0);
        }
    }

    fn chetr() -> DiffusivityProfile2D {
        let kx = vec![
            vec![18.91, 1.06, 0.63, 2.11],
            vec![4.46, 0.72, 1.02, 1.66],
            vec![4.89, 0.88, 1.31, 5.79],
            vec![1.62, 2.68, 2.32, 1.24],
            vec![0.42, 0.88, 0.59, 1.35],
        ];
        let ky = vec![
            vec![0.48, 0.63, 1.31, 0.51],
            vec![0.39, 10.38, 3.07, 0.37],
            vec![2.10, 1.74, 2.68, 1.63],
            vec![1.20, 4.38, 0.50, 1.02],
            vec![2.55, 1.23, 0.33, 1.06],
        ];
        DiffusivityProfile2D::from_rows(&kx, &ky).unwrap()
    }

    #[test]
    fn table_profile_origin_row() {
        // Point (0,0) on a 5x4 lattice: east κ_{1/2,0} = 18.91, west
        // κ_{-1/2,0} = κ_{9/2,0} = 0.42, north κ_{0,1/2} = 0.48, south
        // κ_{0,-1/2} = κ_{0,7/2} = 0.51.
        let a = full_lattice_operator_2d(&chetr(), (5, 4), (1.0, 1.0)).unwrap();
        let m = a.matrix();
        let idx = |i: usize, j: usize| i + 5 * j;
        assert_abs_diff_eq!(m[(0, 0)], -(18.91 + 0.42 + 0.48 + 0.51), epsilon = 1e-12);
        assert_eq!(m[(0, idx(1, 0))], 18.91);
        assert_eq!(m[(0, idx(4, 0))], 0.42);
        assert_eq!(m[(0, idx(0, 1))], 0.48);
        assert_eq!(m[(0, idx(0, 3))], 0.51);
        assert_eq!(a.symmetry_defect().defect, 0.0);
    }

    #[test]
    fn bloch_spectrum_matches_dense_2d() {
        let p = random_lognormal_profile_2d((2, 3), 1.0, 7).unwrap();
        let dense = full_lattice_operator_2d(&p, (6, 6), (0.5, 0.7)).unwrap();
        let mut direct: Vec<f64> = dense
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        direct.sort_by(f64::total_cmp);
        let bloch = full_lattice_spectrum_2d(&p, (6, 6), (0.5, 0.7)).unwrap();
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in direct.iter().zip(&bloch) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12 * scale);
        }
    }

    #[test]
    fn bloch_spectrum_matches_dense_1d() {
        let p = random_lognormal_profile(3, 1.0, 11).unwrap();
        let dense = full_lattice_operator_1d(&p, 12, 0.3).unwrap();
        let mut direct: Vec<f64> = dense
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        direct.sort_by(f64::total_cmp);
        let bloch = full_lattice_spectrum_1d(&p, 12, 0.3).unwrap();
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in direct.iter().zip(&bloch) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12 * scale);
        }
    }

    #[test]
    fn lognormal_profiles() {
        let flat = random_lognormal_profile(3, 0.0, 99).unwrap();
        assert_eq!(flat.values(), &[1.0, 1.0, 1.0]);
        let a = random_lognormal_profile(5, 2.0, 42).unwrap();
        let b = random_lognormal_profile(5, 2.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.is_finite() && *v > 0.0));
        assert_ne!(a, random_lognormal_profile(5, 2.0, 43).unwrap());
        let c = random_lognormal_profile_2d((3, 2), 2.0, 5).unwrap();
        assert_eq!(c, random_lognormal_profile_2d((3, 2), 2.0, 5).unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = p123();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"period":3,"values":[1.0,2.0,3.0]}"#);
        let back: DiffusivityProfile1D = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        assert!(
            serde_json::from_str::<DiffusivityProfile1D>(r#"{"period":2,"values":[1.0]}"#).is_err()
        );

        let q = chetr();
        let text = serde_json::to_string(&q).unwrap();
        assert!(text.starts_with(r#"{"periods":[5,4],"kx":[[18.91"#));
        let back: DiffusivityProfile2D = serde_json::from_str(&text).unwrap();
        assert_eq!(back, q);
    }
}
