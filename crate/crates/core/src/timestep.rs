//! Time integration of `du/dt = L u`.
//!
//! Diffusion runs use the exact path `u(t) = Q e^{Λt} Qᵀ u0` from the
//! symmetric eigendecomposition; the sub-patch modes are far too stiff for
//! explicit steps to be economical. The wave system is not symmetric and
//! uses classical RK4 with a step limit of `2.5/ρ(L)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledOperator, Layout, Site};
use crate::error::{PatchError, Result};
use crate::spectra::SYMMETRY_TOLERANCE;

/// RK4 is stable for `dt ρ(L)` up to this factor on the negative real axis
/// and most of the imaginary one.
pub const RK4_STABILITY_FACTOR: f64 = 2.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `Σ u` per snapshot.
    pub masses: Vec<f64>,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            masses: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, u: DVector<f64>) {
        self.masses.push(u.sum());
        self.times.push(t);
        self.states.push(u);
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    /// Long-format CSV with one row per unknown per snapshot.
    ///
    /// 1D patches: `t,I,i,member,x,value`; 2D patches:
    /// `t,I,J,i,j,member,x,y,value`. A wave layout adds a leading `field`
    /// column (`u` or `v`). Other layouts: `t,index,x,y,value`.
    pub fn to_csv(&self, layout: &Layout) -> String {
        let (wave, field) = match layout {
            Layout::Wave { field } => (true, field.as_ref()),
            other => (false, other),
        };
        let mut header = String::from("t,");
        if wave {
            header.push_str("field,");
        }
        header.push_str(match field {
            Layout::Patch1D { .. } => "I,i,member,x,value\n",
            Layout::Patch2D { .. } => "I,J,i,j,member,x,y,value\n",
            _ => "index,x,y,value\n",
        });
        let mut s = header;
        let positions = field.positions();
        let m = field.dimension();
        for (t, u) in self.times.iter().zip(&self.states) {
            for (k, v) in u.iter().enumerate() {
                s.push_str(&format!("{t:.17e},"));
                if wave {
                    s.push_str(if k < m { "u," } else { "v," });
                }
                let inner = k % m;
                match field.site(inner) {
                    Site::Patch1D {
                        patch,
                        i,
                        member,
                        x,
                    } => s.push_str(&format!("{patch},{i},{member},{x:.17e},")),
                    Site::Patch2D {
                        patch,
                        point,
                        member,
                        x,
                        y,
                    } => s.push_str(&format!(
                        "{},{},{},{},{member},{x:.17e},{y:.17e},",
                        patch.0, patch.1, point.0, point.1
                    )),
                    _ => {
                        let (x, y) = positions[inner];
                        s.push_str(&format!("{inner},{x:.17e},{y:.17e},"))
                    }
                }
                s.push_str(&format!("{v:.17e}\n"));
            }
        }
        s
    }
}

fn check_state(op: &AssembledOperator, u0: &[f64]) -> Result<()> {
    if u0.len() != op.dimension() {
        return Err(PatchError::DimensionMismatch {
            expected: op.dimension(),
            found: u0.len(),
        });
    }
    Ok(())
}

/// Exact evolution of a symmetric operator to each of `times` (measured
/// from the initial state, strictly increasing, nonnegative). The
/// trajectory starts with the initial state at `t = 0` unless `times`
/// already begins at zero.
pub fn evolve_exact(op: &AssembledOperator, u0: &[f64], times: &[f64]) -> Result<Trajectory> {
    check_state(op, u0)?;
    let sym = op.symmetry_defect();
    if sym.relative > SYMMETRY_TOLERANCE {
        return Err(PatchError::NotSymmetric {
            defect: sym.relative,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(PatchError::invalid(
            "times",
            "must be nonnegative and strictly increasing",
        ));
    }
    let m = op.matrix();
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let u0 = DVector::from_column_slice(u0);
    let coeffs = eig.eigenvectors.transpose() * &u0;
    let mut traj = Trajectory::new();
    if times.first() != Some(&0.0) {
        traj.push(0.0, u0.clone());
    }
    for &t in times {
        let decayed = DVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(c, l)| c * (l * t).exp()),
        );
        traj.push(t, &eig.eigenvectors * decayed);
    }
    Ok(traj)
}

/// Spectral radius estimate by power iteration, `‖Lᵏx‖^{1/k}` with
/// renormalisation. Exact for symmetric operators in the limit and a
/// lower bound in general.
pub fn spectral_radius_estimate(m: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no special structure
    let mut x = DVector::from_iterator(n, (0..n).map(|k| 1.0 + ((k * 7919) % 97) as f64 / 97.0));
    x /= x.norm();
    // average over the second half so the start-up transient drops out
    let burn_in = iterations / 2;
    let mut log_growth = 0.0;
    let mut steps = 0usize;
    for it in 0..iterations.max(2) {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if it >= burn_in {
            log_growth += norm.ln();
            steps += 1;
        }
        x = y / norm;
    }
    (log_growth / steps as f64).exp()
}

/// `2.5 / ρ(L)`; infinite for the zero operator.
pub fn stability_limit(op: &AssembledOperator) -> f64 {
    let rho = spectral_radius_estimate(op.matrix(), 300);
    if rho == 0.0 {
        f64::INFINITY
    } else {
        RK4_STABILITY_FACTOR / rho
    }
}

/// Classical RK4 for `steps` steps of size `dt`. A step above
/// [`stability_limit`] is refused unless `allow_unstable` is set.
pub fn evolve_rk4(
    op: &AssembledOperator,
    u0: &[f64],
    dt: f64,
    steps: usize,
    allow_unstable: bool,
) -> Result<Trajectory> {
    check_state(op, u0)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PatchError::invalid("dt", "time step must be positive"));
    }
    let limit = stability_limit(op);
    if dt > limit && !allow_unstable {
        return Err(PatchError::UnstableStep { dt, limit });
    }
    let l = op.matrix();
    let mut u = DVector::from_column_slice(u0);
    let mut traj = Trajectory::new();
    traj.push(0.0, u.clone());
    for s in 1..=steps {
        let k1 = l * &u;
        let k2 = l * (&u + &k1 * (dt / 2.0));
        let k3 = l * (&u + &k2 * (dt / 2.0));
        let k4 = l * (&u + &k3 * dt);
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        traj.push(s as f64 * dt, u.clone());
    }
    Ok(traj)
}

/// RK4 recorded only at `times`. Each interval between outputs is split
/// into equal steps no longer than `max_dt`, which must respect
/// [`stability_limit`].
pub fn evolve_rk4_at(
    op: &AssembledOperator,
    u0: &[f64],
    times: &[f64],
    max_dt: f64,
) -> Result<Trajectory> {
    check_state(op, u0)?;
    if !(max_dt > 0.0 && max_dt.is_finite()) {
        return Err(PatchError::invalid("dt", "time step must be positive"));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(PatchError::invalid(
            "times",
            "must be nonnegative and strictly increasing",
        ));
    }
    let limit = stability_limit(op);
    if max_dt > limit {
        return Err(PatchError::UnstableStep { dt: max_dt, limit });
    }
    let l = op.matrix();
    let mut u = DVector::from_column_slice(u0);
    let mut traj = Trajectory::new();
    let mut now = 0.0;
    if times.first() != Some(&0.0) {
        traj.push(0.0, u.clone());
    }
    for &t in times {
        let steps = ((t - now) / max_dt).ceil() as usize;
        let dt = if steps == 0 {
            0.0
        } else {
            (t - now) / steps as f64
        };
        for _ in 0..steps {
            let k1 = l * &u;
            let k2 = l * (&u + &k1 * (dt / 2.0));
            let k3 = l * (&u + &k2 * (dt / 2.0));
            let k4 = l * (&u + &k3 * dt);
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        now = t;
        traj.push(t, u.clone());
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub sums: Vec<f64>,
    /// `max |Σu(t) - Σu(0)|`
    pub drift: f64,
    /// Drift relative to `Σ|u(0)|`, or absolute when that vanishes.
    pub relative_drift: f64,
}

pub fn conserved_mass(traj: &Trajectory) -> MassReport {
    let sums = traj.masses.clone();
    let first = sums.first().copied().unwrap_or(0.0);
    let drift = sums.iter().map(|s| (s - first).abs()).fold(0.0, f64::max);
    let size = traj.states.first().map_or(0.0, |u| u.abs().sum());
    MassReport {
        relative_drift: if size > 0.0 { drift / size } else { drift },
        drift,
        sums,
    }
}

/// `-uᵀ A u + vᵀ v` for the stacked wave state `(u, v)`.
pub fn wave_energy(a: &DMatrix<f64>, state: &DVector<f64>) -> f64 {
    let m = a.nrows();
    let u = state.rows(0, m);
    let v = state.rows(m, m);
    -(u.transpose() * a * u)[(0, 0)] + v.norm_squared()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `a sin(q x) [sin(q_y y)]`; the y factor is skipped when `qy` is
    /// absent or the layout is 1D.
    Sinusoid {
        amplitude: f64,
        q: f64,
        #[serde(default)]
        qy: Option<f64>,
    },
    /// `a exp(-((x-x0)² + (y-y0)²)/(2 w²))`.
    Gaussian {
        amplitude: f64,
        centre: [f64; 2],
        width: f64,
    },
    /// Sinusoid plus independent `noise · z` with `z` standard normal drawn
    /// from `ChaCha8Rng::seed_from_u64(seed)` in unknown order.
    NoisySinusoid {
        amplitude: f64,
        q: f64,
        #[serde(default)]
        qy: Option<f64>,
        noise: f64,
        seed: u64,
    },
}

impl InitialCondition {
    /// Samples the field at every unknown of `layout`; for a wave layout
    /// `u` is sampled and `v` starts at rest.
    pub fn sample(&self, layout: &Layout) -> Vec<f64> {
        if let Layout::Wave { field } = layout {
            let mut u = self.sample(field);
            u.resize(2 * u.len(), 0.0);
            return u;
        }
        let two_d = matches!(
            layout,
            Layout::Patch2D { .. } | Layout::FullLattice2D { .. }
        );
        let sine = |a: f64, q: f64, qy: Option<f64>, (x, y): (f64, f64)| {
            let fy = match qy {
                Some(qy) if two_d => (qy * y).sin(),
                _ => 1.0,
            };
            a * (q * x).sin() * fy
        };
        let points = layout.positions();
        match self {
            InitialCondition::Sinusoid { amplitude, q, qy } => points
                .iter()
                .map(|&p| sine(*amplitude, *q, *qy, p))
                .collect(),
            InitialCondition::Gaussian {
                amplitude,
                centre,
                width,
            } => points
                .iter()
                .map(|&(x, y)| {
                    let dy = if two_d { y - centre[1] } else { 0.0 };
                    let r2 = (x - centre[0]).powi(2) + dy * dy;
                    amplitude * (-r2 / (2.0 * width * width)).exp()
                })
                .collect(),
            InitialCondition::NoisySinusoid {
                amplitude,
                q,
                qy,
                noise,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                points
                    .iter()
                    .map(|&p| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sine(*amplitude, *q, *qy, p) + noise * z
                    })
                    .collect()
            }
        }
    }
}
