//! Worked examples checked against independent computations.

use std::f64::consts::PI;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use patchtooth::assembly::{assemble_patch_1d, assemble_patch_2d, assemble_wave_1d};
use patchtooth::coupling::{apply_edges_1d, lagrangian_weights, spectral_weights};
use patchtooth::ensemble::{build_shift_matrix, ensemble_mean};
use patchtooth::homogenize::{extract_coefficients, predict_macroscale_eigenvalues};
use patchtooth::spectra::{convergence_slope, eigen_symmetric, error_table};
use patchtooth::timestep::{
    conserved_mass, evolve_exact, evolve_rk4, wave_energy, InitialCondition,
};
use patchtooth::{
    CouplingSpec, DiffusivityProfile1D, DiffusivityProfile2D, PatchGrid1D, PatchGrid2D,
};

const TWO_PI: f64 = 2.0 * PI;

fn five_cell() -> DiffusivityProfile1D {
    DiffusivityProfile1D::new(vec![3.965, 2.531, 0.838, 0.331, 7.275]).unwrap()
}

fn lagrange_basis(nodes: &[f64], j: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != j)
        .map(|(_, xm)| (x - xm) / (nodes[j] - xm))
        .product()
}

#[test]
fn degree_six_interpolation_weights() {
    let (order, r) = (3usize, 0.1);
    let w = lagrangian_weights(9, r, order).unwrap();
    let nodes: Vec<f64> = (-3..=3).map(|v| v as f64).collect();
    for (j, &node) in nodes.iter().enumerate() {
        let m = (node as i64).rem_euclid(9) as usize;
        assert_abs_diff_eq!(w.w_right[m], lagrange_basis(&nodes, j, r), epsilon = 1e-12);
        assert_abs_diff_eq!(w.w_left[m], lagrange_basis(&nodes, j, -r), epsilon = 1e-12);
    }
    for m in 4..=5 {
        assert_eq!(w.w_right[m], 0.0);
    }
}

// The spectral weights are the discrete Fourier interpolant through the
// actual next-to-edge positions, evaluated at the edge positions.
#[test]
fn spectral_weights_from_positions() {
    let grid = PatchGrid1D::new(TWO_PI, 9, 5, 0.3).unwrap();
    let w = spectral_weights(9, 0.3).unwrap();
    let ks: Vec<f64> = (-4..=4).map(|k| k as f64).collect();
    for target in 0..9 {
        let edge = grid.position(target, 6);
        for source in 0..9 {
            let node = grid.position(source, 1);
            let weight: Complex64 = ks
                .iter()
                .map(|k| Complex64::from_polar(1.0, k * (edge - node)))
                .sum::<Complex64>()
                / 9.0;
            assert!(weight.im.abs() <= 1e-13);
            assert_abs_diff_eq!(
                w.w_right[(source + 9 - target) % 9],
                weight.re,
                epsilon = 1e-13
            );
        }
    }
}

#[test]
fn interpolated_sine_edges() {
    let edge_error = |patches: usize| {
        let grid = PatchGrid1D::new(TWO_PI, patches, 5, 0.3).unwrap();
        let w = lagrangian_weights(patches, 0.3, 2).unwrap();
        let u1: Vec<f64> = (0..patches).map(|i| grid.position(i, 1).sin()).collect();
        let un: Vec<f64> = (0..patches).map(|i| grid.position(i, 5).sin()).collect();
        let (u0, unp1) = apply_edges_1d(&w, &u1, &un).unwrap();
        (0..patches)
            .map(|i| {
                (unp1[i] - grid.position(i, 6).sin())
                    .abs()
                    .max((u0[i] - grid.position(i, 0).sin()).abs())
            })
            .fold(0.0, f64::max)
    };
    let h9 = TWO_PI / 9.0;
    let e9 = edge_error(9);
    assert!(e9 <= 0.1 * h9.powi(4), "error {e9}");
    assert!(edge_error(18) <= e9 / 16.0);
}

#[test]
fn spectral_edges_are_exact_for_retained_modes() {
    let grid = PatchGrid1D::new(TWO_PI, 7, 3, 0.45).unwrap();
    let w = spectral_weights(7, 0.45).unwrap();
    for k in -3..=3 {
        let k = k as f64;
        for part in [f64::cos, f64::sin] {
            let u1: Vec<f64> = (0..7).map(|i| part(k * grid.position(i, 1))).collect();
            let un: Vec<f64> = (0..7).map(|i| part(k * grid.position(i, 3))).collect();
            let (u0, unp1) = apply_edges_1d(&w, &u1, &un).unwrap();
            for i in 0..7 {
                assert_abs_diff_eq!(unp1[i], part(k * grid.position(i, 4)), epsilon = 1e-12);
                assert_abs_diff_eq!(u0[i], part(k * grid.position(i, 0)), epsilon = 1e-12);
            }
        }
    }
}

// Builds L = D + C block by block from C_1n = K ⊗ ℐ_1n and C_n1 = Kᵀ ⊗ ℐ_n1.
fn kronecker_ensemble(
    grid: &PatchGrid1D,
    profile: &DiffusivityProfile1D,
    k: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (big_n, n, p) = (grid.patches(), grid.points(), profile.period());
    let w = spectral_weights(big_n, grid.ratio()).unwrap();
    let dim = big_n * n * p;
    let at = |patch: usize, i: usize, l: usize| (patch * n + i - 1) * p + l;
    let mut m = DMatrix::zeros(dim, dim);
    for patch in 0..big_n {
        for l in 0..p {
            for i in 1..=n {
                let left = profile.kappa_at((l + i - 1) as i64);
                let right = profile.kappa_at((l + i) as i64);
                m[(at(patch, i, l), at(patch, i, l))] = -(left + right);
                if i < n {
                    m[(at(patch, i, l), at(patch, i + 1, l))] = right;
                    m[(at(patch, i + 1, l), at(patch, i, l))] = right;
                }
            }
        }
        for other in 0..big_n {
            let offset = (other + big_n - patch) % big_n;
            for a in 0..p {
                for b in 0..p {
                    m[(at(patch, 1, a), at(other, n, b))] += k[(a, b)] * w.w_left[offset];
                    m[(at(patch, n, a), at(other, 1, b))] += k[(b, a)] * w.w_right[offset];
                }
            }
        }
    }
    m / grid.spacing().powi(2)
}

#[test]
fn ensemble_assembly_matches_kronecker_form() {
    let profile = DiffusivityProfile1D::new(vec![1.0, 2.0, 3.0]).unwrap();
    let grid = PatchGrid1D::new(1.0, 5, 4, 0.2).unwrap();
    let k = build_shift_matrix(&profile, 4).unwrap();
    let oracle = kronecker_ensemble(&grid, &profile, &k);
    let op = assemble_patch_1d(&grid, &profile, CouplingSpec::Spectral, true).unwrap();
    let scale = oracle.amax();
    assert!((op.matrix() - &oracle).amax() <= 1e-13 * scale);
}

// Placing κ_{l+1/2} at column (l + n) mod p instead leaves rows next to
// the right edge unbalanced, so constants are no longer steady.
#[test]
fn forward_shift_rule_breaks_constant_kernel() {
    let profile = DiffusivityProfile1D::new(vec![1.0, 2.0, 3.0]).unwrap();
    let grid = PatchGrid1D::new(1.0, 5, 4, 0.2).unwrap();
    let mut forward = DMatrix::zeros(3, 3);
    for l in 0..3 {
        forward[(l, (l + 4) % 3)] = profile.values()[l];
    }
    let m = kronecker_ensemble(&grid, &profile, &forward);
    let ones = DVector::from_element(m.nrows(), 1.0);
    assert!((&m * ones).amax() > 1e-3 * m.amax());
}

#[test]
fn tabulated_2d_configuration_is_symmetric() {
    let profile = DiffusivityProfile2D::from_rows(
        &[
            vec![18.91, 1.06, 0.63, 2.11],
            vec![4.46, 0.72, 1.02, 1.66],
            vec![4.89, 0.88, 1.31, 5.79],
            vec![1.62, 2.68, 2.32, 1.24],
            vec![0.42, 0.88, 0.59, 1.35],
        ],
        &[
            vec![0.48, 0.63, 1.31, 0.51],
            vec![0.39, 10.38, 3.07, 0.37],
            vec![2.10, 1.74, 2.68, 1.63],
            vec![1.20, 4.38, 0.50, 1.02],
            vec![2.55, 1.23, 0.33, 1.06],
        ],
    )
    .unwrap();
    let grid = PatchGrid2D::new(
        PatchGrid1D::new(TWO_PI, 10, 5, 0.5).unwrap(),
        PatchGrid1D::new(TWO_PI, 11, 4, 0.4).unwrap(),
    );
    let op = assemble_patch_2d(
        &grid,
        &profile,
        (CouplingSpec::Spectral, CouplingSpec::Spectral),
        false,
    )
    .unwrap();
    assert!(op.symmetry_defect().relative <= 1e-12);
    assert!(op.kernel_defect() <= 1e-12);
}

#[test]
fn homogeneous_2d_macroscale_dispersion() {
    let one = DiffusivityProfile2D::constant(1.0, (1, 1)).unwrap();
    let grid = PatchGrid2D::new(
        PatchGrid1D::new(TWO_PI, 5, 2, 0.1).unwrap(),
        PatchGrid1D::new(TWO_PI, 5, 2, 0.1).unwrap(),
    );
    let op = assemble_patch_2d(
        &grid,
        &one,
        (CouplingSpec::Spectral, CouplingSpec::Spectral),
        false,
    )
    .unwrap();
    let rep = eigen_symmetric(&op).unwrap();
    let d = grid.x.spacing();
    let mut expected: Vec<f64> = (-2..=2)
        .flat_map(|kx| (-2..=2).map(move |ky| (kx as f64, ky as f64)))
        .map(|(kx, ky)| {
            -4.0 / (d * d) * ((kx * d / 2.0).sin().powi(2) + (ky * d / 2.0).sin().powi(2))
        })
        .collect();
    expected.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    for (got, want) in rep.macro_modes().iter().zip(&expected) {
        assert_abs_diff_eq!(*got, *want, epsilon = 1e-8 * want.abs().max(1.0));
    }
}

#[test]
fn nine_patch_decay_of_a_sine() {
    let grid = PatchGrid1D::new(TWO_PI, 9, 5, 0.3).unwrap();
    let op = assemble_patch_1d(&grid, &five_cell(), CouplingSpec::Spectral, false).unwrap();
    let u0 = InitialCondition::Sinusoid {
        amplitude: 1.0,
        q: 1.0,
        qy: None,
    }
    .sample(op.layout());
    let times = [0.25, 0.5, 0.75, 1.0];
    let traj = evolve_exact(&op, &u0, &times).unwrap();
    let norm0 = traj.states[0].norm();
    for (t, u) in traj.times.iter().zip(&traj.states).skip(1) {
        let ratio = u.norm() / norm0;
        assert_relative_eq!(ratio, (-0.9987 * t).exp(), max_relative = 0.01);
    }
    assert!(conserved_mass(&traj).relative_drift <= 1e-10);
}

#[test]
fn explicit_and_exact_paths_agree() {
    let grid = PatchGrid1D::new(TWO_PI, 9, 5, 0.3).unwrap();
    let op = assemble_patch_1d(&grid, &five_cell(), CouplingSpec::Spectral, false).unwrap();
    let u0 = InitialCondition::NoisySinusoid {
        amplitude: 1.0,
        q: 1.0,
        qy: None,
        noise: 0.1,
        seed: 9,
    }
    .sample(op.layout());
    let exact = evolve_exact(&op, &u0, &[0.1]).unwrap();
    let rk = evolve_rk4(&op, &u0, 1e-4, 1000, false).unwrap();
    let diff = (exact.last().unwrap() - rk.last().unwrap()).amax();
    assert!(diff <= 1e-6, "difference {diff}");
    assert!(conserved_mass(&rk).relative_drift <= 1e-8);
}

#[test]
fn damped_wave_energy_decreases() {
    let profile = DiffusivityProfile1D::new(vec![0.5, 2.0, 1.2]).unwrap();
    let grid = PatchGrid1D::new(TWO_PI, 7, 3, 0.2).unwrap();
    let (wave, a) = assemble_wave_1d(&grid, &profile, CouplingSpec::Spectral, false, 0.02).unwrap();
    let u0 = InitialCondition::Gaussian {
        amplitude: 1.0,
        centre: [PI, 0.0],
        width: 0.5,
    }
    .sample(wave.layout());
    let dt = 0.5 * patchtooth::timestep::stability_limit(&wave);
    let traj = evolve_rk4(&wave, &u0, dt, 400, false).unwrap();
    let energies: Vec<f64> = traj
        .states
        .iter()
        .map(|s| wave_energy(a.matrix(), s))
        .collect();
    for pair in energies.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-6 * dt),
            "{} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!(energies.last().unwrap() < &energies[0]);
}

#[test]
fn lagrangian_error_table_against_spectral() {
    let grid = PatchGrid1D::new(TWO_PI, 20, 5, 0.1).unwrap();
    let t = eigen_symmetric(
        &assemble_patch_1d(
            &grid,
            &five_cell(),
            CouplingSpec::Lagrangian { order: 5 },
            false,
        )
        .unwrap(),
    )
    .unwrap();
    let r = eigen_symmetric(
        &assemble_patch_1d(&grid, &five_cell(), CouplingSpec::Spectral, false).unwrap(),
    )
    .unwrap();
    let table = error_table(&t, &r, 5).unwrap();
    let e = table.errors();
    assert!(e[0] <= 1e-4);
    assert!(e.windows(2).all(|w| w[1] > w[0]), "{e:?}");
}

// At fixed patch size n the k=1 error falls like H^{2P}.
#[test]
fn lagrangian_error_order_at_fixed_patch_size() {
    for order in [1usize, 2, 3] {
        let ns = [10usize, 14, 20, 28, 40];
        let errors: Vec<f64> = ns
            .iter()
            .map(|&big_n| {
                let grid = PatchGrid1D::new(TWO_PI, big_n, 5, 0.1).unwrap();
                let t = eigen_symmetric(
                    &assemble_patch_1d(
                        &grid,
                        &five_cell(),
                        CouplingSpec::Lagrangian { order },
                        false,
                    )
                    .unwrap(),
                )
                .unwrap();
                let r = eigen_symmetric(
                    &assemble_patch_1d(&grid, &five_cell(), CouplingSpec::Spectral, false).unwrap(),
                )
                .unwrap();
                error_table(&t, &r, 1).unwrap().rows[0].relative_error
            })
            .collect();
        let x: Vec<f64> = ns.iter().map(|&v| v as f64).collect();
        let slope = convergence_slope(&x, &errors).unwrap();
        let want = -2.0 * order as f64;
        assert!(
            (slope - want).abs() <= 0.15 * want.abs(),
            "P={order}: slope {slope}"
        );
    }
}

#[test]
fn homogenised_prediction_of_slowest_mode() {
    let grid = PatchGrid1D::new(TWO_PI, 9, 5, 0.3).unwrap();
    let c = extract_coefficients(&five_cell(), grid.spacing()).unwrap();
    assert_relative_eq!(c.k2, 1.0, max_relative = 1e-3);
    let lambda = predict_macroscale_eigenvalues(&c, &[1.0])[0];
    assert_relative_eq!(lambda, -0.9987, max_relative = 0.005);
}

#[test]
fn ensemble_mean_matches_loop() {
    let state: Vec<f64> = (0..24).map(|k| ((k * 37) % 11) as f64 - 3.5).collect();
    let mean = ensemble_mean(&state, 4).unwrap();
    for (site, m) in mean.iter().enumerate() {
        let mut total = 0.0;
        for l in 0..4 {
            total += state[site * 4 + l];
        }
        assert_abs_diff_eq!(*m, total / 4.0, epsilon = 1e-15);
    }
}
