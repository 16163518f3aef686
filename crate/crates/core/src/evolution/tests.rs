use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use super::*;
use crate::geometry::{Domain, DofMap, Grid};
use crate::kernels::{Kernel, MassCalibration, Profile};
use crate::linalg::LinearOperator;
use crate::nonlocal::{DisplacementField, MaterialParams, NonlocalModel};
use crate::pair::{flow_map_matrix, L2Gram};

fn dense_pair(m: &[Vec<f64>], k: &[Vec<f64>]) -> OperatorPair {
    let n = m.len();
    OperatorPair::new(
        CsrMatrix::from_dense(m),
        CsrMatrix::from_dense(k),
        L2Gram::Lumped(vec![1.0; n]),
        DofMap::from_mask(1, &vec![true; n]),
    )
    .unwrap()
}

fn scalar_pair() -> OperatorPair {
    dense_pair(&[vec![1.0]], &[vec![1.0]])
}

fn two_dof() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![vec![3.0, -1.0], vec![-1.0, 2.0]])
}

/// `exp(−t M⁻¹K) u0` through the symmetric pencil `L⁻¹ K L⁻ᵀ`, `M = L Lᵀ`.
fn exact_flow(m: &[Vec<f64>], k: &[Vec<f64>], u0: &[f64], t: f64) -> Vec<f64> {
    let n = m.len();
    let mm = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let kk = DMatrix::from_fn(n, n, |i, j| k[i][j]);
    let l = mm.cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let a = &linv * kk * linv.transpose();
    let eig = SymmetricEigen::new(a);
    let decay = DMatrix::from_diagonal(&eig.eigenvalues.map(|lam| (-lam * t).exp()));
    let prop = linv.transpose() * &eig.eigenvectors * decay * eig.eigenvectors.transpose() * l.transpose();
    (prop * DVector::from_column_slice(u0)).iter().copied().collect()
}

fn small_nonlocal() -> (NonlocalModel, OperatorPair) {
    let dx = 1.0 / 10.0;
    let h = 3.0 * dx;
    let grid = Grid::new(Domain::unit_box(2, h).unwrap(), dx).unwrap();
    let kernel = Kernel::new(Profile::Conic, 2, h).unwrap();
    let model = NonlocalModel::new(kernel, grid, MaterialParams::new(2.0, 3.0).unwrap(), MassCalibration::Lattice)
        .unwrap();
    let pair = model.assemble().unwrap();
    (model, pair)
}

#[test]
fn time_grid_validation() {
    let g = TimeGrid::new(0.5, 1e-3, Scheme::ImplicitEuler).unwrap();
    assert_eq!(g.steps(), 500);
    assert_eq!(g.halved().steps(), 1000);
    assert!(TimeGrid::new(0.5, 0.3, Scheme::ImplicitEuler).is_err());
    assert!(TimeGrid::new(0.0, 0.1, Scheme::ImplicitEuler).is_err());
    assert!(TimeGrid::new(1.0, -0.1, Scheme::ImplicitEuler).is_err());
    assert!(TimeGrid::new(1.0, 0.1, Scheme::Theta(0.3)).is_err());
    assert!(TimeGrid::new(1.0, 0.1, Scheme::Theta(0.5)).is_ok());
}

#[test]
fn zero_forcing_leaves_state() {
    let p = dense_pair(&[vec![2.0, 0.3], vec![0.3, 1.0]], &[vec![0.0, 0.0], vec![0.0, 0.0]]);
    let s = Stepper::new(&p, 0.1, Scheme::ImplicitEuler).unwrap();
    let (next, _) = s.step(&[0.7, -1.3]).unwrap();
    assert_eq!(next, vec![0.7, -1.3]);
}

#[test]
fn scalar_resolvent() {
    let p = scalar_pair();
    let next = step(&p, &[1.0], 0.1, Scheme::ImplicitEuler).unwrap();
    assert!((next[0] - 1.0 / 1.1).abs() < 1e-12);
    let (next, _) = Stepper::new(&p, 0.1, Scheme::crank_nicolson()).unwrap().step(&[1.0]).unwrap();
    assert!((next[0] - 0.95 / 1.05).abs() < 1e-12);
}

#[test]
fn zero_initial_data() {
    let (_, pair) = small_nonlocal();
    let grid = TimeGrid::new(0.1, 0.01, Scheme::ImplicitEuler).unwrap();
    let traj = run(&pair, &vec![0.0; pair.dof_count()], &grid, &RunOptions::default()).unwrap();
    assert_eq!(traj.len(), 11);
    for t in &traj.terms {
        assert_eq!((t.energy, t.dissipation_integral, t.dual_integral, t.residual), (0.0, 0.0, 0.0, 0.0));
    }
    assert!(traj.states.iter().all(|(_, s)| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn scalar_energy_identity_closed_form() {
    let p = scalar_pair();
    for dt in [1e-2, 5e-3] {
        let grid = TimeGrid::new(1.0, dt, Scheme::ImplicitEuler).unwrap();
        let traj = run(&p, &[1.0], &grid, &RunOptions::default()).unwrap();
        for t in &traj.terms {
            let e = 0.5 * (-2.0 * t.time).exp();
            let q = 0.25 * (1.0 - (-2.0 * t.time).exp());
            assert!((t.energy - e).abs() < 0.2 * dt);
            assert!((t.dissipation_integral - q).abs() < 0.5 * dt);
            assert!((t.dual_integral - q).abs() < 0.5 * dt);
            assert!(t.identity_defect < 1e-12);
        }
    }
}

#[test]
fn matches_matrix_exponential() {
    let (m, k) = two_dof();
    let p = dense_pair(&m, &k);
    let u0 = [1.0, -0.5];
    let err = |dt: f64, scheme: Scheme| {
        let grid = TimeGrid::new(1.0, dt, scheme).unwrap();
        let traj = run(&p, &u0, &grid, &RunOptions::default()).unwrap();
        traj.states
            .iter()
            .map(|(step, s)| {
                let exact = exact_flow(&m, &k, &u0, grid.time(*step));
                s.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.02, Scheme::ImplicitEuler), err(0.01, Scheme::ImplicitEuler));
    assert!(e1 < 0.05 && (e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
    let (c1, c2) = (err(0.02, Scheme::crank_nicolson()), err(0.01, Scheme::crank_nicolson()));
    assert!((c1 / c2 - 4.0).abs() < 0.4, "{c1} {c2}");
}

#[test]
fn ede_residual_refinement() {
    let (m, k) = two_dof();
    let p = dense_pair(&m, &k);
    let u0 = [1.0, 1.0];
    let residual = |dt: f64, scheme: Scheme| {
        let grid = TimeGrid::new(1.0, dt, scheme).unwrap();
        run(&p, &u0, &grid, &RunOptions::default()).unwrap().max_abs_residual()
    };
    let (r1, r2) = (residual(0.02, Scheme::ImplicitEuler), residual(0.01, Scheme::ImplicitEuler));
    assert!(r1 / r2 > 1.9 && r1 / r2 < 2.1, "{r1} {r2}");
    // the θ = ½ stage makes the discrete identity exact up to the solver
    let e0 = p.energy(&u0);
    assert!(residual(0.02, Scheme::crank_nicolson()) < 1e-9 * e0);
}

#[test]
fn flow_map_recovers_eigenvalues() {
    let (m, k) = two_dof();
    let p = dense_pair(&m, &k);
    let mm = DMatrix::from_fn(2, 2, |i, j| m[i][j]);
    let kk = DMatrix::from_fn(2, 2, |i, j| k[i][j]);
    let l = mm.cholesky().unwrap().l();
    let linv = l.try_inverse().unwrap();
    let eig = SymmetricEigen::new(&linv * kk * linv.transpose());
    let (idx, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let y = linv.transpose() * eig.eigenvectors.column(idx);
    let y: Vec<f64> = y.iter().copied().collect();
    let fm = flow_map_matrix(&p);
    let mut out = vec![0.0; 2];
    fm.apply(&y, &mut out);
    for c in 0..2 {
        assert!((out[c] - lam * y[c]).abs() < 1e-8);
    }
}

#[test]
fn flow_map_spectrum_nonnegative() {
    let (_, pair) = small_nonlocal();
    let fm = flow_map_matrix(&pair);
    let n = pair.dof_count();
    let power = |shift: f64| {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut lam = 0.0;
        let mut w = vec![0.0; n];
        for _ in 0..300 {
            fm.apply(&v, &mut w);
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = shift * vi - *wi;
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lam = dot(&v, &w) / dot(&v, &v);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
        lam
    };
    // largest eigenvalue of −M⁻¹K, then of σI − M⁻¹K
    let sigma = -power(0.0);
    assert!(sigma > 0.0);
    let shifted = power(sigma * 1.01);
    let smallest = sigma * 1.01 - shifted;
    assert!(smallest >= 0.0, "{smallest}");
}

#[test]
fn nonlocal_run_invariants() {
    let (model, pair) = small_nonlocal();
    let u0 = DisplacementField::constrained_from_fn(model.grid(), |x| {
        let s = (std::f64::consts::PI * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).sin().powi(2);
        [s, -0.5 * s, 0.0]
    });
    let d0 = u0.dofs(model.grid());
    let grid = TimeGrid::new(0.2, 0.01, Scheme::ImplicitEuler).unwrap();
    let traj = run(&pair, &d0, &grid, &RunOptions::default()).unwrap();
    assert!(traj.energy_strictly_decreasing());
    assert!(traj.a_priori_bounds_hold(1e-12));
    assert!(traj.max_solver_iterations <= 5);
    for (_, s) in &traj.states {
        DisplacementField::from_dofs(model.grid(), s).check_constrained(model.grid()).unwrap();
    }
    for t in &traj.terms[1..] {
        assert!(t.fenchel_gap.abs() < 1e-8 * traj.initial_energy());
    }
    // linearity
    let scaled: Vec<f64> = d0.iter().map(|v| -2.5 * v).collect();
    let other = run(&pair, &scaled, &grid, &RunOptions::default()).unwrap();
    for ((_, a), (_, b)) in traj.states.iter().zip(&other.states) {
        for (x, y) in a.iter().zip(b) {
            assert!((y + 2.5 * x).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn rejects_bad_states() {
    let p = scalar_pair();
    let grid = TimeGrid::new(1.0, 0.5, Scheme::ImplicitEuler).unwrap();
    assert!(matches!(
        run(&p, &[f64::NAN], &grid, &RunOptions::default()),
        Err(Error::NonFinite(_))
    ));
    assert!(run(&p, &[1.0, 2.0], &grid, &RunOptions::default()).is_err());
}

#[test]
fn sampling_keeps_final_state() {
    let p = scalar_pair();
    let grid = TimeGrid::new(1.0, 0.1, Scheme::ImplicitEuler).unwrap();
    let traj = run(&p, &[1.0], &grid, &RunOptions { sample_every: 3, ..Default::default() }).unwrap();
    let steps: Vec<usize> = traj.states.iter().map(|(k, _)| *k).collect();
    assert_eq!(steps, vec![0, 3, 6, 9, 10]);
    assert!((traj.final_state()[0] - 1.1f64.powi(-10)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_never_increases(seed in 0u64..1000, dt_exp in -3i32..=0, cn in any::<bool>()) {
        let dt = 10f64.powi(dt_exp);
        let n = 6;
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        // random SPD M and PSD K
        let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
        let gram = |x: &Vec<Vec<f64>>, shift: f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| {
                (0..n).map(|k| x[i][k] * x[j][k]).sum::<f64>() + if i == j { shift } else { 0.0 }
            }).collect()).collect()
        };
        let p = dense_pair(&gram(&a, 0.5), &gram(&b, 0.0));
        let u0: Vec<f64> = (0..n).map(|_| next()).collect();
        let scheme = if cn { Scheme::crank_nicolson() } else { Scheme::ImplicitEuler };
        let grid = TimeGrid::new(10.0 * dt, dt, scheme).unwrap();
        let traj = run(&p, &u0, &grid, &RunOptions::default()).unwrap();
        for w in traj.terms.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy * (1.0 + 1e-9) + 1e-14);
        }
        prop_assert!(traj.a_priori_bounds_hold(1e-9));
    }
}
