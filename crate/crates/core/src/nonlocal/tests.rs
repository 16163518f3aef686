use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::Domain;
use crate::kernels::{discrete_mass, Profile};
use crate::linalg::{dot, lanczos_extremes, LinearOperator, SkylineCholesky};
use crate::pair::OperatorPair;

fn model(n: usize, ratio: f64, profile: Profile, calibration: MassCalibration) -> NonlocalModel {
    let dx = 1.0 / n as f64;
    let h = ratio * dx;
    let grid = Grid::new(Domain::unit_box(2, h).unwrap(), dx).unwrap();
    let kernel = Kernel::new(profile, 2, h).unwrap();
    NonlocalModel::new(kernel, grid, MaterialParams::new(2.0, 1.0).unwrap(), calibration).unwrap()
}

fn random_dofs(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Direct evaluation of `dE(u)(v)` by explicit loops over node
/// pairs, using only `Kernel::eval` and grid coordinates.
fn direct_energy_form(m: &NonlocalModel, u: &DisplacementField, v: &DisplacementField) -> f64 {
    let g = m.grid();
    let d = g.dim();
    let vol = g.cell_volume();
    let scale = m.stencil().calibration_scale();
    let h = m.kernel().horizon();
    let n = g.node_count();
    let rho_and_strains = |i: usize| -> Vec<(f64, f64, f64)> {
        let xi = g.coord(i);
        let mut out = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = g.coord(j);
            let bond: Vec<f64> = (0..d).map(|c| xj[c] - xi[c]).collect();
            let r2: f64 = bond.iter().map(|b| b * b).sum();
            if r2.sqrt() > h * (1.0 + 1e-9) {
                continue;
            }
            let rho = m.kernel().eval(&bond) * scale;
            let su: f64 = (0..d).map(|c| (u.node(j)[c] - u.node(i)[c]) * bond[c]).sum::<f64>() / r2;
            let sv: f64 = (0..d).map(|c| (v.node(j)[c] - v.node(i)[c]) * bond[c]).sum::<f64>() / r2;
            out.push((rho, su, sv));
        }
        out
    };
    let p = m.params();
    let mut total = 0.0;
    for i in 0..n {
        let bonds = rho_and_strains(i);
        let du: f64 = bonds.iter().map(|(r, su, _)| r * su * vol).sum();
        let dv: f64 = bonds.iter().map(|(r, _, sv)| r * sv * vol).sum();
        total += p.beta * du * dv * vol;
        let dev: f64 = bonds
            .iter()
            .map(|(r, su, sv)| r * (su - du / d as f64) * (sv - dv / d as f64))
            .sum();
        total += p.alpha * dev * vol * vol;
    }
    total
}

#[test]
fn strain_examples() {
    let g = Grid::new(Domain::unit_box(2, 1.0).unwrap(), 1.0).unwrap();
    let identity = DisplacementField::from_fn(&g, |x| *x);
    let constant = DisplacementField::from_fn(&g, |_| [0.3, -2.0, 0.0]);
    let shear = DisplacementField::from_fn(&g, |x| [x[1], 0.0, 0.0]);
    let a = g.index_of(&[1, 1, 0]).unwrap(); // (0, 0)
    let b = g.index_of(&[2, 2, 0]).unwrap(); // (1, 1)
    let c = g.index_of(&[0, 2, 0]).unwrap();
    for (i, j) in [(a, b), (a, c), (b, c)] {
        assert!((nonlocal_strain(&g, &identity, i, j).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nonlocal_strain(&g, &constant, i, j).unwrap(), 0.0);
        assert_eq!(
            nonlocal_strain(&g, &shear, i, j).unwrap(),
            nonlocal_strain(&g, &shear, j, i).unwrap()
        );
    }
    assert_eq!(nonlocal_strain(&g, &shear, a, b).unwrap(), 0.5);
    assert!(nonlocal_strain(&g, &shear, a, a).is_err());
}

#[test]
fn divergence_of_identity_is_node_mass() {
    for cal in [MassCalibration::Analytic, MassCalibration::Lattice] {
        let m = model(16, 3.0, Profile::Conic, cal);
        let u = DisplacementField::from_fn(m.grid(), |x| *x);
        let node = m.grid().index_of(&[11, 11, 0]).unwrap();
        let div = m.nonlocal_divergence(&u, node);
        let expected = match cal {
            MassCalibration::Analytic => discrete_mass(m.kernel(), m.grid(), node).unwrap(),
            MassCalibration::Lattice => 2.0,
        };
        assert!((div - expected).abs() < 1e-13, "{cal:?}: {div} vs {expected}");
    }
}

#[test]
fn rigid_motions_are_invisible() {
    let m = model(12, 3.0, Profile::Indicator, MassCalibration::Lattice);
    let rigid = DisplacementField::from_fn(m.grid(), |x| [-0.7 * x[1] + 0.2, 0.7 * x[0] - 1.0, 0.0]);
    for i in 0..m.grid().node_count() {
        assert!(m.nonlocal_divergence(&rigid, i).abs() < 1e-12);
    }
    assert!(m.seminorm_sq(&rigid) < 1e-20);
    assert!(m.energy(&rigid) < 1e-20);
    assert_eq!(m.energy(&DisplacementField::zeros(m.grid())), 0.0);
}

#[test]
fn identity_energy_density_brute_force() {
    // h = 2Δx: the 5×5 window around a node holds the whole stencil.
    let m = model(16, 2.0, Profile::Conic, MassCalibration::Lattice);
    let g = m.grid();
    let u = DisplacementField::from_fn(g, |x| *x);
    let node = g.index_of(&[9, 9, 0]).unwrap();
    let base = g.lattice(node);
    let vol = g.cell_volume();
    let scale = m.stencil().calibration_scale();
    let mut bonds = Vec::new();
    for dy in -2i64..=2 {
        for dx in -2i64..=2 {
            if (dx, dy) == (0, 0) || ((dx * dx + dy * dy) as f64) > 4.0 {
                continue;
            }
            let j = g.index_of(&[base[0] + dx, base[1] + dy, 0]).unwrap();
            let rho = m.kernel().eval(&[dx as f64 * g.spacing(), dy as f64 * g.spacing()]) * scale;
            bonds.push((rho, nonlocal_strain(g, &u, node, j).unwrap()));
        }
    }
    assert_eq!(bonds.len(), 12);
    let div: f64 = bonds.iter().map(|(r, s)| r * s * vol).sum();
    let dev: f64 = bonds.iter().map(|(r, s)| r * (s - div / 2.0).powi(2)).sum::<f64>() * vol;
    let p = m.params();
    let oracle = 0.5 * p.beta * div * div + 0.5 * p.alpha * dev;
    assert!((m.energy_density(&u, node) - oracle).abs() < 1e-12);
    // strain ≡ 1 and divergence ≡ d kill the deviatoric part
    assert!((oracle - 0.5 * p.beta * 4.0).abs() < 1e-12);
}

#[test]
fn assembled_form_matches_direct_sum() {
    let m = model(16, 2.5, Profile::Conic, MassCalibration::Lattice);
    let pair = m.assemble().unwrap();
    let g = m.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ud = random_dofs(pair.dof_count(), &mut rng);
    let vd = random_dofs(pair.dof_count(), &mut rng);
    let u = DisplacementField::from_dofs(g, &ud);
    let v = DisplacementField::from_dofs(g, &vd);
    let direct = direct_energy_form(&m, &u, &v);
    let assembled = pair.stiffness.bilinear(&ud, &vd);
    assert!(
        ((assembled - direct) / direct).abs() < 1e-12,
        "assembled {assembled} direct {direct}"
    );
}

#[test]
fn quadratic_forms_match_direct_evaluation() {
    for cal in [MassCalibration::Analytic, MassCalibration::Lattice] {
        let m = model(14, 3.0, Profile::PolynomialDecay { power: 2.0 }, cal);
        let pair = m.assemble().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let ud = random_dofs(pair.dof_count(), &mut rng);
            let u = DisplacementField::from_dofs(m.grid(), &ud);
            let e = m.energy(&u);
            let dis = m.dissipation(&u);
            assert!((pair.energy(&ud) - e).abs() <= 1e-12 * e);
            assert!((pair.dissipation(&ud) - dis).abs() <= 1e-12 * dis);
            let twice = DisplacementField::from_dofs(m.grid(), &ud.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
            assert!((m.dissipation(&twice) - 4.0 * dis).abs() <= 1e-12 * dis);
        }
    }
}

#[test]
fn matrix_free_agrees_with_assembly() {
    let m = model(12, 3.0, Profile::Conic, MassCalibration::Analytic);
    let pair = m.assemble().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_dofs(pair.dof_count(), &mut rng);
    let mut ym = vec![0.0; x.len()];
    let mut yk = vec![0.0; x.len()];
    MatrixFreeDissipation(&m).apply(&x, &mut ym);
    MatrixFreeEnergy(&m).apply(&x, &mut yk);
    let am = pair.mass.mul_vec(&x);
    let ak = pair.stiffness.mul_vec(&x);
    let scale_m = am.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let scale_k = ak.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for i in 0..x.len() {
        assert!((ym[i] - am[i]).abs() <= 1e-12 * scale_m);
        assert!((yk[i] - ak[i]).abs() <= 1e-12 * scale_k);
    }
}

#[test]
fn operator_structure() {
    let m = model(16, 3.0, Profile::Indicator, MassCalibration::Lattice);
    let pair = m.assemble().unwrap();
    assert!(pair.mass.symmetry_defect() < 1e-13);
    assert!(pair.stiffness.symmetry_defect() < 1e-13);
    let zero = vec![0.0; pair.dof_count()];
    assert!(pair.stiffness.mul_vec(&zero).iter().all(|&v| v == 0.0));

    // a rigid rotation clamped to the interior is no longer rigid
    let rot = DisplacementField::constrained_from_fn(m.grid(), |x| [-x[1], x[0], 0.0]);
    let rd = rot.dofs(m.grid());
    assert!(pair.stiffness.mul_vec(&rd).iter().any(|v| v.abs() > 1e-8));

    // positivity on the constrained space
    let chol = SkylineCholesky::factor(&pair.mass).unwrap();
    assert!(chol.min_diagonal() > 0.0);
    let start = vec![1.0; pair.dof_count()];
    let inv = crate::linalg::InverseOperator(&chol);
    let ritz = lanczos_extremes(&inv, 60, &start);
    assert!(1.0 / ritz.max > 0.0);
    assert!(SkylineCholesky::factor(&pair.stiffness).is_ok());
}

#[test]
fn expanded_energy_differs_only_near_outer_boundary() {
    let m = model(12, 3.0, Profile::Indicator, MassCalibration::Lattice);
    let pair = m.assemble().unwrap();
    let expanded = m.assemble_expanded_energy(&pair.mass).unwrap();
    // a field supported far from the outer boundary sees identical forms
    let g = m.grid();
    let bump = DisplacementField::constrained_from_fn(g, |x| {
        let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
        let b = if r2 < 0.04 { (0.04 - r2).powi(2) } else { 0.0 };
        [b, -b, 0.0]
    });
    let bd = bump.dofs(g);
    let a = pair.stiffness.quad_form(&bd);
    let b = expanded.quad_form(&bd);
    assert!((a - b).abs() <= 1e-12 * a);
    // near the collar the per-node mass falls below d and the forms differ
    let edge = DisplacementField::constrained_from_fn(g, |x| [x[0].min(0.1) * x[1] * (1.0 - x[1]), 0.0, 0.0]);
    let ed = edge.dofs(g);
    assert!((pair.stiffness.quad_form(&ed) - expanded.quad_form(&ed)).abs() > 1e-6 * pair.stiffness.quad_form(&ed));
}

#[test]
fn form_bound_holds_on_random_pairs() {
    let m = model(12, 3.0, Profile::Conic, MassCalibration::Analytic);
    let pair = m.assemble().unwrap();
    let c = m.form_bound_constant();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let u = random_dofs(pair.dof_count(), &mut rng);
        let v = random_dofs(pair.dof_count(), &mut rng);
        let lhs = pair.stiffness.bilinear(&u, &v).abs();
        let rhs = c * pair.mass.quad_form(&u).sqrt() * pair.mass.quad_form(&v).sqrt();
        assert!(lhs <= rhs);
    }
}

#[test]
fn fenchel_young() {
    let m = model(10, 3.0, Profile::Indicator, MassCalibration::Lattice);
    let pair: OperatorPair = m.assemble().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let v = random_dofs(pair.dof_count(), &mut rng);
        let xi = random_dofs(pair.dof_count(), &mut rng);
        let gap = pair.dual_dissipation(&xi).unwrap() + pair.dissipation(&v) - dot(&xi, &v);
        assert!(gap >= 0.0);
        let mv = pair.mass.mul_vec(&v);
        let eq = pair.dual_dissipation(&mv).unwrap() + pair.dissipation(&v) - dot(&mv, &v);
        assert!(eq.abs() <= 1e-8 * dot(&mv, &v));
    }
}

#[test]
fn divergence_converges_pointwise() {
    let field = |x: &crate::geometry::Point| {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        [s, s, 0.0]
    };
    let div = |x: &[f64]| PI * ((PI * x[0]).cos() * (PI * x[1]).sin() + (PI * x[0]).sin() * (PI * x[1]).cos());
    let samples = [[0.3, 0.4], [0.5, 0.5], [0.7, 0.6]];
    let mut errors = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let dx = h / 8.0;
        let grid = Grid::new(Domain::unit_box(2, h).unwrap(), dx).unwrap();
        let kernel = Kernel::new(Profile::Indicator, 2, h).unwrap();
        let m = NonlocalModel::new(kernel, grid, MaterialParams::new(2.0, 1.0).unwrap(), MassCalibration::Lattice)
            .unwrap();
        let u = DisplacementField::constrained_from_fn(m.grid(), field);
        let mut worst = 0.0_f64;
        for s in samples {
            let node = (0..m.grid().node_count())
                .find(|&i| {
                    let x = m.grid().coord(i);
                    (x[0] - s[0]).abs() < 1e-9 && (x[1] - s[1]).abs() < 1e-9
                })
                .unwrap();
            worst = worst.max((m.nonlocal_divergence(&u, node) - div(&s)).abs());
        }
        errors.push(worst);
    }
    assert!(errors[0] < 0.2, "{errors:?}");
    assert!(errors[1] <= 0.5 * errors[0] && errors[2] <= 0.5 * errors[1], "{errors:?}");
}

#[test]
fn lattice_mass_consistency() {
    // brute-force lattice point counting for the indicator kernel
    for (ratio, tol) in [(4usize, 0.12), (16, 0.02)] {
        let dx = 1.0 / 64.0;
        let h = ratio as f64 * dx;
        let g = Grid::new(Domain::unit_box(2, h).unwrap(), dx).unwrap();
        let k = Kernel::new(Profile::Indicator, 2, h).unwrap();
        let node = g.index_of(&[(ratio + 32) as i64, (ratio + 32) as i64, 0]).unwrap();
        let r = ratio as i64;
        let count = (-r..=r)
            .flat_map(|a| (-r..=r).map(move |b| (a, b)))
            .filter(|&(a, b)| (a, b) != (0, 0) && a * a + b * b <= r * r)
            .count();
        let oracle = count as f64 * k.normalization() * dx * dx;
        let mass = discrete_mass(&k, &g, node).unwrap();
        assert!((mass - oracle).abs() < 1e-12);
        assert!((mass - 2.0).abs() / 2.0 < tol, "ratio {ratio}: {mass}");
    }
}

#[test]
fn material_parameters() {
    assert!(MaterialParams::new(0.0, 1.0).is_err());
    assert!(MaterialParams::new(1.0, -1.0).is_err());
    let p = MaterialParams::new(2.0, 1.0).unwrap();
    assert_eq!(p.lame(2), (1.0, 0.5));
    let q = MaterialParams::new(5.0, 2.0).unwrap();
    let (mu, lambda) = q.lame(3);
    assert!((mu - 2.0).abs() < 1e-15 && (lambda - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn constraint_checks() {
    let m = model(8, 2.0, Profile::Indicator, MassCalibration::Lattice);
    let g = m.grid();
    let free = DisplacementField::from_fn(g, |x| [x[0], x[1], 0.0]);
    assert!(matches!(free.check_constrained(g), Err(Error::Constraint(_))));
    let clamped = DisplacementField::constrained_from_fn(g, |x| [x[0], x[1], 0.0]);
    assert!(clamped.check_constrained(g).is_ok());
    let mut vals = clamped.values().to_vec();
    let interior = g.dof_map().node_of_slot(0);
    vals[2 * interior] = f64::NAN;
    assert!(DisplacementField::from_values(g, vals).is_err());
}

#[test]
fn strain_symmetric_on_random_fields() {
    let m = model(8, 2.0, Profile::Conic, MassCalibration::Lattice);
    let g = m.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vals: Vec<f64> = (0..g.node_count() * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = DisplacementField::from_values(g, vals).unwrap();
    for _ in 0..50 {
        let i = rng.random_range(0..g.node_count());
        let j = rng.random_range(0..g.node_count());
        if i != j {
            assert_eq!(m.nonlocal_strain(&u, i, j).unwrap(), m.nonlocal_strain(&u, j, i).unwrap());
        }
    }
}
