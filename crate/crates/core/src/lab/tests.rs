use super::*;
use crate::evolution::{Scheme, TimeGrid};
use crate::geometry::Domain;
use crate::kernels::{MassCalibration, Profile};
use crate::local::{FemSystem, SimplexMesh};
use crate::nonlocal::{DisplacementField, MaterialParams};
use crate::Error;

fn spec(dim: usize, profile: Profile, beta: f64) -> LevelSpec {
    LevelSpec {
        dim,
        lower: vec![0.0; dim],
        upper: vec![1.0; dim],
        profile,
        ratio: 4.0,
        params: MaterialParams::new(2.0, beta).unwrap(),
        calibration: MassCalibration::Lattice,
    }
}

fn unit_box(dim: usize) -> Domain {
    Domain::unit_box(dim, 0.0).unwrap()
}

const ALL_KINDS: [FieldKind; 7] = [
    FieldKind::Zero,
    FieldKind::SineProduct,
    FieldKind::SineSquaredProduct,
    FieldKind::Bump {
        center: [0.45, 0.55, 0.5],
        radius: 0.3,
    },
    FieldKind::Rigid,
    FieldKind::CutoffIdentity,
    FieldKind::CutoffRotation,
];

#[test]
fn gradients_match_central_differences() {
    let eps = 1e-6;
    for dim in [2, 3] {
        for kind in ALL_KINDS {
            let f = AnalyticField::new(kind, &unit_box(dim), 1.3);
            for x in [[0.31, 0.62, 0.47], [0.12, 0.83, 0.66], [0.5, 0.5, 0.5]] {
                let g = f.gradient(&x);
                for j in 0..dim {
                    let (mut xp, mut xm) = (x, x);
                    xp[j] += eps;
                    xm[j] -= eps;
                    let (up, um) = (f.value(&xp), f.value(&xm));
                    for i in 0..dim {
                        let fd = (up[i] - um[i]) / (2.0 * eps);
                        assert!((fd - g[i][j]).abs() < 1e-6, "{kind} d={dim} ∂{j}u{i}: {fd} vs {}", g[i][j]);
                    }
                }
            }
        }
    }
}

#[test]
fn trace_check_accepts_vanishing_fields_and_rejects_rigid() {
    for dim in [2, 3] {
        for kind in ALL_KINDS {
            let f = AnalyticField::new(kind, &unit_box(dim), 1.0);
            let res = f.check_trace();
            if kind == FieldKind::Rigid {
                assert!(matches!(res, Err(Error::Constraint(_))), "{kind}");
            } else {
                assert!(res.is_ok(), "{kind} d={dim}: {res:?}");
            }
        }
    }
    let off_centre = FieldKind::Bump {
        center: [0.1, 0.5, 0.5],
        radius: 0.3,
    };
    assert!(AnalyticField::new(off_centre, &unit_box(2), 1.0).check_trace().is_err());
}

#[test]
fn field_names_round_trip() {
    for kind in ALL_KINDS {
        let parsed: FieldKind = kind.name().parse().unwrap();
        assert_eq!(parsed.name(), kind.name());
    }
    assert!(matches!("sines".parse::<FieldKind>(), Err(Error::Config(_))));
}

#[test]
fn fields_vanish_outside_the_box() {
    let f = AnalyticField::new(FieldKind::SineProduct, &unit_box(2), 1.0);
    assert_eq!(f.value(&[-0.1, 0.5, 0.0]), [0.0; 3]);
    assert_eq!(f.gradient(&[0.5, 1.2, 0.0]), [[0.0; 3]; 3]);
    let cut = AnalyticField::new(FieldKind::CutoffIdentity, &unit_box(2), 1.0);
    let x = [0.4, 0.7, 0.0];
    assert_eq!(cut.value(&x)[..2], x[..2]);
}

#[test]
fn box_quadrature_is_exact_for_degree_seven() {
    let f = |x: &[f64; 3]| x[0].powi(7) * x[1].powi(3) + x[1].powi(6);
    let exact = 1.0 / 8.0 * (2f64.powi(4) - 1.0) / 4.0 + (2f64.powi(7) - 1.0) / 7.0;
    let got = integrate_box(2, &[0.0, 1.0], &[1.0, 2.0], 3, f);
    assert!((got - exact).abs() < 1e-12 * exact, "{got} vs {exact}");
    let vol = integrate_box(3, &[0.0; 3], &[1.0, 2.0, 3.0], 2, |_| 1.0);
    assert!((vol - 6.0).abs() < 1e-13);
}

#[test]
fn sine_squared_energy_matches_closed_form() {
    // u = (f, f), f = g(x)g(y), g = sin²(πs): ∫g² = 3/8, ∫g'² = π²/2, ∫gg' = 0.
    let s = spec(2, Profile::Indicator, 1.0);
    let tensors = s.tensors().unwrap();
    let f = s.field(FieldKind::SineSquaredProduct, 1.0).unwrap();
    let a = std::f64::consts::PI.powi(2) / 2.0 * 3.0 / 8.0;
    let (eps_sq, div_sq) = (3.0 * a, 2.0 * a);
    let exact = 0.5 * (tensors.mu() * eps_sq + tensors.lambda() * div_sq);
    let got = local_energy(&f, &tensors);
    assert!((got - exact).abs() < 1e-10 * exact, "{got} vs {exact}");
}

#[test]
fn local_forms_agree_with_fine_finite_elements() {
    let s = spec(2, Profile::Indicator, 3.0);
    let tensors = s.tensors().unwrap();
    let u = s.field(FieldKind::SineSquaredProduct, 1.0).unwrap();
    let forms = local_forms(&u, &u, &tensors);
    assert!((forms.energy - 2.0 * local_energy(&u, &tensors)).abs() < 1e-12 * forms.energy);
    let mesh = SimplexMesh::structured(2, &[0.0, 0.0], &[1.0, 1.0], &[96, 96]).unwrap();
    let fem = FemSystem::assemble(tensors, mesh).unwrap();
    let nodal = fem.mesh().sample(|x| u.value(x));
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    assert!(rel(2.0 * fem.dissipation(&nodal), forms.dissipation) < 2e-3);
    assert!(rel(fem.energy_form(&nodal, &nodal), forms.energy) < 2e-3);
}

#[test]
fn prepared_zero_field_has_no_gap() {
    let s = spec(2, Profile::Conic, 1.0);
    let model = s.model(0.2).unwrap();
    let p = prepare_initial(&s.field(FieldKind::Zero, 1.0).unwrap(), &model, &s.tensors().unwrap()).unwrap();
    assert_eq!(p.gap(), 0.0);
    let rigid = s.field(FieldKind::Rigid, 1.0).unwrap();
    assert!(prepare_initial(&rigid, &model, &s.tensors().unwrap()).is_err());
}

#[test]
fn prepared_field_is_constrained() {
    let s = spec(2, Profile::Indicator, 1.0);
    let model = s.model(0.2).unwrap();
    let p = prepare_initial(&s.field(FieldKind::Bump { center: [0.5; 3], radius: 0.3 }, 1.0).unwrap(), &model, &s.tensors().unwrap())
        .unwrap();
    p.field.check_constrained(model.grid()).unwrap();
    assert!(p.nonlocal_energy > 0.0 && p.local_energy > 0.0);
}

#[test]
fn divergence_error_decreases_for_smooth_fields() {
    let s = spec(2, Profile::Indicator, 1.0);
    let hs = [0.2, 0.1, 0.05];
    for kind in [FieldKind::SineSquaredProduct, FieldKind::SineProduct, FieldKind::CutoffIdentity] {
        let errs = divergence_consistency(&s, &hs, &s.field(kind, 1.0).unwrap()).unwrap();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{kind}: {errs:?}");
    }
}

#[test]
fn cutoff_fields_are_exact_on_the_plateau() {
    let s = spec(2, Profile::Indicator, 1.0);
    let h = 0.05;
    let model = s.model(h).unwrap();
    let grid = model.grid();
    let lo = CUTOFF_LAYER + h + 1e-9;
    let plateau = |x: &[f64; 3]| (0..2).all(|k| x[k] >= lo && x[k] <= 1.0 - lo);
    for kind in [FieldKind::CutoffIdentity, FieldKind::CutoffRotation] {
        let f = s.field(kind, 1.0).unwrap();
        let u = DisplacementField::constrained_from_fn(grid, |x| f.value(x));
        let div = model.divergence_field(&u);
        let mut checked = 0;
        for (i, dn) in div.iter().enumerate() {
            let x = grid.coord(i);
            if plateau(&x) {
                assert!((dn - f.divergence(&x)).abs() < 1e-12, "{kind} at {x:?}: {dn}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}

#[test]
fn zero_fields_have_zero_defects() {
    let s = spec(2, Profile::Conic, 1.0);
    let z = s.field(FieldKind::Zero, 1.0).unwrap();
    for row in form_consistency(&s, &[0.2, 0.1], &z, &z).unwrap() {
        assert_eq!(row.dissipation_defect(), 0.0);
        assert_eq!(row.divergence_defect(), 0.0);
        assert_eq!(row.energy_defect(), 0.0);
    }
}

#[test]
fn form_defects_decrease_across_horizons() {
    let s = spec(2, Profile::Conic, 3.0);
    let u = s.field(FieldKind::SineSquaredProduct, 1.0).unwrap();
    let v = s.field(FieldKind::Bump { center: [0.5; 3], radius: 0.35 }, 2.0).unwrap();
    let rows = form_consistency(&s, &[0.2, 0.1, 0.05], &u, &v).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].dissipation_defect() < w[0].dissipation_defect());
        assert!(w[1].divergence_defect() < w[0].divergence_defect());
        assert!(w[1].energy_defect() < w[0].energy_defect());
    }
}

fn small_plan(field: FieldKind, time: Option<TimeGrid>) -> SweepPlan {
    SweepPlan {
        spec: spec(2, Profile::Indicator, 3.0),
        horizons: vec![0.4, 0.2, 0.1],
        field,
        amplitude: 1.0,
        time,
        reference_factor: 2,
        sample_every: 1,
    }
}

#[test]
fn sweep_plan_validation() {
    let time = Some(TimeGrid::new(0.05, 0.01, Scheme::ImplicitEuler).unwrap());
    let mut p = small_plan(FieldKind::SineSquaredProduct, time);
    p.validate().unwrap();
    p.horizons = vec![0.4, 0.2];
    assert!(matches!(run_sweep(&p), Err(Error::Config(_))));
    p.horizons = vec![0.4, 0.4, 0.1];
    assert!(p.validate().is_err());
    p.horizons = vec![0.4, 0.2, 0.1];
    p.reference_factor = 1;
    assert!(p.validate().is_err());
    p.reference_factor = 2;
    p.horizons = vec![0.4, 0.2, 0.13];
    assert!(p.validate().is_err());
    p.horizons = vec![0.4, 0.2, 0.1];
    p.field = FieldKind::Rigid;
    assert!(matches!(p.validate(), Err(Error::Constraint(_))));
}

#[test]
fn zero_initial_data_gives_zero_errors() {
    let time = Some(TimeGrid::new(0.02, 0.01, Scheme::ImplicitEuler).unwrap());
    let report = run_sweep(&small_plan(FieldKind::Zero, time)).unwrap();
    for row in &report.rows {
        let m = row.outcome.as_ref().unwrap();
        let t = m.trajectory.as_ref().unwrap();
        assert_eq!((m.initial_gap, m.divergence_error, t.l2_error, t.energy_gap), (0.0, 0.0, 0.0, 0.0));
    }
}

#[test]
fn small_sweep_converges_and_keeps_invariants() {
    let time = Some(TimeGrid::new(0.05, 0.01, Scheme::ImplicitEuler).unwrap());
    let report = run_sweep(&small_plan(FieldKind::SineSquaredProduct, time)).unwrap();
    assert!(report.passes(), "{:?}", report.gate_failures());
    assert_eq!(report.reference_energies.len(), 6);
    for row in &report.rows {
        let m = row.outcome.as_ref().unwrap();
        let t = m.trajectory.as_ref().unwrap();
        assert!(t.energy_nonincreasing && t.a_priori_bounds);
        assert_eq!(t.terms.len(), 6);
        assert!(m.interpolation_error < 1e-12, "aligned nodes interpolate exactly");
    }
}

#[test]
fn sweep_without_evolution_gates_initial_columns() {
    let report = run_sweep(&small_plan(FieldKind::SineSquaredProduct, None)).unwrap();
    assert!(!report.has_trajectories());
    assert!(report.reference_energies.is_empty());
    assert!(report.passes(), "{:?}", report.gate_failures());
}

#[test]
fn failing_levels_are_recorded_per_row() {
    let mut plan = small_plan(FieldKind::SineSquaredProduct, None);
    plan.spec.profile = Profile::Monomial { power: 3.0 };
    let report = run_sweep(&plan).unwrap();
    assert!(report.rows.iter().all(|r| r.outcome.is_err()));
    assert!(!report.passes());
}
