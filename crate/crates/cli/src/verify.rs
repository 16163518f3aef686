use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peridyn_kv::kernels::{validate_assumptions, Profile};
use peridyn_kv::linalg::{lanczos_extremes, InverseOperator, SkylineCholesky};
use peridyn_kv::local::{quadratic_sphere_product, sphere_moment, FemSystem, SimplexMesh, Tensor2};
use peridyn_kv::nonlocal::{DisplacementField, NonlocalModel};

use crate::output::{num, Csv, Output};
use crate::{CliError, Resolved};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// Passes when `measured ≤ tolerance`.
    Upper,
    /// Passes when `measured > tolerance`.
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Check {
    fn upper(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            bound: Bound::Upper,
        }
    }

    fn lower(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            bound: Bound::Lower,
        }
    }

    pub fn passes(&self) -> bool {
        match self.bound {
            Bound::Upper => self.measured <= self.tolerance,
            Bound::Lower => self.measured > self.tolerance,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Average over the unit sphere, exact for polynomials up to degree 15.
fn sphere_average<F: Fn(&[f64; 3]) -> f64>(dim: usize, f: F) -> f64 {
    let n_phi = 32;
    let ring = |r: f64, z: f64| {
        (0..n_phi)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                f(&[r * phi.cos(), r * phi.sin(), z])
            })
            .sum::<f64>()
            / n_phi as f64
    };
    if dim == 2 {
        ring(1.0, 0.0)
    } else {
        gauss_legendre(8)
            .into_iter()
            .map(|(z, w)| 0.5 * w * ring((1.0 - z * z).sqrt(), z))
            .sum()
    }
}

fn exponent_tuples(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for a in 0..=degree {
        for b in 0..=degree - a {
            if dim == 2 {
                if a + b == degree {
                    out.push(vec![a, b]);
                }
            } else {
                out.push(vec![a, b, degree - a - b]);
            }
        }
    }
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, dim: usize) -> Tensor2 {
    let mut m = [[0.0; 3]; 3];
    for row in m.iter_mut().take(dim) {
        for v in row.iter_mut().take(dim) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    m
}

fn quad_form(a: &Tensor2, s: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|i| (0..dim).map(|j| s[i] * a[i][j] * s[j]).sum::<f64>()).sum()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sphere_checks(samples: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    for dim in [2, 3] {
        let mut worst: f64 = 0.0;
        for degree in [2, 4] {
            for e in exponent_tuples(dim, degree) {
                let exact = sphere_moment(&e, dim)?;
                let quad = sphere_average(dim, |s| (0..dim).map(|k| s[k].powi(e[k] as i32)).product());
                worst = worst.max((exact - quad).abs());
            }
        }
        checks.push(Check::upper(format!("sphere_moments_d{dim}"), worst, 1e-14));
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let (a, b) = (random_matrix(rng, dim), random_matrix(rng, dim));
            let formula = quadratic_sphere_product(&a, &b, dim);
            let quad = sphere_average(dim, |s| quad_form(&a, s, dim) * quad_form(&b, s, dim));
            worst = worst.max((formula - quad).abs() / quad.abs().max(1.0));
        }
        checks.push(Check::upper(format!("sphere_product_d{dim}"), worst, 1e-13));
    }
    Ok(checks)
}

fn energy_representation_checks(resolved: &Resolved, rng: &mut ChaCha8Rng) -> Result<Vec<Check>, CliError> {
    let params = resolved.config.params()?;
    let mut checks = Vec::new();
    for dim in [2, 3] {
        let cells = if dim == 2 { vec![6, 6] } else { vec![3, 3, 3] };
        let mesh = SimplexMesh::structured(dim, &vec![0.0; dim], &vec![1.0; dim], &cells)?;
        let tensors = peridyn_kv::local::ElasticTensors::from_params(&params, dim)?;
        let fem = FemSystem::assemble(tensors, mesh)?;
        let mut worst: f64 = 0.0;
        for _ in 0..resolved.config.verify.samples {
            let nodal = random_vec(rng, fem.mesh().node_count() * dim);
            worst = worst
                .max(fem.energy_forms(&nodal)?.max_relative_spread())
                .max(fem.dissipation_forms(&nodal)?.max_relative_spread());
        }
        checks.push(Check::upper(format!("energy_representations_d{dim}"), worst, 1e-12));
    }
    Ok(checks)
}

const SHIPPED_PROFILES: [Profile; 4] = [
    Profile::Indicator,
    Profile::Conic,
    Profile::PolynomialDecay { power: 2.0 },
    Profile::TruncatedGaussian { width: 0.5 },
];

fn kernel_checks(resolved: &Resolved) -> Result<Vec<Check>, CliError> {
    let kernel = resolved.config.kernel_unchecked()?;
    let report = validate_assumptions(&kernel, 1.001 * kernel.horizon());
    let name = kernel.profile().name();
    let (mut mono, mut mass): (f64, f64) = (0.0, 0.0);
    for profile in SHIPPED_PROFILES {
        let k = peridyn_kv::kernels::Kernel::new(profile, kernel.dim(), kernel.horizon())?;
        let r = validate_assumptions(&k, 1.001 * k.horizon());
        mono = mono.max(r.monotonicity_defect);
        mass = mass.max(r.mass_error);
    }
    Ok(vec![
        Check::upper("shipped_kernels_monotonicity", mono, 0.0),
        Check::upper("shipped_kernels_mass", mass, peridyn_kv::kernels::MASS_TOLERANCE),
        Check::upper(format!("kernel_{name}_monotonicity"), report.monotonicity_defect, 0.0),
        Check::upper(format!("kernel_{name}_mass"), report.mass_error, peridyn_kv::kernels::MASS_TOLERANCE),
        Check::upper(format!("kernel_{name}_tail"), report.tail_mass, 0.0),
    ])
}

fn operator_checks(resolved: &Resolved, rng: &mut ChaCha8Rng) -> Result<Vec<Check>, CliError> {
    let cfg = &resolved.config;
    let model = NonlocalModel::new(cfg.kernel_unchecked()?, cfg.grid()?, cfg.params()?, cfg.calibration()?)?;
    let pair = model.assemble()?;
    let grid = model.grid();
    let n = pair.dof_count();
    let mut checks = vec![
        Check::upper("dissipation_symmetry", pair.mass.symmetry_defect(), 1e-13),
        Check::upper("energy_symmetry", pair.stiffness.symmetry_defect(), 1e-13),
    ];
    let chol = SkylineCholesky::factor(&pair.mass)?;
    let start = random_vec(rng, n);
    let inverse = lanczos_extremes(&InverseOperator(&chol), 60, &start);
    checks.push(Check::lower("dissipation_min_eigenvalue", 1.0 / inverse.max, 0.0));

    let (mut quad, mut bound, mut gap_min, mut equality): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    let c = model.form_bound_constant();
    for _ in 0..cfg.verify.samples {
        let (u, v) = (random_vec(rng, n), random_vec(rng, n));
        let uf = DisplacementField::from_dofs(grid, &u);
        let (e, half_kuu) = (model.energy(&uf), 0.5 * pair.stiffness.quad_form(&u));
        let (dd, half_muu) = (model.dissipation(&uf), 0.5 * pair.mass.quad_form(&u));
        quad = quad
            .max((e - half_kuu).abs() / half_kuu.abs().max(f64::MIN_POSITIVE))
            .max((dd - half_muu).abs() / half_muu);
        let kuv = pair.stiffness.bilinear(&u, &v);
        bound = bound.max(kuv.abs() / (c * pair.mass.quad_form(&u).sqrt() * pair.mass.quad_form(&v).sqrt()));
        let xi = random_vec(rng, n);
        let gap = pair.dual_dissipation(&xi)? + pair.dissipation(&v) - xi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        gap_min = gap_min.min(gap / pair.dissipation(&v));
        let mv = pair.mass.mul_vec(&v);
        let eq = pair.dual_dissipation(&mv)? + pair.dissipation(&v) - pair.mass.quad_form(&v);
        equality = equality.max(eq.abs() / pair.dissipation(&v));
    }
    checks.push(Check::upper("quadratic_forms", quad, 1e-12));
    checks.push(Check::upper("form_bound_ratio", bound, 1.0));
    checks.push(Check::lower("fenchel_young_gap", gap_min, -1e-9));
    checks.push(Check::upper("fenchel_young_equality", equality, 1e-8));

    let a = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    let d = grid.dim();
    let rigid = DisplacementField::from_fn(grid, |x| {
        let mut u = [0.3, -0.2, 0.1];
        for i in 0..d {
            u[i] += (0..d).map(|j| a[i][j] * x[j]).sum::<f64>();
        }
        u
    });
    let identity = DisplacementField::from_fn(grid, |x| *x);
    checks.push(Check::upper(
        "rigid_seminorm",
        model.seminorm_sq(&rigid) / model.seminorm_sq(&identity),
        1e-24,
    ));
    Ok(checks)
}

pub fn collect(resolved: &Resolved) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
    let mut checks = sphere_checks(resolved.config.verify.samples, &mut rng)?;
    checks.extend(energy_representation_checks(resolved, &mut rng)?);
    checks.extend(kernel_checks(resolved)?);
    checks.extend(operator_checks(resolved, &mut rng)?);
    Ok(checks)
}

pub fn checks_csv(checks: &[Check]) -> String {
    let mut csv = Csv::new(&["name", "measured", "tolerance", "bound", "pass"]);
    for c in checks {
        csv.row(&[
            c.name.clone(),
            num(c.measured),
            num(c.tolerance),
            match c.bound {
                Bound::Upper => "max".into(),
                Bound::Lower => "min".into(),
            },
            c.passes().to_string(),
        ]);
    }
    csv.finish()
}

pub fn run(resolved: &Resolved, out: &Output) -> Result<(), CliError> {
    if resolved.config.verify.samples == 0 {
        return Err(CliError::Config("verify.samples must be positive".into()));
    }
    let checks = collect(resolved)?;
    out.write("verify.csv", &checks_csv(&checks))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passes()).map(|c| c.name.as_str()).collect();
    println!("verify: {} checks, {} failed", checks.len(), failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("checks failed: {}", failed.join(", "))))
    }
}
