//! Radial interaction kernels `ρ(ξ) = c · w(|ξ|/h)` with unit profile `w`
//! supported on `[0, 1]`, normalized so that `∫ρ = d`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{lattice_ball, Grid, Lattice, Point};

/// Number of radii sampled when checking `r ↦ r⁻² ρ̃(r)` for monotonicity.
pub const MONOTONICITY_SAMPLES: usize = 1000;
/// Mass defect accepted by [`validate_assumptions`].
pub const MASS_TOLERANCE: f64 = 1e-8;

/// Unit radial profile `w : [0, 1] → [0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `w ≡ 1`.
    Indicator,
    /// `w(r) = 1 − r`.
    Conic,
    /// `w(r) = (1 − r)^p`, `p ≥ 0`.
    PolynomialDecay { power: f64 },
    /// `w(r) = exp(−r² / width²)` truncated at `r = 1`; normalized by quadrature.
    TruncatedGaussian { width: f64 },
    /// `w(r) = r^k`. Only admissible for `k ≤ 2`; larger powers exist so the
    /// validators have something to reject.
    Monomial { power: f64 },
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Indicator => "indicator",
            Profile::Conic => "conic",
            Profile::PolynomialDecay { .. } => "polynomial-decay",
            Profile::TruncatedGaussian { .. } => "gaussian",
            Profile::Monomial { .. } => "monomial",
        }
    }

    /// Value on the unit support; zero outside `[0, 1]`.
    pub fn eval(&self, r: f64) -> f64 {
        if !(0.0..=1.0).contains(&r) {
            return 0.0;
        }
        match *self {
            Profile::Indicator => 1.0,
            Profile::Conic => 1.0 - r,
            Profile::PolynomialDecay { power } => (1.0 - r).powf(power),
            Profile::TruncatedGaussian { width } => (-(r * r) / (width * width)).exp(),
            Profile::Monomial { power } => r.powf(power),
        }
    }

    fn check_parameters(&self) -> Result<()> {
        let bad = match *self {
            Profile::PolynomialDecay { power } | Profile::Monomial { power } => !(power >= 0.0) || !power.is_finite(),
            Profile::TruncatedGaussian { width } => !(width > 0.0) || !width.is_finite(),
            _ => false,
        };
        if bad {
            return Err(Error::Kernel(format!("invalid parameters for profile {self:?}")));
        }
        Ok(())
    }

    /// `∫₀¹ w(s) s^{d−1} ds` in closed form, when one is available.
    pub fn radial_moment_closed_form(&self, dim: usize) -> Option<f64> {
        let d = dim as f64;
        match *self {
            Profile::Indicator => Some(1.0 / d),
            Profile::Conic => Some(1.0 / (d * (d + 1.0))),
            Profile::PolynomialDecay { power } => {
                // Beta(d, p + 1) for integer d
                let numer: f64 = (1..dim).map(|k| k as f64).product();
                let denom: f64 = (1..=dim).map(|k| power + k as f64).product();
                Some(numer / denom)
            }
            Profile::Monomial { power } => Some(1.0 / (power + d)),
            Profile::TruncatedGaussian { .. } => None,
        }
    }

    /// Same moment by adaptive Simpson quadrature.
    pub fn radial_moment_quadrature(&self, dim: usize, from: f64) -> f64 {
        let f = |s: f64| self.eval(s) * s.powi(dim as i32 - 1);
        adaptive_simpson(&f, from.clamp(0.0, 1.0), 1.0, 1e-14)
    }
}

/// Surface measure of the unit sphere `S^{d−1}`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Adaptive Simpson rule on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// A radial kernel with horizon `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    dim: usize,
    horizon: f64,
    profile: Profile,
    normalization: f64,
}

impl Kernel {
    /// Builds and normalizes a kernel, rejecting profiles for which
    /// `r⁻² ρ̃(r)` is not nonincreasing.
    pub fn new(profile: Profile, dim: usize, horizon: f64) -> Result<Self> {
        let kernel = Self::unchecked(profile, dim, horizon)?;
        let (ok, defect) = monotonicity_defect(&kernel);
        if !ok {
            return Err(Error::Kernel(format!(
                "profile {} violates the r^-2 monotonicity condition (relative increase {defect:.3e})",
                profile.name()
            )));
        }
        Ok(kernel)
    }

    /// Normalizes without checking the monotonicity condition.
    pub fn unchecked(profile: Profile, dim: usize, horizon: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Kernel(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Kernel(format!("horizon must be positive, got {horizon}")));
        }
        profile.check_parameters()?;
        let moment = profile
            .radial_moment_closed_form(dim)
            .unwrap_or_else(|| profile.radial_moment_quadrature(dim, 0.0));
        if !(moment > 0.0) {
            return Err(Error::Kernel(format!("profile {} has zero mass", profile.name())));
        }
        let normalization = dim as f64 / (sphere_area(dim) * horizon.powi(dim as i32) * moment);
        Ok(Self {
            dim,
            horizon,
            profile,
            normalization,
        })
    }

    /// Same kernel with the normalization multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            normalization: self.normalization * factor,
            ..self.clone()
        }
    }

    /// Same profile, new horizon, renormalized.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::unchecked(self.profile, self.dim, horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `ρ̃(r)`.
    pub fn radial(&self, r: f64) -> f64 {
        if r > self.horizon {
            0.0
        } else {
            self.normalization * self.profile.eval(r / self.horizon)
        }
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.radial(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `∫_{|ξ| ≥ r₀} ρ(ξ) dξ` by quadrature.
    pub fn tail_mass(&self, r0: f64) -> f64 {
        if r0 >= self.horizon {
            return 0.0;
        }
        let scale = self.normalization * sphere_area(self.dim) * self.horizon.powi(self.dim as i32);
        scale * self.profile.radial_moment_quadrature(self.dim, r0 / self.horizon)
    }

    /// `∫ρ(ξ) dξ` by quadrature (independent of the closed-form normalization).
    pub fn mass(&self) -> f64 {
        self.tail_mass(0.0)
    }
}

fn monotonicity_defect(kernel: &Kernel) -> (bool, f64) {
    let h = kernel.horizon;
    let values: Vec<f64> = (1..=MONOTONICITY_SAMPLES)
        .map(|k| {
            let r = h * k as f64 / MONOTONICITY_SAMPLES as f64;
            kernel.radial(r) / (r * r)
        })
        .collect();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let worst = values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max) / scale;
    (worst <= 1e-12, worst)
}

/// Outcome of checking the three kernel admissibility conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// (i) `r⁻²ρ̃(r)` nonincreasing.
    pub monotone: bool,
    /// Largest relative increase of `r⁻²ρ̃(r)` between consecutive samples.
    pub monotonicity_defect: f64,
    /// (ii) `|∫ρ − d| < MASS_TOLERANCE`.
    pub mass_ok: bool,
    pub mass_error: f64,
    /// (iii) tail mass beyond the queried radius.
    pub tail_radius: f64,
    pub tail_mass: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.monotone && self.mass_ok
    }
}

pub fn validate_assumptions(kernel: &Kernel, tail_radius: f64) -> AssumptionReport {
    let (monotone, monotonicity_defect) = monotonicity_defect(kernel);
    let mass_error = (kernel.mass() - kernel.dim as f64).abs();
    AssumptionReport {
        monotone,
        monotonicity_defect,
        mass_ok: mass_error < MASS_TOLERANCE,
        mass_error,
        tail_radius,
        tail_mass: kernel.tail_mass(tail_radius),
    }
}

/// Midpoint-rule mass `Σ_j ρ(x_j − x) Δx^d` around an interior node.
pub fn discrete_mass(kernel: &Kernel, grid: &Grid, node: usize) -> Result<f64> {
    if !grid.is_interior(node) {
        return Err(Error::Invalid(format!("node {node} is not interior")));
    }
    let full = lattice_ball(grid.dim(), kernel.horizon / grid.spacing()).len();
    let nbrs = grid.neighbors(node, kernel.horizon)?;
    if nbrs.len() != full {
        return Err(Error::Invalid(format!(
            "stencil of node {node} is clipped by the grid boundary"
        )));
    }
    let v = grid.cell_volume();
    Ok(nbrs
        .iter()
        .map(|n| kernel.eval(&grid.offset_vector(&n.offset)) * v)
        .sum())
}

/// Kernels with strictly decreasing horizons.
#[derive(Debug, Clone)]
pub struct KernelSequence {
    kernels: Vec<Kernel>,
}

impl KernelSequence {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Config("kernel sequence is empty".into()));
        }
        for w in kernels.windows(2) {
            if !(w[1].horizon < w[0].horizon) {
                return Err(Error::Config(format!(
                    "horizons must strictly decrease ({} then {})",
                    w[0].horizon, w[1].horizon
                )));
            }
            if w[1].dim != w[0].dim {
                return Err(Error::Config("kernel dimensions differ".into()));
            }
        }
        Ok(Self { kernels })
    }

    /// Same profile at each of the given horizons.
    pub fn from_horizons(profile: Profile, dim: usize, horizons: &[f64]) -> Result<Self> {
        let kernels = horizons
            .iter()
            .map(|&h| Kernel::new(profile, dim, h))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernels)
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Tail mass of each member beyond `r0`.
    pub fn tail_masses(&self, r0: f64) -> Vec<f64> {
        self.kernels.iter().map(|k| k.tail_mass(r0)).collect()
    }
}

/// How the discrete operators normalize the kernel on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassCalibration {
    /// Use the analytic normalization as is; the lattice mass differs from
    /// `d` by the midpoint-rule error.
    Analytic,
    /// Rescale so that the full-stencil lattice mass is exactly `d`.
    #[default]
    Lattice,
}

/// The kernel sampled on the lattice ball of a grid, shared by every node.
#[derive(Debug, Clone)]
pub struct Stencil {
    dim: usize,
    pub(crate) offsets: Vec<Lattice>,
    /// Bond vectors `ξ`.
    bonds: Vec<Point>,
    /// `ξ / |ξ|²`, the map from a displacement difference to the nonlocal strain.
    pub(crate) strain_dirs: Vec<Point>,
    /// `ρ(ξ) Δx^d` after calibration.
    pub(crate) weights: Vec<f64>,
    analytic_mass: f64,
    calibration_scale: f64,
}

impl Stencil {
    pub fn new(kernel: &Kernel, grid: &Grid, calibration: MassCalibration) -> Result<Self> {
        if kernel.dim != grid.dim() {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match grid dimension {}",
                kernel.dim,
                grid.dim()
            )));
        }
        if kernel.horizon > grid.domain().collar_width() * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "horizon {} exceeds the collar width {}",
                kernel.horizon,
                grid.domain().collar_width()
            )));
        }
        let offsets = lattice_ball(grid.dim(), kernel.horizon / grid.spacing());
        if offsets.is_empty() {
            return Err(Error::Config(format!(
                "horizon {} is shorter than the grid spacing {}",
                kernel.horizon,
                grid.spacing()
            )));
        }
        let v = grid.cell_volume();
        let bonds: Vec<Point> = offsets.iter().map(|o| grid.offset_vector(o)).collect();
        let strain_dirs = bonds
            .iter()
            .map(|b| {
                let n2: f64 = b.iter().map(|c| c * c).sum();
                [b[0] / n2, b[1] / n2, b[2] / n2]
            })
            .collect();
        let raw: Vec<f64> = bonds.iter().map(|b| kernel.eval(b) * v).collect();
        let analytic_mass: f64 = raw.iter().sum();
        let calibration_scale = match calibration {
            MassCalibration::Analytic => 1.0,
            MassCalibration::Lattice => kernel.dim as f64 / analytic_mass,
        };
        Ok(Self {
            dim: grid.dim(),
            offsets,
            bonds,
            strain_dirs,
            weights: raw.iter().map(|w| w * calibration_scale).collect(),
            analytic_mass,
            calibration_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Reach of the stencil in lattice units along any axis.
    pub fn reach(&self) -> i64 {
        self.offsets.iter().flat_map(|o| o.iter().map(|c| c.abs())).max().unwrap_or(0)
    }

    /// Full-stencil lattice mass before calibration.
    pub fn uncalibrated_mass(&self) -> f64 {
        self.analytic_mass
    }

    /// Full-stencil lattice mass seen by the operators.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn calibration_scale(&self) -> f64 {
        self.calibration_scale
    }

    pub fn offsets(&self) -> &[Lattice] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Bond vectors `Δx · offset`.
    pub fn bonds(&self) -> &[Point] {
        &self.bonds
    }
}
