//! Time integration of the linear gradient flow `M u̇ + K u = 0` and the
//! energy-dissipation bookkeeping along discrete trajectories.

use crate::error::{Error, Result};
use crate::linalg::{dot, ConjugateGradient, CsrMatrix, Jacobi, Preconditioner, SkylineCholesky, SolveStats};
use crate::pair::OperatorPair;

/// Relative tolerance on `t_final / dt` being an integer.
pub const STEP_COUNT_TOLERANCE: f64 = 1e-9;

/// Largest skyline factor (stored entries) used as a preconditioner before
/// falling back to Jacobi.
pub const CHOLESKY_ENVELOPE_LIMIT: usize = 60_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    ImplicitEuler,
    /// `θ ∈ [½, 1]`; `θ = ½` is Crank-Nicolson.
    Theta(f64),
}

impl Scheme {
    pub fn theta(&self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::Theta(t) => *t,
        }
    }

    pub fn crank_nicolson() -> Self {
        Scheme::Theta(0.5)
    }

    fn validate(&self) -> Result<()> {
        let t = self.theta();
        if (0.5..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(Error::Config(format!("theta must lie in [0.5, 1], got {t}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    dt: f64,
    steps: usize,
    scheme: Scheme,
}

impl TimeGrid {
    pub fn new(t_final: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::Config(format!("final time must be positive, got {t_final}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        scheme.validate()?;
        let ratio = t_final / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > STEP_COUNT_TOLERANCE * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "final time {t_final} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            t_final,
            dt,
            steps: steps as usize,
            scheme,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Time of step `k`, computed without accumulation.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn halved(&self) -> Self {
        Self {
            dt: 0.5 * self.dt,
            steps: 2 * self.steps,
            ..*self
        }
    }
}

enum Factor {
    Cholesky(SkylineCholesky),
    Diagonal(Jacobi),
}

impl Factor {
    fn build(a: &CsrMatrix) -> Self {
        let first = a.first_columns();
        let envelope: usize = first.iter().enumerate().map(|(i, &f)| i - f + 1).sum();
        if envelope <= CHOLESKY_ENVELOPE_LIMIT {
            if let Ok(f) = SkylineCholesky::factor(a) {
                return Factor::Cholesky(f);
            }
        }
        Factor::Diagonal(Jacobi::new(a))
    }
}

impl Preconditioner for Factor {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Factor::Cholesky(c) => c.precondition(r, z),
            Factor::Diagonal(j) => j.precondition(r, z),
        }
    }
}

/// A prepared integrator for a fixed pair, step size and scheme.
pub struct Stepper<'a> {
    pair: &'a OperatorPair,
    dt: f64,
    theta: f64,
    lhs: CsrMatrix,
    lhs_factor: Factor,
    mass_factor: Factor,
    cg: ConjugateGradient,
}

impl<'a> Stepper<'a> {
    pub fn new(pair: &'a OperatorPair, dt: f64, scheme: Scheme) -> Result<Self> {
        scheme.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let theta = scheme.theta();
        let lhs = CsrMatrix::linear_combination(1.0, &pair.mass, theta * dt, &pair.stiffness);
        let lhs_factor = Factor::build(&lhs);
        let mass_factor = Factor::build(&pair.mass);
        Ok(Self {
            pair,
            dt,
            theta,
            lhs,
            lhs_factor,
            mass_factor,
            cg: ConjugateGradient::new(1e-10, 20_000),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Solves `(M + θ dt K) u⁺ = (M − (1−θ) dt K) u`, warm-started from `u`.
    pub fn step(&self, u: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let mut rhs = self.pair.mass.mul_vec(u);
        if self.theta < 1.0 {
            let ku = self.pair.stiffness.mul_vec(u);
            let c = (1.0 - self.theta) * self.dt;
            for (r, k) in rhs.iter_mut().zip(&ku) {
                *r -= c * k;
            }
        }
        let mut next = u.to_vec();
        let stats = self.cg.solve(&self.lhs, &self.lhs_factor, &rhs, &mut next)?;
        if let Some(bad) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state entry {bad} after a time step")));
        }
        Ok((next, stats))
    }

    /// `½ ξᵀ M⁻¹ ξ`.
    pub fn dual_dissipation(&self, xi: &[f64]) -> Result<f64> {
        self.pair
            .dual_dissipation_with(xi, &self.mass_factor, &self.cg)
            .map(|(v, _)| v)
    }
}

/// One step with a freshly built Jacobi-preconditioned solver.
pub fn step(pair: &OperatorPair, u: &[f64], dt: f64, scheme: Scheme) -> Result<Vec<f64>> {
    scheme.validate()?;
    let theta = scheme.theta();
    let lhs = CsrMatrix::linear_combination(1.0, &pair.mass, theta * dt, &pair.stiffness);
    let mut rhs = pair.mass.mul_vec(u);
    let ku = pair.stiffness.mul_vec(u);
    for (r, k) in rhs.iter_mut().zip(&ku) {
        *r -= (1.0 - theta) * dt * k;
    }
    let mut next = u.to_vec();
    ConjugateGradient::default().solve(&lhs, &Jacobi::new(&lhs), &rhs, &mut next)?;
    Ok(next)
}

/// The energy-dissipation terms at one recorded instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdeTerms {
    pub time: f64,
    pub energy: f64,
    pub dissipation_integral: f64,
    pub dual_integral: f64,
    /// `E(t) − E(0) + ∫D(u̇) + ∫D*(−Ku)`.
    pub residual: f64,
    /// `|D*(−K u_θ) − D(u̇)|` on the last step.
    pub identity_defect: f64,
    /// `D(u̇) + D*(ξ) − ξ·u̇` on the last step, with `ξ = −K u_θ`.
    pub fenchel_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Keep every `sample_every`-th state (the final state is always kept).
    pub sample_every: usize,
    /// Abort when an energy increases by more than this relative amount.
    pub energy_increase_tolerance: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sample_every: 1,
            energy_increase_tolerance: f64::INFINITY,
        }
    }
}

/// Discrete trajectory with per-step EDE bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time_grid: TimeGrid,
    /// `(step index, dof vector)` of the stored states.
    pub states: Vec<(usize, Vec<f64>)>,
    /// One entry per step, index 0 being the initial instant.
    pub terms: Vec<EdeTerms>,
    pub l2_norms: Vec<f64>,
    pub max_solver_iterations: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.time).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.energy).collect()
    }

    pub fn initial_energy(&self) -> f64 {
        self.terms[0].energy
    }

    pub fn final_state(&self) -> &[f64] {
        &self.states.last().expect("trajectory keeps its final state").1
    }

    /// EDE residual at a step, `None` past the end.
    pub fn ede_residual(&self, index: usize) -> Option<f64> {
        self.terms.get(index).map(|t| t.residual)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.residual.abs()))
    }

    /// Largest relative one-step energy increase (non-positive when the
    /// energy never increases).
    pub fn max_energy_increase(&self) -> f64 {
        self.terms
            .windows(2)
            .map(|w| (w[1].energy - w[0].energy) / w[0].energy.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn energy_strictly_decreasing(&self) -> bool {
        self.terms.windows(2).all(|w| w[1].energy < w[0].energy)
    }

    pub fn energy_nonincreasing(&self) -> bool {
        self.terms.windows(2).all(|w| w[1].energy <= w[0].energy)
    }

    /// `sup E ≤ E(0)`, `∫D ≤ E(0)` and `∫D* ≤ E(0)`, up to a relative slack.
    pub fn a_priori_bounds_hold(&self, slack: f64) -> bool {
        let e0 = self.initial_energy();
        let cap = e0 * (1.0 + slack) + f64::MIN_POSITIVE;
        self.terms
            .iter()
            .all(|t| t.energy <= cap && t.dissipation_integral <= cap && t.dual_integral <= cap)
    }
}

/// Integrates from `u0` over the time grid.
pub fn run(pair: &OperatorPair, u0: &[f64], grid: &TimeGrid, options: &RunOptions) -> Result<Trajectory> {
    run_with(pair, u0, grid, options, |_, _, _| Ok(()))
}

/// As [`run`], calling `observe(step, time, state)` after every step.
pub fn run_with<F>(
    pair: &OperatorPair,
    u0: &[f64],
    grid: &TimeGrid,
    options: &RunOptions,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    if u0.len() != pair.dof_count() {
        return Err(Error::Invalid(format!(
            "initial state has {} entries, expected {}",
            u0.len(),
            pair.dof_count()
        )));
    }
    if let Some(bad) = u0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial state entry {bad}")));
    }
    let stride = options.sample_every.max(1);
    let stepper = Stepper::new(pair, grid.dt(), grid.scheme())?;
    let dt = grid.dt();
    let theta = stepper.theta();
    let e0 = pair.energy(u0);
    let mut terms = vec![EdeTerms {
        time: 0.0,
        energy: e0,
        dissipation_integral: 0.0,
        dual_integral: 0.0,
        residual: 0.0,
        identity_defect: 0.0,
        fenchel_gap: 0.0,
    }];
    let mut l2_norms = vec![pair.l2.norm(u0)];
    let mut states = vec![(0, u0.to_vec())];
    observe(0, 0.0, u0)?;
    let mut u = u0.to_vec();
    let mut max_iterations = 0;
    let (mut diss, mut dual) = (0.0, 0.0);
    for k in 1..=grid.steps() {
        let (next, stats) = stepper.step(&u)?;
        max_iterations = max_iterations.max(stats.iterations);
        let rate: Vec<f64> = next.iter().zip(&u).map(|(a, b)| (a - b) / dt).collect();
        let stage: Vec<f64> = next.iter().zip(&u).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let xi: Vec<f64> = pair.stiffness.mul_vec(&stage).into_iter().map(|v| -v).collect();
        let d_rate = pair.dissipation(&rate);
        let d_dual = stepper.dual_dissipation(&xi)?;
        diss += dt * d_rate;
        dual += dt * d_dual;
        let energy = pair.energy(&next);
        let prev = terms[k - 1].energy;
        if energy - prev > options.energy_increase_tolerance * prev.max(f64::MIN_POSITIVE) {
            return Err(Error::Constraint(format!(
                "energy increased at step {k}: {prev} -> {energy}"
            )));
        }
        let t = grid.time(k);
        terms.push(EdeTerms {
            time: t,
            energy,
            dissipation_integral: diss,
            dual_integral: dual,
            residual: energy - e0 + diss + dual,
            identity_defect: (d_dual - d_rate).abs(),
            fenchel_gap: d_rate + d_dual - dot(&xi, &rate),
        });
        l2_norms.push(pair.l2.norm(&next));
        observe(k, t, &next)?;
        if k % stride == 0 || k == grid.steps() {
            states.push((k, next.clone()));
        }
        u = next;
    }
    Ok(Trajectory {
        time_grid: *grid,
        states,
        terms,
        l2_norms,
        max_solver_iterations: max_iterations,
    })
}

#[cfg(test)]
mod tests;
