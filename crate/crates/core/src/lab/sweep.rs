use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{run, run_with, EdeTerms, RunOptions, TimeGrid};
use crate::geometry::Grid;
use crate::local::{FemSystem, SimplexMesh};
use crate::nonlocal::NonlocalModel;

use super::consistency::{divergence_error, form_defects, prepare_initial, FormDefects, LevelSpec};
use super::fields::{AnalyticField, FieldKind};

/// Fewest levels for which a monotonicity gate is meaningful.
pub const MIN_SWEEP_LEVELS: usize = 3;

const ALIGN_TOL: f64 = 1e-9;

/// A horizon sweep against a finite element reference.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub spec: LevelSpec,
    /// Strictly decreasing horizons, one per level.
    pub horizons: Vec<f64>,
    pub field: FieldKind,
    pub amplitude: f64,
    /// `None` compares initial data only.
    pub time: Option<TimeGrid>,
    /// Reference mesh spacing is the finest grid spacing divided by this.
    pub reference_factor: usize,
    /// Compare trajectories at every `sample_every`-th step.
    pub sample_every: usize,
}

fn integral_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    ((r - n).abs() <= ALIGN_TOL * r.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.len() < MIN_SWEEP_LEVELS {
            return Err(Error::Config(format!(
                "a sweep needs at least {MIN_SWEEP_LEVELS} horizon levels, got {}",
                self.horizons.len()
            )));
        }
        if self.horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("horizons must be strictly decreasing".into()));
        }
        if self.reference_factor < 2 {
            return Err(Error::Config(format!(
                "reference resolution factor must be at least 2, got {}",
                self.reference_factor
            )));
        }
        if !(self.spec.ratio.is_finite() && self.spec.ratio >= 1.0) {
            return Err(Error::Config(format!("h/dx ratio must be at least 1, got {}", self.spec.ratio)));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be positive".into()));
        }
        let fine = self.reference_spacing();
        for &h in &self.horizons {
            let dx = h / self.spec.ratio;
            if integral_ratio(dx, fine).is_none() {
                return Err(Error::Config(format!(
                    "grid spacing {dx} is not a multiple of the reference spacing {fine}"
                )));
            }
        }
        self.reference_cells()?;
        self.spec.field(self.field, self.amplitude)?.check_trace()
    }

    pub fn reference_spacing(&self) -> f64 {
        let finest = self.horizons.iter().cloned().fold(f64::INFINITY, f64::min);
        finest / self.spec.ratio / self.reference_factor as f64
    }

    fn reference_cells(&self) -> Result<Vec<usize>> {
        let fine = self.reference_spacing();
        (0..self.spec.dim)
            .map(|k| {
                let len = self.spec.upper[k] - self.spec.lower[k];
                integral_ratio(len, fine).ok_or_else(|| {
                    Error::Config(format!("box edge {len} is not a multiple of the reference spacing {fine}"))
                })
            })
            .collect()
    }
}

/// Trajectory comparison for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    /// `max_t ‖u_n(t) − I u_ref(t)‖_{L²}` over the sampled instants.
    pub l2_error: f64,
    /// `max_t |E_n(u_n(t)) − E(u_ref(t))|`.
    pub energy_gap: f64,
    /// `max_t |EDE residual| / E_n(u⁰)`.
    pub relative_ede_residual: f64,
    pub energy_nonincreasing: bool,
    pub a_priori_bounds: bool,
    pub terms: Vec<EdeTerms>,
    pub l2_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMetrics {
    pub spacing: f64,
    pub dofs: usize,
    pub initial_gap: f64,
    /// `‖u⁰ − I u_ref(0)‖_{L²}` on the grid's interior nodes.
    pub interpolation_error: f64,
    pub divergence_error: f64,
    pub forms: FormDefects,
    pub trajectory: Option<TrajectoryMetrics>,
}

impl LevelMetrics {
    /// Trajectory error less the interpolation error of the reference.
    pub fn net_error(&self) -> Option<f64> {
        self.trajectory.as_ref().map(|t| t.l2_error - self.interpolation_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub horizon: f64,
    pub outcome: std::result::Result<LevelMetrics, String>,
}

/// Rows ordered by decreasing horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    pub reference_spacing: f64,
    /// Reference energies at every step (empty without evolution).
    pub reference_energies: Vec<f64>,
    pub reference_error: Option<String>,
}

/// Column name and per-row extractor.
type Column = (&'static str, fn(&LevelMetrics) -> Option<f64>);

/// Columns that must strictly decrease across levels.
pub const MONITORED: [Column; 7] = [
    ("initial_gap", |m| Some(m.initial_gap)),
    ("divergence_error", |m| Some(m.divergence_error)),
    ("dissipation_form_defect", |m| Some(m.forms.dissipation_defect())),
    ("divergence_form_defect", |m| Some(m.forms.divergence_defect())),
    ("energy_form_defect", |m| Some(m.forms.energy_defect())),
    ("l2_error", |m| m.trajectory.as_ref().map(|t| t.l2_error)),
    ("energy_gap", |m| m.trajectory.as_ref().map(|t| t.energy_gap)),
];

impl ConvergenceReport {
    pub fn has_trajectories(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.outcome.as_ref().is_ok_and(|m| m.trajectory.is_some()))
    }

    /// Values of a monitored column, `None` where a level failed.
    pub fn column(&self, extract: fn(&LevelMetrics) -> Option<f64>) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| r.outcome.as_ref().ok().and_then(extract))
            .collect()
    }

    /// Names of the violated gates, with the reason.
    pub fn gate_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(e) = &self.reference_error {
            out.push(format!("reference: {e}"));
        }
        for row in &self.rows {
            if let Err(e) = &row.outcome {
                out.push(format!("level h={}: {e}", row.horizon));
            }
        }
        let evolving = self.has_trajectories();
        for (name, extract) in MONITORED {
            let values = self.column(extract);
            if values.iter().all(|v| v.is_none()) {
                if evolving || !matches!(name, "l2_error" | "energy_gap") {
                    out.push(format!("{name}: no data"));
                }
                continue;
            }
            let mut prev: Option<f64> = None;
            for (i, v) in values.iter().enumerate() {
                match v {
                    Some(v) if !v.is_finite() => out.push(format!("{name}: non-finite at level {i}")),
                    Some(v) => {
                        if let Some(p) = prev {
                            if *v >= p {
                                out.push(format!("{name}: not decreasing at level {i} ({p:.6e} -> {v:.6e})"));
                            }
                        }
                        prev = Some(*v);
                    }
                    None => out.push(format!("{name}: missing at level {i}")),
                }
            }
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.gate_failures().is_empty()
    }
}

/// Linear interpolation from a mesh onto the interior nodes of a grid.
struct Interpolator {
    /// Per free grid node, the containing element's vertices and weights.
    stencils: Vec<Vec<(usize, f64)>>,
    dim: usize,
}

impl Interpolator {
    fn new(mesh: &SimplexMesh, grid: &Grid) -> Result<Self> {
        let stencils = grid
            .dof_map()
            .free_nodes()
            .par_iter()
            .map(|&node| {
                let x = grid.coord(node);
                let (e, bary) = mesh
                    .locate(&x)
                    .ok_or_else(|| Error::Invalid(format!("grid node {x:?} lies outside the reference mesh")))?;
                Ok(mesh
                    .element(e)
                    .iter()
                    .zip(bary)
                    .filter(|(_, w)| w.abs() > 0.0)
                    .map(|(&v, w)| (v, w))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            stencils,
            dim: grid.dim(),
        })
    }

    /// Interpolated values in the grid's dof layout.
    fn apply(&self, nodal: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.stencils.len() * d];
        for (slot, st) in self.stencils.iter().enumerate() {
            for &(v, w) in st {
                for c in 0..d {
                    out[slot * d + c] += w * nodal[v * d + c];
                }
            }
        }
        out
    }
}

fn l2_distance(a: &[f64], b: &[f64], cell_volume: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * cell_volume).sqrt()
}

fn sampled(step: usize, steps: usize, every: usize) -> bool {
    step % every == 0 || step == steps
}

struct ReferenceRun {
    /// Per level, the interpolated reference at every sampled step.
    samples: Vec<Vec<Vec<f64>>>,
    initial: Vec<Vec<f64>>,
    energies: Vec<f64>,
}

fn run_reference(plan: &SweepPlan, field: &AnalyticField, grids: &[Option<Grid>]) -> Result<ReferenceRun> {
    let cells = plan.reference_cells()?;
    let mesh = SimplexMesh::structured(plan.spec.dim, &plan.spec.lower, &plan.spec.upper, &cells)?;
    let interps: Vec<Option<Interpolator>> = grids
        .iter()
        .map(|g| g.as_ref().map(|g| Interpolator::new(&mesh, g)).transpose())
        .collect::<Result<_>>()?;
    let system = FemSystem::assemble(plan.spec.tensors()?, mesh)?;
    let nodal0 = system.mesh().sample(|x| field.value(x));
    let u0 = system.dofs(&nodal0);
    let interp_all = |nodal: &[f64]| -> Vec<Vec<f64>> {
        interps
            .iter()
            .map(|i| i.as_ref().map(|i| i.apply(nodal)).unwrap_or_default())
            .collect()
    };
    let initial = interp_all(&system.nodal(&u0));
    let Some(time) = plan.time else {
        return Ok(ReferenceRun {
            samples: Vec::new(),
            initial,
            energies: Vec::new(),
        });
    };
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); grids.len()];
    let steps = time.steps();
    let options = RunOptions {
        sample_every: usize::MAX,
        ..RunOptions::default()
    };
    let traj = run_with(system.pair(), &u0, &time, &options, |k, _, state| {
        if sampled(k, steps, plan.sample_every) {
            for (store, vals) in samples.iter_mut().zip(interp_all(&system.nodal(state))) {
                store.push(vals);
            }
        }
        Ok(())
    })?;
    Ok(ReferenceRun {
        samples,
        initial,
        energies: traj.energies(),
    })
}

struct LevelRun {
    model: NonlocalModel,
    metrics: LevelMetrics,
    trajectory: Option<crate::evolution::Trajectory>,
    u0: Vec<f64>,
}

fn run_level(plan: &SweepPlan, field: &AnalyticField, horizon: f64) -> Result<LevelRun> {
    let model = plan.spec.model(horizon)?;
    let tensors = plan.spec.tensors()?;
    let prepared = prepare_initial(field, &model, &tensors)?;
    let forms = form_defects(&model, field, field, &tensors);
    let div = divergence_error(field, &model);
    let u0 = prepared.field.dofs(model.grid());
    let trajectory = match plan.time {
        Some(time) => {
            let pair = model.assemble()?;
            let options = RunOptions {
                sample_every: plan.sample_every,
                ..RunOptions::default()
            };
            Some(run(&pair, &u0, &time, &options)?)
        }
        None => None,
    };
    Ok(LevelRun {
        metrics: LevelMetrics {
            spacing: model.grid().spacing(),
            dofs: u0.len(),
            initial_gap: prepared.gap(),
            interpolation_error: 0.0,
            divergence_error: div,
            forms,
            trajectory: None,
        },
        model,
        trajectory,
        u0,
    })
}

fn finish_level(
    mut run: LevelRun,
    reference: &ReferenceRun,
    level: usize,
) -> std::result::Result<LevelMetrics, String> {
    let vol = run.model.grid().cell_volume();
    run.metrics.interpolation_error = l2_distance(&run.u0, &reference.initial[level], vol);
    let Some(traj) = run.trajectory.take() else {
        return Ok(run.metrics);
    };
    let refs = &reference.samples[level];
    if refs.len() != traj.states.len() {
        return Err(format!(
            "sampled {} nonlocal states but {} reference states",
            traj.states.len(),
            refs.len()
        ));
    }
    let l2_error = traj
        .states
        .iter()
        .zip(refs)
        .map(|((_, u), r)| l2_distance(u, r, vol))
        .fold(0.0, f64::max);
    let energy_gap = traj
        .terms
        .iter()
        .zip(&reference.energies)
        .map(|(t, e)| (t.energy - e).abs())
        .fold(0.0, f64::max);
    let e0 = traj.initial_energy();
    let relative_ede_residual = if e0 > 0.0 { traj.max_abs_residual() / e0 } else { 0.0 };
    run.metrics.trajectory = Some(TrajectoryMetrics {
        l2_error,
        energy_gap,
        relative_ede_residual,
        energy_nonincreasing: traj.energy_nonincreasing(),
        a_priori_bounds: traj.a_priori_bounds_hold(1e-9),
        terms: traj.terms,
        l2_norms: traj.l2_norms,
    });
    Ok(run.metrics)
}

/// Runs every level and the reference concurrently and collects the report.
///
/// A failing level is recorded in its row; the other levels still run.
pub fn run_sweep(plan: &SweepPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let field = plan.spec.field(plan.field, plan.amplitude)?;
    let grids: Vec<Option<Grid>> = plan
        .horizons
        .iter()
        .map(|&h| {
            plan.spec
                .domain(h)
                .and_then(|d| Grid::new(d, h / plan.spec.ratio))
                .ok()
        })
        .collect();
    let (reference, levels) = rayon::join(
        || run_reference(plan, &field, &grids),
        || {
            plan.horizons
                .par_iter()
                .map(|&h| run_level(plan, &field, h))
                .collect::<Vec<_>>()
        },
    );
    let (reference, reference_error) = match reference {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rows = plan
        .horizons
        .iter()
        .zip(levels)
        .enumerate()
        .map(|(i, (&horizon, level))| {
            let outcome = match (level, &reference) {
                (Err(e), _) => Err(e.to_string()),
                (Ok(_), None) => Err("reference run failed".to_string()),
                (Ok(run), Some(r)) => finish_level(run, r, i),
            };
            SweepRow { horizon, outcome }
        })
        .collect();
    Ok(ConvergenceReport {
        rows,
        reference_spacing: plan.reference_spacing(),
        reference_energies: reference.map(|r| r.energies).unwrap_or_default(),
        reference_error,
    })
}
