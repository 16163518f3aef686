use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{Domain, Grid};
use crate::kernels::{Kernel, MassCalibration, Profile};
use crate::linalg::LinearOperator;
use crate::local::ElasticTensors;
use crate::nonlocal::{DisplacementField, MaterialParams, MatrixFreeDissipation, MatrixFreeEnergy, NonlocalModel};

use super::fields::{local_energy, local_forms, AnalyticField};

/// Box of `Ω` and the discretization shared by every level of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpec {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub profile: Profile,
    /// `h / Δx`.
    pub ratio: f64,
    pub params: MaterialParams,
    pub calibration: MassCalibration,
}

impl LevelSpec {
    /// Domain whose collar is exactly one horizon wide.
    pub fn domain(&self, horizon: f64) -> Result<Domain> {
        Domain::new(self.dim, &self.lower, &self.upper, horizon)
    }

    pub fn model(&self, horizon: f64) -> Result<NonlocalModel> {
        let grid = Grid::new(self.domain(horizon)?, horizon / self.ratio)?;
        let kernel = Kernel::new(self.profile, self.dim, horizon)?;
        NonlocalModel::new(kernel, grid, self.params, self.calibration)
    }

    pub fn tensors(&self) -> Result<ElasticTensors> {
        ElasticTensors::from_params(&self.params, self.dim)
    }

    /// The analytic field on `Ω` (independent of the collar).
    pub fn field(&self, kind: super::FieldKind, amplitude: f64) -> Result<AnalyticField> {
        Ok(AnalyticField::new(kind, &Domain::new(self.dim, &self.lower, &self.upper, 0.0)?, amplitude))
    }
}

/// Grid restriction of a `∂Ω`-vanishing field and its energy gap.
#[derive(Debug, Clone)]
pub struct PreparedInitial {
    pub field: DisplacementField,
    pub nonlocal_energy: f64,
    pub local_energy: f64,
}

impl PreparedInitial {
    pub fn gap(&self) -> f64 {
        (self.nonlocal_energy - self.local_energy).abs()
    }
}

/// Samples `field` on the grid, clamps the collar, and compares `E_n` with
/// the exact local energy.
pub fn prepare_initial(field: &AnalyticField, model: &NonlocalModel, tensors: &ElasticTensors) -> Result<PreparedInitial> {
    field.check_trace()?;
    let u = DisplacementField::constrained_from_fn(model.grid(), |x| field.value(x));
    Ok(PreparedInitial {
        nonlocal_energy: model.energy(&u),
        local_energy: local_energy(field, tensors),
        field: u,
    })
}

/// `‖𝔇_n u − div u‖_{L²(Ω̃)}` at every node of the model's grid.
pub fn divergence_error(field: &AnalyticField, model: &NonlocalModel) -> f64 {
    let grid = model.grid();
    let u = DisplacementField::constrained_from_fn(grid, |x| field.value(x));
    let div = model.divergence_field(&u);
    let sq: f64 = div
        .par_iter()
        .enumerate()
        .map(|(i, dn)| {
            let x = grid.coord(i);
            let exact = if grid.domain().contains_open(&x) { field.divergence(&x) } else { 0.0 };
            (dn - exact).powi(2)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    (sq * grid.cell_volume()).sqrt()
}

/// Per-level L² divergence errors over a horizon list.
pub fn divergence_consistency(spec: &LevelSpec, horizons: &[f64], field: &AnalyticField) -> Result<Vec<f64>> {
    field.check_trace()?;
    horizons
        .iter()
        .map(|&h| Ok(divergence_error(field, &spec.model(h)?)))
        .collect()
}

/// Nonlocal and local bilinear forms of one pair of fields at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormDefects {
    pub horizon: f64,
    /// `(u, v)_n`.
    pub dissipation_nonlocal: f64,
    /// `d ∫⨍(s·∇u s)(s·∇v s)`.
    pub dissipation_local: f64,
    /// `Σ 𝔇_n u 𝔇_n v Δx^d`.
    pub divergence_nonlocal: f64,
    pub divergence_local: f64,
    /// `uᵀ K_n v`.
    pub energy_nonlocal: f64,
    /// `dE(u)(v)`.
    pub energy_local: f64,
}

impl FormDefects {
    pub fn dissipation_defect(&self) -> f64 {
        (self.dissipation_nonlocal - self.dissipation_local).abs()
    }

    pub fn divergence_defect(&self) -> f64 {
        (self.divergence_nonlocal - self.divergence_local).abs()
    }

    pub fn energy_defect(&self) -> f64 {
        (self.energy_nonlocal - self.energy_local).abs()
    }
}

pub fn form_defects(model: &NonlocalModel, u: &AnalyticField, v: &AnalyticField, tensors: &ElasticTensors) -> FormDefects {
    let grid = model.grid();
    let uf = DisplacementField::constrained_from_fn(grid, |x| u.value(x));
    let vf = DisplacementField::constrained_from_fn(grid, |x| v.value(x));
    let (ud, vd) = (uf.dofs(grid), vf.dofs(grid));
    let mut mv = vec![0.0; vd.len()];
    MatrixFreeDissipation(model).apply(&vd, &mut mv);
    let mut kv = vec![0.0; vd.len()];
    MatrixFreeEnergy(model).apply(&vd, &mut kv);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let du = model.divergence_field(&uf);
    let dv = model.divergence_field(&vf);
    let local = local_forms(u, v, tensors);
    FormDefects {
        horizon: model.kernel().horizon(),
        dissipation_nonlocal: dot(&ud, &mv),
        dissipation_local: local.dissipation,
        divergence_nonlocal: dot(&du, &dv) * grid.cell_volume(),
        divergence_local: local.divergence,
        energy_nonlocal: dot(&ud, &kv),
        energy_local: local.energy,
    }
}

/// Per-level form defects over a horizon list.
pub fn form_consistency(
    spec: &LevelSpec,
    horizons: &[f64],
    u: &AnalyticField,
    v: &AnalyticField,
) -> Result<Vec<FormDefects>> {
    u.check_trace()?;
    v.check_trace()?;
    let tensors = spec.tensors()?;
    horizons
        .iter()
        .map(|&h| Ok(form_defects(&spec.model(h)?, u, v, &tensors)))
        .collect()
}
