//! Bond-level nonlocal calculus on the grid: nonlocal strain and divergence,
//! the seminorm, the elastic energy and the viscous potential, plus their
//! assembly into sparse symmetric forms.

mod assembly;
mod field;

pub use assembly::{MatrixFreeDissipation, MatrixFreeEnergy};
pub use field::DisplacementField;

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::kernels::{Kernel, MassCalibration, Stencil};

/// Peridynamic moduli: `alpha` (shear-type), `beta` (bulk-type).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MaterialParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let p = Self { alpha, beta };
        for dim in [2, 3] {
            let (mu, lambda) = p.lame(dim);
            if !(lambda + 2.0 * mu / dim as f64 > 0.0) {
                return Err(Error::Config(format!(
                    "local limit loses coercivity in d={dim}: lambda + 2 mu / d = {}",
                    lambda + 2.0 * mu / dim as f64
                )));
            }
        }
        Ok(p)
    }

    /// `(μ, λ)` of the local limit: `μ = 2α/(d+2)`, `λ = β − 2α/(d(d+2))`.
    pub fn lame(&self, dim: usize) -> (f64, f64) {
        let d = dim as f64;
        (2.0 * self.alpha / (d + 2.0), self.beta - 2.0 * self.alpha / (d * (d + 2.0)))
    }
}

/// A kernel discretized on a grid together with the material moduli.
#[derive(Debug, Clone)]
pub struct NonlocalModel {
    grid: Grid,
    kernel: Kernel,
    stencil: Stencil,
    params: MaterialParams,
    /// Per-node calibrated mass `Σ_j ρ_ij Δx^d` over the in-grid neighbours.
    node_mass: Vec<f64>,
}

impl NonlocalModel {
    pub fn new(kernel: Kernel, grid: Grid, params: MaterialParams, calibration: MassCalibration) -> Result<Self> {
        let stencil = Stencil::new(&kernel, &grid, calibration)?;
        let mut model = Self {
            grid,
            kernel,
            stencil,
            params,
            node_mass: Vec::new(),
        };
        model.node_mass = (0..model.grid.node_count())
            .map(|i| model.bonds(i).map(|(_, k)| model.stencil.weights[k]).sum())
            .collect();
        Ok(model)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn params(&self) -> MaterialParams {
        self.params
    }

    pub fn node_mass(&self, node: usize) -> f64 {
        self.node_mass[node]
    }

    pub fn max_node_mass(&self) -> f64 {
        self.node_mass.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// `C` with `|dE(u)(v)| ≤ C |u|_ρ |v|_ρ` on the grid.
    pub fn form_bound_constant(&self) -> f64 {
        let d = self.grid.dim() as f64;
        let m = self.max_node_mass();
        self.params.beta * m + self.params.alpha * (1.0 + (m / (d * d) - 2.0 / d).max(0.0) * m)
    }

    /// In-grid neighbours of `node` as `(neighbour, stencil slot)`.
    pub(crate) fn bonds(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let base = self.grid.lattice(node);
        self.stencil.offsets.iter().enumerate().filter_map(move |(k, o)| {
            let l = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
            self.grid.index_of(&l).map(|j| (j, k))
        })
    }

    fn strain_along(&self, u: &DisplacementField, i: usize, j: usize, slot: usize) -> f64 {
        let a = &self.stencil.strain_dirs[slot];
        let (ui, uj) = (u.node(i), u.node(j));
        (0..self.grid.dim()).map(|c| (uj[c] - ui[c]) * a[c]).sum()
    }

    /// `(u(x_j) − u(x_i))·(x_j − x_i) / |x_j − x_i|²`.
    pub fn nonlocal_strain(&self, u: &DisplacementField, i: usize, j: usize) -> Result<f64> {
        nonlocal_strain(&self.grid, u, i, j)
    }

    /// `Σ_j ρ(x_j − x_i) D(u)(x_j, x_i) Δx^d`; the centre node is excluded.
    pub fn nonlocal_divergence(&self, u: &DisplacementField, i: usize) -> f64 {
        self.bonds(i)
            .map(|(j, k)| self.stencil.weights[k] * self.strain_along(u, i, j, k))
            .sum()
    }

    /// Nonlocal divergence at every grid node.
    pub fn divergence_field(&self, u: &DisplacementField) -> Vec<f64> {
        (0..self.grid.node_count()).map(|i| self.nonlocal_divergence(u, i)).collect()
    }

    /// `|u|²_ρ = Σ_i Σ_j ρ_ij D_ij² Δx^{2d}`.
    pub fn seminorm_sq(&self, u: &DisplacementField) -> f64 {
        let v = self.grid.cell_volume();
        (0..self.grid.node_count())
            .map(|i| {
                self.bonds(i)
                    .map(|(j, k)| self.stencil.weights[k] * self.strain_along(u, i, j, k).powi(2))
                    .sum::<f64>()
                    * v
            })
            .sum()
    }

    /// Per-node energy density
    /// `(β/2) 𝔇_i² + (α/2) Σ_j ρ_ij (D_ij − 𝔇_i/d)² Δx^d`.
    pub fn energy_density(&self, u: &DisplacementField, i: usize) -> f64 {
        let d = self.grid.dim() as f64;
        let strains: Vec<(usize, f64)> = self.bonds(i).map(|(j, k)| (k, self.strain_along(u, i, j, k))).collect();
        let div: f64 = strains.iter().map(|&(k, s)| self.stencil.weights[k] * s).sum();
        let dev: f64 = strains
            .iter()
            .map(|&(k, s)| self.stencil.weights[k] * (s - div / d).powi(2))
            .sum();
        0.5 * self.params.beta * div * div + 0.5 * self.params.alpha * dev
    }

    /// Nonlocal elastic energy by direct quadrature over all grid nodes.
    pub fn energy(&self, u: &DisplacementField) -> f64 {
        let v = self.grid.cell_volume();
        (0..self.grid.node_count()).map(|i| self.energy_density(u, i)).sum::<f64>() * v
    }

    /// Nonlocal viscous potential `½ |v|²_ρ`.
    pub fn dissipation(&self, v: &DisplacementField) -> f64 {
        0.5 * self.seminorm_sq(v)
    }

    /// `L²(Ω̃)` norm by the midpoint rule.
    pub fn l2_norm(&self, u: &DisplacementField) -> f64 {
        (u.values().iter().map(|x| x * x).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }
}

/// Nonlocal strain between two distinct grid nodes.
pub fn nonlocal_strain(grid: &Grid, u: &DisplacementField, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::Invalid("nonlocal strain needs two distinct nodes".into()));
    }
    let n = grid.node_count();
    if i >= n || j >= n {
        return Err(Error::Invalid(format!("node index out of range ({n} nodes)")));
    }
    let (xi, xj) = (grid.coord(i), grid.coord(j));
    let (ui, uj) = (u.node(i), u.node(j));
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..grid.dim() {
        let dx = xj[c] - xi[c];
        num += (uj[c] - ui[c]) * dx;
        den += dx * dx;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests;
