use crate::error::{Error, Result};
use crate::geometry::{Grid, Point};

/// Nodal vector field on a grid, `dim` components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dim: usize,
    values: Vec<f64>,
    pub time: Option<f64>,
}

impl DisplacementField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            dim: grid.dim(),
            values: vec![0.0; grid.node_count() * grid.dim()],
            time: None,
        }
    }

    /// Samples `f` at every node, collar included (no constraint applied).
    pub fn from_fn<F: Fn(&Point) -> [f64; 3]>(grid: &Grid, f: F) -> Self {
        let dim = grid.dim();
        let mut values = Vec::with_capacity(grid.node_count() * dim);
        for i in 0..grid.node_count() {
            let v = f(&grid.coord(i));
            values.extend_from_slice(&v[..dim]);
        }
        Self { dim, values, time: None }
    }

    /// Samples `f` at interior nodes and clamps the collar to zero.
    pub fn constrained_from_fn<F: Fn(&Point) -> [f64; 3]>(grid: &Grid, f: F) -> Self {
        let mut u = Self::from_fn(grid, f);
        u.clamp_collar(grid);
        u
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() * grid.dim() {
            return Err(Error::Invalid(format!(
                "expected {} values, got {}",
                grid.node_count() * grid.dim(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("displacement entry {bad}")));
        }
        Ok(Self {
            dim: grid.dim(),
            values,
            time: None,
        })
    }

    /// Builds a constrained field from free dofs.
    pub fn from_dofs(grid: &Grid, dofs: &[f64]) -> Self {
        Self {
            dim: grid.dim(),
            values: grid.dof_map().extend(dofs),
            time: None,
        }
    }

    pub fn dofs(&self, grid: &Grid) -> Vec<f64> {
        grid.dof_map().restrict(&self.values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn clamp_collar(&mut self, grid: &Grid) {
        for i in 0..grid.node_count() {
            if !grid.is_interior(i) {
                self.values[i * self.dim..(i + 1) * self.dim].fill(0.0);
            }
        }
    }

    /// Checks membership in the constrained space: finite and zero on the collar.
    pub fn check_constrained(&self, grid: &Grid) -> Result<()> {
        if let Some(bad) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("displacement entry {bad}")));
        }
        for i in 0..grid.node_count() {
            if !grid.is_interior(i) && self.node(i).iter().any(|&v| v != 0.0) {
                return Err(Error::Constraint(format!("collar node {i} carries a nonzero displacement")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|v| v * factor).collect(),
            time: self.time,
        }
    }
}
