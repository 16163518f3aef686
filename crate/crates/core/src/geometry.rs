//! Computational domain, the uniform grid over the inflated box, and the
//! interior/collar node classification.

use crate::error::{Error, Result};

/// Lattice offsets and coordinates are carried in fixed 3-slot arrays; slots
/// beyond `dim` stay zero.
pub type Point = [f64; 3];
pub type Lattice = [i64; 3];

/// Relative slack used for "on the boundary" and "within the horizon" tests.
const GEOM_TOL: f64 = 1e-9;

/// The reference box `Ω` and the width of the clamped collar around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    lower: Point,
    upper: Point,
    collar_width: f64,
}

impl Domain {
    pub fn new(dim: usize, lower: &[f64], upper: &[f64], collar_width: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::Config(format!(
                "box corners must have {dim} coordinates (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..dim {
            if !(upper[a] - lower[a] > 0.0) || !lower[a].is_finite() || !upper[a].is_finite() {
                return Err(Error::Config(format!(
                    "box edge {a} must have positive finite length (lower {}, upper {})",
                    lower[a], upper[a]
                )));
            }
            lo[a] = lower[a];
            hi[a] = upper[a];
        }
        if !(collar_width >= 0.0) || !collar_width.is_finite() {
            return Err(Error::Config(format!(
                "collar width must be nonnegative, got {collar_width}"
            )));
        }
        Ok(Self {
            dim,
            lower: lo,
            upper: hi,
            collar_width,
        })
    }

    /// `[0,1]^dim` with the given collar.
    pub fn unit_box(dim: usize, collar_width: f64) -> Result<Self> {
        Self::new(dim, &vec![0.0; dim], &vec![1.0; dim], collar_width)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Membership in the open box `Ω`; points within a relative tolerance of
    /// the boundary count as outside.
    pub fn contains_open(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| {
            let tol = GEOM_TOL * (self.upper[a] - self.lower[a]);
            x[a] > self.lower[a] + tol && x[a] < self.upper[a] - tol
        })
    }

    /// Membership in the closed box `Ω̄`.
    pub fn contains_closed(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| {
            let tol = GEOM_TOL * (self.upper[a] - self.lower[a]);
            x[a] >= self.lower[a] - tol && x[a] <= self.upper[a] + tol
        })
    }
}

/// Maps constrained-space nodes to contiguous dof rows (`node-major`,
/// `dim` components per node).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    dim: usize,
    slot_of_node: Vec<Option<usize>>,
    node_of_slot: Vec<usize>,
}

impl DofMap {
    pub fn from_mask(dim: usize, free: &[bool]) -> Self {
        let mut slot_of_node = vec![None; free.len()];
        let mut node_of_slot = Vec::new();
        for (node, &is_free) in free.iter().enumerate() {
            if is_free {
                slot_of_node[node] = Some(node_of_slot.len());
                node_of_slot.push(node);
            }
        }
        Self {
            dim,
            slot_of_node,
            node_of_slot,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.slot_of_node.len()
    }

    pub fn free_node_count(&self) -> usize {
        self.node_of_slot.len()
    }

    pub fn dof_count(&self) -> usize {
        self.node_of_slot.len() * self.dim
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        self.slot_of_node[node]
    }

    pub fn dof(&self, node: usize, component: usize) -> Option<usize> {
        self.slot_of_node[node].map(|s| s * self.dim + component)
    }

    pub fn node_of_slot(&self, slot: usize) -> usize {
        self.node_of_slot[slot]
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.node_of_slot
    }

    /// Extracts free dofs from a full nodal vector (`dim` values per node).
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        assert_eq!(nodal.len(), self.node_count() * self.dim);
        let mut out = Vec::with_capacity(self.dof_count());
        for &node in &self.node_of_slot {
            out.extend_from_slice(&nodal[node * self.dim..(node + 1) * self.dim]);
        }
        out
    }

    /// Scatters dofs back into a nodal vector; clamped nodes get zero.
    pub fn extend(&self, dofs: &[f64]) -> Vec<f64> {
        assert_eq!(dofs.len(), self.dof_count());
        let mut out = vec![0.0; self.node_count() * self.dim];
        for (slot, &node) in self.node_of_slot.iter().enumerate() {
            out[node * self.dim..(node + 1) * self.dim]
                .copy_from_slice(&dofs[slot * self.dim..(slot + 1) * self.dim]);
        }
        out
    }
}

/// A node returned by [`Grid::neighbors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub index: usize,
    /// Lattice offset from the query node, in units of the spacing.
    pub offset: Lattice,
}

/// Uniform vertex-centred grid over the inflated box `Ω̃`.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    spacing: f64,
    shape: [usize; 3],
    /// Lattice index of the lower `Ω` corner inside the grid.
    collar_layers: [usize; 3],
    interior: Vec<bool>,
    dofs: DofMap,
}

impl Grid {
    pub fn new(domain: Domain, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
        }
        if spacing > domain.collar_width * (1.0 + GEOM_TOL) {
            return Err(Error::Config(format!(
                "grid spacing {spacing} exceeds the collar width {} (need at least one collar layer)",
                domain.collar_width
            )));
        }
        let dim = domain.dim;
        let mut shape = [1usize; 3];
        let mut collar_layers = [0usize; 3];
        for a in 0..dim {
            let lo_layers = (domain.collar_width / spacing + GEOM_TOL).floor() as usize;
            let inner = ((domain.upper[a] - domain.lower[a]) / spacing + GEOM_TOL).floor() as usize;
            let last_inner = domain.lower[a] + inner as f64 * spacing;
            let hi_layers =
                ((domain.upper[a] + domain.collar_width - last_inner) / spacing + GEOM_TOL).floor() as usize;
            collar_layers[a] = lo_layers;
            shape[a] = lo_layers + inner + 1 + hi_layers;
        }
        let n: usize = shape.iter().product();
        let mut grid = Self {
            domain,
            spacing,
            shape,
            collar_layers,
            interior: Vec::new(),
            dofs: DofMap::from_mask(dim, &[]),
        };
        let interior: Vec<bool> = (0..n).map(|i| grid.domain.contains_open(&grid.coord(i))).collect();
        grid.dofs = DofMap::from_mask(dim, &interior);
        grid.interior = interior;
        Ok(grid)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim()]
    }

    pub fn node_count(&self) -> usize {
        self.interior.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Volume of the union of node cells (each node owns a cube of side
    /// `spacing` centred on it).
    pub fn covered_volume(&self) -> f64 {
        self.shape().iter().map(|&n| n as f64 * self.spacing).product()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.interior[node]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_count(&self) -> usize {
        self.dofs.free_node_count()
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dofs
    }

    pub fn lattice(&self, node: usize) -> Lattice {
        let mut rest = node;
        let mut l = [0i64; 3];
        for a in 0..3 {
            l[a] = (rest % self.shape[a]) as i64;
            rest /= self.shape[a];
        }
        l
    }

    pub fn index_of(&self, l: &Lattice) -> Option<usize> {
        let mut idx = 0usize;
        for a in (0..3).rev() {
            if l[a] < 0 || l[a] as usize >= self.shape[a] {
                return None;
            }
            idx = idx * self.shape[a] + l[a] as usize;
        }
        Some(idx)
    }

    /// Node coordinates; computed from the integer lattice index in one step
    /// so there is no accumulated drift.
    pub fn coord(&self, node: usize) -> Point {
        let l = self.lattice(node);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = self.domain.lower[a] + (l[a] - self.collar_layers[a] as i64) as f64 * self.spacing;
        }
        x
    }

    /// Physical vector of a lattice offset.
    pub fn offset_vector(&self, offset: &Lattice) -> Point {
        let mut v = [0.0; 3];
        for a in 0..self.dim() {
            v[a] = offset[a] as f64 * self.spacing;
        }
        v
    }

    /// All grid nodes `x' ≠ x` with `|x' − x| ≤ horizon`.
    pub fn neighbors(&self, node: usize, horizon: f64) -> Result<Vec<Neighbor>> {
        if node >= self.node_count() {
            return Err(Error::Invalid(format!(
                "node {node} out of range ({} nodes)",
                self.node_count()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        let base = self.lattice(node);
        Ok(lattice_ball(self.dim(), horizon / self.spacing)
            .into_iter()
            .filter_map(|offset| {
                let l = [base[0] + offset[0], base[1] + offset[1], base[2] + offset[2]];
                self.index_of(&l).map(|index| Neighbor { index, offset })
            })
            .collect())
    }
}

/// Nonzero lattice vectors with Euclidean length at most `radius` (in units
/// of the spacing), in lexicographic order.
pub fn lattice_ball(dim: usize, radius: f64) -> Vec<Lattice> {
    let r = (radius * (1.0 + GEOM_TOL)).floor() as i64;
    let limit = radius * radius * (1.0 + 2.0 * GEOM_TOL);
    let span = |active: bool| if active { -r..=r } else { 0..=0 };
    let mut out = Vec::new();
    for z in span(dim > 2) {
        for y in span(true) {
            for x in span(true) {
                let n2 = (x * x + y * y + z * z) as f64;
                if n2 > 0.0 && n2 <= limit {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}
