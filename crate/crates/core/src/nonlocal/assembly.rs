//! Assembly of the dissipation form `M` and the energy form `K`.
//!
//! With `w_k = ρ(ξ_k) Δx^d`, `a_k = ξ_k/|ξ_k|²` and the per-node mass
//! `m_i = Σ_k w_k` over the in-grid bonds of node `i`, the quadrature of the
//! energy is
//!
//! ```text
//! E(u) = Σ_i Δx^d [ β/2 𝔇_i² + α/2 Σ_k w_k (D_ik − 𝔇_i/d)² ]
//!      = α/2 |u|²  +  Σ_i Δx^d/2 (β − 2α/d + α m_i/d²) 𝔇_i²
//! ```
//!
//! so `K = α M + Σ_i c_i Δx^d g_i g_iᵀ` with `g_i = ∇_u 𝔇_i`. The per-node
//! mass `m_i` is kept as the quadrature sees it; nodes whose stencil is
//! clipped by the grid boundary have `m_i < d`.

use rayon::prelude::*;

use super::NonlocalModel;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::{CsrMatrix, LinearOperator};
use crate::pair::{L2Gram, OperatorPair};

/// Dense per-row accumulator for `dim × dim` blocks indexed by lattice offset.
struct BlockRow {
    dim: usize,
    reach: i64,
    side: usize,
    values: Vec<f64>,
    touched: Vec<bool>,
}

impl BlockRow {
    fn new(dim: usize, reach: i64) -> Self {
        let side = (2 * reach + 1) as usize;
        let slots = side.pow(dim as u32);
        Self {
            dim,
            reach,
            side,
            values: vec![0.0; slots * dim * dim],
            touched: vec![false; slots],
        }
    }

    fn slot(&self, offset: &[i64; 3]) -> usize {
        let mut s = 0usize;
        for a in (0..self.dim).rev() {
            debug_assert!(offset[a].abs() <= self.reach);
            s = s * self.side + (offset[a] + self.reach) as usize;
        }
        s
    }

    /// `block(offset) += scale · u vᵀ`
    fn add_outer(&mut self, offset: &[i64; 3], scale: f64, u: &Point, v: &Point) {
        let s = self.slot(offset);
        self.touched[s] = true;
        let d = self.dim;
        let block = &mut self.values[s * d * d..(s + 1) * d * d];
        for a in 0..d {
            for b in 0..d {
                block[a * d + b] += scale * u[a] * v[b];
            }
        }
    }

    fn offset_of(&self, slot: usize) -> [i64; 3] {
        let mut o = [0i64; 3];
        let mut rest = slot;
        for oa in o.iter_mut().take(self.dim) {
            *oa = (rest % self.side) as i64 - self.reach;
            rest /= self.side;
        }
        o
    }
}

fn scaled(v: &Point, s: f64) -> Point {
    [v[0] * s, v[1] * s, v[2] * s]
}

impl NonlocalModel {
    /// `Σ_k w_k a_k` over the in-grid bonds of a node; zero for full stencils.
    fn bond_drift(&self, node: usize) -> Point {
        let mut acc = [0.0; 3];
        for (_, k) in self.bonds(node) {
            let a = &self.stencil.strain_dirs[k];
            let w = self.stencil.weights[k];
            for c in 0..3 {
                acc[c] += w * a[c];
            }
        }
        acc
    }

    /// Coefficient of `Δx^d 𝔇_i²/2` in the energy at node `i`.
    pub(crate) fn divergence_coefficient(&self, node: usize) -> f64 {
        let d = self.grid.dim() as f64;
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        beta - 2.0 * alpha / d + alpha * self.node_mass[node] / (d * d)
    }

    fn opposite_slots(&self) -> Vec<usize> {
        let offs = &self.stencil.offsets;
        offs.iter()
            .map(|o| {
                let neg = [-o[0], -o[1], -o[2]];
                offs.iter().position(|p| *p == neg).expect("stencil is point symmetric")
            })
            .collect()
    }

    fn emit_rows(&self, p: usize, row: &BlockRow) -> Result<Vec<Vec<(usize, f64)>>> {
        let d = self.grid.dim();
        let map = self.grid.dof_map();
        let base = self.grid.lattice(p);
        let mut rows = vec![Vec::new(); d];
        for (slot, &hit) in row.touched.iter().enumerate() {
            if !hit {
                continue;
            }
            let o = row.offset_of(slot);
            let q = self
                .grid
                .index_of(&[base[0] + o[0], base[1] + o[1], base[2] + o[2]])
                .ok_or_else(|| Error::Constraint(format!("assembly left the grid at node {p}")))?;
            let Some(qs) = map.slot(q) else { continue };
            let block = &row.values[slot * d * d..(slot + 1) * d * d];
            for a in 0..d {
                for b in 0..d {
                    rows[a].push((qs * d + b, block[a * d + b]));
                }
            }
        }
        Ok(rows)
    }

    fn assemble_rows<F>(&self, reach: i64, fill: F) -> Result<CsrMatrix>
    where
        F: Fn(usize, &mut BlockRow) + Sync,
    {
        let d = self.grid.dim();
        let map = self.grid.dof_map();
        let blocks: Vec<Vec<Vec<(usize, f64)>>> = map
            .free_nodes()
            .par_iter()
            .map(|&p| {
                let mut row = BlockRow::new(d, reach);
                fill(p, &mut row);
                self.emit_rows(p, &row)
            })
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<(usize, f64)>> = blocks.into_iter().flatten().collect();
        if rows.len() != map.dof_count() {
            return Err(Error::Constraint("row count differs from interior dof count".into()));
        }
        Ok(CsrMatrix::from_rows(map.dof_count(), rows))
    }

    /// Dissipation form: `vᵀ M v = |v|²_ρ`.
    pub fn assemble_dissipation(&self) -> Result<CsrMatrix> {
        let v = self.grid.cell_volume();
        let st = &self.stencil;
        self.assemble_rows(st.reach(), |p, row| {
            for (_, k) in self.bonds(p) {
                let a = &st.strain_dirs[k];
                let s = 2.0 * v * st.weights[k];
                row.add_outer(&[0, 0, 0], s, a, a);
                row.add_outer(&st.offsets[k], -s, a, a);
            }
        })
    }

    /// `Σ_i coef(i) Δx^d g_i g_iᵀ`.
    fn assemble_divergence_part<C: Fn(usize) -> f64 + Sync>(&self, coef: C) -> Result<CsrMatrix> {
        let v = self.grid.cell_volume();
        let st = &self.stencil;
        let opposite = self.opposite_slots();
        let drift: Vec<Point> = (0..self.grid.node_count()).map(|i| self.bond_drift(i)).collect();
        self.assemble_rows(2 * st.reach(), |p, row| {
            // nodes i whose divergence depends on u_p: p itself and its bonds
            let mut sources: Vec<(usize, [i64; 3], Point)> = vec![(p, [0, 0, 0], scaled(&drift[p], -1.0))];
            for (i, k) in self.bonds(p) {
                let back = opposite[k];
                sources.push((i, st.offsets[k], scaled(&st.strain_dirs[back], st.weights[back])));
            }
            for (i, off_i, gp) in sources {
                let c = coef(i) * v;
                if c == 0.0 {
                    continue;
                }
                row.add_outer(&off_i, c, &gp, &scaled(&drift[i], -1.0));
                for (_, k) in self.bonds(i) {
                    let o = st.offsets[k];
                    let off_q = [off_i[0] + o[0], off_i[1] + o[1], off_i[2] + o[2]];
                    row.add_outer(&off_q, c * st.weights[k], &gp, &st.strain_dirs[k]);
                }
            }
        })
    }

    /// Assembles `(M, K)` over the interior dofs, collar eliminated.
    pub fn assemble(&self) -> Result<OperatorPair> {
        let mass = self.assemble_dissipation()?;
        let div = self.assemble_divergence_part(|i| self.divergence_coefficient(i))?;
        let stiffness = CsrMatrix::linear_combination(self.params.alpha, &mass, 1.0, &div);
        if let Some(bad) = mass.diagonal().iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Constraint(format!("interior dof {bad} has no dissipation")));
        }
        let map = self.grid.dof_map().clone();
        let l2 = L2Gram::Lumped(vec![self.grid.cell_volume(); map.dof_count()]);
        OperatorPair::new(mass, stiffness, l2, map)
    }

    /// `α M + (β − α/d) Σ_i Δx^d g_i g_iᵀ`: the energy form obtained when the
    /// per-node mass is replaced by `d` everywhere.
    pub fn assemble_expanded_energy(&self, mass: &CsrMatrix) -> Result<CsrMatrix> {
        let d = self.grid.dim() as f64;
        let c = self.params.beta - self.params.alpha / d;
        let div = self.assemble_divergence_part(|_| c)?;
        Ok(CsrMatrix::linear_combination(self.params.alpha, mass, 1.0, &div))
    }

    /// Divergence `g_i · v` at every node for a constrained dof vector.
    fn divergence_of_dofs(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.dim();
        let nodal = self.grid.dof_map().extend(x);
        let st = &self.stencil;
        let div = (0..self.grid.node_count())
            .into_par_iter()
            .map(|i| {
                self.bonds(i)
                    .map(|(j, k)| {
                        let a = &st.strain_dirs[k];
                        st.weights[k] * (0..d).map(|c| (nodal[j * d + c] - nodal[i * d + c]) * a[c]).sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        (nodal, div)
    }
}

/// `v ↦ M v` without storing `M`.
pub struct MatrixFreeDissipation<'a>(pub &'a NonlocalModel);

/// `u ↦ K u` without storing `K`.
pub struct MatrixFreeEnergy<'a>(pub &'a NonlocalModel);

fn apply_dissipation(model: &NonlocalModel, nodal: &[f64], scale: f64, y: &mut [f64]) {
    let d = model.grid.dim();
    let v = model.grid.cell_volume();
    let st = &model.stencil;
    let map = model.grid.dof_map();
    y.par_chunks_mut(d).enumerate().for_each(|(slot, out)| {
        let p = map.node_of_slot(slot);
        let mut acc = [0.0; 3];
        for (j, k) in model.bonds(p) {
            let a = &st.strain_dirs[k];
            let s: f64 = (0..d).map(|c| (nodal[j * d + c] - nodal[p * d + c]) * a[c]).sum();
            for c in 0..d {
                acc[c] -= 2.0 * v * st.weights[k] * a[c] * s;
            }
        }
        for c in 0..d {
            out[c] += scale * acc[c];
        }
    });
}

impl LinearOperator for MatrixFreeDissipation<'_> {
    fn size(&self) -> usize {
        self.0.grid.dof_map().dof_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nodal = self.0.grid.dof_map().extend(x);
        y.fill(0.0);
        apply_dissipation(self.0, &nodal, 1.0, y);
    }
}

impl LinearOperator for MatrixFreeEnergy<'_> {
    fn size(&self) -> usize {
        self.0.grid.dof_map().dof_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let model = self.0;
        let d = model.grid.dim();
        let v = model.grid.cell_volume();
        let st = &model.stencil;
        let map = model.grid.dof_map();
        let (nodal, div) = model.divergence_of_dofs(x);
        y.fill(0.0);
        apply_dissipation(model, &nodal, model.params.alpha, y);
        y.par_chunks_mut(d).enumerate().for_each(|(slot, out)| {
            let p = map.node_of_slot(slot);
            let drift = model.bond_drift(p);
            let cp = model.divergence_coefficient(p) * v * div[p];
            for c in 0..d {
                out[c] -= cp * drift[c];
            }
            for (i, k) in model.bonds(p) {
                // bond from i back to p has direction −a_k
                let ci = model.divergence_coefficient(i) * v * div[i] * st.weights[k];
                for c in 0..d {
                    out[c] -= ci * st.strain_dirs[k][c];
                }
            }
        });
    }
}
