//! The pair of symmetric forms driving a linear gradient flow: the
//! dissipation (Riesz) form `M` and the energy form `K`, both restricted to
//! the free dofs of a constrained space.

use crate::error::{Error, Result};
use crate::geometry::DofMap;
use crate::linalg::{ConjugateGradient, CsrMatrix, Jacobi, LinearOperator, Preconditioner, SolveStats};

/// Gram operator of the `L²` inner product on the dof space.
#[derive(Debug, Clone)]
pub enum L2Gram {
    /// Diagonal weights per dof (nodal quadrature).
    Lumped(Vec<f64>),
    /// Consistent finite element mass matrix.
    Consistent(CsrMatrix),
}

impl L2Gram {
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            L2Gram::Lumped(w) => w.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum(),
            L2Gram::Consistent(m) => m.bilinear(u, v),
        }
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct OperatorPair {
    /// `M`: `D(v) = ½ vᵀ M v`.
    pub mass: CsrMatrix,
    /// `K`: `E(u) = ½ uᵀ K u`.
    pub stiffness: CsrMatrix,
    pub l2: L2Gram,
    pub dof_map: DofMap,
}

impl OperatorPair {
    pub fn new(mass: CsrMatrix, stiffness: CsrMatrix, l2: L2Gram, dof_map: DofMap) -> Result<Self> {
        let n = dof_map.dof_count();
        for (name, m) in [("dissipation", &mass), ("energy", &stiffness)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Invalid(format!(
                    "{name} matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            mass,
            stiffness,
            l2,
            dof_map,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.mass.nrows()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        0.5 * self.stiffness.quad_form(u)
    }

    pub fn dissipation(&self, v: &[f64]) -> f64 {
        0.5 * self.mass.quad_form(v)
    }

    /// Fenchel conjugate of the dissipation, `½ ξᵀ M⁻¹ ξ`, by CG to relative
    /// residual 1e-10.
    pub fn dual_dissipation(&self, xi: &[f64]) -> Result<f64> {
        self.dual_dissipation_with(xi, &Jacobi::new(&self.mass), &ConjugateGradient::default())
            .map(|(value, _)| value)
    }

    pub fn dual_dissipation_with<P: Preconditioner + ?Sized>(
        &self,
        xi: &[f64],
        precond: &P,
        cg: &ConjugateGradient,
    ) -> Result<(f64, SolveStats)> {
        let mut z = vec![0.0; xi.len()];
        let stats = cg.solve(&self.mass, precond, xi, &mut z)?;
        Ok((0.5 * crate::linalg::dot(xi, &z), stats))
    }
}

/// `v ↦ M⁻¹ K v`, applied with an inner CG solve.
pub struct FlowMap<'a> {
    pair: &'a OperatorPair,
    precond: Jacobi,
    cg: ConjugateGradient,
}

impl<'a> FlowMap<'a> {
    pub fn new(pair: &'a OperatorPair) -> Self {
        Self {
            pair,
            precond: Jacobi::new(&pair.mass),
            cg: ConjugateGradient::new(1e-12, 20_000),
        }
    }

    pub fn try_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let kv = self.pair.stiffness.mul_vec(v);
        let mut out = vec![0.0; v.len()];
        self.cg.solve(&self.pair.mass, &self.precond, &kv, &mut out)?;
        Ok(out)
    }
}

/// Matrix-free action of `M⁻¹ K`; the inner solve must converge.
pub fn flow_map_matrix(pair: &OperatorPair) -> FlowMap<'_> {
    FlowMap::new(pair)
}

impl LinearOperator for FlowMap<'_> {
    fn size(&self) -> usize {
        self.pair.dof_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let out = self.try_apply(x).expect("inner solve of the flow map failed");
        y.copy_from_slice(&out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_from(m: &[Vec<f64>], k: &[Vec<f64>]) -> OperatorPair {
        let n = m.len();
        OperatorPair::new(
            CsrMatrix::from_dense(m),
            CsrMatrix::from_dense(k),
            L2Gram::Lumped(vec![1.0; n]),
            DofMap::from_mask(1, &vec![true; n]),
        )
        .unwrap()
    }

    #[test]
    fn dual_of_scaled_identity() {
        let p = pair_from(&[vec![2.0, 0.0], vec![0.0, 2.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(p.dual_dissipation(&[0.0, 0.0]).unwrap(), 0.0);
        // |ξ|² = 4 → ½ · 4 / 2 = 1
        let v = p.dual_dissipation(&[2.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flow_map_of_equal_forms_is_identity() {
        let m = vec![vec![3.0, 1.0], vec![1.0, 2.0]];
        let p = pair_from(&m, &m);
        let y = flow_map_matrix(&p).try_apply(&[0.3, -1.2]).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-10 && (y[1] + 1.2).abs() < 1e-10);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let r = OperatorPair::new(
            CsrMatrix::identity(2),
            CsrMatrix::identity(3),
            L2Gram::Lumped(vec![1.0; 2]),
            DofMap::from_mask(1, &[true, true]),
        );
        assert!(r.is_err());
    }
}
