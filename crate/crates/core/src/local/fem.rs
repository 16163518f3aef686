use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{DofMap, Point};
use crate::linalg::CsrMatrix;
use crate::pair::{L2Gram, OperatorPair};

use super::{
    frobenius, sphere_average_centered_square, sphere_average_quadratic, symmetric_part, trace, ElasticTensors,
    SimplexMesh, Tensor2,
};

/// One quantity evaluated through its three equivalent representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyForms {
    /// `½∫ 𝕋ε:ε` with the full fourth-order tensor.
    pub tensor: f64,
    /// Lamé-type expansion in `|ε|²` and `(div)²`.
    pub lame: f64,
    /// Sphere-average representation, contracted by exact moments.
    pub sphere: f64,
}

impl EnergyForms {
    pub fn max_relative_spread(&self) -> f64 {
        let scale = self.tensor.abs().max(self.lame.abs()).max(self.sphere.abs());
        if scale == 0.0 {
            return 0.0;
        }
        let hi = self.tensor.max(self.lame).max(self.sphere);
        let lo = self.tensor.min(self.lame).min(self.sphere);
        (hi - lo) / scale
    }
}

/// P1 discretization of the local Kelvin-Voigt system with clamped boundary.
#[derive(Debug, Clone)]
pub struct FemSystem {
    mesh: SimplexMesh,
    tensors: ElasticTensors,
    pair: OperatorPair,
}

fn unit_strain(grad: &[f64; 3], comp: usize) -> Tensor2 {
    let mut g = [[0.0; 3]; 3];
    g[comp] = *grad;
    symmetric_part(&g)
}

impl FemSystem {
    pub fn assemble(tensors: ElasticTensors, mesh: SimplexMesh) -> Result<Self> {
        if tensors.dim() != mesh.dim() {
            return Err(Error::Config(format!(
                "tensor dimension {} does not match mesh dimension {}",
                tensors.dim(),
                mesh.dim()
            )));
        }
        let map = mesh.dof_map();
        if map.dof_count() == 0 {
            return Err(Error::Config("mesh has no free nodes".into()));
        }
        type Triplets = (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>);
        let (visc, elas, gram): Triplets = (0..mesh.element_count())
            .into_par_iter()
            .map(|e| element_triplets(&mesh, &tensors, &map, e))
            .reduce(
                || (Vec::new(), Vec::new(), Vec::new()),
                |mut a, b| {
                    a.0.extend(b.0);
                    a.1.extend(b.1);
                    a.2.extend(b.2);
                    a
                },
            );
        let n = map.dof_count();
        let mass = CsrMatrix::from_triplets(n, n, &visc);
        let stiffness = CsrMatrix::from_triplets(n, n, &elas);
        let l2 = L2Gram::Consistent(CsrMatrix::from_triplets(n, n, &gram));
        let pair = OperatorPair::new(mass, stiffness, l2, map)?;
        Ok(Self { mesh, tensors, pair })
    }

    pub fn mesh(&self) -> &SimplexMesh {
        &self.mesh
    }

    pub fn tensors(&self) -> &ElasticTensors {
        &self.tensors
    }

    /// `(M_loc, K_loc)` over the free dofs.
    pub fn pair(&self) -> &OperatorPair {
        &self.pair
    }

    pub fn into_pair(self) -> OperatorPair {
        self.pair
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.pair.dof_map
    }

    /// Clamped nodal field built from free dofs.
    pub fn nodal(&self, dofs: &[f64]) -> Vec<f64> {
        self.pair.dof_map.extend(dofs)
    }

    pub fn dofs(&self, nodal: &[f64]) -> Vec<f64> {
        self.pair.dof_map.restrict(nodal)
    }

    fn per_element<F: Fn(&Tensor2) -> f64 + Sync>(&self, nodal: &[f64], f: F) -> f64 {
        (0..self.mesh.element_count())
            .into_par_iter()
            .map(|e| self.mesh.measure(e) * f(&self.mesh.gradient(nodal, e)))
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// `½∫ℂε(u):ε(u)` for a nodal field.
    pub fn energy(&self, nodal: &[f64]) -> f64 {
        self.per_element(nodal, |g| {
            let eps = symmetric_part(g);
            0.5 * self.tensors.elastic_contract(&eps, &eps)
        })
    }

    /// `½∫𝔻ε(v):ε(v)` for a nodal field.
    pub fn dissipation(&self, nodal: &[f64]) -> f64 {
        self.per_element(nodal, |g| {
            let eps = symmetric_part(g);
            0.5 * self.tensors.viscous_contract(&eps, &eps)
        })
    }

    /// `dE(u)(v) = ∫ℂε(u):ε(v)`.
    pub fn energy_form(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.mesh.element_count())
            .into_par_iter()
            .map(|e| {
                let a = symmetric_part(&self.mesh.gradient(u, e));
                let b = symmetric_part(&self.mesh.gradient(v, e));
                self.mesh.measure(e) * self.tensors.elastic_contract(&a, &b)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// The elastic energy through all three representations.
    pub fn energy_forms(&self, nodal: &[f64]) -> Result<EnergyForms> {
        let d = self.mesh.dim();
        let dd = d as f64;
        let (mu, lambda) = (self.tensors.mu(), self.tensors.lambda());
        let (alpha, beta) = (self.tensors.alpha(), self.tensors.beta());
        let mut forms = EnergyForms {
            tensor: 0.0,
            lame: 0.0,
            sphere: 0.0,
        };
        for e in 0..self.mesh.element_count() {
            let m = self.mesh.measure(e);
            let g = self.mesh.gradient(nodal, e);
            let eps = symmetric_part(&g);
            let div = trace(&g, d);
            forms.tensor += m * 0.5 * self.tensors.elastic_contract(&eps, &eps);
            forms.lame += m * (0.5 * mu * frobenius(&eps, &eps, d) + 0.5 * lambda * div * div);
            let dev = sphere_average_centered_square(&g, div / dd, d)?;
            forms.sphere += m * (0.5 * beta * div * div + 0.5 * alpha * dd * dev);
        }
        Ok(forms)
    }

    /// The viscous potential through all three representations.
    pub fn dissipation_forms(&self, nodal: &[f64]) -> Result<EnergyForms> {
        let d = self.mesh.dim();
        let dd = d as f64;
        let mut forms = EnergyForms {
            tensor: 0.0,
            lame: 0.0,
            sphere: 0.0,
        };
        for e in 0..self.mesh.element_count() {
            let m = self.mesh.measure(e);
            let g = self.mesh.gradient(nodal, e);
            let eps = symmetric_part(&g);
            let div = trace(&g, d);
            forms.tensor += m * 0.5 * self.tensors.viscous_contract(&eps, &eps);
            forms.lame += m * (frobenius(&eps, &eps, d) / (dd + 2.0) + div * div / (2.0 * (dd + 2.0)));
            forms.sphere += m * 0.5 * dd * sphere_average_centered_square(&g, 0.0, d)?;
        }
        Ok(forms)
    }

    /// Elastic force `K u` restricted to free dofs, for a nodal field that
    /// need not vanish on the boundary.
    pub fn residual(&self, nodal: &[f64]) -> Vec<f64> {
        let d = self.mesh.dim();
        let map = &self.pair.dof_map;
        let mut out = vec![0.0; map.dof_count()];
        for e in 0..self.mesh.element_count() {
            let m = self.mesh.measure(e);
            let eps = symmetric_part(&self.mesh.gradient(nodal, e));
            let grads = self.mesh.barycentric_gradients(e);
            for (a, &node) in self.mesh.element(e).iter().enumerate() {
                for c in 0..d {
                    if let Some(row) = map.dof(node, c) {
                        out[row] += m * self.tensors.elastic_contract(&eps, &unit_strain(&grads[a], c));
                    }
                }
            }
        }
        out
    }

    /// `⨍ s·∇u(x) s` at a point, by exact second moments.
    pub fn div_average(&self, nodal: &[f64], x: &Point) -> Result<f64> {
        let (e, _) = self
            .mesh
            .locate(x)
            .ok_or_else(|| Error::Invalid(format!("point {x:?} lies outside the mesh")))?;
        sphere_average_quadratic(&self.mesh.gradient(nodal, e), self.mesh.dim())
    }

    /// `div u` at a point.
    pub fn divergence_at(&self, nodal: &[f64], x: &Point) -> Result<f64> {
        let (e, _) = self
            .mesh
            .locate(x)
            .ok_or_else(|| Error::Invalid(format!("point {x:?} lies outside the mesh")))?;
        Ok(trace(&self.mesh.gradient(nodal, e), self.mesh.dim()))
    }

    /// `L²(Ω)` norm of a nodal field through the consistent Gram matrix.
    pub fn l2_norm(&self, nodal: &[f64]) -> f64 {
        let d = self.mesh.dim();
        (0..self.mesh.element_count())
            .map(|e| {
                let verts = self.mesh.element(e);
                let k = verts.len() as f64;
                let m = self.mesh.measure(e) / (k * (k + 1.0));
                let mut s = 0.0;
                for &a in verts {
                    for &b in verts {
                        let w = if a == b { 2.0 } else { 1.0 };
                        for c in 0..d {
                            s += w * nodal[a * d + c] * nodal[b * d + c];
                        }
                    }
                }
                m * s
            })
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }
}

type Triplet = (usize, usize, f64);

fn element_triplets(
    mesh: &SimplexMesh,
    tensors: &ElasticTensors,
    map: &DofMap,
    e: usize,
) -> (Vec<Triplet>, Vec<Triplet>, Vec<Triplet>) {
    let d = mesh.dim();
    let m = mesh.measure(e);
    let verts = mesh.element(e);
    let grads = mesh.barycentric_gradients(e);
    let k = verts.len() as f64;
    let gram_scale = m / (k * (k + 1.0));
    let (mut visc, mut elas, mut gram) = (Vec::new(), Vec::new(), Vec::new());
    for (a, &na) in verts.iter().enumerate() {
        for ca in 0..d {
            let Some(row) = map.dof(na, ca) else { continue };
            let ea = unit_strain(&grads[a], ca);
            for (b, &nb) in verts.iter().enumerate() {
                for cb in 0..d {
                    let Some(col) = map.dof(nb, cb) else { continue };
                    let eb = unit_strain(&grads[b], cb);
                    visc.push((row, col, m * tensors.viscous_contract(&ea, &eb)));
                    elas.push((row, col, m * tensors.elastic_contract(&ea, &eb)));
                    if ca == cb {
                        gram.push((row, col, gram_scale * if a == b { 2.0 } else { 1.0 }));
                    }
                }
            }
        }
    }
    (visc, elas, gram)
}
