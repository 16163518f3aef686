//! The local Kelvin-Voigt limit: elasticity and viscosity tensors, exact
//! sphere averages, and a first-order finite element discretization on a
//! structured simplicial mesh.

mod fem;
mod mesh;

pub use fem::{EnergyForms, FemSystem};
pub use mesh::SimplexMesh;

use crate::error::{Error, Result};
use crate::nonlocal::MaterialParams;

/// Dense `3×3` storage; only the leading `d×d` block is meaningful.
pub type Tensor2 = [[f64; 3]; 3];

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn isotropic(dim: usize, shear: f64, bulk: f64) -> Vec<f64> {
    let mut t = vec![0.0; dim.pow(4)];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    t[((i * dim + j) * dim + k) * dim + l] = shear * delta(i, k) * delta(j, l) + bulk * delta(i, j) * delta(k, l);
                }
            }
        }
    }
    t
}

/// Elasticity tensor `ℂ` and viscosity tensor `𝔻` of the local limit.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTensors {
    dim: usize,
    elastic: Vec<f64>,
    viscous: Vec<f64>,
    mu: f64,
    lambda: f64,
    alpha: f64,
    beta: f64,
}

impl ElasticTensors {
    /// `ℂ_ijkl = 2α/(d+2) δ_ik δ_jl + (β − 2α/(d(d+2))) δ_ij δ_kl`.
    pub fn from_peridynamic(alpha: f64, beta: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Config(format!("alpha and beta must be positive, got {alpha}, {beta}")));
        }
        let d = dim as f64;
        let shear = 2.0 * alpha / (d + 2.0);
        let bulk = beta - 2.0 * alpha / (d * (d + 2.0));
        check_coercive(shear, bulk, d)?;
        Ok(Self {
            dim,
            elastic: isotropic(dim, shear, bulk),
            viscous: isotropic(dim, 2.0 / (d + 2.0), 1.0 / (d + 2.0)),
            mu: shear,
            lambda: bulk,
            alpha,
            beta,
        })
    }

    pub fn from_params(params: &MaterialParams, dim: usize) -> Result<Self> {
        Self::from_peridynamic(params.alpha, params.beta, dim)
    }

    /// `ℂ_ijkl = μ δ_ik δ_jl + λ δ_ij δ_kl`, with the moduli mapped back to
    /// `(α, β)`.
    pub fn from_lame(mu: f64, lambda: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let d = dim as f64;
        if !(mu > 0.0) || !mu.is_finite() || !lambda.is_finite() {
            return Err(Error::Config(format!("invalid Lamé pair ({mu}, {lambda})")));
        }
        check_coercive(mu, lambda, d)?;
        let alpha = mu * (d + 2.0) / 2.0;
        let beta = lambda + 2.0 * alpha / (d * (d + 2.0));
        if !(beta > 0.0) {
            return Err(Error::Config(format!("Lamé pair ({mu}, {lambda}) maps to beta = {beta} <= 0")));
        }
        Ok(Self {
            dim,
            elastic: isotropic(dim, mu, lambda),
            viscous: isotropic(dim, 2.0 / (d + 2.0), 1.0 / (d + 2.0)),
            mu,
            lambda,
            alpha,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let d = self.dim;
        ((i * d + j) * d + k) * d + l
    }

    pub fn elastic(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.elastic[self.index(i, j, k, l)]
    }

    pub fn viscous(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.viscous[self.index(i, j, k, l)]
    }

    /// `ℂA : B`.
    pub fn elastic_contract(&self, a: &Tensor2, b: &Tensor2) -> f64 {
        contract(&self.elastic, self.dim, a, b)
    }

    /// `𝔻A : B`.
    pub fn viscous_contract(&self, a: &Tensor2, b: &Tensor2) -> f64 {
        contract(&self.viscous, self.dim, a, b)
    }

    pub fn is_major_symmetric(&self) -> bool {
        let d = self.dim;
        let mut ok = true;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        ok &= self.elastic(i, j, k, l) == self.elastic(k, l, i, j);
                        ok &= self.viscous(i, j, k, l) == self.viscous(k, l, i, j);
                    }
                }
            }
        }
        ok
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")))
    }
}

fn check_coercive(mu: f64, lambda: f64, d: f64) -> Result<()> {
    if lambda + 2.0 * mu / d > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "local energy is not coercive: lambda + 2 mu / d = {}",
            lambda + 2.0 * mu / d
        )))
    }
}

fn contract(t: &[f64], d: usize, a: &Tensor2, b: &Tensor2) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    s += t[((i * d + j) * d + k) * d + l] * a[i][j] * b[k][l];
                }
            }
        }
    }
    s
}

pub fn symmetric_part(a: &Tensor2) -> Tensor2 {
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    s
}

pub fn frobenius(a: &Tensor2, b: &Tensor2, dim: usize) -> f64 {
    (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum()
}

pub fn trace(a: &Tensor2, dim: usize) -> f64 {
    (0..dim).map(|i| a[i][i]).sum()
}

/// Normalized sphere average `⨍ Π s_k^{e_k}` for total degree 2 or 4.
pub fn sphere_moment(exponents: &[u32], dim: usize) -> Result<f64> {
    check_dim(dim)?;
    if exponents.len() > dim {
        return Err(Error::Invalid(format!(
            "{} exponents given for dimension {dim}",
            exponents.len()
        )));
    }
    let total: u32 = exponents.iter().sum();
    if total != 2 && total != 4 {
        return Err(Error::Invalid(format!("unsupported sphere moment of degree {total}")));
    }
    if exponents.iter().any(|e| e % 2 == 1) {
        return Ok(0.0);
    }
    let d = dim as f64;
    let mut even: Vec<u32> = exponents.iter().copied().filter(|&e| e > 0).collect();
    even.sort_unstable();
    Ok(match even.as_slice() {
        [2] => 1.0 / d,
        [4] => 3.0 / (d * (d + 2.0)),
        [2, 2] => 1.0 / (d * (d + 2.0)),
        _ => unreachable!("even patterns of degree 2 and 4 are exhausted above"),
    })
}

/// `⨍ s_{i1} s_{i2} ... ` for an index tuple.
pub fn sphere_index_moment(indices: &[usize], dim: usize) -> Result<f64> {
    let mut exps = vec![0u32; dim];
    for &i in indices {
        if i >= dim {
            return Err(Error::Invalid(format!("axis {i} out of range for dimension {dim}")));
        }
        exps[i] += 1;
    }
    sphere_moment(&exps, dim)
}

/// `⨍ (s·As)(s·Bs) = 2/(d(d+2)) sym A : sym B + 1/(d(d+2)) tr A tr B`.
pub fn quadratic_sphere_product(a: &Tensor2, b: &Tensor2, dim: usize) -> f64 {
    let d = dim as f64;
    let c = 1.0 / (d * (d + 2.0));
    2.0 * c * frobenius(&symmetric_part(a), &symmetric_part(b), dim) + c * trace(a, dim) * trace(b, dim)
}

/// Same average contracted moment by moment: `Σ A_ij B_kl ⨍ s_i s_j s_k s_l`.
pub fn quadratic_sphere_product_by_moments(a: &Tensor2, b: &Tensor2, dim: usize) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let m = sphere_index_moment(&[i, j, k, l], dim)?;
                    s += a[i][j] * b[k][l] * m;
                }
            }
        }
    }
    Ok(s)
}

/// `⨍ s·G s` by second moments; equals `tr G / d`.
pub fn sphere_average_quadratic(g: &Tensor2, dim: usize) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += g[i][j] * sphere_index_moment(&[i, j], dim)?;
        }
    }
    Ok(s)
}

/// `⨍ (s·Gs − c)²`, expanded into moments.
pub fn sphere_average_centered_square(g: &Tensor2, c: f64, dim: usize) -> Result<f64> {
    Ok(quadratic_sphere_product_by_moments(g, g, dim)? - 2.0 * c * sphere_average_quadratic(g, dim)? + c * c)
}
