use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::local::{frobenius, quadratic_sphere_product, symmetric_part, trace, ElasticTensors, Tensor2};

/// Width of the transition layer of the plateau cutoff, relative to the box.
pub const CUTOFF_LAYER: f64 = 0.25;

/// Tolerance of the boundary trace check.
pub const TRACE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Zero,
    /// `Π_k sin(π x̂_k)` in every component.
    SineProduct,
    /// `Π_k sin²(π x̂_k)` in every component; `C¹` across `∂Ω`.
    SineSquaredProduct,
    /// `(1 − |x − c|²/r²)³` inside the ball, in every component.
    Bump { center: Point, radius: f64 },
    /// `S x + t` with `S` a unit rotation generator.
    Rigid,
    /// `x` times a plateau cutoff.
    CutoffIdentity,
    /// `S (x − centre)` times a plateau cutoff.
    CutoffRotation,
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Zero => "zero",
            FieldKind::SineProduct => "sine-product",
            FieldKind::SineSquaredProduct => "sine-squared",
            FieldKind::Bump { .. } => "bump",
            FieldKind::Rigid => "rigid",
            FieldKind::CutoffIdentity => "cutoff-identity",
            FieldKind::CutoffRotation => "cutoff-rotation",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    /// Parses a field name; the bump defaults to the box centre with radius 0.3.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => FieldKind::Zero,
            "sine-product" => FieldKind::SineProduct,
            "sine-squared" => FieldKind::SineSquaredProduct,
            "bump" => FieldKind::Bump {
                center: [0.5, 0.5, 0.5],
                radius: 0.3,
            },
            "rigid" => FieldKind::Rigid,
            "cutoff-identity" => FieldKind::CutoffIdentity,
            "cutoff-rotation" => FieldKind::CutoffRotation,
            other => return Err(Error::Config(format!("unknown initial field '{other}'"))),
        })
    }
}

/// A closed-form displacement on the box `Ω` with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField {
    kind: FieldKind,
    dim: usize,
    lower: [f64; 3],
    upper: [f64; 3],
    amplitude: f64,
}

fn smootherstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * t * (10.0 + t * (6.0 * t - 15.0)), 30.0 * t * t * (1.0 - t) * (1.0 - t))
    }
}

impl AnalyticField {
    pub fn new(kind: FieldKind, domain: &Domain, amplitude: f64) -> Self {
        let d = domain.dim();
        let mut lower = [0.0; 3];
        let mut upper = [0.0; 3];
        lower[..d].copy_from_slice(domain.lower());
        upper[..d].copy_from_slice(domain.upper());
        Self {
            kind,
            dim: d,
            lower,
            upper,
            amplitude,
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn inside_closed(&self, x: &Point) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lower[k] - 1e-12 && x[k] <= self.upper[k] + 1e-12)
    }

    /// Scalar envelope `f` and its gradient.
    fn envelope(&self, x: &Point) -> (f64, [f64; 3]) {
        let d = self.dim;
        let rel = |k: usize| (x[k] - self.lower[k]) / (self.upper[k] - self.lower[k]);
        let len = |k: usize| self.upper[k] - self.lower[k];
        let product = |g: &dyn Fn(f64) -> (f64, f64)| {
            let parts: Vec<(f64, f64)> = (0..d).map(|k| g(rel(k))).collect();
            let value: f64 = parts.iter().map(|p| p.0).product();
            let mut grad = [0.0; 3];
            for j in 0..d {
                grad[j] = parts[j].1 / len(j) * (0..d).filter(|&k| k != j).map(|k| parts[k].0).product::<f64>();
            }
            (value, grad)
        };
        match self.kind {
            FieldKind::Zero => (0.0, [0.0; 3]),
            FieldKind::Rigid => (1.0, [0.0; 3]),
            FieldKind::SineProduct => product(&|s| ((PI * s).sin(), PI * (PI * s).cos())),
            FieldKind::SineSquaredProduct => product(&|s| ((PI * s).sin().powi(2), PI * (2.0 * PI * s).sin())),
            FieldKind::CutoffIdentity | FieldKind::CutoffRotation => product(&|s| {
                let (a, da) = smootherstep(s / CUTOFF_LAYER);
                let (b, db) = smootherstep((1.0 - s) / CUTOFF_LAYER);
                (a * b, (da * b - a * db) / CUTOFF_LAYER)
            }),
            FieldKind::Bump { center, radius } => {
                let r2: f64 = (0..d).map(|k| (x[k] - center[k]).powi(2)).sum::<f64>() / (radius * radius);
                if r2 >= 1.0 {
                    return (0.0, [0.0; 3]);
                }
                let mut grad = [0.0; 3];
                for k in 0..d {
                    grad[k] = -6.0 * (1.0 - r2).powi(2) * (x[k] - center[k]) / (radius * radius);
                }
                ((1.0 - r2).powi(3), grad)
            }
        }
    }

    /// Vector carrier `v(x)` and its Jacobian `∂_j v_i`.
    fn carrier(&self, x: &Point) -> ([f64; 3], Tensor2) {
        let d = self.dim;
        let mut v = [0.0; 3];
        let mut dv = [[0.0; 3]; 3];
        let centre: Vec<f64> = (0..3).map(|k| 0.5 * (self.lower[k] + self.upper[k])).collect();
        match self.kind {
            FieldKind::CutoffIdentity => {
                for i in 0..d {
                    v[i] = x[i];
                    dv[i][i] = 1.0;
                }
            }
            FieldKind::Rigid | FieldKind::CutoffRotation => {
                let shift = if self.kind == FieldKind::Rigid { [0.0; 3] } else { [centre[0], centre[1], 0.0] };
                let (y0, y1) = (x[0] - shift[0], x[1] - shift[1]);
                v[0] = -y1;
                v[1] = y0;
                dv[0][1] = -1.0;
                dv[1][0] = 1.0;
                if self.kind == FieldKind::Rigid {
                    let t = [1.0, 0.5, 0.25];
                    for i in 0..d {
                        v[i] += t[i];
                    }
                }
            }
            _ => v[..d].fill(1.0),
        }
        (v, dv)
    }

    /// Displacement at `x`; fields that vanish on `∂Ω` are extended by zero.
    pub fn value(&self, x: &Point) -> [f64; 3] {
        if self.kind != FieldKind::Rigid && !self.inside_closed(x) {
            return [0.0; 3];
        }
        let (f, _) = self.envelope(x);
        let (v, _) = self.carrier(x);
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            out[i] = self.amplitude * v[i] * f;
        }
        out
    }

    /// `∂_j u_i` at `x` (one-sided from inside on `∂Ω`).
    pub fn gradient(&self, x: &Point) -> Tensor2 {
        if self.kind != FieldKind::Rigid && !self.inside_closed(x) {
            return [[0.0; 3]; 3];
        }
        let (f, df) = self.envelope(x);
        let (v, dv) = self.carrier(x);
        let mut g = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                g[i][j] = self.amplitude * (dv[i][j] * f + v[i] * df[j]);
            }
        }
        g
    }

    pub fn divergence(&self, x: &Point) -> f64 {
        trace(&self.gradient(x), self.dim)
    }

    /// Largest `|u|` over a sampling of `∂Ω`.
    pub fn boundary_trace(&self, samples_per_edge: usize) -> f64 {
        let d = self.dim;
        let n = samples_per_edge.max(2);
        let mut worst: f64 = 0.0;
        for face_axis in 0..d {
            for side in [self.lower[face_axis], self.upper[face_axis]] {
                let others: Vec<usize> = (0..d).filter(|&k| k != face_axis).collect();
                let count = n.pow(others.len() as u32);
                for idx in 0..count {
                    let mut x = [0.0; 3];
                    x[face_axis] = side;
                    let mut rest = idx;
                    for &k in &others {
                        let s = (rest % n) as f64 / (n - 1) as f64;
                        rest /= n;
                        x[k] = self.lower[k] + s * (self.upper[k] - self.lower[k]);
                    }
                    let u = self.value(&x);
                    worst = worst.max(u.iter().map(|c| c.abs()).fold(0.0, f64::max));
                }
            }
        }
        worst
    }

    /// Rejects fields whose trace on `∂Ω` exceeds the tolerance.
    pub fn check_trace(&self) -> Result<()> {
        let t = self.boundary_trace(65);
        if t > TRACE_TOLERANCE {
            Err(Error::Constraint(format!(
                "initial field '{}' does not vanish on the boundary (|u| = {t:.3e})",
                self.kind
            )))
        } else {
            Ok(())
        }
    }
}

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_86,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_86,
];

/// Tensor Gauss-Legendre rule (4 points per axis) on a uniform subdivision
/// of the box into `cells` intervals per axis.
pub fn integrate_box<F: Fn(&Point) -> f64 + Sync>(dim: usize, lower: &[f64], upper: &[f64], cells: usize, f: F) -> f64 {
    use rayon::prelude::*;
    let h: Vec<f64> = (0..dim).map(|k| (upper[k] - lower[k]) / cells as f64).collect();
    let nz = if dim == 3 { cells } else { 1 };
    (0..cells * cells * nz)
        .into_par_iter()
        .map(|c| {
            let idx = [c % cells, (c / cells) % cells, c / (cells * cells)];
            let qz = if dim == 3 { 4 } else { 1 };
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    for q in 0..qz {
                        let pts = [a, b, q];
                        let mut x = [0.0; 3];
                        let mut w = 1.0;
                        for k in 0..dim {
                            x[k] = lower[k] + h[k] * (idx[k] as f64 + 0.5 * (1.0 + GAUSS_NODES[pts[k]]));
                            w *= 0.5 * h[k] * GAUSS_WEIGHTS[pts[k]];
                        }
                        s += w * f(&x);
                    }
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Local bilinear quantities of two analytic fields over `Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalForms {
    /// `∫𝔻ε(u):ε(v)`, evaluated as `d ∫ ⨍ (s·∇u s)(s·∇v s)`.
    pub dissipation: f64,
    /// `∫ div u div v`.
    pub divergence: f64,
    /// `dE(u)(v) = ∫ℂε(u):ε(v)`.
    pub energy: f64,
}

/// Cells per axis of the reference quadrature.
pub const EXACT_QUADRATURE_CELLS: usize = 48;

pub fn local_forms(u: &AnalyticField, v: &AnalyticField, tensors: &ElasticTensors) -> LocalForms {
    let d = u.dim;
    let (lo, hi) = (&u.lower[..d], &u.upper[..d]);
    let n = if d == 3 { EXACT_QUADRATURE_CELLS / 4 } else { EXACT_QUADRATURE_CELLS };
    let dd = d as f64;
    let dissipation = integrate_box(d, lo, hi, n, |x| {
        dd * quadratic_sphere_product(&u.gradient(x), &v.gradient(x), d)
    });
    let divergence = integrate_box(d, lo, hi, n, |x| u.divergence(x) * v.divergence(x));
    let energy = integrate_box(d, lo, hi, n, |x| {
        let (a, b) = (symmetric_part(&u.gradient(x)), symmetric_part(&v.gradient(x)));
        tensors.mu() * frobenius(&a, &b, d) + tensors.lambda() * trace(&a, d) * trace(&b, d)
    });
    LocalForms {
        dissipation,
        divergence,
        energy,
    }
}

/// `E(u) = ½∫ℂε(u):ε(u)` by high-order quadrature.
pub fn local_energy(u: &AnalyticField, tensors: &ElasticTensors) -> f64 {
    0.5 * local_forms(u, u, tensors).energy
}
