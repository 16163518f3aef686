use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{DofMap, Point};

use super::Tensor2;

/// Relative measure below which an element counts as degenerate.
const DEGENERACY: f64 = 1e-12;

#[derive(Debug, Clone)]
struct ElementGeometry {
    measure: f64,
    /// Gradients of the barycentric coordinates, one per vertex.
    grads: [[f64; 3]; 4],
}

/// Axis-aligned lattice layout of a structured mesh, used for point location.
#[derive(Debug, Clone)]
struct Structure {
    lower: [f64; 3],
    step: [f64; 3],
    cells: [usize; 3],
    permutations: Vec<Vec<usize>>,
}

/// Simplicial mesh (triangles in 2D, tetrahedra in 3D) with clamped boundary
/// nodes.
#[derive(Debug, Clone)]
pub struct SimplexMesh {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<[usize; 4]>,
    boundary: Vec<bool>,
    geometry: Vec<ElementGeometry>,
    structure: Option<Structure>,
}

impl SimplexMesh {
    /// General constructor; elements list `dim + 1` vertex indices each.
    pub fn new(dim: usize, nodes: Vec<Point>, elements: Vec<Vec<usize>>, boundary: Vec<bool>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if boundary.len() != nodes.len() {
            return Err(Error::Invalid("boundary flags must match the node count".into()));
        }
        let mut packed = Vec::with_capacity(elements.len());
        for (e, verts) in elements.iter().enumerate() {
            if verts.len() != dim + 1 {
                return Err(Error::Invalid(format!("element {e} has {} vertices", verts.len())));
            }
            if let Some(&bad) = verts.iter().find(|&&v| v >= nodes.len()) {
                return Err(Error::Invalid(format!("element {e} references missing node {bad}")));
            }
            let mut p = [usize::MAX; 4];
            p[..=dim].copy_from_slice(verts);
            packed.push(p);
        }
        let geometry = packed
            .iter()
            .enumerate()
            .map(|(e, v)| element_geometry(dim, &nodes, v, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            nodes,
            elements: packed,
            boundary,
            geometry,
            structure: None,
        })
    }

    /// Kuhn subdivision of the box `[lower, upper]` into `cells[k]` intervals
    /// per axis; nodes are ordered with the first axis fastest.
    pub fn structured(dim: usize, lower: &[f64], upper: &[f64], cells: &[usize]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if lower.len() < dim || upper.len() < dim || cells.len() < dim {
            return Err(Error::Config("box corners and cell counts need one entry per axis".into()));
        }
        let mut lo = [0.0; 3];
        let mut step = [1.0; 3];
        let mut n = [1usize; 3];
        for k in 0..dim {
            if !(upper[k] > lower[k]) || cells[k] == 0 {
                return Err(Error::Config(format!("axis {k}: empty box or zero cells")));
            }
            lo[k] = lower[k];
            n[k] = cells[k];
            step[k] = (upper[k] - lower[k]) / cells[k] as f64;
        }
        let np = [n[0] + 1, n[1] + 1, if dim == 3 { n[2] + 1 } else { 1 }];
        let node_id = |i: usize, j: usize, k: usize| (k * np[1] + j) * np[0] + i;
        let mut nodes = Vec::with_capacity(np[0] * np[1] * np[2]);
        let mut boundary = Vec::with_capacity(nodes.capacity());
        for k in 0..np[2] {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    let idx = [i, j, k];
                    let mut x = [0.0; 3];
                    let mut on_edge = false;
                    for a in 0..dim {
                        x[a] = lo[a] + idx[a] as f64 * step[a];
                        on_edge |= idx[a] == 0 || idx[a] == n[a];
                    }
                    nodes.push(x);
                    boundary.push(on_edge);
                }
            }
        }
        let permutations = permutations(dim);
        let mut elements = Vec::new();
        let nz = if dim == 3 { n[2] } else { 1 };
        for k in 0..nz {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    for perm in &permutations {
                        let mut at = [i, j, k];
                        let mut verts = vec![node_id(at[0], at[1], at[2])];
                        for &axis in perm {
                            at[axis] += 1;
                            verts.push(node_id(at[0], at[1], at[2]));
                        }
                        elements.push(verts);
                    }
                }
            }
        }
        let mut mesh = Self::new(dim, nodes, elements, boundary)?;
        mesh.structure = Some(Structure {
            lower: lo,
            step,
            cells: n,
            permutations,
        });
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..=self.dim]
    }

    pub fn measure(&self, e: usize) -> f64 {
        self.geometry[e].measure
    }

    pub(crate) fn barycentric_gradients(&self, e: usize) -> &[[f64; 3]] {
        &self.geometry[e].grads[..=self.dim]
    }

    pub fn total_measure(&self) -> f64 {
        self.geometry.iter().map(|g| g.measure).sum()
    }

    pub fn dof_map(&self) -> DofMap {
        let free: Vec<bool> = self.boundary.iter().map(|b| !b).collect();
        DofMap::from_mask(self.dim, &free)
    }

    /// Nodal samples of `f`, boundary nodes included.
    pub fn sample<F: Fn(&Point) -> [f64; 3]>(&self, f: F) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.nodes.len() * d);
        for x in &self.nodes {
            out.extend_from_slice(&f(x)[..d]);
        }
        out
    }

    /// `∇u` on element `e` for a nodal field; `G[i][j] = ∂_j u_i`.
    pub fn gradient(&self, nodal: &[f64], e: usize) -> Tensor2 {
        let d = self.dim;
        let mut g = [[0.0; 3]; 3];
        for (a, &v) in self.element(e).iter().enumerate() {
            let grad = &self.geometry[e].grads[a];
            for i in 0..d {
                let ui = nodal[v * d + i];
                for j in 0..d {
                    g[i][j] += ui * grad[j];
                }
            }
        }
        g
    }

    /// Barycentric coordinates of `x` with respect to element `e`.
    pub fn barycentric(&self, e: usize, x: &Point) -> [f64; 4] {
        let d = self.dim;
        let origin = &self.nodes[self.elements[e][0]];
        let mut b = [0.0; 4];
        for a in 0..=d {
            let g = &self.geometry[e].grads[a];
            b[a] = if a == 0 { 1.0 } else { 0.0 } + (0..d).map(|k| g[k] * (x[k] - origin[k])).sum::<f64>();
        }
        b
    }

    /// Element containing `x` (closed), with barycentric coordinates.
    pub fn locate(&self, x: &Point) -> Option<(usize, [f64; 4])> {
        const SLACK: f64 = 1e-10;
        let inside = |b: &[f64; 4]| b[..=self.dim].iter().all(|&v| v >= -SLACK);
        if let Some(s) = &self.structure {
            let d = self.dim;
            let mut cell = [0usize; 3];
            let mut t = [0.0; 3];
            for a in 0..d {
                let r = (x[a] - s.lower[a]) / s.step[a];
                if r < -SLACK || r > s.cells[a] as f64 + SLACK {
                    return None;
                }
                let c = (r.floor().max(0.0) as usize).min(s.cells[a] - 1);
                cell[a] = c;
                t[a] = r - c as f64;
            }
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&p, &q| t[q].partial_cmp(&t[p]).unwrap_or(std::cmp::Ordering::Equal).then(p.cmp(&q)));
            let p = s.permutations.iter().position(|perm| *perm == order)?;
            let flat = (cell[2] * s.cells[1] + cell[1]) * s.cells[0] + cell[0];
            let e = flat * s.permutations.len() + p;
            let b = self.barycentric(e, x);
            return inside(&b).then_some((e, b));
        }
        (0..self.elements.len()).find_map(|e| {
            let b = self.barycentric(e, x);
            inside(&b).then_some((e, b))
        })
    }

    /// P1 interpolant of a nodal field at `x`.
    pub fn interpolate(&self, nodal: &[f64], x: &Point) -> Option<[f64; 3]> {
        let (e, b) = self.locate(x)?;
        let d = self.dim;
        let mut out = [0.0; 3];
        for (a, &v) in self.element(e).iter().enumerate() {
            for c in 0..d {
                out[c] += b[a] * nodal[v * d + c];
            }
        }
        Some(out)
    }
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    match dim {
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    }
}

fn element_geometry(dim: usize, nodes: &[Point], verts: &[usize; 4], e: usize) -> Result<ElementGeometry> {
    let x0 = nodes[verts[0]];
    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    let mut scale: f64 = 0.0;
    for k in 0..dim {
        let xk = nodes[verts[k + 1]];
        for r in 0..dim {
            jac[(r, k)] = xk[r] - x0[r];
            scale = scale.max((xk[r] - x0[r]).abs());
        }
    }
    let factorial = if dim == 2 { 2.0 } else { 6.0 };
    let det = jac.determinant();
    let measure = det.abs() / factorial;
    if !(measure > DEGENERACY * scale.powi(dim as i32)) {
        return Err(Error::DegenerateElement { element: e, measure });
    }
    let inv = jac
        .try_inverse()
        .ok_or(Error::DegenerateElement { element: e, measure })?;
    let mut grads = [[0.0; 3]; 4];
    for k in 0..dim {
        for c in 0..dim {
            grads[k + 1][c] = inv[(k, c)];
            grads[0][c] -= inv[(k, c)];
        }
    }
    Ok(ElementGeometry { measure, grads })
}
