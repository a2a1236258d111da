//! P1 finite-element assembly on a [`DiskMesh`].
//!
//! All matrices share the node adjacency pattern of the mesh. The weighted
//! forms `∫ H e^{u_h} φ_i` and `∫ H e^{u_h} φ_i φ_j` use collapsed-triangle
//! rules whose radial Gauss–Jacobi weight absorbs `|x - p|^{2s}` at any
//! source sitting on a triangle vertex.

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::mesh::DiskMesh;
use crate::quadrature::{rotate_rule, triangle_rule, TriPoint};
use crate::weights::{dist, WeightField};

/// Square matrix on the node adjacency pattern of a mesh (CSR).
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(mesh: &DiskMesh) -> Self {
        let (row_ptr, cols) = mesh.pattern();
        Self {
            row_ptr: row_ptr.to_vec(),
            cols: cols.to_vec(),
            vals: vec![0.0; cols.len()],
        }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&j).expect("entry outside the mesh pattern")
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.vals[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j)
            .map(|k| self.vals[self.row_ptr[i] + k])
            .unwrap_or(0.0)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn dot_form(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `a·self + b·other` on the shared pattern.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mut out = self.clone();
        for (o, v) in out.vals.iter_mut().zip(&other.vals) {
            *o = a * *o + b * v;
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Restriction through a dof map; entries of nodes sharing a dof are summed.
    pub fn restrict(&self, map: &DofMap) -> Vec<Triplet<usize, usize, f64>> {
        let mut out = Vec::with_capacity(self.vals.len());
        for (i, j, v) in self.triplets() {
            if let (Some(a), Some(b)) = (map.of_node[i], map.of_node[j]) {
                out.push(Triplet::new(a, b, v));
            }
        }
        out
    }
}

/// Mapping from mesh nodes to unknowns.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub of_node: Vec<Option<usize>>,
    pub n: usize,
}

impl DofMap {
    /// Interior nodes only (homogeneous Dirichlet elimination).
    pub fn interior(mesh: &DiskMesh) -> Self {
        let mut n = 0;
        let of_node = mesh
            .boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    n += 1;
                    Some(n - 1)
                }
            })
            .collect();
        Self { of_node, n }
    }

    /// Interior nodes plus a single unknown shared by all boundary nodes.
    pub fn tied_boundary(mesh: &DiskMesh) -> Self {
        let interior = Self::interior(mesh);
        let tied = interior.n;
        let of_node = interior
            .of_node
            .iter()
            .map(|d| Some(d.unwrap_or(tied)))
            .collect();
        Self { of_node, n: tied + 1 }
    }

    pub fn gather(&self, node_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut count = vec![0usize; self.n];
        for (i, d) in self.of_node.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += node_values[i];
                count[*d] += 1;
            }
        }
        out.iter().zip(&count).map(|(v, &c)| v / c.max(1) as f64).collect()
    }

    /// Summed (not averaged) restriction, used for load vectors.
    pub fn accumulate(&self, node_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, d) in self.of_node.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += node_values[i];
            }
        }
        out
    }

    /// Nodal values from unknowns; unmapped nodes receive `fill`.
    pub fn scatter(&self, dofs: &[f64], fill: &[f64]) -> Vec<f64> {
        self.of_node
            .iter()
            .enumerate()
            .map(|(i, d)| d.map_or(fill[i], |d| dofs[d]))
            .collect()
    }
}

pub fn to_faer(n: usize, triplets: &[Triplet<usize, usize, f64>]) -> Result<SparseColMat<usize, f64>> {
    SparseColMat::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// Exact P1 stiffness matrix `∫ ∇φ_i · ∇φ_j`.
pub fn stiffness(mesh: &DiskMesh) -> SparseMatrix {
    let mut k = SparseMatrix::zeros(mesh);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        let p: Vec<_> = tri.iter().map(|&v| mesh.nodes[v]).collect();
        // gradient of φ_a is rot(p_c - p_b) / (2 area)
        let g: Vec<[f64; 2]> = (0..3)
            .map(|a| {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                [(p[b][1] - p[c][1]) / (2.0 * area), (p[c][0] - p[b][0]) / (2.0 * area)]
            })
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                k.add(tri[a], tri[b], area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]));
            }
        }
    }
    k
}

/// Consistent P1 mass matrix `∫ φ_i φ_j`.
pub fn mass_matrix(mesh: &DiskMesh) -> SparseMatrix {
    let mut m = SparseMatrix::zeros(mesh);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        for a in 0..3 {
            for b in 0..3 {
                let v = if a == b { area / 6.0 } else { area / 12.0 };
                m.add(tri[a], tri[b], v);
            }
        }
    }
    m
}

/// Precomputed weighted quadrature: per triangle, barycentric points and the
/// products `weight · area · H(x_q)`.
#[derive(Debug, Clone)]
pub struct WeightedQuadrature {
    offsets: Vec<usize>,
    bary: Vec<[f64; 3]>,
    wh: Vec<f64>,
}

/// Triangle vertex carrying a source, with its strength.
pub(crate) fn singular_vertex(mesh: &DiskMesh, field: &WeightField, t: usize) -> Option<(usize, f64)> {
    let tri = mesh.triangles[t];
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in tri.iter().enumerate() {
        let tol = 1e-10 * mesh.radius.max(1.0);
        if let Some(i) = field.source_at(mesh.nodes[v], tol) {
            let s = field.sources()[i].strength;
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((k, s));
            }
        }
    }
    best
}

/// Collapsed rule for triangle `t` with the singular vertex (if any) as apex.
pub(crate) fn rule_for(
    mesh: &DiskMesh,
    field: &WeightField,
    t: usize,
    regular: &[TriPoint],
    order: usize,
    exponent_scale: f64,
) -> Vec<TriPoint> {
    match singular_vertex(mesh, field, t) {
        Some((k, s)) => rotate_rule(&triangle_rule(order + 2, exponent_scale * 2.0 * s), k),
        None => regular.to_vec(),
    }
}

impl WeightedQuadrature {
    pub fn new(mesh: &DiskMesh, field: &WeightField, order: usize) -> Result<Self> {
        for s in field.sources() {
            if s.strength < 0.0 && mesh.node_at(s.position).is_none() {
                let r = s.position[0].hypot(s.position[1]);
                if r < mesh.radius && r > mesh.inner_radius {
                    return Err(Error::InvalidMesh(format!(
                        "negative source at ({}, {}) is not a mesh vertex",
                        s.position[0], s.position[1]
                    )));
                }
            }
        }
        let regular = triangle_rule(order, 0.0);
        let mut offsets = vec![0];
        let mut bary = Vec::new();
        let mut wh = Vec::new();
        for t in 0..mesh.triangles.len() {
            let area = mesh.area(t);
            for q in rule_for(mesh, field, t, &regular, order, 1.0) {
                let x = mesh.point(t, q.bary);
                bary.push(q.bary);
                wh.push(q.weight * area * field.evaluate(x)?);
            }
            offsets.push(bary.len());
        }
        Ok(Self { offsets, bary, wh })
    }

    /// Total weighted mass `∫ H e^{u_h}` and the load `N_i = ∫ H e^{u_h} φ_i`.
    pub fn load(&self, mesh: &DiskMesh, u: &[f64]) -> (f64, Vec<f64>) {
        let mut n = vec![0.0; mesh.n_nodes()];
        let mut total = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for q in self.offsets[t]..self.offsets[t + 1] {
                let b = self.bary[q];
                let uh = b[0] * u[tri[0]] + b[1] * u[tri[1]] + b[2] * u[tri[2]];
                let w = self.wh[q] * uh.exp();
                total += w;
                for k in 0..3 {
                    n[tri[k]] += w * b[k];
                }
            }
        }
        (total, n)
    }

    /// `B_ij = ∫ H e^{u_h} φ_i φ_j`.
    pub fn mass_form(&self, mesh: &DiskMesh, u: &[f64]) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(mesh);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut local = [[0.0; 3]; 3];
            for q in self.offsets[t]..self.offsets[t + 1] {
                let b = self.bary[q];
                let uh = b[0] * u[tri[0]] + b[1] * u[tri[1]] + b[2] * u[tri[2]];
                let w = self.wh[q] * uh.exp();
                for a in 0..3 {
                    for c in 0..3 {
                        local[a][c] += w * b[a] * b[c];
                    }
                }
            }
            for a in 0..3 {
                for c in 0..3 {
                    m.add(tri[a], tri[c], local[a][c]);
                }
            }
        }
        m
    }
}

/// Largest distance from a source to the nearest mesh node, for diagnostics.
pub fn source_resolution(mesh: &DiskMesh, field: &WeightField) -> f64 {
    field
        .sources()
        .iter()
        .map(|s| {
            mesh.nodes
                .iter()
                .map(|p| dist(*p, s.position))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}
