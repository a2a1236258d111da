//! Triangulations of disks and annuli.
//!
//! Structured meshes consist of concentric rings with a constant number of
//! angular nodes (plus an optional center node); quads between rings are
//! split into two triangles. Meshes with off-center sources are built by
//! Delaunay triangulation of a polar point cloud merged with graded rings
//! around every source.

use std::collections::HashMap;
use std::f64::consts::PI;

use spade::{DelaunayTriangulation, FloatTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::weights::{dist, Point, POSITION_EPS};

#[derive(Debug, Clone)]
pub struct RingLayout {
    pub radii: Vec<f64>,
    pub n_theta: usize,
    pub center: bool,
}

#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub nodes: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Lumped area per node, boundary circular segments included.
    pub quadrature_weights: Vec<f64>,
    pub radius: f64,
    /// Zero for disks, the hole radius for annuli.
    pub inner_radius: f64,
    /// Local refinement descriptor: source position and grading exponent.
    pub grading: Vec<(Point, f64)>,
    pub rings: Option<RingLayout>,
    pub boundary_edges: Vec<[usize; 2]>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    edge_tris: HashMap<(usize, usize), [usize; 2]>,
}

pub const NO_TRIANGLE: usize = usize::MAX;

fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// `r_k = R (k/n)^γ`, `k = 1..n`.
pub fn graded_rings(radius: f64, n: usize, exponent: f64) -> Vec<f64> {
    (1..=n)
        .map(|k| radius * (k as f64 / n as f64).powf(exponent))
        .collect()
}

/// `n` rings geometrically spaced on `[r_min, r_max]`, both ends included.
pub fn geometric_rings(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    crate::model::geometric_grid(r_min, r_max, n)
}

/// Rings `e^{kΔ}` for `k = -k_in..=k_out`; inversion-symmetric when
/// `k_in = k_out`.
pub fn log_rings(delta: f64, k_in: usize, k_out: usize) -> Vec<f64> {
    (-(k_in as i64)..=k_out as i64)
        .map(|k| (k as f64 * delta).exp())
        .collect()
}

impl DiskMesh {
    /// Structured ring mesh. With `center` the mesh is a disk of radius
    /// `radii.last()`, otherwise an annulus between the first and last ring.
    /// Quads lying inside `mirror_radius` use the reflected diagonal so that
    /// the triangulation is invariant under `x ↦ x/|x|^2` when the rings are
    /// symmetric about `mirror_radius = 1`.
    pub fn polar(
        radii: &[f64],
        n_theta: usize,
        center: bool,
        mirror_radius: Option<f64>,
    ) -> Result<Self> {
        if n_theta < 3 {
            return Err(Error::InvalidMesh(format!("n_theta = {n_theta} < 3")));
        }
        if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh(
                "ring radii must be positive and strictly increasing".into(),
            ));
        }
        if !center && radii.len() < 2 {
            return Err(Error::InvalidMesh("an annulus needs two rings".into()));
        }
        let offset = usize::from(center);
        let mut nodes = Vec::with_capacity(offset + radii.len() * n_theta);
        if center {
            nodes.push([0.0, 0.0]);
        }
        for &r in radii {
            for j in 0..n_theta {
                let th = 2.0 * PI * j as f64 / n_theta as f64;
                nodes.push([r * th.cos(), r * th.sin()]);
            }
        }
        let id = |k: usize, j: usize| offset + k * n_theta + (j % n_theta);
        let mut triangles = Vec::new();
        if center {
            for j in 0..n_theta {
                triangles.push([0, id(0, j), id(0, j + 1)]);
            }
        }
        for k in 0..radii.len() - 1 {
            let reflect = mirror_radius.is_some_and(|m| radii[k + 1] <= m * (1.0 + 1e-12));
            for j in 0..n_theta {
                let (a, b, c, d) = (id(k, j), id(k + 1, j), id(k + 1, j + 1), id(k, j + 1));
                if reflect {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                } else {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
            }
        }
        let outer = *radii.last().unwrap();
        let inner = if center { 0.0 } else { radii[0] };
        let mut boundary = vec![false; nodes.len()];
        for j in 0..n_theta {
            boundary[id(radii.len() - 1, j)] = true;
            if !center {
                boundary[id(0, j)] = true;
            }
        }
        let layout = RingLayout { radii: radii.to_vec(), n_theta, center };
        Self::finish(nodes, triangles, boundary, outer, inner, Vec::new(), Some(layout))
    }

    /// Disk of radius `radius` with graded rings `R (k/n)^γ` and a center node.
    pub fn graded_disk(radius: f64, n_rings: usize, n_theta: usize, exponent: f64) -> Result<Self> {
        let mut m = Self::polar(&graded_rings(radius, n_rings, exponent), n_theta, true, None)?;
        m.grading.push(([0.0, 0.0], exponent));
        Ok(m)
    }

    /// Disk whose rings are uniform in `log r` on `[r_min, radius]` below a
    /// center fan; suited to problems living on many scales.
    pub fn log_disk(r_min: f64, radius: f64, n_rings: usize, n_theta: usize) -> Result<Self> {
        Self::polar(&geometric_rings(r_min, radius, n_rings), n_theta, true, None)
    }

    /// Disk with rings `e^{kΔ}`, `k = -k..=k`, plus a center node; rings are
    /// symmetric under inversion and the triangulation restricted to the
    /// rings is inversion invariant.
    pub fn inversion_symmetric_disk(delta: f64, k: usize, n_theta: usize) -> Result<Self> {
        Self::polar(&log_rings(delta, k, k), n_theta, true, Some(1.0))
    }

    /// Annulus with rings `e^{kΔ}`, `k = -k..=k`.
    pub fn inversion_symmetric_annulus(delta: f64, k: usize, n_theta: usize) -> Result<Self> {
        Self::polar(&log_rings(delta, k, k), n_theta, false, Some(1.0))
    }

    /// Disk mesh resolving off-center sources: a graded polar cloud around the
    /// origin merged with `local_rings` graded rings (exponent `grading`) of
    /// `local_theta` nodes inside a ball of radius `local_radius` about each
    /// source, triangulated by Delaunay.
    pub fn with_sources(
        radius: f64,
        n_rings: usize,
        n_theta: usize,
        sources: &[Point],
        local_radius: f64,
        local_rings: usize,
        local_theta: usize,
        grading: f64,
    ) -> Result<Self> {
        let rings = graded_rings(radius, n_rings, 1.0);
        Self::with_sources_on_rings(&rings, n_theta, sources, local_radius, local_rings, local_theta, grading)
    }

    /// As [`DiskMesh::with_sources`] with an explicit list of global ring
    /// radii; the last one is the disk radius.
    pub fn with_sources_on_rings(
        rings: &[f64],
        n_theta: usize,
        sources: &[Point],
        local_radius: f64,
        local_rings: usize,
        local_theta: usize,
        grading: f64,
    ) -> Result<Self> {
        if rings.is_empty() || rings[0] <= 0.0 || rings.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh("ring radii must be positive and strictly increasing".into()));
        }
        let radius = *rings.last().unwrap();
        for p in sources {
            let rp = p[0].hypot(p[1]);
            if rp + local_radius >= radius {
                return Err(Error::InvalidMesh(format!(
                    "source at distance {rp} with refinement radius {local_radius} reaches the boundary"
                )));
            }
        }
        let mut pts: Vec<Point> = vec![[0.0, 0.0]];
        let near = |x: Point| sources.iter().any(|p| dist(x, *p) < local_radius);
        for (k, &r) in rings.iter().enumerate() {
            let last = k + 1 == rings.len();
            for j in 0..n_theta {
                let th = 2.0 * PI * j as f64 / n_theta as f64;
                let x = [r * th.cos(), r * th.sin()];
                if last || !near(x) {
                    pts.push(x);
                }
            }
        }
        let mut descriptor = Vec::new();
        for p in sources {
            descriptor.push((*p, grading));
            if dist(*p, [0.0, 0.0]) > POSITION_EPS {
                pts.push(*p);
            }
            for rho in graded_rings(local_radius, local_rings, grading) {
                for j in 0..local_theta {
                    let th = 2.0 * PI * j as f64 / local_theta as f64;
                    let x = [p[0] + rho * th.cos(), p[1] + rho * th.sin()];
                    let inside_other = sources
                        .iter()
                        .any(|q| !std::ptr::eq(q, p) && dist(x, *q) < local_radius);
                    if !inside_other {
                        pts.push(x);
                    }
                }
            }
        }
        // drop duplicates produced by overlapping clouds
        let mut uniq: Vec<Point> = Vec::with_capacity(pts.len());
        let mut seen = HashMap::new();
        for x in pts {
            let key = ((x[0] * 1e10).round() as i64, (x[1] * 1e10).round() as i64);
            if seen.insert(key, ()).is_none() {
                uniq.push(x);
            }
        }
        let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
        let mut handle_to_node = HashMap::new();
        for (i, x) in uniq.iter().enumerate() {
            let h = dt
                .insert(Point2::new(x[0], x[1]))
                .map_err(|e| Error::InvalidMesh(format!("{e:?}")))?;
            handle_to_node.insert(h.index(), i);
        }
        let mut triangles = Vec::new();
        for face in dt.inner_faces() {
            let v = face.vertices();
            let idx = [
                handle_to_node[&v[0].fix().index()],
                handle_to_node[&v[1].fix().index()],
                handle_to_node[&v[2].fix().index()],
            ];
            let a = tri_area(uniq[idx[0]], uniq[idx[1]], uniq[idx[2]]);
            if a.abs() < 1e-300 {
                continue;
            }
            triangles.push(if a > 0.0 { idx } else { [idx[0], idx[2], idx[1]] });
        }
        let boundary: Vec<bool> = uniq
            .iter()
            .map(|x| (x[0].hypot(x[1]) - radius).abs() < 1e-9 * radius)
            .collect();
        Self::finish(uniq, triangles, boundary, radius, 0.0, descriptor, None)
    }

    fn finish(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        radius: f64,
        inner_radius: f64,
        grading: Vec<(Point, f64)>,
        rings: Option<RingLayout>,
    ) -> Result<Self> {
        let n = nodes.len();
        let mut edge_tris: HashMap<(usize, usize), [usize; 2]> = HashMap::new();
        let mut weights = vec![0.0; n];
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (t, tri) in triangles.iter().enumerate() {
            let a = tri_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if a <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has area {a}")));
            }
            for k in 0..3 {
                weights[tri[k]] += a / 3.0;
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                adj[i].push(j);
                adj[j].push(i);
                let e = edge_tris.entry((i.min(j), i.max(j))).or_insert([NO_TRIANGLE; 2]);
                if e[0] == NO_TRIANGLE {
                    e[0] = t;
                } else if e[1] == NO_TRIANGLE {
                    e[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!("edge ({i}, {j}) shared by three triangles")));
                }
            }
        }
        let mut boundary_edges: Vec<[usize; 2]> = edge_tris
            .iter()
            .filter(|(_, t)| t[1] == NO_TRIANGLE)
            .map(|(&(i, j), t)| {
                // orient along the owning triangle (counter-clockwise)
                let tri = triangles[t[0]];
                let pos = |v: usize| tri.iter().position(|&x| x == v).unwrap();
                if (pos(i) + 1) % 3 == pos(j) {
                    [i, j]
                } else {
                    [j, i]
                }
            })
            .collect();
        boundary_edges.sort_unstable();
        for e in &boundary_edges {
            if !boundary[e[0]] || !boundary[e[1]] {
                return Err(Error::InvalidMesh(format!(
                    "mesh boundary edge ({}, {}) joins unflagged nodes",
                    e[0], e[1]
                )));
            }
        }
        // circular segments between chords and the true circles
        for e in &boundary_edges {
            let (p, q) = (nodes[e[0]], nodes[e[1]]);
            let r = 0.5 * (p[0].hypot(p[1]) + q[0].hypot(q[1]));
            let chord = dist(p, q);
            let phi = 2.0 * (0.5 * chord / r).min(1.0).asin();
            let seg = 0.5 * r * r * (phi - phi.sin());
            let sign = if (r - radius).abs() < 1e-9 * radius { 1.0 } else { -1.0 };
            weights[e[0]] += 0.5 * sign * seg;
            weights[e[1]] += 0.5 * sign * seg;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            quadrature_weights: weights,
            radius,
            inner_radius,
            grading,
            rings,
            boundary_edges,
            row_ptr,
            cols,
            edge_tris,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        tri_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    /// Sorted neighbor list of node `i` (itself included).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub(crate) fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.cols)
    }

    /// Triangles sharing the edge `(i, j)`; absent slots hold [`NO_TRIANGLE`].
    pub fn edge_triangles(&self, i: usize, j: usize) -> Option<[usize; 2]> {
        self.edge_tris.get(&(i.min(j), i.max(j))).copied()
    }

    /// Piecewise-linear interpolant of nodal `values` on the Delaunay
    /// triangulation of the nodes, evaluated at `points`. Points outside the
    /// hull take the value of the nearest node.
    pub fn interpolate(&self, values: &[f64], points: &[Point]) -> Result<Vec<f64>> {
        if values.len() != self.n_nodes() {
            return Err(Error::InvalidArgument(format!("{} values for {} nodes", values.len(), self.n_nodes())));
        }
        let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
        let mut node_of = HashMap::new();
        for (i, x) in self.nodes.iter().enumerate() {
            let h = dt.insert(Point2::new(x[0], x[1])).map_err(|e| Error::InvalidMesh(format!("{e:?}")))?;
            node_of.insert(h.index(), i);
        }
        let value = |h: spade::handles::FixedVertexHandle| values[node_of[&h.index()]];
        let bary = dt.barycentric();
        points
            .iter()
            .map(|x| {
                let p = Point2::new(x[0], x[1]);
                match bary.interpolate(|v| value(v.fix()), p) {
                    Some(v) => Ok(v),
                    None => dt
                        .nearest_neighbor(p)
                        .map(|v| value(v.fix()))
                        .ok_or_else(|| Error::InvalidMesh("empty triangulation".into())),
                }
            })
            .collect()
    }

    /// Node sitting at `x`, if any.
    pub fn node_at(&self, x: Point) -> Option<usize> {
        let tol = 1e-10 * self.radius.max(1.0);
        self.nodes.iter().position(|p| dist(*p, x) <= tol)
    }

    /// Index of the ring and angle of a structured mesh node.
    pub fn ring_of(&self, node: usize) -> Option<(usize, usize)> {
        let l = self.rings.as_ref()?;
        let off = usize::from(l.center);
        if node < off {
            return None;
        }
        Some(((node - off) / l.n_theta, (node - off) % l.n_theta))
    }

    /// Affine gradient of the P1 interpolant of `values` on triangle `t`.
    pub fn gradient(&self, t: usize, values: &[f64]) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let det = 2.0 * tri_area(pa, pb, pc);
        let (du1, du2) = (values[b] - values[a], values[c] - values[a]);
        let (e1, e2) = ([pb[0] - pa[0], pb[1] - pa[1]], [pc[0] - pa[0], pc[1] - pa[1]]);
        [
            (du1 * e2[1] - du2 * e1[1]) / det,
            (du2 * e1[0] - du1 * e2[0]) / det,
        ]
    }

    /// Physical point of barycentric coordinates in triangle `t`.
    pub fn point(&self, t: usize, bary: [f64; 3]) -> Point {
        let tri = self.triangles[t];
        let mut x = [0.0; 2];
        for k in 0..3 {
            x[0] += bary[k] * self.nodes[tri[k]][0];
            x[1] += bary[k] * self.nodes[tri[k]][1];
        }
        x
    }

    /// Copy of the mesh with every node mapped by `x ↦ x/|x|^2`.
    pub fn inverted(&self) -> Result<Self> {
        if self.nodes.iter().any(|p| p[0].hypot(p[1]) < POSITION_EPS) {
            return Err(Error::OriginInMesh);
        }
        let nodes: Vec<Point> = self
            .nodes
            .iter()
            .map(|p| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                [p[0] / r2, p[1] / r2]
            })
            .collect();
        // inversion reverses orientation
        let triangles = self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect();
        let rings = self.rings.as_ref().map(|l| RingLayout {
            radii: l.radii.iter().rev().map(|r| 1.0 / r).collect(),
            n_theta: l.n_theta,
            center: false,
        });
        let mut m = Self::finish(
            nodes,
            triangles,
            self.boundary.clone(),
            1.0 / self.inner_radius,
            1.0 / self.radius,
            Vec::new(),
            None,
        )?;
        m.rings = rings;
        Ok(m)
    }

    /// Node permutation `σ` with `nodes[σ(i)] = nodes[i] / |nodes[i]|^2`, when
    /// the node set is closed under inversion.
    pub fn inversion_permutation(&self) -> Result<Vec<usize>> {
        let mut lookup = HashMap::new();
        let key = |p: Point| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        for (i, p) in self.nodes.iter().enumerate() {
            lookup.insert(key(*p), i);
        }
        self.nodes
            .iter()
            .map(|p| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                if r2 < POSITION_EPS {
                    return Err(Error::OriginInMesh);
                }
                lookup
                    .get(&key([p[0] / r2, p[1] / r2]))
                    .copied()
                    .ok_or_else(|| Error::InvalidMesh("node set is not inversion symmetric".into()))
            })
            .collect()
    }

    /// Sub-mesh of the triangles whose vertices all satisfy `keep`; nodes are
    /// renumbered and the returned map sends new indices to old ones.
    pub fn submesh(&self, keep: impl Fn(Point) -> bool) -> Result<(Self, Vec<usize>)> {
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut old_of = Vec::new();
        let mut triangles = Vec::new();
        for tri in &self.triangles {
            if tri.iter().all(|&v| keep(self.nodes[v])) {
                let mut t = [0; 3];
                for k in 0..3 {
                    let v = tri[k];
                    if new_id[v] == usize::MAX {
                        new_id[v] = old_of.len();
                        old_of.push(v);
                    }
                    t[k] = new_id[v];
                }
                triangles.push(t);
            }
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("empty sub-mesh".into()));
        }
        let nodes: Vec<Point> = old_of.iter().map(|&v| self.nodes[v]).collect();
        let radii: Vec<f64> = nodes.iter().map(|p| p[0].hypot(p[1])).collect();
        let outer = radii.iter().cloned().fold(0.0, f64::max);
        let has_center = radii.iter().any(|&r| r < POSITION_EPS);
        let inner = if has_center {
            0.0
        } else {
            radii.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let tol = 1e-9 * outer;
        let boundary = radii
            .iter()
            .map(|&r| (r - outer).abs() < tol || (!has_center && (r - inner).abs() < tol))
            .collect();
        let rings = self.rings.as_ref().map(|l| RingLayout {
            radii: l.radii.iter().copied().filter(|&r| r >= inner - tol && r <= outer + tol).collect(),
            n_theta: l.n_theta,
            center: has_center,
        });
        let mut m = Self::finish(nodes, triangles, boundary, outer, inner, self.grading.clone(), None)?;
        m.rings = rings;
        Ok((m, old_of))
    }
}
