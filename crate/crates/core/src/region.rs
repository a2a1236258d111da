//! Sub-regions of a mesh described by a nodal level function `g`: the region
//! is `{g_h < 0}` for the P1 interpolant `g_h`. Triangles are clipped along
//! the zero line, which gives quadrature points for area integrals and for
//! line integrals over the region boundary.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fem::singular_vertex;
use crate::mesh::{DiskMesh, NO_TRIANGLE};
use crate::quadrature::{gauss_jacobi01, gauss_legendre01, triangle_rule, TriPoint};
use crate::weights::{dist, Point, WeightField};

#[derive(Debug, Clone)]
pub struct Region {
    pub level: Vec<f64>,
    pub label: String,
}

/// Quadrature point: triangle, barycentric coordinates and absolute weight
/// (area element or arc-length element already included).
#[derive(Debug, Clone, Copy)]
pub struct RegionPoint {
    pub triangle: usize,
    pub bary: [f64; 3],
    pub weight: f64,
}

impl Region {
    pub fn from_level(mesh: &DiskMesh, level: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if level.len() != mesh.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "level function has {} values for {} nodes",
                level.len(),
                mesh.n_nodes()
            )));
        }
        if level.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("level function is not finite".into()));
        }
        let r = Self { level, label: label.into() };
        if r.node_count() == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(r)
    }

    /// The whole mesh.
    pub fn whole(mesh: &DiskMesh) -> Self {
        Self { level: vec![-1.0; mesh.n_nodes()], label: "whole".into() }
    }

    /// Ball `|x - c| < ρ`, which must lie within the mesh.
    pub fn ball(mesh: &DiskMesh, center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("ball radius {radius}")));
        }
        check_inside(mesh, center, 0.0, radius)?;
        let level = mesh.nodes.iter().map(|&x| dist(x, center) - radius).collect();
        Self::from_level(mesh, level, format!("ball({}, {}; {})", center[0], center[1], radius))
    }

    /// Annulus `ρ_1 < |x - c| < ρ_2`.
    pub fn annulus(mesh: &DiskMesh, center: Point, inner: f64, outer: f64) -> Result<Self> {
        if !(0.0 < inner && inner < outer) {
            return Err(Error::InvalidArgument(format!("annulus radii {inner}, {outer}")));
        }
        check_inside(mesh, center, inner, outer)?;
        let level = mesh
            .nodes
            .iter()
            .map(|&x| {
                let d = dist(x, center);
                (d - outer).max(inner - d)
            })
            .collect();
        Self::from_level(mesh, level, format!("annulus({}, {}; {}, {})", center[0], center[1], inner, outer))
    }

    /// Superlevel set `{u > t}` of nodal values.
    pub fn superlevel(mesh: &DiskMesh, values: &[f64], t: f64) -> Result<Self> {
        let level = values.iter().map(|v| t - v).collect();
        Self::from_level(mesh, level, format!("level({t})"))
    }

    /// Union of the mesh stars of the marked nodes, cut halfway along edges.
    pub fn from_nodes(mesh: &DiskMesh, inside: &[bool]) -> Result<Self> {
        let level = inside.iter().map(|&b| if b { -1.0 } else { 1.0 }).collect();
        Self::from_level(mesh, level, "nodes")
    }

    pub fn contains_node(&self, i: usize) -> bool {
        self.level[i] < 0.0
    }

    pub fn node_count(&self) -> usize {
        self.level.iter().filter(|&&g| g < 0.0).count()
    }

    /// Connected components of the inside node set.
    pub fn components(&self, mesh: &DiskMesh) -> usize {
        let inside: Vec<bool> = self.level.iter().map(|&g| g < 0.0).collect();
        count_components(mesh, &inside)
    }

    /// Closure of the region under hole filling: outside nodes not connected
    /// to the mesh boundary through outside nodes become inside.
    pub fn fill_holes(&self, mesh: &DiskMesh) -> Self {
        let n = mesh.n_nodes();
        let mut reached = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            if mesh.boundary[i] && self.level[i] >= 0.0 {
                reached[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in mesh.neighbors(i) {
                if !reached[j] && self.level[j] >= 0.0 {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let level = self
            .level
            .iter()
            .zip(&reached)
            .map(|(&g, &r)| if g >= 0.0 && !r { -g.abs() - f64::MIN_POSITIVE } else { g })
            .collect();
        Self { level, label: format!("filled {}", self.label) }
    }

    /// Whether some inside node lies on the mesh boundary.
    pub fn touches_boundary(&self, mesh: &DiskMesh) -> bool {
        (0..mesh.n_nodes()).any(|i| mesh.boundary[i] && self.level[i] < 0.0)
    }
}

fn check_inside(mesh: &DiskMesh, center: Point, inner: f64, outer: f64) -> Result<()> {
    let c = center[0].hypot(center[1]);
    let slack = 1e-12 * mesh.radius;
    if c + outer > mesh.radius + slack {
        return Err(Error::RegionNotInSolutionDomain);
    }
    let hole = mesh.inner_radius;
    if hole > 0.0 {
        // the mesh hole must sit in the excluded inner disk or beyond the
        // outer radius
        let in_gap = inner < outer && c + hole <= inner + slack;
        let outside = c >= outer + hole - slack;
        if !(in_gap || outside) {
            return Err(Error::RegionNotInSolutionDomain);
        }
    }
    Ok(())
}

pub(crate) fn count_components(mesh: &DiskMesh, inside: &[bool]) -> usize {
    let n = mesh.n_nodes();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if !inside[s] || seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for &j in mesh.neighbors(i) {
                if inside[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

/// Where a clipped polygon vertex sits on its triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Site {
    Vertex(usize),
    /// On the edge from local vertex `k` to `k + 1`.
    Edge(usize),
}

impl Site {
    fn on_edge(self, e: usize) -> bool {
        match self {
            Site::Vertex(k) => k == e || k == (e + 1) % 3,
            Site::Edge(k) => k == e,
        }
    }
}

/// Polygon `{g_h ≤ 0}` within a triangle as barycentric vertices, empty when
/// no vertex has `g < 0`.
fn clip(g: [f64; 3]) -> Vec<([f64; 3], Site)> {
    if g.iter().all(|&v| v >= 0.0) {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let j = (k + 1) % 3;
        if g[k] <= 0.0 {
            let mut b = [0.0; 3];
            b[k] = 1.0;
            out.push((b, Site::Vertex(k)));
        }
        if (g[k] < 0.0 && g[j] > 0.0) || (g[k] > 0.0 && g[j] < 0.0) {
            let s = g[k] / (g[k] - g[j]);
            let mut b = [0.0; 3];
            b[k] = 1.0 - s;
            b[j] = s;
            out.push((b, Site::Edge(k)));
        }
    }
    out
}

fn combine(p: &[[f64; 3]; 3], l: [f64; 3]) -> [f64; 3] {
    let mut b = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            b[k] += l[i] * p[i][k];
        }
    }
    b
}

fn sub_area(p: &[[f64; 3]; 3]) -> f64 {
    // signed area ratio of a sub-triangle in barycentric coordinates
    let d1 = [p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let d2 = [p[2][1] - p[0][1], p[2][2] - p[0][2]];
    (d1[0] * d2[1] - d1[1] * d2[0]).abs()
}

/// Quadrature for area integrals and boundary line integrals over regions.
/// Weights are absolute; callers evaluate the full integrand, singular
/// factors included, at the returned points.
#[derive(Debug, Clone)]
pub struct RegionQuadrature {
    order: usize,
    regular: Vec<TriPoint>,
    /// Per triangle: local index of a source vertex and its strength.
    singular: Vec<Option<(usize, f64)>>,
    singular_rules: Vec<(f64, Vec<TriPoint>)>,
}

impl RegionQuadrature {
    pub fn new(mesh: &DiskMesh, field: &WeightField, order: usize) -> Self {
        let singular: Vec<Option<(usize, f64)>> = (0..mesh.triangles.len())
            .map(|t| singular_vertex(mesh, field, t))
            .collect();
        let mut singular_rules: Vec<(f64, Vec<TriPoint>)> = Vec::new();
        for (_, s) in singular.iter().flatten() {
            if !singular_rules.iter().any(|(v, _)| v == s) {
                singular_rules.push((*s, triangle_rule(order + 2, 2.0 * s)));
            }
        }
        Self { order, regular: triangle_rule(order, 0.0), singular, singular_rules }
    }

    /// Points for `∫_Ω f`.
    pub fn area_points(&self, mesh: &DiskMesh, region: &Region) -> Vec<RegionPoint> {
        let mut out = Vec::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let g = [region.level[tri[0]], region.level[tri[1]], region.level[tri[2]]];
            self.clipped_points(mesh, t, g, &mut out);
        }
        out
    }

    fn singular_rule(&self, s: f64) -> Vec<TriPoint> {
        match self.singular_rules.iter().find(|(v, _)| *v == s) {
            Some((_, r)) => r.clone(),
            None => triangle_rule(self.order + 2, 2.0 * s),
        }
    }

    /// Appends points for `∫_{T ∩ {g_h < 0}} f` on triangle `t`, where `g`
    /// holds the level function at its three vertices.
    pub fn clipped_points(&self, mesh: &DiskMesh, t: usize, g: [f64; 3], out: &mut Vec<RegionPoint>) {
        let poly = clip(g);
        if poly.len() < 3 {
            return;
        }
        let area = mesh.area(t);
        let sing = self.singular[t];
        // fan from the source vertex when it belongs to the polygon
        let apex = sing
            .and_then(|(k, _)| poly.iter().position(|(_, s)| *s == Site::Vertex(k)))
            .unwrap_or(0);
        let singular_apex = matches!(sing, Some((k, _)) if poly[apex].1 == Site::Vertex(k));
        let rule = match sing {
            Some((_, s)) if singular_apex => self.singular_rule(s),
            _ => self.regular.clone(),
        };
        let m = poly.len();
        for i in 1..m - 1 {
            let a = (apex + i) % m;
            let b = (apex + i + 1) % m;
            let p = [poly[apex].0, poly[a].0, poly[b].0];
            let ratio = sub_area(&p);
            if ratio <= 0.0 {
                continue;
            }
            for q in &rule {
                out.push(RegionPoint {
                    triangle: t,
                    bary: combine(&p, q.bary),
                    weight: q.weight * ratio * area,
                });
            }
        }
    }

    /// Points for `∫_{∂Ω} f ds`: cut segments inside triangles, mesh
    /// boundary edges of the region, and whole mesh edges on the zero set
    /// separating an inside triangle from an outside one. Edges on the zero
    /// set with the region on both sides (cracks) are skipped.
    pub fn boundary_points(&self, mesh: &DiskMesh, region: &Region) -> Vec<RegionPoint> {
        let legendre = gauss_legendre01(self.order + 3);
        let mut out = Vec::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let g = [region.level[tri[0]], region.level[tri[1]], region.level[tri[2]]];
            let poly = clip(g);
            if poly.len() < 3 {
                continue;
            }
            let m = poly.len();
            for i in 0..m {
                let (pa, sa) = poly[i];
                let (pb, sb) = poly[(i + 1) % m];
                let edge = (0..3).find(|&e| sa.on_edge(e) && sb.on_edge(e));
                let keep = match edge {
                    None => true,
                    Some(e) => {
                        let (vi, vj) = (tri[e], tri[(e + 1) % 3]);
                        let [t0, t1] = mesh.edge_triangles(vi, vj).unwrap_or([NO_TRIANGLE; 2]);
                        let other = if t0 == t { t1 } else { t0 };
                        if other == NO_TRIANGLE {
                            true
                        } else if g[e] == 0.0 && g[(e + 1) % 3] == 0.0 {
                            let opp = mesh.triangles[other]
                                .iter()
                                .copied()
                                .find(|&v| v != vi && v != vj)
                                .expect("triangle has a third vertex");
                            region.level[opp] >= 0.0
                        } else {
                            false
                        }
                    }
                };
                if !keep {
                    continue;
                }
                let xa = mesh.point(t, pa);
                let xb = mesh.point(t, pb);
                let len = dist(xa, xb);
                if len == 0.0 {
                    continue;
                }
                // a source at one end of the segment gets a Jacobi rule
                let sing = self.singular[t].and_then(|(k, s)| {
                    if sa == Site::Vertex(k) {
                        Some((false, s))
                    } else if sb == Site::Vertex(k) {
                        Some((true, s))
                    } else {
                        None
                    }
                });
                match sing {
                    Some((reversed, s)) if s < 0.0 => {
                        let rule = gauss_jacobi01(self.order + 3, s);
                        let (from, to) = if reversed { (pb, pa) } else { (pa, pb) };
                        for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                            let mut b = [0.0; 3];
                            for k in 0..3 {
                                b[k] = from[k] + y * (to[k] - from[k]);
                            }
                            out.push(RegionPoint { triangle: t, bary: b, weight: w * len * y.powf(-s) });
                        }
                    }
                    _ => {
                        for (&y, &w) in legendre.nodes.iter().zip(&legendre.weights) {
                            let mut b = [0.0; 3];
                            for k in 0..3 {
                                b[k] = pa[k] + y * (pb[k] - pa[k]);
                            }
                            out.push(RegionPoint { triangle: t, bary: b, weight: w * len });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Interpolated nodal values at a region point.
pub fn value_at(mesh: &DiskMesh, values: &[f64], p: &RegionPoint) -> f64 {
    let tri = mesh.triangles[p.triangle];
    (0..3).map(|k| p.bary[k] * values[tri[k]]).sum()
}
