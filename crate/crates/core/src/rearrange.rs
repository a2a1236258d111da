//! Weighted symmetrization onto the model measure `|x|^{-2α} e^{U_0} dx`.
//!
//! A rearranged field is stored in the model-mass coordinate
//! `s = ∫_{B_r} |x|^{-2α} e^{U_0}`, as a nonincreasing piecewise-linear
//! function through knots `(μ(t_k), t_k)`, where `μ(t)` is the weighted
//! measure of `{φ_h > t}` computed by exact clipping. In that coordinate
//! the Dirichlet energy of a radial function is
//! `∫ (dφ/ds)^2 s (M - s) / 2 ds` with `M = 8π(1-α)`, for every `α`.
//!
//! The constrained radial minimization behind `K*` lives in [`kstar_minimize`].

use faer::prelude::*;
use faer::sparse::Triplet;
use faer::Mat;

use crate::bol::Density;
use crate::error::{Error, Result};
use crate::fem::to_faer;
use crate::levelset::{distribution, LEVEL_GROUPING};
use crate::mesh::DiskMesh;
use crate::model::RadialModel;
use crate::region::{Region, RegionPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RearrangementKind {
    OneSided,
    TwoSided,
}

/// Options for the adaptive level sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RearrangeOptions {
    /// Gaps between levels are bisected until the exact `μ` at the midpoint
    /// is within `match_tol · μ_total` of the linear prediction.
    pub match_tol: f64,
    pub max_rounds: usize,
}

impl Default for RearrangeOptions {
    fn default() -> Self {
        Self { match_tol: 1e-7, max_rounds: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedField {
    pub alpha: f64,
    pub kind: RearrangementKind,
    /// Radius of the support of the positive part.
    pub r0: f64,
    /// Radius where the glued field crosses 0 (equal to `r0` one-sided).
    pub r1: f64,
    /// Outer radius; infinite when the data carry the full model mass.
    pub r2: f64,
    /// Limit value `c_0` of the data (0 for one-sided fields).
    pub c0: f64,
    /// Model-mass coordinates of the knots, increasing from 0.
    pub knots_s: Vec<f64>,
    /// Values at the knots, nonincreasing.
    pub knots_value: Vec<f64>,
}

impl RearrangedField {
    fn model(&self) -> RadialModel {
        RadialModel { alpha: self.alpha }
    }

    /// Model mass of the support.
    pub fn total_mass(&self) -> f64 {
        *self.knots_s.last().unwrap_or(&0.0)
    }

    /// `φ_*` as a function of the model-mass coordinate.
    pub fn value_at_mass(&self, s: f64) -> f64 {
        let (xs, ys) = (&self.knots_s, &self.knots_value);
        if s <= xs[0] {
            return ys[0];
        }
        if s >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        let k = xs.partition_point(|&v| v <= s).clamp(1, xs.len() - 1);
        let w = (s - xs[k - 1]) / (xs[k] - xs[k - 1]);
        ys[k - 1] + w * (ys[k] - ys[k - 1])
    }

    pub fn value_at_radius(&self, r: f64) -> f64 {
        self.value_at_mass(self.model().model_mass(r))
    }

    /// Model measure of `{φ_* > t}`.
    pub fn superlevel_mass(&self, t: f64) -> f64 {
        let (xs, ys) = (&self.knots_s, &self.knots_value);
        if t >= ys[0] {
            return 0.0;
        }
        // first knot with value <= t
        let k = ys.partition_point(|&v| v > t);
        if k >= ys.len() {
            return self.total_mass();
        }
        let (v0, v1) = (ys[k - 1], ys[k]);
        xs[k - 1] + (xs[k] - xs[k - 1]) * (v0 - t) / (v0 - v1)
    }

    /// `(r, φ_*(r))` at the knots; the last radius may be infinite.
    pub fn profile(&self) -> Vec<(f64, f64)> {
        let model = self.model();
        self.knots_s.iter().zip(&self.knots_value).map(|(&s, &v)| (model.mass_radius(s), v)).collect()
    }

    /// `∫ |∇φ_*|^2 dx` over the support.
    pub fn dirichlet_energy(&self) -> f64 {
        let m = self.model().total_mass();
        let mut e = 0.0;
        for k in 1..self.knots_s.len() {
            let (a, b) = (self.knots_s[k - 1], self.knots_s[k]);
            let ds = b - a;
            if ds <= 0.0 {
                continue;
            }
            let slope = (self.knots_value[k] - self.knots_value[k - 1]) / ds;
            let w = ds * (m * (a + b) / 4.0 - (a * a + a * b + b * b) / 6.0);
            e += slope * slope * w;
        }
        e
    }

    /// `∫ |x|^{-2α} e^{U_0} φ_*^p dx` over the support, for `p` in {1, 2}.
    pub fn weighted_moment(&self, p: u32) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.knots_s.len() {
            let ds = self.knots_s[k] - self.knots_s[k - 1];
            let (a, b) = (self.knots_value[k - 1], self.knots_value[k]);
            acc += match p {
                1 => ds * (a + b) / 2.0,
                2 => ds * (a * a + a * b + b * b) / 3.0,
                _ => panic!("moment order {p} is not supported"),
            };
        }
        acc
    }
}

/// Triangles whose three vertices lie in `region`.
pub fn region_mask(mesh: &DiskMesh, region: &Region) -> Vec<bool> {
    mesh.triangles.iter().map(|tri| tri.iter().all(|&v| region.contains_node(v))).collect()
}

/// `∫ |∇φ_h|^2` over the masked triangles.
pub fn dirichlet_energy(mesh: &DiskMesh, values: &[f64], mask: &[bool]) -> f64 {
    (0..mesh.triangles.len())
        .filter(|&t| mask[t])
        .map(|t| {
            let g = mesh.gradient(t, values);
            mesh.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// `∫ ρ φ_h^p` over the masked triangles.
pub fn weighted_moment(density: &Density, values: &[f64], mask: &[bool], p: i32) -> f64 {
    let mesh = &density.mesh;
    let mut pts: Vec<RegionPoint> = Vec::new();
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        if !mask[t] {
            continue;
        }
        pts.clear();
        density.quadrature().clipped_points(mesh, t, [-1.0; 3], &mut pts);
        let tri = mesh.triangles[t];
        for q in &pts {
            let v: f64 = (0..3).map(|i| q.bary[i] * values[tri[i]]).sum();
            acc += q.weight * density.at(q) * v.powi(p);
        }
    }
    acc
}

/// Knots `(μ(t_k), t_k)` on `[bottom, top]` with adaptive bisection of gaps.
fn sample_distribution(
    density: &Density,
    values: &[f64],
    mask: &[bool],
    bottom: f64,
    total: f64,
    opts: RearrangeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mesh = &density.mesh;
    let mut nodal: Vec<f64> = mesh
        .triangles
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .flat_map(|(tri, _)| tri.iter().map(|&v| values[v]))
        .filter(|&v| v > bottom)
        .collect();
    nodal.sort_by(|a, b| b.total_cmp(a));
    let top = nodal.first().copied().unwrap_or(bottom);
    let range = top - bottom;
    let gap = LEVEL_GROUPING * top.abs().max(bottom.abs()).max(1.0);
    let mut levels: Vec<f64> = Vec::new();
    for v in nodal {
        if v - bottom <= gap {
            break;
        }
        if levels.last().is_none_or(|&l| l - v > gap) {
            levels.push(v);
        }
    }
    let mut mu = distribution(density, values, mask, &levels);
    levels.push(bottom);
    mu.push(total);
    let mut open: Vec<bool> = vec![true; levels.len().saturating_sub(1)];
    let min_gap = 1e-13 * range.max(1e-300);
    for _ in 0..opts.max_rounds {
        let mids: Vec<f64> = (0..open.len())
            .filter(|&k| open[k] && levels[k] - levels[k + 1] > min_gap)
            .map(|k| 0.5 * (levels[k] + levels[k + 1]))
            .collect();
        if mids.is_empty() {
            break;
        }
        let mu_mid = distribution(density, values, mask, &mids);
        let mut new_levels = Vec::with_capacity(levels.len() + mids.len());
        let mut new_mu = Vec::with_capacity(levels.len() + mids.len());
        let mut new_open = Vec::with_capacity(open.len() + mids.len());
        let mut j = 0;
        for k in 0..levels.len() {
            new_levels.push(levels[k]);
            new_mu.push(mu[k]);
            if k + 1 == levels.len() {
                break;
            }
            if open[k] && levels[k] - levels[k + 1] > min_gap {
                let predicted = 0.5 * (mu[k] + mu[k + 1]);
                let refine = (mu_mid[j] - predicted).abs() > opts.match_tol * total;
                new_levels.push(mids[j]);
                new_mu.push(mu_mid[j]);
                new_open.push(refine);
                new_open.push(refine);
                j += 1;
            } else {
                new_open.push(false);
            }
        }
        levels = new_levels;
        mu = new_mu;
        open = new_open;
    }
    let tol = 1e-12 * total;
    let mut knots_s = Vec::with_capacity(mu.len() + 1);
    let mut knots_v = Vec::with_capacity(mu.len() + 1);
    knots_s.push(0.0);
    knots_v.push(top);
    for (&t, &m) in levels.iter().zip(&mu) {
        let prev = *knots_s.last().unwrap();
        if m < prev - tol {
            return Err(Error::NonMonotoneMu(t));
        }
        if m > prev {
            knots_s.push(m);
            knots_v.push(t);
        }
    }
    Ok((knots_s, knots_v))
}

fn check_model_mass(model: &RadialModel, mass: f64, positive: f64) -> Result<f64> {
    let m = model.total_mass();
    if mass > m * (1.0 + 1e-9) {
        return Err(Error::MassOverflow { negative: mass - positive, remaining: m - positive });
    }
    Ok(mass.min(m))
}

/// Largest `|μ_φ(t) - |{φ_* > t}||` over strictly decreasing `thresholds`,
/// relative to the model mass of the support. `mask` selects the data
/// triangles.
pub fn equimeasurability_mismatch(
    field: &RearrangedField,
    density: &Density,
    phi: &[f64],
    mask: &[bool],
    thresholds: &[f64],
) -> f64 {
    let data = distribution(density, phi, mask, thresholds);
    let total = field.total_mass();
    thresholds
        .iter()
        .zip(&data)
        .map(|(&t, &mu)| (mu - field.superlevel_mass(t)).abs())
        .fold(0.0, f64::max)
        / total.max(f64::MIN_POSITIVE)
}

/// One-sided rearrangement `φ*` on `B_{R_0}` of a field positive inside
/// `region` with zero trace on its boundary. Data live on the triangles
/// whose three vertices lie in the region.
pub fn rearrange_one_sided(phi: &[f64], density: &Density, region: &Region, alpha: f64) -> Result<RearrangedField> {
    rearrange_one_sided_with(phi, density, region, alpha, RearrangeOptions::default())
}

pub fn rearrange_one_sided_with(
    phi: &[f64],
    density: &Density,
    region: &Region,
    alpha: f64,
    opts: RearrangeOptions,
) -> Result<RearrangedField> {
    let model = RadialModel::new(alpha)?;
    let mesh = &density.mesh;
    if phi.len() != mesh.n_nodes() || region.level.len() != mesh.n_nodes() {
        return Err(Error::RegionNotInSolutionDomain);
    }
    for i in 0..mesh.n_nodes() {
        if !region.contains_node(i) {
            continue;
        }
        let interior = !mesh.boundary[i] && mesh.neighbors(i).iter().all(|&j| region.contains_node(j));
        if phi[i] < 0.0 || (interior && phi[i] <= 0.0) {
            return Err(Error::SignError(phi[i]));
        }
    }
    let mask = region_mask(mesh, region);
    let total = weighted_moment(density, phi, &mask, 0);
    if !(total > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let total = check_model_mass(&model, total, total)?;
    let (knots_s, knots_value) = sample_distribution(density, phi, &mask, 0.0, total, opts)?;
    let r0 = model.mass_radius(total);
    Ok(RearrangedField {
        alpha,
        kind: RearrangementKind::OneSided,
        r0,
        r1: r0,
        r2: r0,
        c0: 0.0,
        knots_s,
        knots_value,
    })
}

/// Two-sided rearrangement on the whole mesh: `{φ > 0}` goes to `B_{R_1}`,
/// the rest to the annulus `B_{R_2} \ B_{R_1}`, smallest values outermost.
pub fn rearrange_two_sided(phi: &[f64], density: &Density, c0: f64, alpha: f64) -> Result<RearrangedField> {
    rearrange_two_sided_with(phi, density, c0, alpha, RearrangeOptions::default())
}

pub fn rearrange_two_sided_with(
    phi: &[f64],
    density: &Density,
    c0: f64,
    alpha: f64,
    opts: RearrangeOptions,
) -> Result<RearrangedField> {
    let model = RadialModel::new(alpha)?;
    let mesh = &density.mesh;
    if phi.len() != mesh.n_nodes() {
        return Err(Error::RegionNotInSolutionDomain);
    }
    if c0 > 0.0 {
        return Err(Error::InvalidArgument(format!("limit value c0 = {c0} must be <= 0")));
    }
    let mask = vec![true; mesh.triangles.len()];
    let total = weighted_moment(density, phi, &mask, 0);
    if !(total > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let bottom = phi.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let positive = if phi.iter().any(|&v| v > 0.0) { distribution(density, phi, &mask, &[0.0])[0] } else { 0.0 };
    let total = check_model_mass(&model, total, positive)?;
    let (knots_s, knots_value) = sample_distribution(density, phi, &mask, bottom, total, opts)?;
    let r1 = model.mass_radius(positive);
    Ok(RearrangedField {
        alpha,
        kind: RearrangementKind::TwoSided,
        r0: r1,
        r1,
        r2: model.mass_radius(total),
        c0,
        knots_s,
        knots_value,
    })
}

/// Result of the radial constrained minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct KStar {
    pub k_star: f64,
    /// Radii of the grid.
    pub radii: Vec<f64>,
    /// Minimizer, positive at the origin, `∫ ρ ψ* = 0`, `∫ ρ ψ*^2 = 1`.
    pub psi_star: Vec<f64>,
    /// Sign-change radius.
    pub xi0: f64,
    /// Value at the outer end of the grid.
    pub limit_at_infinity: f64,
}

/// Minimizes `∫ |∇ψ|^2` over radial `ψ` with `∫ ρ ψ = 0`, `∫ ρ ψ^2 = 1`,
/// `ρ = |x|^{-2α} e^{U_0}`, by P1 elements in `τ = log r^{2(1-α)}` with
/// trial functions extended by constants beyond both ends of the grid, so
/// the tails contribute mass but no energy.
///
/// In `τ` the problem reads `min ∫ ψ'^2 dτ / (2 ∫ ψ^2 w dτ)` with
/// `w = 1 / (4 cosh^2(τ/2))`.
pub fn kstar_minimize(alpha: f64, radii: &[f64]) -> Result<KStar> {
    let model = RadialModel::new(alpha)?;
    let n = radii.len();
    if n < 8 {
        return Err(Error::GridTooCoarse(n));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radial grid must be positive and strictly increasing".into()));
    }
    let beta = 2.0 * (1.0 - alpha);
    let tau: Vec<f64> = radii.iter().map(|r| beta * r.ln()).collect();
    let weight = |x: f64| 0.25 / (0.5 * x).cosh().powi(2);
    let gl = crate::quadrature::gauss_legendre01(4);
    // tridiagonal stiffness and mass
    let mut a_diag = vec![0.0; n];
    let mut a_off = vec![0.0; n - 1];
    let mut b_diag = vec![0.0; n];
    let mut b_off = vec![0.0; n - 1];
    for e in 0..n - 1 {
        let h = tau[e + 1] - tau[e];
        a_diag[e] += 1.0 / h;
        a_diag[e + 1] += 1.0 / h;
        a_off[e] -= 1.0 / h;
        for (&x, &wq) in gl.nodes.iter().zip(&gl.weights) {
            let w = wq * h * weight(tau[e] + x * h);
            b_diag[e] += w * (1.0 - x) * (1.0 - x);
            b_diag[e + 1] += w * x * x;
            b_off[e] += w * x * (1.0 - x);
        }
    }
    // ∫_{τ_max}^∞ w = (1 - tanh(τ_max/2)) / 2, and symmetrically below τ_min
    b_diag[n - 1] += 0.5 * (1.0 - (0.5 * tau[n - 1]).tanh());
    b_diag[0] += 0.5 * (1.0 + (0.5 * tau[0]).tanh());
    let b_apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = b_diag[i] * v[i];
                if i > 0 {
                    s += b_off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += b_off[i] * v[i + 1];
                }
                s
            })
            .collect()
    };
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    // shift between the constant mode (0) and the target (near 2)
    let sigma = 1.5;
    let mut trip = Vec::with_capacity(3 * n);
    for i in 0..n {
        trip.push(Triplet::new(i, i, a_diag[i] - sigma * b_diag[i]));
        if i + 1 < n {
            let v = a_off[i] - sigma * b_off[i];
            trip.push(Triplet::new(i, i + 1, v));
            trip.push(Triplet::new(i + 1, i, v));
        }
    }
    let lu = to_faer(n, &trip)?.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let ones = vec![1.0; n];
    let b_ones = b_apply(&ones);
    let one_norm = dot(&ones, &b_ones);
    let deflate = |v: &mut Vec<f64>| {
        let c = dot(v, &b_ones) / one_norm;
        v.iter_mut().for_each(|x| *x -= c);
    };
    let mut v: Vec<f64> = tau.iter().map(|&x| -(0.5 * x).tanh() + 0.1 * (0.25 * x).cos()).collect();
    deflate(&mut v);
    let mut lambda = f64::NAN;
    let mut converged = false;
    for _ in 0..500 {
        let bv = b_apply(&v);
        let mut rhs = Mat::<f64>::zeros(n, 1);
        for i in 0..n {
            rhs[(i, 0)] = bv[i];
        }
        let sol = lu.solve(&rhs);
        let mut w: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        deflate(&mut w);
        let norm = dot(&w, &b_apply(&w)).sqrt();
        w.iter_mut().for_each(|x| *x /= norm);
        let aw: f64 = (0..n)
            .map(|i| {
                let mut s = a_diag[i] * w[i];
                if i > 0 {
                    s += a_off[i - 1] * w[i - 1];
                }
                if i + 1 < n {
                    s += a_off[i] * w[i + 1];
                }
                s * w[i]
            })
            .sum();
        let change = (aw - lambda).abs();
        lambda = aw;
        v = w;
        if change < 1e-12 * lambda.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolverStall(500));
    }
    let k_star = 0.5 * lambda;
    if v[0] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    // ∫ ρ ψ^2 dx = 8π(1-α) ∫ ψ^2 w dτ
    let scale = 1.0 / model.total_mass().sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    let changes: Vec<usize> = (0..n - 1).filter(|&i| (v[i] > 0.0) != (v[i + 1] > 0.0)).collect();
    if changes.len() != 1 {
        return Err(Error::NoSignChange);
    }
    let i = changes[0];
    let t0 = tau[i] + (tau[i + 1] - tau[i]) * v[i] / (v[i] - v[i + 1]);
    let xi0 = (t0 / beta).exp();
    Ok(KStar { k_star, radii: radii.to_vec(), limit_at_infinity: v[n - 1], psi_star: v, xi0 })
}
