//! Distribution-function machinery on a region `ω`: the harmonic lift `q`,
//! `η = u - q`, the weighted distribution `μ(t)` of `{η > t}`, its inverse
//! `η*(s)`, `F(s) = ∫_0^s e^{η*}` and the monotone quantity `P(s)`.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::Mat;

use crate::bol::{bol_check, BolReport, Density};
use crate::error::{Error, Result};
use crate::fem::{stiffness, to_faer};
use crate::mesh::DiskMesh;
use crate::region::Region;
use faer::sparse::Triplet;

/// Relative gap under which two nodal values of `η` count as one level.
pub const LEVEL_GROUPING: f64 = 1e-12;

/// Discrete harmonic function on the inside nodes of `region` equal to `u`
/// on the region's boundary nodes (inside nodes on the mesh boundary or next
/// to an outside node). Outside nodes receive `u`, so `η = u - q` vanishes
/// there.
pub fn harmonic_lift(mesh: &DiskMesh, u: &[f64], region: &Region) -> Result<Vec<f64>> {
    if u.len() != mesh.n_nodes() || region.level.len() != mesh.n_nodes() {
        return Err(Error::InvalidArgument("field and region must live on the mesh".into()));
    }
    if region.components(mesh) > 1 {
        return Err(Error::DisconnectedRegion);
    }
    let n = mesh.n_nodes();
    let inside: Vec<bool> = (0..n).map(|i| region.contains_node(i)).collect();
    let interior: Vec<bool> = (0..n)
        .map(|i| inside[i] && !mesh.boundary[i] && mesh.neighbors(i).iter().all(|&j| inside[j]))
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut m = 0;
    for i in 0..n {
        if interior[i] {
            index[i] = m;
            m += 1;
        }
    }
    let mut q = u.to_vec();
    if m == 0 {
        return Ok(q);
    }
    let k = stiffness(mesh);
    let mut trip = Vec::new();
    let mut rhs = Mat::<f64>::zeros(m, 1);
    for i in 0..n {
        if !interior[i] {
            continue;
        }
        for (j, v) in k.row(i) {
            if interior[j] {
                trip.push(Triplet::new(index[i], index[j], v));
            } else {
                rhs[(index[i], 0)] -= v * u[j];
            }
        }
    }
    let mat = to_faer(m, &trip)?;
    let chol = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let sol = chol.solve(&rhs);
    for i in 0..n {
        if interior[i] {
            q[i] = sol[(index[i], 0)];
        }
    }
    Ok(q)
}

/// `μ(t_k) = ∫_{T ∩ {v_h > t_k}} ρ` summed over the triangles selected by
/// `mask`, for strictly decreasing `levels`; exact clipping of the P1
/// interpolant `v_h`, each triangle visited only for the levels inside its
/// range.
pub fn distribution(density: &Density, values: &[f64], mask: &[bool], levels: &[f64]) -> Vec<f64> {
    let mesh = &density.mesh;
    let quad = density.quadrature();
    let k = levels.len();
    let mut full = vec![0.0; k + 1];
    let mut partial = vec![0.0; k];
    let mut pts = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !mask[t] {
            continue;
        }
        let e = [values[tri[0]], values[tri[1]], values[tri[2]]];
        let lo = e[0].min(e[1]).min(e[2]);
        let hi = e[0].max(e[1]).max(e[2]);
        let k1 = levels.partition_point(|&l| l >= hi);
        let k0 = levels.partition_point(|&l| l >= lo);
        if k0 < k {
            pts.clear();
            quad.clipped_points(mesh, t, [-1.0; 3], &mut pts);
            full[k0] += pts.iter().map(|p| p.weight * density.at(p)).sum::<f64>();
        }
        for kk in k1..k0 {
            let l = levels[kk];
            pts.clear();
            quad.clipped_points(mesh, t, [l - e[0], l - e[1], l - e[2]], &mut pts);
            partial[kk] += pts.iter().map(|p| p.weight * density.at(p)).sum::<f64>();
        }
    }
    let mut acc = 0.0;
    (0..k)
        .map(|kk| {
            acc += full[kk];
            acc + partial[kk]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetProfile {
    /// Distinct levels of `η`, decreasing from `t_m` to 0.
    pub t_samples: Vec<f64>,
    /// `μ(t)` at each level; `μ(0)` is the mass of the region.
    pub mu: Vec<f64>,
    /// Uniform grid on `[0, μ(0)]`.
    pub s_samples: Vec<f64>,
    pub eta_star: Vec<f64>,
    pub f: Vec<f64>,
    pub t_m: f64,
    /// Interpolation knots `(μ(t_k), t_k)` of `η*`.
    pub knots_s: Vec<f64>,
    pub knots_eta: Vec<f64>,
}

impl LevelSetProfile {
    pub fn total_mass(&self) -> f64 {
        *self.mu.last().unwrap_or(&0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.t_m == 0.0
    }

    /// Piecewise-linear `η*(s)`.
    pub fn eta_star_at(&self, s: f64) -> f64 {
        interp(&self.knots_s, &self.knots_eta, s)
    }

    /// `F(μ(0)) = ∫_ω e^η ρ`.
    pub fn f_total(&self) -> f64 {
        *self.f.last().unwrap_or(&0.0)
    }
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let k = x.partition_point(|&v| v <= at).max(1);
    let (x0, x1) = (x[k - 1], x[k]);
    let w = if x1 > x0 { (at - x0) / (x1 - x0) } else { 0.0 };
    y[k - 1] + w * (y[k] - y[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    /// Points of the uniform `s` grid.
    pub n_samples: usize,
    /// Cap on the number of distinct nodal levels; beyond it the sorted
    /// values are subsampled uniformly by rank.
    pub max_levels: usize,
    /// Equally spaced extra levels inserted between consecutive nodal levels.
    pub sublevels: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { n_samples: 513, max_levels: 2000, sublevels: 3 }
    }
}

/// Profile of `η` on `ω` for the density `ρ = V e^q`.
pub fn build_profile(eta: &[f64], density_q: &Density, region: &Region) -> Result<LevelSetProfile> {
    build_profile_with(eta, density_q, region, ProfileOptions::default())
}

/// `μ` is sampled at the distinct positive nodal values of `η` (negative
/// values count as 0), at `opts.sublevels` levels between consecutive ones,
/// and at `t = 0`, where it is the mass of `ω`. `η*` is
/// the piecewise-linear interpolant through `(μ(t_k), t_k)` and `(μ(0), 0)`;
/// `F` is the exact integral of `e^{η*}`. Both are sampled on a uniform
/// grid of `[0, μ(0)]`.
pub fn build_profile_with(
    eta: &[f64],
    density_q: &Density,
    region: &Region,
    opts: ProfileOptions,
) -> Result<LevelSetProfile> {
    let mesh = &density_q.mesh;
    if eta.len() != mesh.n_nodes() {
        return Err(Error::InvalidArgument("eta must live on the density mesh".into()));
    }
    if opts.n_samples < 2 || opts.max_levels < 2 {
        return Err(Error::InvalidArgument(format!("{opts:?}")));
    }
    let total = density_q.mass(region)?;
    if !(total > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let eta: Vec<f64> = eta.iter().map(|v| v.max(0.0)).collect();
    let mask: Vec<bool> = mesh.triangles.iter().map(|tri| tri.iter().all(|&v| region.contains_node(v))).collect();
    let mut values: Vec<f64> = mesh
        .triangles
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .flat_map(|(tri, _)| tri.iter().map(|&v| eta[v]))
        .filter(|&v| v > 0.0)
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let t_m = values.first().copied().unwrap_or(0.0);
    let gap = LEVEL_GROUPING * t_m.max(1.0);
    let mut levels: Vec<f64> = Vec::new();
    for v in values {
        if v <= gap {
            break;
        }
        if levels.last().is_none_or(|&l| l - v > gap) {
            levels.push(v);
        }
    }
    if levels.len() > opts.max_levels {
        let n = levels.len();
        let m = opts.max_levels;
        levels = (0..m).map(|i| levels[i * (n - 1) / (m - 1)]).collect();
    }
    if opts.sublevels > 0 && !levels.is_empty() {
        let mut refined = Vec::with_capacity(levels.len() * (opts.sublevels + 1) + opts.sublevels);
        let steps = opts.sublevels + 1;
        let mut nodal = levels.clone();
        nodal.push(0.0);
        for w in nodal.windows(2) {
            refined.push(w[0]);
            for j in 1..steps {
                refined.push(w[0] + (w[1] - w[0]) * j as f64 / steps as f64);
            }
        }
        levels = refined;
    }
    let s_samples: Vec<f64> = (0..opts.n_samples)
        .map(|k| total * k as f64 / (opts.n_samples - 1) as f64)
        .collect();
    if levels.is_empty() {
        return Ok(LevelSetProfile {
            t_samples: vec![0.0],
            mu: vec![total],
            eta_star: vec![0.0; opts.n_samples],
            f: s_samples.clone(),
            s_samples,
            t_m: 0.0,
            knots_s: vec![0.0, total],
            knots_eta: vec![0.0, 0.0],
        });
    }
    let mu_pos = distribution(density_q, &eta, &mask, &levels);
    let mut t_samples = levels.clone();
    t_samples.push(0.0);
    let mut mu = mu_pos;
    mu.push(total);
    let tol = 1e-12 * total;
    let mut knots_s = Vec::with_capacity(mu.len());
    let mut knots_eta = Vec::with_capacity(mu.len());
    for (&t, &m) in t_samples.iter().zip(&mu) {
        match knots_s.last() {
            Some(&prev) if m < prev - tol => return Err(Error::NonMonotoneMu(t)),
            Some(&prev) if m <= prev => continue,
            _ => {
                knots_s.push(m);
                knots_eta.push(t);
            }
        }
    }
    if knots_s.len() < 2 {
        return Err(Error::NonMonotoneMu(0.0));
    }
    let seg = |a: f64, b: f64, ds: f64| {
        // ∫ over a segment of length ds of e^{linear from a to b}
        if (b - a).abs() < 1e-12 {
            ds * (0.5 * (a + b)).exp()
        } else {
            ds * (b.exp() - a.exp()) / (b - a)
        }
    };
    let mut knots_f = vec![0.0; knots_s.len()];
    for k in 1..knots_s.len() {
        knots_f[k] = knots_f[k - 1] + seg(knots_eta[k - 1], knots_eta[k], knots_s[k] - knots_s[k - 1]);
    }
    let mut eta_star = Vec::with_capacity(opts.n_samples);
    let mut f = Vec::with_capacity(opts.n_samples);
    for &s in &s_samples {
        let k = knots_s.partition_point(|&v| v <= s).clamp(1, knots_s.len() - 1);
        let e = interp(&knots_s, &knots_eta, s);
        eta_star.push(e);
        f.push(knots_f[k - 1] + seg(knots_eta[k - 1], e, s - knots_s[k - 1]));
    }
    Ok(LevelSetProfile { t_samples, mu, s_samples, eta_star, f, t_m, knots_s, knots_eta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    /// `max |ΔF/Δs - e^{η*}|` over the sample intervals, `η*` at midpoints.
    pub df_residual: f64,
    /// `P(s) = 4π(1-α)(s e^{η*(s)} - F(s)) + F(s)²/2` at the samples.
    pub p: Vec<f64>,
    pub p_min_forward_difference: f64,
    pub p_max_abs: f64,
    /// Largest `|Δη*/Δs|` between knots inside `[0.1 μ(0), 0.9 μ(0)]`.
    pub lipschitz_ratio: f64,
    /// `8π(1-α)(μ(0) - M) + M²` with `M = F(μ(0))`.
    pub endpoint: f64,
}

pub fn check_identities(profile: &LevelSetProfile, alpha0: f64) -> IdentityReport {
    if profile.is_degenerate() {
        return IdentityReport {
            df_residual: 0.0,
            p: vec![0.0; profile.s_samples.len()],
            p_min_forward_difference: 0.0,
            p_max_abs: 0.0,
            lipschitz_ratio: 0.0,
            endpoint: 0.0,
        };
    }
    let s = &profile.s_samples;
    let e = &profile.eta_star;
    let f = &profile.f;
    let c = 4.0 * PI * (1.0 - alpha0);
    let mut df_residual: f64 = 0.0;
    for k in 1..s.len() {
        let ds = s[k] - s[k - 1];
        if ds <= 0.0 {
            continue;
        }
        let slope = (f[k] - f[k - 1]) / ds;
        let mid = (0.5 * (e[k] + e[k - 1])).exp();
        df_residual = df_residual.max((slope - mid).abs());
    }
    let p: Vec<f64> = (0..s.len())
        .map(|k| c * (s[k] * e[k].exp() - f[k]) + 0.5 * f[k] * f[k])
        .collect();
    let p_min_forward_difference = p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let p_max_abs = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let total = profile.total_mass();
    let (lo, hi) = (0.1 * total, 0.9 * total);
    let (ks, ke) = (&profile.knots_s, &profile.knots_eta);
    let mut lipschitz_ratio: f64 = 0.0;
    for k in 1..ks.len() {
        if ks[k - 1] >= lo && ks[k] <= hi && ks[k] > ks[k - 1] {
            lipschitz_ratio = lipschitz_ratio.max(((ke[k] - ke[k - 1]) / (ks[k] - ks[k - 1])).abs());
        }
    }
    let m = profile.f_total();
    IdentityReport {
        df_residual,
        p,
        p_min_forward_difference,
        p_max_abs,
        lipschitz_ratio,
        endpoint: 2.0 * c * (total - m) + m * m,
    }
}

/// `Ω(t) = {η > t}` as a region; levels within the grouping gap of `t` are
/// placed exactly on the cut.
pub fn superlevel_region(mesh: &DiskMesh, eta: &[f64], t: f64) -> Result<Region> {
    let scale = eta.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let level = eta
        .iter()
        .map(|&e| {
            let g = t - e;
            if g.abs() <= LEVEL_GROUPING * scale {
                0.0
            } else {
                g
            }
        })
        .collect();
    Region::from_level(mesh, level, format!("level({t})"))
}

/// Bol reports on every nonempty sampled `Ω(t)`, paired with `t`.
pub fn bol_along_levels(
    density: &Density,
    eta: &[f64],
    profile: &LevelSetProfile,
    alpha0: f64,
) -> Result<Vec<(f64, BolReport)>> {
    let mut out = Vec::new();
    for &t in &profile.t_samples {
        match superlevel_region(&density.mesh, eta, t) {
            Ok(r) => out.push((t, bol_check(density, &r, alpha0)?)),
            Err(Error::EmptyRegion) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `(∫_{Γ(t)} (V e^q)^{1/2} ds)²` against `4π(1-α_0) μ(t)` at every sampled
/// level; `density_q` is `V e^q`. Returns `(t, lhs, rhs)`.
pub fn length_chain(
    density_q: &Density,
    eta: &[f64],
    profile: &LevelSetProfile,
    alpha0: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for (&t, &mu) in profile.t_samples.iter().zip(&profile.mu) {
        match superlevel_region(&density_q.mesh, eta, t) {
            Ok(r) => {
                let l = density_q.length(&r)?;
                out.push((t, l * l, 4.0 * PI * (1.0 - alpha0) * mu));
            }
            Err(Error::EmptyRegion) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
