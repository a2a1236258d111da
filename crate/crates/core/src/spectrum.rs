//! Smallest generalized eigenpairs of the linearized operator and the
//! threshold and nondegeneracy checks built on them.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::sparse::Triplet;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{to_faer, DofMap, SparseMatrix};
use crate::solver::{GridField, LinearizedPair, Problem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative change of the Ritz values that ends the iteration.
    pub tol: f64,
    pub max_iterations: usize,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-13, max_iterations: 5000, guard: 4, seed: 0x5eed }
    }
}

/// Symmetric pencil `(A + c g g^T, B)` on reduced unknowns.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub n: usize,
    pub a: Vec<Triplet<usize, usize, f64>>,
    pub b: Vec<Triplet<usize, usize, f64>>,
    pub rank_one: Option<(Vec<f64>, f64)>,
    /// Initial shift `σ` making `A + σ B` positive definite; doubled on
    /// factorization failure.
    pub shift: f64,
}

impl Pencil {
    pub fn from_matrices(a: &SparseMatrix, b: &SparseMatrix, dofs: &DofMap, rank_one: Option<(&[f64], f64)>) -> Self {
        Self {
            n: dofs.n,
            a: a.restrict(dofs),
            b: b.restrict(dofs),
            rank_one: rank_one.map(|(g, c)| (dofs.accumulate(g), c)),
            shift: 1.0,
        }
    }

    fn apply(trip: &[Triplet<usize, usize, f64>], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in trip {
            out[t.row] += t.val * x[t.col];
        }
    }

    pub fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        Self::apply(&self.a, x, &mut y);
        if let Some((g, c)) = &self.rank_one {
            let gx: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            y.iter_mut().zip(g).for_each(|(v, gi)| *v += c * gx * gi);
        }
        y
    }

    pub fn apply_b(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        Self::apply(&self.b, x, &mut y);
        y
    }
}

/// Eigenpairs sorted by eigenvalue; vectors are `B`-orthonormal.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Largest `‖A x - θ B x‖ / ‖B x‖` over the returned pairs.
    pub residual: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Lower Cholesky factor of a small dense symmetric matrix.
fn small_cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = m.len();
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s = m[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Rayleigh–Ritz on the span of `y`: eigenvalues ascending and the
/// coefficient matrix (columns) of the Ritz vectors.
fn rayleigh_ritz(ay: &[Vec<f64>], by: &[Vec<f64>], y: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = y.len();
    let am: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| dot(&y[i], &ay[j])).collect()).collect();
    let mut bm: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| dot(&y[i], &by[j])).collect()).collect();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (bm[i][j] + bm[j][i]);
            bm[i][j] = v;
            bm[j][i] = v;
        }
    }
    let l = small_cholesky(&bm).ok_or_else(|| Error::IndefiniteB(bm.iter().enumerate().map(|(i, r)| r[i]).fold(f64::INFINITY, f64::min)))?;
    // C = L^{-1} A L^{-T}
    let solve_l = |col: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; p];
        for i in 0..p {
            x[i] = (col[i] - (0..i).map(|k| l[i][k] * x[k]).sum::<f64>()) / l[i][i];
        }
        x
    };
    let mut tmp = vec![vec![0.0; p]; p];
    for j in 0..p {
        let col: Vec<f64> = (0..p).map(|i| am[i][j]).collect();
        let x = solve_l(&col);
        for i in 0..p {
            tmp[i][j] = x[i];
        }
    }
    let mut c = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        let x = solve_l(&tmp[i]);
        for j in 0..p {
            c[(j, i)] = x[j];
        }
    }
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = c.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut vals = Vec::with_capacity(p);
    let mut coeffs = Vec::with_capacity(p);
    for &k in &order {
        vals.push(s[k]);
        // L^{-T} u_k
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            x[i] = (u[(i, k)] - (i + 1..p).map(|m| l[m][i] * x[m]).sum::<f64>()) / l[i][i];
        }
        coeffs.push(x);
    }
    Ok((vals, coeffs))
}

/// `k` smallest eigenpairs of `A x = θ B x` by block shift-invert iteration
/// with Rayleigh–Ritz, `B`-orthonormal vectors.
pub fn smallest_eigenpairs(pencil: &Pencil, k: usize, opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = pencil.n;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("{k} eigenpairs requested for {n} unknowns")));
    }
    let p = (k + opts.guard).min(n);
    let mut shift = pencil.shift;
    let chol = loop {
        let mut trip = pencil.a.clone();
        trip.extend(pencil.b.iter().map(|t| Triplet::new(t.row, t.col, shift * t.val)));
        let mat = to_faer(n, &trip)?;
        match mat.sp_cholesky(Side::Lower) {
            Ok(c) => break c,
            Err(e) => {
                if shift > 1e12 {
                    return Err(Error::Factorization(format!("{e:?}")));
                }
                shift *= 4.0;
            }
        }
    };
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let m = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let s = chol.solve(&m);
        (0..n).map(|i| s[(i, 0)]).collect()
    };
    let sm = pencil.rank_one.as_ref().map(|(g, c)| {
        let w = solve(g);
        let gw = dot(g, &w);
        (g.clone(), *c, w, gw)
    });
    let shifted_solve = |rhs: &[f64]| -> Vec<f64> {
        let mut z = solve(rhs);
        if let Some((g, c, w, gw)) = &sm {
            let f = c * dot(g, &z) / (1.0 + c * gw);
            z.iter_mut().zip(w).for_each(|(a, b)| *a -= f * b);
        }
        z
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut prev = vec![f64::INFINITY; k];
    for it in 1..=opts.max_iterations {
        let y: Vec<Vec<f64>> = x.iter().map(|v| shifted_solve(&pencil.apply_b(v))).collect();
        let ay: Vec<Vec<f64>> = y.iter().map(|v| pencil.apply_a(v)).collect();
        let by: Vec<Vec<f64>> = y.iter().map(|v| pencil.apply_b(v)).collect();
        let (vals, coeffs) = rayleigh_ritz(&ay, &by, &y)?;
        x = coeffs
            .iter()
            .map(|c| {
                let mut v = vec![0.0; n];
                for (j, cj) in c.iter().enumerate() {
                    v.iter_mut().zip(&y[j]).for_each(|(a, b)| *a += cj * b);
                }
                v
            })
            .collect();
        let change = (0..k).map(|i| (vals[i] - prev[i]).abs() / vals[i].abs().max(1.0)).fold(0.0, f64::max);
        prev.copy_from_slice(&vals[..k]);
        if change <= opts.tol {
            let mut residual: f64 = 0.0;
            for i in 0..k {
                let ax = pencil.apply_a(&x[i]);
                let bx = pencil.apply_b(&x[i]);
                let r: f64 = ax.iter().zip(&bx).map(|(a, b)| (a - vals[i] * b).powi(2)).sum::<f64>().sqrt();
                residual = residual.max(r / dot(&bx, &bx).sqrt());
            }
            x.truncate(k);
            return Ok(Eigenpairs { values: vals[..k].to_vec(), vectors: x, iterations: it, residual });
        }
    }
    Err(Error::SolverStall(opts.max_iterations))
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// `ν̂` in ascending order (at least two).
    pub nu_hat: Vec<f64>,
    pub nu_hat_1: f64,
    pub nu_hat_2: f64,
    /// Eigenvectors as nodal values (zero on eliminated nodes).
    pub eigenvectors: Vec<Vec<f64>>,
    /// `∫ V e^w`
    pub mass: f64,
    pub threshold_4pi: f64,
    pub threshold_8pi: f64,
    /// `ν̂_1 > 0`, or the mass is above `4π(1-α_0)`.
    pub first_verdict: bool,
    /// `ν̂_2 > 0`, or the mass is above `8π(1-α_0)`.
    pub second_verdict: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// `k ≥ 2` smallest `ν̂` of `-Δφ - V e^w φ (+ rank one) = ν̂ V e^w φ`.
pub fn eigen_solve(pair: &LinearizedPair, k: usize) -> Result<SpectrumReport> {
    eigen_solve_with(pair, k, &EigenOptions::default())
}

pub fn eigen_solve_with(pair: &LinearizedPair, k: usize, opts: &EigenOptions) -> Result<SpectrumReport> {
    let k = k.max(2);
    let b_red = pair.b.restrict(&pair.dofs);
    let min_diag = (0..pair.dofs.n)
        .map(|i| b_red.iter().filter(|t| t.row == i && t.col == i).map(|t| t.val).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if !(min_diag > 0.0) {
        return Err(Error::IndefiniteB(min_diag));
    }
    let mut pencil = Pencil::from_matrices(&pair.a, &pair.b, &pair.dofs, pair.rank_one.as_ref().map(|(g, c)| (g.as_slice(), *c)));
    // A + 2B = K + B is positive definite
    pencil.shift = 2.0;
    let eig = smallest_eigenpairs(&pencil, k, opts)?;
    let zeros = vec![0.0; pair.mesh.n_nodes()];
    let eigenvectors = eig.vectors.iter().map(|v| pair.dofs.scatter(v, &zeros)).collect();
    let threshold_4pi = 4.0 * PI * (1.0 - pair.alpha0);
    let threshold_8pi = 2.0 * threshold_4pi;
    let (n1, n2) = (eig.values[0], eig.values[1]);
    Ok(SpectrumReport {
        nu_hat_1: n1,
        nu_hat_2: n2,
        first_verdict: n1 > 0.0 || pair.mass > threshold_4pi,
        second_verdict: n2 > 0.0 || pair.mass > threshold_8pi,
        nu_hat: eig.values,
        eigenvectors,
        mass: pair.mass,
        threshold_4pi,
        threshold_8pi,
        iterations: eig.iterations,
        residual: eig.residual,
    })
}

/// Least-squares fit `v ≈ a log r + c` over the nodes with `r` in `[r0, r1]`;
/// returns `(a, c, max deviation)`.
pub fn log_fit(nodes: &[[f64; 2]], values: &[f64], r0: f64, r1: f64) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = nodes
        .iter()
        .zip(values)
        .filter_map(|(x, &v)| {
            let r = x[0].hypot(x[1]);
            (r >= r0 && r <= r1).then(|| (r.ln(), v))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    let c = my - a * mx;
    let dev = pts.iter().map(|p| (p.1 - a * p.0 - c).abs()).fold(0.0, f64::max);
    Some((a, c, dev))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    /// `|ν̂|` below this counts as a near-kernel.
    pub kernel_tol: f64,
    /// Allowed gap between the fitted and the expected far-field slope.
    pub slope_tol: f64,
    /// Number of eigenvalues computed.
    pub count: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { kernel_tol: 1e-4, slope_tol: 5e-2, count: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct NondegeneracyReport {
    /// `ν̂` of the tied-boundary pencil, ascending.
    pub nu_hat: Vec<f64>,
    /// Smallest `|ν̂|` and the index of its pair.
    pub smallest_abs: f64,
    pub smallest_index: usize,
    pub near_kernel: bool,
    /// Far-field fit of the solution on the outer decade.
    pub fitted_slope: f64,
    pub fit_deviation: f64,
    /// `Σ H e^u φ` weights for the smallest-`|ν̂|` vector (`B`-normalized).
    pub weighted_sum: f64,
    /// Fitted `δ` in `φ ≈ C + D r^{-δ}` for that vector, when resolvable.
    pub decay_exponent: Option<f64>,
    /// Nodal values of that vector.
    pub vector: Vec<f64>,
}

/// Eigenvalues of `-Δ - H e^u` against `H e^u` on a large truncated disk,
/// with the boundary trace an unknown constant (one shared unknown), which
/// models the `o(log|x|)` class: admissible `φ` tend to a constant.
pub fn nondegeneracy_probe(
    problem: &Problem,
    solution: &GridField,
    far_field_slope: f64,
    opts: &ProbeOptions,
) -> Result<NondegeneracyReport> {
    let mesh = &problem.mesh;
    if solution.values.len() != mesh.n_nodes() {
        return Err(Error::InvalidArgument("solution must live on the problem mesh".into()));
    }
    let r_out = mesh.radius;
    let (slope, _, dev) = log_fit(&mesh.nodes, &solution.values, 0.1 * r_out, r_out)
        .ok_or_else(|| Error::InvalidArgument("no nodes in the outer decade".into()))?;
    let gap = (slope - far_field_slope).abs();
    let tol = opts.slope_tol * far_field_slope.abs().max(1.0);
    if gap > tol {
        return Err(Error::TruncationTooSmall { residual: gap, tol });
    }
    let pair = LinearizedPair::from_density(problem, &solution.values, 1.0, DofMap::tied_boundary(mesh));
    let spec = eigen_solve_with(&pair, opts.count, &EigenOptions::default())?;
    let (idx, smallest) = spec
        .nu_hat
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let vector = spec.eigenvectors[idx].clone();
    let weights = pair.b.row_sums();
    let weighted_sum = dot(&weights, &vector);
    let c_inf = {
        let b: Vec<f64> = (0..mesh.n_nodes()).filter(|&i| mesh.boundary[i]).map(|i| vector[i]).collect();
        b.iter().sum::<f64>() / b.len().max(1) as f64
    };
    let decay: Vec<(f64, f64)> = mesh
        .nodes
        .iter()
        .zip(&vector)
        .filter_map(|(x, &v)| {
            let r = x[0].hypot(x[1]);
            let d = (v - c_inf).abs();
            (r >= 0.01 * r_out && r <= 0.3 * r_out && d > 1e-14).then(|| (r.ln(), d.ln()))
        })
        .collect();
    let decay_exponent = (decay.len() >= 2).then(|| {
        let n = decay.len() as f64;
        let mx = decay.iter().map(|p| p.0).sum::<f64>() / n;
        let my = decay.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = decay.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = decay.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        -sxy / sxx
    });
    Ok(NondegeneracyReport {
        nu_hat: spec.nu_hat,
        smallest_abs: smallest,
        smallest_index: idx,
        near_kernel: smallest < opts.kernel_tol,
        fitted_slope: slope,
        fit_deviation: dev,
        weighted_sum,
        decay_exponent,
        vector,
    })
}
