//! Natural-parameter continuation of the mean-field branch from `(u, λ) = (0, 0)`
//! with eigenvalue monitoring of the full linearization, and a restart probe
//! for uniqueness along the branch.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{mass_matrix, SparseMatrix};
use crate::mesh::DiskMesh;
use crate::solver::{assemble_linearized, GridField, LinearizedPair, Problem, SolveKind, SolveOptions, SolveReport};
use crate::spectrum::{smallest_eigenpairs, EigenOptions, Pencil};
use crate::weights::WeightField;

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub lambda: f64,
    pub solution: GridField,
    /// Smallest eigenvalue of `-Δ - λ H e^u / S + (λ / S²) N N^T` against the
    /// plain mass matrix.
    pub min_eigenvalue: f64,
    /// Two smallest eigenvalues of the same pencil without the rank-one term.
    pub local_eigenvalues: [f64; 2],
    pub sup_norm: f64,
    /// `∫ H e^w` for `w = u + log(λ / ∫ H e^u)`.
    pub mass: f64,
    /// `|Σ H e^w φ| / Σ H e^w |φ|` for `φ = φ̃ - (∫ H e^w φ̃) / (∫ H e^w)`
    /// built from the eigenvector `φ̃` of `min_eigenvalue`.
    pub constraint_residual: f64,
    pub newton_iterations: usize,
}

impl BranchPoint {
    /// `κ_1 ≤ μ_1 ≤ κ_2` for a nonnegative rank-one update, up to `tol`
    /// relative to the eigenvalue scale.
    pub fn interlaces(&self, tol: f64) -> bool {
        let [k1, k2] = self.local_eigenvalues;
        let scale = k2.abs().max(1.0);
        self.min_eigenvalue >= k1 - tol * scale && self.min_eigenvalue <= k2 + tol * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub step: f64,
    /// Newton tolerance of every solve.
    pub tol: f64,
    /// The step may shrink to `min_step_factor · lambda_max`.
    pub min_step_factor: f64,
    /// Steps grow back by this factor after a success, up to `step`.
    pub growth: f64,
    pub eigen: EigenOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self { step: 0.5, tol: 1e-10, min_step_factor: 1e-8, growth: 2.0, eigen: EigenOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// First `λ` at which `min_eigenvalue` changed sign.
    pub eigenvalue_crossing: Option<f64>,
    /// Failure of the forced solve when `lambda_max` is the threshold itself.
    pub endpoint_failure: Option<Error>,
}

impl Branch {
    /// Least-squares slope of `sup_norm` against `λ` through the origin.
    pub fn c_fit(&self) -> f64 {
        let (sxy, sxx) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.lambda * p.sup_norm, b + p.lambda * p.lambda));
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    }

    /// Largest `sup_norm / (λ C_fit)` over points with `λ > 0`.
    pub fn max_bound_ratio(&self) -> f64 {
        let c = self.c_fit();
        self.points
            .iter()
            .filter(|p| p.lambda > 0.0)
            .map(|p| p.sup_norm / (p.lambda * c))
            .fold(0.0, f64::max)
    }

    /// Smallest `sup_norm / (λ C_fit)` over points with `λ > 0`.
    pub fn min_bound_ratio(&self) -> f64 {
        let c = self.c_fit();
        self.points
            .iter()
            .filter(|p| p.lambda > 0.0)
            .map(|p| p.sup_norm / (p.lambda * c))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,sup_norm,min_eigenvalue,mass\n");
        for p in &self.points {
            writeln!(out, "{:.12e},{:.12e},{:.12e},{:.12e}", p.lambda, p.sup_norm, p.min_eigenvalue, p.mass)
                .expect("writing to a string");
        }
        out
    }
}

/// Eigenvalue data of the full and the local linearization at a solution.
fn monitor(problem: &Problem, report: &SolveReport, mass: &SparseMatrix, eigen: &EigenOptions) -> Result<(f64, [f64; 2], f64)> {
    let pair = assemble_linearized(report, problem)?;
    let rank_one = pair.rank_one.as_ref().map(|(g, c)| (g.as_slice(), *c));
    let full = Pencil::from_matrices(&pair.a, mass, &pair.dofs, rank_one);
    let local = Pencil::from_matrices(&pair.a, mass, &pair.dofs, None);
    let mu = smallest_eigenpairs(&full, 1, eigen)?;
    let kappa = smallest_eigenpairs(&local, 2, eigen)?;
    let phi = pair.dofs.scatter(&mu.vectors[0], &vec![0.0; pair.mesh.n_nodes()]);
    Ok((mu.values[0], [kappa.values[0], kappa.values[1]], constraint_residual(&pair, &phi)))
}

fn constraint_residual(pair: &LinearizedPair, phi: &[f64]) -> f64 {
    let weights = pair.b.row_sums();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let mean = weights.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() / total;
    let (sum, abs) = weights
        .iter()
        .zip(phi)
        .fold((0.0, 0.0), |(s, a), (w, p)| (s + w * (p - mean), a + w * (p - mean).abs()));
    if abs > 0.0 {
        sum.abs() / abs
    } else {
        0.0
    }
}

fn branch_point(problem: &Problem, report: SolveReport, mass_matrix: &SparseMatrix, eigen: &EigenOptions) -> Result<BranchPoint> {
    let lambda = match report.kind {
        SolveKind::MeanField { lambda } => lambda,
        SolveKind::Unnormalized => return Err(Error::InvalidArgument("branch points are mean-field solutions".into())),
    };
    let (min_eigenvalue, local_eigenvalues, constraint_residual) = monitor(problem, &report, mass_matrix, eigen)?;
    let u = &report.solution.values;
    let mass = if lambda > 0.0 {
        let shift = (lambda / problem.weighted_mass(u)).ln();
        let w: Vec<f64> = u.iter().map(|v| v + shift).collect();
        problem.weighted_mass(&w)
    } else {
        0.0
    };
    Ok(BranchPoint {
        lambda,
        sup_norm: report.solution.sup_norm(),
        solution: report.solution,
        min_eigenvalue,
        local_eigenvalues,
        mass,
        constraint_residual,
        newton_iterations: report.newton_iterations,
    })
}

/// Branch from `λ = 0` to `lambda_max ≤ 8π(1 - α_0)` with steps of `step`.
pub fn trace_branch(mesh: Arc<DiskMesh>, field: WeightField, lambda_max: f64, step: f64) -> Result<Branch> {
    let problem = Problem::new(mesh, field)?;
    trace_branch_with(&problem, None, lambda_max, &ContinuationOptions { step, ..ContinuationOptions::default() })
}

/// Continuation on `problem`, from `start` when given (a stored branch
/// point) and from `u = 0` otherwise. Points are placed on the grid
/// `λ_0 + k · step`; a failed Newton solve halves the step, which grows back
/// after each success.
pub fn trace_branch_with(problem: &Problem, start: Option<&BranchPoint>, lambda_max: f64, opts: &ContinuationOptions) -> Result<Branch> {
    let threshold = problem.threshold();
    if !(opts.step > 0.0) || !opts.step.is_finite() {
        return Err(Error::InvalidArgument(format!("step = {} must be positive", opts.step)));
    }
    if !(lambda_max >= 0.0) || lambda_max > threshold * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("lambda_max = {lambda_max} must lie in [0, {threshold}]")));
    }
    let at_threshold = lambda_max >= threshold * (1.0 - 1e-12);
    let mass_matrix = mass_matrix(&problem.mesh);
    let solve = |lambda: f64, initial: Option<Vec<f64>>| {
        let o = SolveOptions { tol: opts.tol, forced: lambda >= threshold, initial, ..SolveOptions::default() };
        problem.solve_mean_field(lambda, &o)
    };
    let first = match start {
        Some(p) => {
            let report = solve(p.lambda, Some(p.solution.values.clone()))?;
            branch_point(problem, report, &mass_matrix, &opts.eigen)?
        }
        None => branch_point(problem, solve(0.0, None)?, &mass_matrix, &opts.eigen)?,
    };
    let mut points = vec![first];
    let mut crossing = None;
    let mut endpoint_failure = None;
    let mut h = opts.step;
    let min_step = opts.min_step_factor * lambda_max.max(f64::MIN_POSITIVE);
    loop {
        let last = points.last().expect("nonempty branch");
        if last.lambda >= lambda_max {
            break;
        }
        let target = (last.lambda + h).min(lambda_max);
        match solve(target, Some(last.solution.values.clone())) {
            Ok(report) => {
                let p = branch_point(problem, report, &mass_matrix, &opts.eigen)?;
                if crossing.is_none() && (p.min_eigenvalue > 0.0) != (last.min_eigenvalue > 0.0) {
                    crossing = Some(p.lambda);
                }
                points.push(p);
                h = (h * opts.growth).min(opts.step);
            }
            Err(e) => {
                if at_threshold && target >= lambda_max {
                    // a solution need not exist at the threshold itself
                    endpoint_failure = Some(e);
                    if h <= min_step {
                        break;
                    }
                }
                h *= 0.5;
                if h < min_step {
                    if endpoint_failure.is_some() {
                        break;
                    }
                    return Err(Error::StepUnderflow(h));
                }
            }
        }
    }
    if points.last().map(|p| p.lambda >= lambda_max) == Some(true) {
        endpoint_failure = None;
    }
    Ok(Branch { points, eigenvalue_crossing: crossing, endpoint_failure })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub restarts: usize,
    /// Initial guesses have sup norm up to this amplitude.
    pub amplitude: f64,
    /// Max-norm distance counted as landing on the branch.
    pub distance_tol: f64,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { restarts: 20, amplitude: 10.0, distance_tol: 1e-6, seed: 0x5eed, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub lambda: f64,
    pub converged: usize,
    pub diverged: usize,
    pub on_branch: usize,
    /// Largest distance among converged restarts.
    pub max_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub outcomes: Vec<RestartOutcome>,
}

impl UniquenessReport {
    /// Every converged restart landed on the branch.
    pub fn unique(&self) -> bool {
        self.outcomes.iter().all(|o| o.on_branch == o.converged)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,converged,diverged,on_branch,max_distance\n");
        for o in &self.outcomes {
            writeln!(out, "{:.12e},{},{},{},{:.12e}", o.lambda, o.converged, o.diverged, o.on_branch, o.max_distance)
                .expect("writing to a string");
        }
        out
    }
}

/// Random smooth initial guess vanishing on `|x| = R`:
/// `a (1 - r²/R²)(c_0 + c_1 x/R + c_2 y/R + c_3 (x² - y²)/R² + c_4 xy/R²)`,
/// scaled so that its sup over the nodes is `a`.
fn random_guess(mesh: &DiskMesh, rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<f64> {
    let a = rng.gen_range(0.0..amplitude);
    let c: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let r = mesh.radius;
    let raw: Vec<f64> = mesh
        .nodes
        .iter()
        .zip(&mesh.boundary)
        .map(|(p, &b)| {
            if b {
                return 0.0;
            }
            let (x, y) = (p[0] / r, p[1] / r);
            (1.0 - x * x - y * y) * (c[0] + c[1] * x + c[2] * y + c[3] * (x * x - y * y) + c[4] * x * y)
        })
        .collect();
    let sup = raw.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if sup > 0.0 {
        raw.iter().map(|v| a * v / sup).collect()
    } else {
        raw
    }
}

/// Re-solves at each sampled branch point from seeded random initial guesses
/// and compares the converged solutions with the branch solution.
pub fn uniqueness_probe(problem: &Problem, branch: &[&BranchPoint], settings: &ProbeSettings) -> UniquenessReport {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let outcomes = branch
        .iter()
        .map(|p| {
            let mut o = RestartOutcome { lambda: p.lambda, converged: 0, diverged: 0, on_branch: 0, max_distance: 0.0 };
            for _ in 0..settings.restarts {
                let initial = random_guess(&problem.mesh, &mut rng, settings.amplitude);
                let opts = SolveOptions {
                    tol: settings.tol,
                    max_iterations: 200,
                    forced: p.lambda >= problem.threshold(),
                    initial: Some(initial),
                };
                match problem.solve_mean_field(p.lambda, &opts) {
                    Ok(r) => {
                        o.converged += 1;
                        let d = r
                            .solution
                            .values
                            .iter()
                            .zip(&p.solution.values)
                            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
                        o.max_distance = o.max_distance.max(d);
                        if d <= settings.distance_tol {
                            o.on_branch += 1;
                        }
                    }
                    Err(_) => o.diverged += 1,
                }
            }
            o
        })
        .collect();
    UniquenessReport { outcomes }
}
