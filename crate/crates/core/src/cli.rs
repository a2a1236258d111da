//! Config-driven runs: each command writes CSV reports and a manifest into
//! the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bol::{bol_check, Density, RegionSpec};
use crate::config::{Command, RunConfig};
use crate::continuation::{trace_branch_with, uniqueness_probe, Branch, BranchPoint, ContinuationOptions, ProbeSettings};
use crate::error::{Error, Result};
use crate::kelvin::{kelvin_check, solve_global, GlobalMeshOptions, GlobalSolutionSpec};
use crate::mesh::DiskMesh;
use crate::model::{geometric_grid, RadialModel};
use crate::rearrange::{
    dirichlet_energy, equimeasurability_mismatch, kstar_minimize, rearrange_one_sided, rearrange_two_sided, region_mask,
};
use crate::region::Region;
use crate::solver::{assemble_linearized, LinearizedPair, Problem, SolveOptions, SolveReport};
use crate::spectrum::{eigen_solve, SpectrumReport};
use crate::table::{write_field, write_triplets};
use crate::weights::{SingularSource, WeightField, POSITION_EPS};

pub const USAGE: &str = "usage: conic-liouville --config PATH [--output DIR] [--seed N] [--refine K]

The config is a TOML file with a `command` (solve, bol-check, spectrum,
rearrange-check, kstar, kelvin-check, continue, probe) and optional
[problem], [numerics] and [output] sections.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Numerical = 2,
    Assertion = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn label(self) -> &'static str {
        match self {
            ExitStatus::Success => "success",
            ExitStatus::Validation => "validation error",
            ExitStatus::Numerical => "numerical failure",
            ExitStatus::Assertion => "assertion failure",
        }
    }
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub refine: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub messages: Vec<String>,
    /// Files written, manifest last.
    pub files: Vec<PathBuf>,
}

/// CSV and text artifacts of one pipeline plus the invariant violations it
/// found.
#[derive(Debug, Default)]
struct Artifacts {
    files: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Artifacts {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(message());
        }
    }
}

struct Csv(String);

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv(header.join(",") + "\n")
    }

    fn row(&mut self, cells: &[String]) {
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Parses, validates and runs `text`, writing artifacts and a manifest.
pub fn run_text(text: &str, opts: &RunOptions) -> RunOutcome {
    let config = match RunConfig::parse(text) {
        Ok(c) => c,
        Err(e) => {
            return RunOutcome { status: ExitStatus::Validation, messages: vec![e.to_string(), USAGE.to_string()], files: vec![] }
        }
    };
    run(config, opts)
}

pub fn run_file(path: &Path, opts: &RunOptions) -> RunOutcome {
    match std::fs::read_to_string(path) {
        Ok(text) => run_text(&text, opts),
        Err(e) => RunOutcome {
            status: ExitStatus::Validation,
            messages: vec![format!("cannot read {}: {e}", path.display())],
            files: vec![],
        },
    }
}

pub fn run(mut config: RunConfig, opts: &RunOptions) -> RunOutcome {
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    if let Some(k) = opts.refine {
        config.refine = k;
    }
    let violations = config.violations();
    if !violations.is_empty() {
        return RunOutcome { status: ExitStatus::Validation, messages: violations, files: vec![] };
    }
    let command = config.command().expect("validated command");
    let dir = opts
        .output
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("conic-liouville-out"));
    let start = Instant::now();
    let (status, artifacts, mut messages) = match execute(&config, command) {
        Ok(a) if a.failures.is_empty() => (ExitStatus::Success, a, vec![]),
        Ok(a) => {
            let m = a.failures.clone();
            (ExitStatus::Assertion, a, m)
        }
        Err(Error::Config(m)) => (ExitStatus::Validation, Artifacts::default(), vec![m]),
        Err(e) => (ExitStatus::Numerical, Artifacts::default(), vec![e.to_string()]),
    };
    let wall_time = start.elapsed().as_secs_f64();
    match write_artifacts(&dir, &config, &artifacts, status, wall_time) {
        Ok(files) => RunOutcome { status, messages, files },
        Err(e) => {
            messages.push(format!("cannot write to {}: {e}", dir.display()));
            RunOutcome { status: ExitStatus::Numerical.max_with(status), messages, files: vec![] }
        }
    }
}

impl ExitStatus {
    fn max_with(self, other: ExitStatus) -> ExitStatus {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunInfo<'a>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    status: &'a str,
    exit_code: i32,
    wall_time_seconds: f64,
    files: Vec<String>,
}

fn write_artifacts(dir: &Path, config: &RunConfig, a: &Artifacts, status: ExitStatus, wall_time: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, body) in &a.files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        files.push(path);
    }
    let manifest = Manifest {
        run: RunInfo {
            command: &config.command,
            version: env!("CARGO_PKG_VERSION"),
            status: status.label(),
            exit_code: status.code(),
            wall_time_seconds: wall_time,
            files: a.files.iter().map(|(n, _)| n.clone()).collect(),
        },
        config,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text)?;
    files.push(path);
    Ok(files)
}

fn execute(config: &RunConfig, command: Command) -> Result<Artifacts> {
    match command {
        Command::Solve => run_solve(config),
        Command::BolCheck => run_bol(config),
        Command::Spectrum => run_spectrum(config),
        Command::RearrangeCheck => run_rearrange(config),
        Command::KStar => run_kstar(config),
        Command::KelvinCheck => run_kelvin(config),
        Command::Continue => run_continue(config),
        Command::Probe => run_probe(config),
    }
}

/// Mesh of the disk at ladder level `level`: rings and angular nodes double
/// per level.
fn disk_mesh(config: &RunConfig, field: &WeightField, level: usize) -> Result<Arc<DiskMesh>> {
    let n = &config.numerics;
    let f = 1usize << level;
    let radius = config.problem.radius;
    let sources = field.sources();
    let centered = sources.iter().all(|s| s.position[0].hypot(s.position[1]) <= POSITION_EPS);
    let mesh = if centered {
        let grading = n.grading.unwrap_or_else(|| match sources.first() {
            Some(s) if s.strength < 0.0 => 1.0 / (1.0 + s.strength),
            _ => 1.0,
        });
        DiskMesh::graded_disk(radius, n.rings * f, n.theta * f, grading)?
    } else {
        let positions: Vec<_> = sources.iter().map(|s| s.position).collect();
        DiskMesh::with_sources(
            radius,
            n.rings * f,
            n.theta * f,
            &positions,
            n.local_radius,
            n.local_rings * f,
            n.local_theta * f,
            n.grading.unwrap_or(2.0),
        )?
    };
    Ok(Arc::new(mesh))
}

fn model_field(alpha: f64) -> Result<WeightField> {
    if alpha == 0.0 {
        Ok(WeightField::constant_one())
    } else {
        WeightField::single([0.0, 0.0], -alpha)
    }
}

/// Problem and `U_0` nodal values of the radial model on `B_R`.
fn model_data(config: &RunConfig, alpha: f64, level: usize) -> Result<(Problem, Vec<f64>)> {
    let model = RadialModel::new(alpha)?;
    let field = model_field(alpha)?;
    let mesh = disk_mesh(config, &field, level)?;
    let u0 = mesh.nodes.iter().map(|x| model.u0(x[0].hypot(x[1]))).collect();
    Ok((Problem::new(mesh, field)?, u0))
}

fn solve_at(config: &RunConfig, level: usize, lambda: f64) -> Result<(Problem, SolveReport)> {
    let field = config.weight_field()?;
    let problem = Problem::new(disk_mesh(config, &field, level)?, field)?;
    let opts = SolveOptions { tol: config.numerics.tol, forced: lambda >= problem.threshold(), ..SolveOptions::default() };
    let report = problem.solve_mean_field(lambda, &opts)?;
    Ok((problem, report))
}

fn levels(config: &RunConfig) -> std::ops::RangeInclusive<usize> {
    0..=config.refine
}

fn run_solve(config: &RunConfig) -> Result<Artifacts> {
    let lambda = config.problem.lambda.expect("validated");
    let mut a = Artifacts::default();
    let mut csv = Csv::new(&["level", "nodes", "lambda", "newton_iterations", "final_residual", "mass", "sup_norm", "min_interior"]);
    let mut last = None;
    for level in levels(config) {
        let (problem, report) = solve_at(config, level, lambda)?;
        let mesh = &problem.mesh;
        let min_interior = (0..mesh.n_nodes())
            .filter(|&i| !mesh.boundary[i])
            .map(|i| report.solution.values[i])
            .fold(f64::INFINITY, f64::min);
        csv.row(&[
            level.to_string(),
            mesh.n_nodes().to_string(),
            num(lambda),
            report.newton_iterations.to_string(),
            num(report.final_residual),
            num(report.mass),
            num(report.solution.sup_norm()),
            num(min_interior),
        ]);
        a.check(report.final_residual <= config.numerics.tol, || {
            format!("level {level}: residual {:e} above tolerance", report.final_residual)
        });
        a.check(lambda == 0.0 || min_interior >= -1e-8, || format!("level {level}: interior minimum {min_interior:e} is negative"));
        last = Some((problem, report));
    }
    a.add("solve.csv", csv.0);
    let (problem, report) = last.expect("at least one level");
    a.add("solution.txt", write_field(&report.solution));
    let pair = assemble_linearized(&report, &problem)?;
    a.add("operator_a.txt", write_triplets(&pair.a));
    a.add("operator_b.txt", write_triplets(&pair.b));
    Ok(a)
}

fn default_balls(radius: f64) -> Vec<RegionSpec> {
    [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| RegionSpec::Ball { center: [0.0, 0.0], radius: f * radius })
        .collect()
}

struct Data {
    problem: Problem,
    density: Density,
    values: Vec<f64>,
    alpha0: f64,
    report: Option<SolveReport>,
}

/// Density and nodal log-values for bol-check and spectrum: the solved
/// mean-field problem when `lambda` is set, the radial model otherwise.
fn data_density(config: &RunConfig, level: usize) -> Result<Data> {
    match config.problem.lambda {
        Some(lambda) => {
            let (problem, report) = solve_at(config, level, lambda)?;
            let density = Density::of_solution(&problem, &report)?;
            let alpha0 = problem.field.alpha0();
            let values = report.solution.values.clone();
            Ok(Data { problem, density, values, alpha0, report: Some(report) })
        }
        None => {
            let alpha = config.problem.alpha.expect("validated");
            let (problem, u0) = model_data(config, alpha, level)?;
            let density = Density::new(problem.mesh.clone(), problem.field.clone(), u0.clone(), 1.0)?;
            Ok(Data { problem, density, values: u0, alpha0: alpha, report: None })
        }
    }
}

fn run_bol(config: &RunConfig) -> Result<Artifacts> {
    let specs = if config.numerics.regions.is_empty() { default_balls(config.problem.radius) } else { config.regions()? };
    let mut a = Artifacts::default();
    let mut csv = Csv::new(&["level", "region", "l", "m", "lhs", "rhs", "slack", "relative_slack", "equality_case"]);
    for level in levels(config) {
        let d = data_density(config, level)?;
        for spec in &specs {
            let region = spec.build(&d.problem.mesh, &d.values)?;
            let r = bol_check(&d.density, &region, d.alpha0)?;
            csv.row(&[
                level.to_string(),
                r.region.clone(),
                num(r.l),
                num(r.m),
                num(r.lhs),
                num(r.rhs),
                num(r.slack),
                num(r.relative_slack()),
                r.equality_case.to_string(),
            ]);
            a.check(r.slack >= -config.numerics.bol_tol * r.rhs.abs(), || {
                format!("level {level}, {}: slack {:e} below tolerance", r.region, r.slack)
            });
        }
    }
    a.add("bol.csv", csv.0);
    Ok(a)
}

fn spectrum_of(config: &RunConfig, level: usize) -> Result<(usize, SpectrumReport)> {
    let d = data_density(config, level)?;
    let pair = match &d.report {
        Some(report) => assemble_linearized(report, &d.problem)?,
        None => LinearizedPair::from_density(&d.problem, &d.values, 1.0, d.problem.interior.clone()),
    };
    Ok((d.problem.mesh.n_nodes(), eigen_solve(&pair, config.numerics.eigenvalues)?))
}

fn run_spectrum(config: &RunConfig) -> Result<Artifacts> {
    let mut a = Artifacts::default();
    let mut values = Csv::new(&["level", "index", "nu_hat"]);
    let mut summary = Csv::new(&[
        "level",
        "nodes",
        "mass",
        "threshold_4pi",
        "threshold_8pi",
        "nu_hat_1",
        "nu_hat_2",
        "first_verdict",
        "second_verdict",
    ]);
    for level in levels(config) {
        let (nodes, s) = spectrum_of(config, level)?;
        for (i, v) in s.nu_hat.iter().enumerate() {
            values.row(&[level.to_string(), (i + 1).to_string(), num(*v)]);
        }
        summary.row(&[
            level.to_string(),
            nodes.to_string(),
            num(s.mass),
            num(s.threshold_4pi),
            num(s.threshold_8pi),
            num(s.nu_hat_1),
            num(s.nu_hat_2),
            s.first_verdict.to_string(),
            s.second_verdict.to_string(),
        ]);
        a.check(s.first_verdict, || format!("level {level}: nu_hat_1 = {:e} at mass {}", s.nu_hat_1, s.mass));
        a.check(s.second_verdict, || format!("level {level}: nu_hat_2 = {:e} at mass {}", s.nu_hat_2, s.mass));
    }
    a.add("spectrum.csv", values.0);
    a.add("spectrum_summary.csv", summary.0);
    Ok(a)
}

/// Smooth field positive inside `B_R` and zero on its boundary:
/// `(1 - |x|²/R²) exp(c_1 x + c_2 y + c_3 (x² - y²) + c_4 xy)` in units of `R`.
fn random_positive(mesh: &DiskMesh, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let r = mesh.radius;
    mesh.nodes
        .iter()
        .zip(&mesh.boundary)
        .map(|(p, &b)| {
            if b {
                return 0.0;
            }
            let (x, y) = (p[0] / r, p[1] / r);
            (1.0 - x * x - y * y).max(0.0) * (c[0] * x + c[1] * y + c[2] * (x * x - y * y) + c[3] * x * y).exp()
        })
        .collect()
}

fn thresholds(rng: &mut ChaCha8Rng, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..count).map(|_| rng.gen_range(lo..hi)).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn run_rearrange(config: &RunConfig) -> Result<Artifacts> {
    let alpha = config.problem.alpha.expect("validated");
    let model = RadialModel::new(alpha)?;
    let n = &config.numerics;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut a = Artifacts::default();
    let mut csv = Csv::new(&["level", "input", "kind", "mismatch", "energy_input", "energy_rearranged", "r0", "r2"]);
    // one-sided inputs vanish on the unit circle, the full ψ lives on B_R
    let mut unit = config.clone();
    unit.problem.radius = 1.0;
    for level in levels(config) {
        let (problem, u0) = model_data(&unit, alpha, level)?;
        let mesh = problem.mesh.clone();
        let density = Density::new(mesh.clone(), problem.field.clone(), u0, 1.0)?;
        let region = Region::whole(&mesh);
        let mask = region_mask(&mesh, &region);
        let mut inputs: Vec<(String, Vec<f64>)> =
            vec![("psi".into(), mesh.nodes.iter().map(|x| model.psi(x[0].hypot(x[1])).max(0.0)).collect())];
        for k in 0..n.samples {
            inputs.push((format!("random{k}"), random_positive(&mesh, &mut rng)));
        }
        for (name, phi) in &inputs {
            let f = rearrange_one_sided(phi, &density, &region, alpha)?;
            let top = phi.iter().copied().fold(0.0, f64::max);
            let t = thresholds(&mut rng, 0.0, top, n.thresholds);
            let mismatch = equimeasurability_mismatch(&f, &density, phi, &mask, &t);
            let e_in = dirichlet_energy(&mesh, phi, &mask);
            let e_out = f.dirichlet_energy();
            csv.row(&[level.to_string(), name.clone(), "one-sided".into(), num(mismatch), num(e_in), num(e_out), num(f.r0), num(f.r2)]);
            a.check(mismatch <= 1e-6, || format!("level {level}, {name}: equimeasurability mismatch {mismatch:e}"));
            a.check(e_out <= e_in + 1e-6, || format!("level {level}, {name}: energy {e_out} exceeds input {e_in}"));
        }
        if config.problem.radius <= 1.0 {
            continue;
        }
        let (problem, u0) = model_data(config, alpha, level)?;
        let mesh = problem.mesh.clone();
        let density = Density::new(mesh.clone(), problem.field.clone(), u0, 1.0)?;
        let psi: Vec<f64> = mesh.nodes.iter().map(|x| model.psi(x[0].hypot(x[1]))).collect();
        let c0 = psi.iter().copied().fold(0.0, f64::min);
        let f = rearrange_two_sided(&psi, &density, c0, alpha)?;
        let all = vec![true; mesh.triangles.len()];
        let t = thresholds(&mut rng, c0, 1.0, n.thresholds);
        let mismatch = equimeasurability_mismatch(&f, &density, &psi, &all, &t);
        let e_in = dirichlet_energy(&mesh, &psi, &all);
        let e_out = f.dirichlet_energy();
        csv.row(&[level.to_string(), "psi".into(), "two-sided".into(), num(mismatch), num(e_in), num(e_out), num(f.r1), num(f.r2)]);
        a.check(mismatch <= 1e-6, || format!("level {level}, two-sided psi: equimeasurability mismatch {mismatch:e}"));
        a.check(e_out <= e_in + 1e-6, || format!("level {level}, two-sided psi: energy {e_out} exceeds input {e_in}"));
    }
    a.add("rearrange.csv", csv.0);
    Ok(a)
}

fn run_kstar(config: &RunConfig) -> Result<Artifacts> {
    let alpha = config.problem.alpha.expect("validated");
    let n = &config.numerics;
    let mut a = Artifacts::default();
    let mut csv = Csv::new(&["level", "nodes", "alpha", "k_star", "xi0", "limit_at_infinity"]);
    let mut errors = Vec::new();
    for level in levels(config) {
        let nodes = n.radial_nodes << level;
        let k = kstar_minimize(alpha, &geometric_grid(n.radial_min, n.radial_max, nodes))?;
        csv.row(&[level.to_string(), nodes.to_string(), num(alpha), num(k.k_star), num(k.xi0), num(k.limit_at_infinity)]);
        errors.push(((k.k_star - 1.0).abs(), k.k_star, k.xi0));
    }
    let &(_, k_star, xi0) = errors.last().expect("at least one level");
    a.check((0.99..=1.01).contains(&k_star), || format!("K* = {k_star} outside [0.99, 1.01]"));
    a.check((0.98..=1.02).contains(&xi0), || format!("xi0 = {xi0} outside [0.98, 1.02]"));
    a.check(errors.windows(2).all(|w| w[1].0 <= w[0].0), || "K* does not approach 1 monotonically".into());
    a.add("kstar.csv", csv.0);
    Ok(a)
}

fn run_kelvin(config: &RunConfig) -> Result<Artifacts> {
    let n = &config.numerics;
    let sources = config
        .problem
        .sources
        .iter()
        .map(|s| SingularSource::new([s.x, s.y], s.strength))
        .collect::<Result<Vec<_>>>()?;
    let spec = GlobalSolutionSpec::new(sources, config.problem.truncation)?;
    let opts = GlobalMeshOptions { r_min: n.r_min, ..GlobalMeshOptions::default() }.refined(1 << config.refine);
    let solution = solve_global(&spec, &opts, n.tol)?;
    let r = kelvin_check(&solution, &spec, n.inner_radius)?;
    let mut csv = Csv::new(&[
        "nodes",
        "inner_radius",
        "mass",
        "predicted_mass",
        "identity_residual",
        "flux_mass",
        "flux_identity_residual",
        "mass_annulus",
        "mass_image",
        "invariance_residual",
        "u1_slope",
        "image_slope",
        "expected_image_slope",
    ]);
    csv.row(&[
        solution.problem.mesh.n_nodes().to_string(),
        num(r.inner_radius),
        num(r.identity.computed),
        num(r.identity.predicted),
        num(r.identity.relative_residual()),
        num(r.flux_identity.computed),
        num(r.flux_identity.relative_residual()),
        num(r.mass_annulus),
        num(r.mass_image),
        num(r.invariance_residual),
        num(r.u1_slope),
        num(r.image_slope),
        num(r.expected_image_slope),
    ]);
    let mut a = Artifacts::default();
    a.check(r.invariance_residual <= 1e-4, || format!("mass invariance residual {:e}", r.invariance_residual));
    let flux = r.flux_identity.relative_residual();
    a.check(flux <= 1e-3, || format!("total-mass identity relative residual {flux:e}"));
    let gap = (r.image_slope - r.expected_image_slope).abs();
    a.check(gap <= 1e-2, || format!("image slope {} against {}", r.image_slope, r.expected_image_slope));
    a.add("kelvin.csv", csv.0);
    a.add("global_solution.txt", write_field(&solution.u1));
    Ok(a)
}

fn branch_of(config: &RunConfig) -> Result<(Problem, Branch)> {
    let field = config.weight_field()?;
    let problem = Problem::new(disk_mesh(config, &field, config.refine)?, field)?;
    let lambda_max = config.numerics.lambda_max_fraction * problem.threshold();
    let step = config.numerics.step.unwrap_or(lambda_max / 20.0).max(f64::MIN_POSITIVE);
    let opts = ContinuationOptions { step, tol: config.numerics.tol, ..ContinuationOptions::default() };
    let branch = trace_branch_with(&problem, None, lambda_max, &opts)?;
    Ok((problem, branch))
}

fn branch_checks(a: &mut Artifacts, branch: &Branch) {
    for p in &branch.points {
        a.check(p.min_eigenvalue > 0.0, || format!("lambda {}: min_eigenvalue {:e}", p.lambda, p.min_eigenvalue));
        a.check(p.interlaces(1e-8), || format!("lambda {}: eigenvalues do not interlace", p.lambda));
        a.check(p.lambda == 0.0 || (p.mass / p.lambda - 1.0).abs() <= 1e-8, || {
            format!("lambda {}: recomputed mass {}", p.lambda, p.mass)
        });
    }
}

fn branch_summary(branch: &Branch) -> String {
    let mut csv = Csv::new(&["points", "lambda_end", "c_fit", "min_bound_ratio", "max_bound_ratio", "eigenvalue_crossing", "endpoint_failure"]);
    let end = branch.points.last().map_or(0.0, |p| p.lambda);
    csv.row(&[
        branch.points.len().to_string(),
        num(end),
        num(branch.c_fit()),
        num(branch.min_bound_ratio()),
        num(branch.max_bound_ratio()),
        branch.eigenvalue_crossing.map_or_else(String::new, num),
        branch.endpoint_failure.as_ref().map_or_else(String::new, |e| format!("\"{e}\"")),
    ]);
    csv.0
}

fn run_continue(config: &RunConfig) -> Result<Artifacts> {
    let (_, branch) = branch_of(config)?;
    let mut a = Artifacts::default();
    branch_checks(&mut a, &branch);
    a.add("branch.csv", branch.to_csv());
    a.add("branch_summary.csv", branch_summary(&branch));
    Ok(a)
}

/// `count` branch points spread evenly over the branch, ends included.
pub fn sample_points(branch: &Branch, count: usize) -> Vec<&BranchPoint> {
    let n = branch.points.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..count).map(|k| if count == 1 { n - 1 } else { k * (n - 1) / (count - 1) }).collect();
    idx.dedup();
    idx.into_iter().map(|i| &branch.points[i]).collect()
}

fn run_probe(config: &RunConfig) -> Result<Artifacts> {
    let n = &config.numerics;
    let (problem, branch) = branch_of(config)?;
    let picks = sample_points(&branch, n.probe_points);
    let settings = ProbeSettings {
        restarts: n.restarts,
        amplitude: n.amplitude,
        distance_tol: n.distance_tol,
        seed: config.seed,
        tol: n.tol,
    };
    let report = uniqueness_probe(&problem, &picks, &settings);
    let mut a = Artifacts::default();
    for o in &report.outcomes {
        a.check(o.on_branch == o.converged, || {
            let mut s = String::new();
            write!(s, "lambda {}: {} of {} converged restarts off the branch", o.lambda, o.converged - o.on_branch, o.converged)
                .expect("writing to a string");
            s
        });
    }
    a.add("branch.csv", branch.to_csv());
    a.add("probe.csv", report.to_csv());
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(dir: &Path) -> RunOptions {
        RunOptions { output: Some(dir.to_path_buf()), ..RunOptions::default() }
    }

    #[test]
    fn empty_config_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_text("", &opts(dir.path()));
        assert_eq!(out.status, ExitStatus::Validation);
        assert!(out.messages.iter().any(|m| m.contains("usage")));
        assert!(out.files.is_empty());
    }

    #[test]
    fn kstar_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let text = "command = \"kstar\"\nrefine = 1\n[problem]\nalpha = 0.3\n[numerics]\nradial_nodes = 400\n";
        let out = run_text(text, &opts(dir.path()));
        assert_eq!(out.status, ExitStatus::Success, "{:?}", out.messages);
        let csv = std::fs::read_to_string(dir.path().join("kstar.csv")).unwrap();
        assert!(csv.starts_with("level,nodes,alpha,k_star,xi0,limit_at_infinity\n"));
        assert_eq!(csv.lines().count(), 3);
        let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap()).unwrap();
        assert_eq!(manifest["run"]["exit_code"].as_integer(), Some(0));
        assert_eq!(manifest["config"]["refine"].as_integer(), Some(1));
    }

    #[test]
    fn overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let text = "command = \"kstar\"\n[problem]\nalpha = 0.0\n[numerics]\nradial_nodes = 100\n";
        let o = RunOptions { output: Some(dir.path().to_path_buf()), seed: Some(9), refine: Some(2) };
        let out = run_text(text, &o);
        let csv = std::fs::read_to_string(dir.path().join("kstar.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4, "{:?}", out.messages);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("seed = 9"));
    }

    #[test]
    fn numerical_failure_has_exit_code_two() {
        let dir = tempfile::tempdir().unwrap();
        // no solution exists beyond the threshold 4π on the disk
        let text = "command = \"solve\"\n[problem]\nlambda = 20.0\nsources = [{ x = 0.0, y = 0.0, strength = -0.5 }]\n[numerics]\nrings = 8\ntheta = 16\n";
        let out = run_text(text, &opts(dir.path()));
        assert_eq!(out.status, ExitStatus::Numerical, "{out:?}");
        assert!(dir.path().join("manifest.toml").exists());
    }

    #[test]
    fn sample_points_spread() {
        let p = Problem::new(Arc::new(DiskMesh::graded_disk(1.0, 6, 16, 1.0).unwrap()), WeightField::constant_one()).unwrap();
        let b = trace_branch_with(&p, None, 2.0, &ContinuationOptions { step: 0.5, ..ContinuationOptions::default() }).unwrap();
        let picks = sample_points(&b, 3);
        let l: Vec<f64> = picks.iter().map(|q| q.lambda).collect();
        assert_eq!(l, vec![0.0, 1.0, 2.0]);
    }
}
