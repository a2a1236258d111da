//! Kelvin transform `x ↦ x/|x|^2` of global solutions and the global mass
//! identities, on truncated disks.
//!
//! A global solution of `Δu + H e^u = 0` with far-field slope `a` carries the
//! mass `-2π a`, so its restriction to `B_R` is, up to `O(R^{-δ})`, the
//! mean-field solution on `B_R` at `λ = -2π a` shifted by `log(λ / ∫ H e^u)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::WeightedQuadrature;
use crate::mesh::{geometric_rings, DiskMesh};
use crate::solver::{GridField, Problem, SolveOptions, SolveReport};
use crate::spectrum::log_fit;
use crate::weights::{index_inequality_holds, HarmonicPart, Point, SingularSource, WeightField, POSITION_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolutionSpec {
    pub sources: Vec<SingularSource>,
    /// Coefficient of `log|x|` at infinity.
    pub far_field_slope: f64,
    pub truncation_radius: f64,
}

impl GlobalSolutionSpec {
    /// One or two negative sources and any number of positive ones; the
    /// far-field slope is `-4 + 2Σα - 2Σβ`.
    pub fn new(sources: Vec<SingularSource>, truncation_radius: f64) -> Result<Self> {
        WeightField::new(sources.clone(), HarmonicPart::Zero)?;
        let negatives = sources.iter().filter(|s| s.strength < 0.0).count();
        if !(1..=2).contains(&negatives) {
            return Err(Error::UnsupportedSignPattern(negatives));
        }
        let reach = sources.iter().map(|s| s.position[0].hypot(s.position[1])).fold(0.0, f64::max);
        if !(truncation_radius > 10.0 * reach.max(0.1)) {
            return Err(Error::InvalidArgument(format!(
                "truncation radius {truncation_radius} must exceed ten times the source reach"
            )));
        }
        let alpha_sum: f64 = sources.iter().filter(|s| s.strength < 0.0).map(|s| -s.strength).sum();
        let beta_sum: f64 = sources.iter().filter(|s| s.strength > 0.0).map(|s| s.strength).sum();
        Ok(Self { far_field_slope: -4.0 + 2.0 * alpha_sum - 2.0 * beta_sum, sources, truncation_radius })
    }

    /// `∫ H_1 e^{u_1} = -2π · slope = 2π(4 - 2Σα + 2Σβ)`.
    pub fn predicted_mass(&self) -> f64 {
        -2.0 * PI * self.far_field_slope
    }

    pub fn weight_field(&self) -> WeightField {
        WeightField::new(self.sources.clone(), HarmonicPart::Zero).expect("validated sources")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMeshOptions {
    /// Innermost ring; rings are geometric from here to the truncation radius.
    pub r_min: f64,
    /// Nodes per ring; consecutive rings differ by the factor
    /// `1 + 2π / n_theta`.
    pub n_theta: usize,
    pub local_radius: f64,
    pub local_rings: usize,
    pub local_theta: usize,
    pub grading: f64,
}

impl Default for GlobalMeshOptions {
    fn default() -> Self {
        Self { r_min: 1e-5, n_theta: 96, local_radius: 0.15, local_rings: 16, local_theta: 48, grading: 2.0 }
    }
}

impl GlobalMeshOptions {
    /// Every node count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_theta: self.n_theta * factor,
            local_rings: self.local_rings * factor,
            local_theta: self.local_theta * factor,
            ..*self
        }
    }
}

/// Disk `B_R` with geometric rings about the origin and graded patches
/// around the other sources.
pub fn global_mesh(spec: &GlobalSolutionSpec, opts: &GlobalMeshOptions) -> Result<DiskMesh> {
    if !(opts.r_min > 0.0 && opts.r_min < 1.0) {
        return Err(Error::InvalidArgument(format!("r_min = {} must lie in (0, 1)", opts.r_min)));
    }
    let ratio = 1.0 + 2.0 * PI / opts.n_theta as f64;
    let count = ((spec.truncation_radius / opts.r_min).ln() / ratio.ln()).ceil() as usize + 1;
    let rings = geometric_rings(opts.r_min, spec.truncation_radius, count.max(2));
    let positions: Vec<Point> = spec
        .sources
        .iter()
        .map(|s| s.position)
        .filter(|p| p[0].hypot(p[1]) > POSITION_EPS)
        .collect();
    DiskMesh::with_sources_on_rings(
        &rings,
        opts.n_theta,
        &positions,
        opts.local_radius,
        opts.local_rings,
        opts.local_theta,
        opts.grading,
    )
}

#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub problem: Problem,
    /// `u_1` on the truncated disk.
    pub u1: GridField,
    pub report: SolveReport,
    /// `∫_{B_R} H_1 e^{u_1}` by quadrature.
    pub mass: f64,
}

/// Truncated global solve at the predicted mass.
///
/// The truncated problem has several solutions at this mass. Continuation in
/// the mass from `u = 0` ends in concentration at the strongest cone, and
/// meshes that resolve the origin finely admit a solution concentrating
/// there. The global solution is a spherical metric of unit scale, so it is
/// first computed on the default mesh with innermost ring at `10^{-2}` by
/// Newton from the round-sphere profile `log(8ℓ²/(ℓ² + |x|²)²)` with the
/// source logarithms removed, and then carried to the requested resolution
/// and to finer origin resolutions by interpolation.
pub fn solve_global(spec: &GlobalSolutionSpec, mesh_opts: &GlobalMeshOptions, tol: f64) -> Result<GlobalSolution> {
    let target = spec.predicted_mass();
    let coarse = GlobalMeshOptions { r_min: 1e-2_f64.max(mesh_opts.r_min), ..GlobalMeshOptions::default() };
    let mut stages = vec![coarse];
    let mut r = coarse.r_min;
    loop {
        let stage = GlobalMeshOptions { r_min: r, ..*mesh_opts };
        if stage != *stages.last().expect("nonempty") {
            stages.push(stage);
        }
        if r <= mesh_opts.r_min * (1.0 + 1e-12) {
            break;
        }
        r = (r * 0.1).max(mesh_opts.r_min);
    }
    let reach = spec.sources.iter().map(|s| s.position[0].hypot(s.position[1])).fold(0.0, f64::max).max(0.1);
    let mut previous: Option<(Arc<DiskMesh>, Vec<f64>)> = None;
    let mut outcome = None;
    for stage in stages {
        let mesh = Arc::new(global_mesh(spec, &stage)?);
        let problem = Problem::new(mesh.clone(), spec.weight_field())?;
        let starts: Vec<Vec<f64>> = match &previous {
            Some((coarse, u)) => vec![coarse.interpolate(u, &mesh.nodes)?],
            None => [1.0, 2.0, 0.5, 4.0].iter().map(|f| sphere_profile(spec, &mesh, reach * f)).collect(),
        };
        let mut last = None;
        let mut report = None;
        for initial in starts {
            let opts = SolveOptions { tol, forced: true, initial: Some(initial), max_iterations: 100 };
            match problem.solve_mean_field(target, &opts) {
                Ok(r) => {
                    report = Some(r);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let Some(report) = report else {
            return Err(last.expect("at least one start"));
        };
        previous = Some((mesh, report.solution.values.clone()));
        outcome = Some((problem, report));
    }
    let (problem, report) = outcome.expect("at least one stage");
    finish(problem, report, target)
}

/// `log(8ℓ²/(ℓ² + |x|²)²) - Σ s_i log|x - p_i|²` shifted to vanish on
/// average on the boundary, then set to zero there.
fn sphere_profile(spec: &GlobalSolutionSpec, mesh: &DiskMesh, scale: f64) -> Vec<f64> {
    let mut u: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|x| {
            let sphere = -2.0 * (1.0 + (x[0] * x[0] + x[1] * x[1]) / (scale * scale)).ln();
            let logs: f64 = spec
                .sources
                .iter()
                .map(|s| s.strength * ((x[0] - s.position[0]).powi(2) + (x[1] - s.position[1]).powi(2) + 1e-6).ln())
                .sum();
            sphere - logs
        })
        .collect();
    let (sum, count) = mesh
        .boundary
        .iter()
        .zip(&u)
        .filter(|(b, _)| **b)
        .fold((0.0, 0.0), |(s, c), (_, v)| (s + v, c + 1.0));
    let level = sum / count;
    for (v, b) in u.iter_mut().zip(&mesh.boundary) {
        *v = if *b { 0.0 } else { *v - level };
    }
    u
}

fn finish(problem: Problem, report: SolveReport, target: f64) -> Result<GlobalSolution> {
    let shift = (target / report.mass).ln();
    let u1 = GridField::new(problem.mesh.clone(), report.solution.values.iter().map(|v| v + shift).collect())?;
    let mass = problem.weighted_mass(&u1.values);
    Ok(GlobalSolution { problem, u1, report, mass })
}

/// `u_2(x) = u_1(x/|x|^2) - (4 - 2α_1) log|x|` on the inverted mesh; node
/// `i` of the result is the image of node `i` of the input.
pub fn kelvin_transform(field: &GridField, alpha1: f64) -> Result<GridField> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha1 = {alpha1} must lie in (0, 1)")));
    }
    let mesh = Arc::new(field.mesh.inverted()?);
    let c = 4.0 - 2.0 * alpha1;
    let values = mesh.nodes.iter().zip(&field.values).map(|(x, v)| v - c * x[0].hypot(x[1]).ln()).collect();
    GridField::new(mesh, values)
}

/// `φ_1(x) = φ(x/|x|^2)` on the inverted mesh.
pub fn kelvin_test_field(field: &GridField) -> Result<GridField> {
    GridField::new(Arc::new(field.mesh.inverted()?), field.values.clone())
}

fn invert(p: Point) -> Point {
    let r2 = p[0] * p[0] + p[1] * p[1];
    [p[0] / r2, p[1] / r2]
}

/// `V_2(x) = V_1(x/|x|^2)` for `H_1 = |x|^{-2α_1} V_1` with the `α_1`
/// source at the origin. A source `p` of `V_1` moves to `p/|p|^2`, and
/// `|y - p| = |x - p/|p|^2| |p| / |x|` for `y = x/|x|^2` gives the
/// harmonic factor `Σ 2 s log|p| - 2 (Σ s) log|x|` (finite off the origin).
pub fn kelvin_weight(field: &WeightField) -> Result<WeightField> {
    let at_origin = field.source_at([0.0, 0.0], POSITION_EPS);
    let mut moved = Vec::new();
    let mut constant = 0.0;
    let mut total = 0.0;
    for (i, s) in field.sources().iter().enumerate() {
        if Some(i) == at_origin {
            continue;
        }
        moved.push(SingularSource::new(invert(s.position), s.strength)?);
        constant += 2.0 * s.strength * s.position[0].hypot(s.position[1]).ln();
        total += s.strength;
    }
    let inner = field.harmonic().clone();
    let harmonic = HarmonicPart::Custom(Arc::new(move |x: Point| {
        inner.eval(invert(x)) + constant - 2.0 * total * x[0].hypot(x[1]).ln()
    }));
    WeightField::new(moved, harmonic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassIdentity {
    pub computed: f64,
    pub predicted: f64,
    /// `computed / 2π - (4 - 2Σα + 2Σβ)`
    pub residual: f64,
    /// `predicted / 2π ≤ 4(1 - α_2)` with `α_2` the smaller negative index;
    /// `None` when the index inequality fails.
    pub bound_holds: Option<bool>,
}

impl MassIdentity {
    /// `|computed - predicted| / predicted`
    pub fn relative_residual(&self) -> f64 {
        (self.computed - self.predicted).abs() / self.predicted.abs()
    }
}

pub fn total_mass_identity(spec: &GlobalSolutionSpec, computed_mass: f64) -> Result<MassIdentity> {
    let predicted = spec.predicted_mass();
    let residual = computed_mass / (2.0 * PI) - predicted / (2.0 * PI);
    // The bound is equivalent to the index inequality with α_2 the smaller cone.
    let alpha2 = spec.sources.iter().filter(|s| s.strength < 0.0).map(|s| -s.strength).fold(f64::INFINITY, f64::min);
    let bound_holds = if index_inequality_holds(&spec.sources)? {
        Some(predicted / (2.0 * PI) <= 4.0 * (1.0 - alpha2) + 1e-12)
    } else {
        None
    };
    Ok(MassIdentity { computed: computed_mass, predicted, residual, bound_holds })
}

#[derive(Debug, Clone)]
pub struct KelvinReport {
    pub inner_radius: f64,
    /// `∫ H_1 e^{u_1}` over the annulus `ρ ≤ |x| ≤ R`.
    pub mass_annulus: f64,
    /// `∫ V_2 e^{u_2}` over its image `1/R ≤ |x| ≤ 1/ρ`.
    pub mass_image: f64,
    pub invariance_residual: f64,
    pub identity: MassIdentity,
    /// Identity for the mass read off the far field, `-2π` times the fitted
    /// slope of `u_1`.
    pub flux_identity: MassIdentity,
    /// Fit of `u_1` on the outer decade of `B_R`.
    pub u1_slope: f64,
    /// Fit of `u_2` on the outer decade of the image.
    pub image_slope: f64,
    pub expected_image_slope: f64,
}

/// Mass invariance, total-mass identity and far-field slopes for a global
/// solution whose first source is a negative one at the origin.
pub fn kelvin_check(solution: &GlobalSolution, spec: &GlobalSolutionSpec, inner_radius: f64) -> Result<KelvinReport> {
    let field = &solution.problem.field;
    let k = field
        .source_at([0.0, 0.0], POSITION_EPS)
        .ok_or_else(|| Error::InvalidArgument("the Kelvin transform needs a source at the origin".into()))?;
    let alpha1 = -field.sources()[k].strength;
    let mesh = &solution.problem.mesh;
    let cut = inner_radius * (1.0 - 1e-9);
    let (annulus, old_of) = mesh.submesh(|x| x[0].hypot(x[1]) >= cut)?;
    let annulus = Arc::new(annulus);
    let u1: Vec<f64> = old_of.iter().map(|&i| solution.u1.values[i]).collect();
    let order = 4;
    let mass_annulus = WeightedQuadrature::new(&annulus, field, order)?.load(&annulus, &u1).0;
    let u1_annulus = GridField::new(annulus.clone(), u1)?;
    let u2 = kelvin_transform(&u1_annulus, alpha1)?;
    let v2 = kelvin_weight(field)?;
    let mass_image = WeightedQuadrature::new(&u2.mesh, &v2, order)?.load(&u2.mesh, &u2.values).0;
    let r_out = spec.truncation_radius;
    let (u1_slope, _, _) = log_fit(&mesh.nodes, &solution.u1.values, 0.1 * r_out, r_out)
        .ok_or_else(|| Error::InvalidArgument("no nodes in the outer decade".into()))?;
    let r_img = u2.mesh.radius;
    let (image_slope, _, _) = log_fit(&u2.mesh.nodes, &u2.values, 0.1 * r_img, r_img)
        .ok_or_else(|| Error::InvalidArgument("no nodes in the outer decade of the image".into()))?;
    Ok(KelvinReport {
        inner_radius,
        mass_annulus,
        mass_image,
        invariance_residual: (mass_image - mass_annulus).abs() / mass_annulus,
        identity: total_mass_identity(spec, solution.mass)?,
        flux_identity: total_mass_identity(spec, -2.0 * PI * u1_slope)?,
        u1_slope,
        image_slope,
        expected_image_slope: -4.0 + 2.0 * alpha1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldExpansion {
    /// `A = (1/2π) ∫ ρ φ` for the density `ρ = scale · H e^u`.
    pub weighted_coefficient: f64,
    /// Coefficient `a` of the fit `φ ≈ a log r + c` on `[r0, r1]`, so that
    /// `∂_r φ ≈ a / r`.
    pub fitted_coefficient: f64,
    pub fit_deviation: f64,
}

impl FarFieldExpansion {
    /// `|a + A|`: integrating `Δφ = -ρφ` over a large disk gives
    /// `r ∂_r φ → -A` in the mean over circles.
    pub fn mismatch(&self) -> f64 {
        (self.fitted_coefficient + self.weighted_coefficient).abs()
    }
}

/// Far-field expansion of a solution `φ` of `Δφ + scale · H e^u φ = 0`.
pub fn far_field_expansion(problem: &Problem, u: &[f64], scale: f64, phi: &[f64], r0: f64, r1: f64) -> Result<FarFieldExpansion> {
    let n = problem.mesh.n_nodes();
    if u.len() != n || phi.len() != n {
        return Err(Error::InvalidArgument(format!("fields must have {n} values")));
    }
    let (_, load) = problem.quadrature.load(&problem.mesh, u);
    let weighted: f64 = load.iter().zip(phi).map(|(l, p)| l * p).sum();
    let (fitted, _, dev) = log_fit(&problem.mesh.nodes, phi, r0, r1)
        .ok_or_else(|| Error::InvalidArgument(format!("no nodes with {r0} <= r <= {r1}")))?;
    Ok(FarFieldExpansion { weighted_coefficient: scale * weighted / (2.0 * PI), fitted_coefficient: fitted, fit_deviation: dev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DiskMesh;

    fn src(x: f64, y: f64, s: f64) -> SingularSource {
        SingularSource::new([x, y], s).unwrap()
    }

    #[test]
    fn derivative_coefficient_matches_weighted_integral() {
        use crate::fem::to_faer;
        use faer::prelude::*;
        // density half of the exact entire solution for the single cone, so
        // that φ with boundary value 1 grows logarithmically
        let alpha = 0.3;
        let b = 1.0 - alpha;
        let mesh = Arc::new(DiskMesh::log_disk(1e-4, 1e3, 240, 48).unwrap());
        let field = WeightField::single([0.0, 0.0], -alpha).unwrap();
        let problem = Problem::new(mesh.clone(), field).unwrap();
        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|x| (8.0 * b * b).ln() - 2.0 * (1.0 + x[0].hypot(x[1]).powf(2.0 * b)).ln())
            .collect();
        let jac = problem.stiffness.combine(1.0, &problem.quadrature.mass_form(&mesh, &u), -0.5);
        let ones = vec![1.0; mesh.n_nodes()];
        let lifted = jac.matvec(&problem.interior.scatter(&vec![0.0; problem.interior.n], &ones));
        let rhs_int = problem.interior.gather(&lifted);
        let m = problem.interior.n;
        let lu = to_faer(m, &jac.restrict(&problem.interior)).unwrap().sp_lu().unwrap();
        let sol = lu.solve(Mat::from_fn(m, 1, |i, _| -rhs_int[i]));
        let inner: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
        let phi = problem.interior.scatter(&inner, &ones);
        let e = far_field_expansion(&problem, &u, 0.5, &phi, 1e2, 1e3).unwrap();
        assert!(e.weighted_coefficient.abs() > 0.1, "{e:?}");
        assert!(e.mismatch() < 1e-2 * e.weighted_coefficient.abs(), "{e:?}");
    }

    #[test]
    fn predicted_masses() {
        let spec = GlobalSolutionSpec::new(vec![src(0.0, 0.0, -0.3), src(0.5, 0.0, -0.4), src(0.0, 0.5, 0.2)], 1e3).unwrap();
        assert!((spec.predicted_mass() - 6.0 * PI).abs() < 1e-12);
        assert!((spec.far_field_slope + 3.0).abs() < 1e-12);
        let id = total_mass_identity(&spec, 6.0 * PI).unwrap();
        assert!(id.residual.abs() < 1e-12);
        assert_eq!(id.bound_holds, None);
        // index inequality holds: -0.5 + 0.2 + 0.1 <= 0, mass 2π(4 - 1.4 + 0.2)
        let spec = GlobalSolutionSpec::new(vec![src(0.0, 0.0, -0.2), src(0.5, 0.0, -0.5), src(0.0, 0.5, 0.1)], 1e3).unwrap();
        let id = total_mass_identity(&spec, spec.predicted_mass()).unwrap();
        assert_eq!(id.bound_holds, Some(true));
        assert!(GlobalSolutionSpec::new(vec![src(0.0, 0.0, 0.2)], 1e3).is_err());
    }

    #[test]
    fn constant_maps_to_log() {
        let mesh = Arc::new(DiskMesh::inversion_symmetric_annulus(0.1, 10, 24).unwrap());
        let f = GridField::new(mesh.clone(), vec![1.5; mesh.n_nodes()]).unwrap();
        let g = kelvin_transform(&f, 0.3).unwrap();
        for (x, v) in g.mesh.nodes.iter().zip(&g.values) {
            assert!((v - (1.5 - 3.4 * x[0].hypot(x[1]).ln())).abs() < 1e-13);
        }
    }

    #[test]
    fn double_transform_is_identity() {
        let mesh = Arc::new(DiskMesh::inversion_symmetric_annulus(0.1, 10, 24).unwrap());
        let f = GridField::from_fn(mesh.clone(), |x| x[0].sin() + x[1] * x[1]);
        let g = kelvin_transform(&kelvin_transform(&f, 0.4).unwrap(), 0.4).unwrap();
        for (i, x) in g.mesh.nodes.iter().enumerate() {
            assert!((x[0] - mesh.nodes[i][0]).abs() < 1e-13 && (x[1] - mesh.nodes[i][1]).abs() < 1e-13);
            assert!((g.values[i] - f.values[i]).abs() < 1e-12);
        }
        // symmetric rings: the inverted node set is the original one
        let perm = mesh.inversion_permutation().unwrap();
        assert_eq!(perm.len(), mesh.n_nodes());
    }

    #[test]
    fn origin_is_refused() {
        let mesh = Arc::new(DiskMesh::graded_disk(1.0, 4, 8, 1.0).unwrap());
        let f = GridField::new(mesh.clone(), vec![0.0; mesh.n_nodes()]).unwrap();
        assert_eq!(kelvin_transform(&f, 0.3).unwrap_err(), Error::OriginInMesh);
    }

    #[test]
    fn transformed_weight_matches_definition() {
        let field = WeightField::new(vec![src(0.0, 0.0, -0.3), src(0.5, 0.1, -0.4), src(-0.2, 0.4, 0.2)], HarmonicPart::Zero).unwrap();
        let v2 = kelvin_weight(&field).unwrap();
        for x in [[3.0, 1.0], [-0.7, 2.2], [10.0, -4.0]] {
            let y = invert(x);
            let v1 = field.evaluate(y).unwrap() * y[0].hypot(y[1]).powf(0.6);
            assert!((v2.evaluate(x).unwrap() - v1).abs() < 1e-12 * v1);
        }
    }
}
