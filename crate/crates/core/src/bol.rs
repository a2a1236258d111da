//! Both sides of the Bol isoperimetric inequality for a conformal density
//! `V e^u` and a region, and the Huber inequality for `|x|^{-2α} e^g`.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::DiskMesh;
use crate::region::{value_at, Region, RegionPoint, RegionQuadrature};
use crate::solver::{Problem, SolveKind, SolveReport};
use crate::weights::{Point, WeightField};

/// Relative slack below which a region is reported as an equality case.
pub const EQUALITY_TOL: f64 = 1e-3;

/// Quadrature order used for region integrals.
pub const REGION_ORDER: usize = 4;

/// Density `scale · H(x) e^{v_h(x)}` for a weight `H` and nodal `v`.
#[derive(Debug, Clone)]
pub struct Density {
    pub mesh: Arc<DiskMesh>,
    pub field: WeightField,
    pub log_values: Vec<f64>,
    pub scale: f64,
    quadrature: RegionQuadrature,
}

impl Density {
    pub fn new(mesh: Arc<DiskMesh>, field: WeightField, log_values: Vec<f64>, scale: f64) -> Result<Self> {
        if log_values.len() != mesh.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} nodes",
                log_values.len(),
                mesh.n_nodes()
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("density scale {scale}")));
        }
        let quadrature = RegionQuadrature::new(&mesh, &field, REGION_ORDER);
        Ok(Self { mesh, field, log_values, scale, quadrature })
    }

    /// `V e^w` of a solve: `λ H e^u / ∫ H e^u` for the mean-field equation,
    /// `H e^w` for the unnormalized one.
    pub fn of_solution(problem: &Problem, report: &SolveReport) -> Result<Self> {
        let scale = match report.kind {
            SolveKind::MeanField { lambda } => lambda / report.mass,
            SolveKind::Unnormalized => 1.0,
        };
        Self::new(problem.mesh.clone(), problem.field.clone(), report.solution.values.clone(), scale)
    }

    pub fn quadrature(&self) -> &RegionQuadrature {
        &self.quadrature
    }

    pub fn at(&self, p: &RegionPoint) -> f64 {
        let x = self.mesh.point(p.triangle, p.bary);
        // quadrature points never sit on a source
        let h = self.field.evaluate(x).unwrap_or(0.0);
        self.scale * h * value_at(&self.mesh, &self.log_values, p).exp()
    }

    fn check(&self, region: &Region) -> Result<()> {
        if region.level.len() != self.mesh.n_nodes() {
            return Err(Error::RegionNotInSolutionDomain);
        }
        Ok(())
    }

    /// `∫_Ω density`.
    pub fn mass(&self, region: &Region) -> Result<f64> {
        self.check(region)?;
        Ok(self.quadrature.area_points(&self.mesh, region).iter().map(|p| p.weight * self.at(p)).sum())
    }

    /// `∫_{∂Ω} density^{1/2} ds`.
    pub fn length(&self, region: &Region) -> Result<f64> {
        self.check(region)?;
        Ok(self
            .quadrature
            .boundary_points(&self.mesh, region)
            .iter()
            .map(|p| p.weight * self.at(p).sqrt())
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BolReport {
    pub region: String,
    pub l: f64,
    pub m: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub equality_case: bool,
}

impl BolReport {
    pub fn relative_slack(&self) -> f64 {
        self.slack / self.rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// `2L² ≥ (8π(1-α_0) - M) M` for `L = ∫_{∂ω} (Ve^u)^{1/2} ds`, `M = ∫_ω Ve^u`.
pub fn bol_check(density: &Density, region: &Region, alpha0: f64) -> Result<BolReport> {
    let l = density.length(region)?;
    let m = density.mass(region)?;
    let lhs = 2.0 * l * l;
    let rhs = (8.0 * PI * (1.0 - alpha0) - m) * m;
    let slack = lhs - rhs;
    Ok(BolReport {
        region: region.label.clone(),
        l,
        m,
        lhs,
        rhs,
        slack,
        equality_case: slack.abs() <= EQUALITY_TOL * rhs.abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuberReport {
    pub region: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub constant: f64,
    /// Whether `g` passed the discrete subharmonicity test.
    pub subharmonic: bool,
}

/// `(∫_{∂ω} Ṽ^{1/2} ds)² ≥ c ∫_ω Ṽ` for `Ṽ = |x|^{-2α_0} e^g`, with
/// `c = 4π(1-α_0)` when the origin is inside and `4π` otherwise. The density
/// must have the single source `-α_0` at the origin as its weight.
pub fn huber_check(density: &Density, region: &Region, contains_origin: bool) -> Result<HuberReport> {
    let alpha0 = density.field.alpha0();
    let l = density.length(region)?;
    let m = density.mass(region)?;
    let constant = if contains_origin { 4.0 * PI * (1.0 - alpha0) } else { 4.0 * PI };
    let stiff = crate::fem::stiffness(&density.mesh);
    let kg = stiff.matvec(&density.log_values);
    let scale = density.log_values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let subharmonic = (0..density.mesh.n_nodes())
        .filter(|&i| !density.mesh.boundary[i] && region.contains_node(i))
        .all(|i| kg[i] <= 1e-10 * scale);
    Ok(HuberReport {
        region: region.label.clone(),
        lhs: l * l,
        rhs: constant * m,
        slack: l * l - constant * m,
        constant,
        subharmonic,
    })
}

/// One entry of a region list: `ball x y r`, `annulus x y r1 r2` or
/// `levelset t` (the superlevel set `{u > t}`).
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSpec {
    Ball { center: Point, radius: f64 },
    Annulus { center: Point, inner: f64, outer: f64 },
    LevelSet { threshold: f64 },
}

impl FromStr for RegionSpec {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut it = line.split_whitespace();
        let kind = it.next().ok_or_else(|| Error::Config("empty region line".into()))?;
        let nums: Vec<f64> = it
            .map(|w| w.parse::<f64>().map_err(|_| Error::Config(format!("bad number {w:?} in {line:?}"))))
            .collect::<Result<_>>()?;
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("{kind} takes {n} numbers, got {}", nums.len())))
            }
        };
        match kind {
            "ball" => {
                want(3)?;
                Ok(Self::Ball { center: [nums[0], nums[1]], radius: nums[2] })
            }
            "annulus" => {
                want(4)?;
                Ok(Self::Annulus { center: [nums[0], nums[1]], inner: nums[2], outer: nums[3] })
            }
            "levelset" => {
                want(1)?;
                Ok(Self::LevelSet { threshold: nums[0] })
            }
            other => Err(Error::Config(format!("unknown region kind {other:?}"))),
        }
    }
}

impl RegionSpec {
    pub fn build(&self, mesh: &DiskMesh, values: &[f64]) -> Result<Region> {
        match *self {
            Self::Ball { center, radius } => Region::ball(mesh, center, radius),
            Self::Annulus { center, inner, outer } => Region::annulus(mesh, center, inner, outer),
            Self::LevelSet { threshold } => Region::superlevel(mesh, values, threshold),
        }
    }
}

/// Parses a region list, skipping blank lines and `#` comments.
pub fn parse_region_list(text: &str) -> Result<Vec<RegionSpec>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RadialModel;

    fn model_density(alpha: f64, rings: usize, theta: usize) -> Density {
        let model = RadialModel::new(alpha).unwrap();
        let mesh = Arc::new(DiskMesh::graded_disk(1.0, rings, theta, 1.0 / (1.0 - alpha)).unwrap());
        let u0 = mesh.nodes.iter().map(|x| model.u0(x[0].hypot(x[1]))).collect();
        let field = WeightField::single([0.0, 0.0], -alpha).unwrap();
        Density::new(mesh, field, u0, 1.0).unwrap()
    }

    #[test]
    fn centered_unit_ball_is_an_equality_case() {
        let alpha = 0.5;
        let mut prev = f64::INFINITY;
        for (rings, theta) in [(24, 64), (48, 128)] {
            let d = model_density(alpha, rings, theta);
            let r = bol_check(&d, &Region::whole(&d.mesh), alpha).unwrap();
            let l_exact = 2.0 * PI * 2f64.sqrt() * (1.0 - alpha);
            let m_exact = 4.0 * PI * (1.0 - alpha);
            assert!((r.l - l_exact).abs() < 2e-3 * l_exact, "{} {}", r.l, l_exact);
            assert!((r.m - m_exact).abs() < 2e-3 * m_exact, "{} {}", r.m, m_exact);
            assert!(r.equality_case, "{}", r.relative_slack());
            assert!(r.relative_slack().abs() < prev / 2.0);
            prev = r.relative_slack().abs();
        }
    }

    #[test]
    fn ball_away_from_source_is_strict() {
        let alpha = 0.5;
        let d = model_density(alpha, 32, 96);
        let r = bol_check(&d, &Region::ball(&d.mesh, [0.5, 0.0], 0.3).unwrap(), alpha).unwrap();
        assert!(r.slack > 3.0 * EQUALITY_TOL * r.rhs, "{r:?}");
        assert!(!r.equality_case);
    }

    #[test]
    fn annulus_is_strict() {
        let alpha = 0.5;
        let d = model_density(alpha, 32, 96);
        let r = bol_check(&d, &Region::annulus(&d.mesh, [0.0, 0.0], 0.2, 0.8).unwrap(), alpha).unwrap();
        assert!(r.slack > 3.0 * EQUALITY_TOL * r.rhs, "{r:?}");
    }

    #[test]
    fn huber_equality_for_pure_power() {
        let alpha = 0.3;
        let mesh = Arc::new(DiskMesh::graded_disk(1.0, 40, 128, 1.0 / (1.0 - alpha)).unwrap());
        let field = WeightField::single([0.0, 0.0], -alpha).unwrap();
        let d = Density::new(mesh.clone(), field, vec![0.0; mesh.n_nodes()], 1.0).unwrap();
        let big = 0.75;
        let r = huber_check(&d, &Region::ball(&mesh, [0.0, 0.0], big).unwrap(), true).unwrap();
        let exact = 4.0 * PI * PI * big.powf(2.0 * (1.0 - alpha));
        assert!((r.lhs - exact).abs() < 5e-3 * exact, "{} {}", r.lhs, exact);
        assert!(r.slack.abs() < 5e-3 * exact);
        assert!(r.subharmonic);
        let off = huber_check(&d, &Region::ball(&mesh, [0.5, 0.1], 0.3).unwrap(), false).unwrap();
        assert_eq!(off.constant, 4.0 * PI);
        assert!(off.slack >= 0.0);
    }

    #[test]
    fn classical_isoperimetric_equality() {
        let mesh = Arc::new(DiskMesh::graded_disk(1.0, 40, 256, 1.0).unwrap());
        let d = Density::new(mesh.clone(), WeightField::constant_one(), vec![0.0; mesh.n_nodes()], 1.0).unwrap();
        let r = huber_check(&d, &Region::whole(&mesh), false).unwrap();
        assert!((r.lhs - 4.0 * PI * PI).abs() < 1e-4 * 4.0 * PI * PI);
        assert!(r.slack >= 0.0 && r.slack < 1e-4 * r.lhs, "{r:?}");
    }

    #[test]
    fn region_lists_parse() {
        let specs = parse_region_list("# regions\nball 0 0 0.5\n\nannulus 0.1 0 0.2 0.4\nlevelset 0.3 # t\n").unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[2], RegionSpec::LevelSet { threshold: 0.3 });
        assert!(parse_region_list("ball 1 2").is_err());
        assert!(parse_region_list("square 1 2 3").is_err());
    }

    #[test]
    fn foreign_region_rejected() {
        let d = model_density(0.5, 8, 16);
        let other = DiskMesh::graded_disk(1.0, 6, 16, 1.0).unwrap();
        let r = Region::whole(&other);
        assert_eq!(bol_check(&d, &r, 0.5).unwrap_err(), Error::RegionNotInSolutionDomain);
    }
}
