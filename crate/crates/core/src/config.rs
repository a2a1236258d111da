//! Run configuration: one TOML file per run with a command, a problem block,
//! a numerics block and an output block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bol::{parse_region_list, RegionSpec};
use crate::error::{Error, Result};
use crate::weights::{HarmonicPart, SingularSource, WeightField, POSITION_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    BolCheck,
    Spectrum,
    RearrangeCheck,
    KStar,
    KelvinCheck,
    Continue,
    Probe,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Solve,
        Command::BolCheck,
        Command::Spectrum,
        Command::RearrangeCheck,
        Command::KStar,
        Command::KelvinCheck,
        Command::Continue,
        Command::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::BolCheck => "bol-check",
            Command::Spectrum => "spectrum",
            Command::RearrangeCheck => "rearrange-check",
            Command::KStar => "kstar",
            Command::KelvinCheck => "kelvin-check",
            Command::Continue => "continue",
            Command::Probe => "probe",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub x: f64,
    pub y: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicEntry {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub gradient: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemBlock {
    pub sources: Vec<SourceEntry>,
    pub harmonic: Option<HarmonicEntry>,
    /// Disk radius.
    pub radius: f64,
    /// Truncation radius of global problems.
    pub truncation: f64,
    /// Mean-field parameter; when absent the model commands use `alpha`.
    pub lambda: Option<f64>,
    /// Cone parameter of the radial model.
    pub alpha: Option<f64>,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        Self { sources: Vec::new(), harmonic: None, radius: 1.0, truncation: 1e3, lambda: None, alpha: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    pub rings: usize,
    pub theta: usize,
    /// Radial grading exponent; defaults to `1/(1-α)` for a negative source
    /// at the center and 2 around off-center sources.
    pub grading: Option<f64>,
    pub local_radius: f64,
    pub local_rings: usize,
    pub local_theta: usize,
    pub tol: f64,
    /// Bol slack allowed below zero, relative to the right-hand side.
    pub bol_tol: f64,
    /// Continuation step; defaults to a twentieth of `lambda_max`.
    pub step: Option<f64>,
    pub lambda_max_fraction: f64,
    pub restarts: usize,
    pub probe_points: usize,
    pub amplitude: f64,
    pub distance_tol: f64,
    pub eigenvalues: usize,
    /// Region lines: `ball x y r`, `annulus x y r1 r2`, `levelset t`.
    pub regions: Vec<String>,
    /// Random inputs of rearrange-check.
    pub samples: usize,
    /// Thresholds per rearrange-check input.
    pub thresholds: usize,
    pub radial_nodes: usize,
    pub radial_min: f64,
    pub radial_max: f64,
    /// Inner radius of the Kelvin annulus.
    pub inner_radius: f64,
    /// Origin resolution of the global mesh.
    pub r_min: f64,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            rings: 24,
            theta: 64,
            grading: None,
            local_radius: 0.15,
            local_rings: 12,
            local_theta: 32,
            tol: 1e-10,
            bol_tol: 1e-4,
            step: None,
            lambda_max_fraction: 0.9,
            restarts: 20,
            probe_points: 5,
            amplitude: 10.0,
            distance_tol: 1e-6,
            eigenvalues: 4,
            regions: Vec::new(),
            samples: 10,
            thresholds: 20,
            radial_nodes: 250,
            radial_min: 1e-3,
            radial_max: 1e3,
            inner_radius: 1e-4,
            r_min: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Refinement-ladder depth.
    #[serde(default)]
    pub refine: usize,
    #[serde(default)]
    pub problem: ProblemBlock,
    #[serde(default)]
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_seed() -> u64 {
    20_240_601
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Config("empty config".into()));
        }
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn command(&self) -> Result<Command> {
        self.command.parse()
    }

    /// Every violated constraint, in config order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let command = match self.command() {
            Ok(c) => Some(c),
            Err(_) => {
                let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
                v.push(format!("command {:?} is not one of {}", self.command, names.join(", ")));
                None
            }
        };
        let p = &self.problem;
        let n = &self.numerics;
        for (i, s) in p.sources.iter().enumerate() {
            if let Err(e) = SingularSource::new([s.x, s.y], s.strength) {
                v.push(format!("problem.sources[{i}]: {e}"));
            }
            if s.x.hypot(s.y) >= p.radius {
                v.push(format!("problem.sources[{i}] lies outside the disk of radius {}", p.radius));
            }
        }
        if let Some(h) = &p.harmonic {
            if !(h.constant.is_finite() && h.gradient.iter().all(|g| g.is_finite())) {
                v.push("problem.harmonic must be finite".into());
            }
        }
        if !(p.radius > 0.0 && p.radius.is_finite()) {
            v.push(format!("problem.radius = {} must be positive", p.radius));
        }
        if !(p.truncation > 1.0 && p.truncation.is_finite()) {
            v.push(format!("problem.truncation = {} must exceed 1", p.truncation));
        }
        if let Some(l) = p.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                v.push(format!("problem.lambda = {l} must be nonnegative"));
            }
        }
        if let Some(a) = p.alpha {
            if !(0.0..1.0).contains(&a) {
                v.push(format!("problem.alpha = {a} must lie in [0, 1)"));
            }
        }
        for (name, value, min) in [
            ("rings", n.rings, 4),
            ("theta", n.theta, 8),
            ("local_rings", n.local_rings, 2),
            ("local_theta", n.local_theta, 8),
            ("radial_nodes", n.radial_nodes, 8),
        ] {
            if value < min {
                v.push(format!("numerics.{name} = {value} must be at least {min}"));
            }
        }
        for (name, value) in [
            ("tol", n.tol),
            ("bol_tol", n.bol_tol),
            ("distance_tol", n.distance_tol),
            ("local_radius", n.local_radius),
            ("amplitude", n.amplitude),
            ("radial_min", n.radial_min),
            ("inner_radius", n.inner_radius),
            ("r_min", n.r_min),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                v.push(format!("numerics.{name} = {value} must be positive"));
            }
        }
        if let Some(g) = n.grading {
            if !(g >= 1.0 && g.is_finite()) {
                v.push(format!("numerics.grading = {g} must be at least 1"));
            }
        }
        if let Some(s) = n.step {
            if !(s > 0.0 && s.is_finite()) {
                v.push(format!("numerics.step = {s} must be positive"));
            }
        }
        if !(n.lambda_max_fraction > 0.0 && n.lambda_max_fraction <= 1.0) {
            v.push(format!("numerics.lambda_max_fraction = {} must lie in (0, 1]", n.lambda_max_fraction));
        }
        if !(n.radial_max > n.radial_min) {
            v.push("numerics.radial_max must exceed numerics.radial_min".into());
        }
        if n.eigenvalues < 2 {
            v.push(format!("numerics.eigenvalues = {} must be at least 2", n.eigenvalues));
        }
        if !(n.r_min < 1.0) {
            v.push(format!("numerics.r_min = {} must be below 1", n.r_min));
        }
        for (i, line) in n.regions.iter().enumerate() {
            if let Err(e) = parse_region_list(line) {
                v.push(format!("numerics.regions[{i}]: {e}"));
            }
        }
        if let Some(c) = command {
            self.command_violations(c, &mut v);
        }
        v
    }

    fn command_violations(&self, command: Command, v: &mut Vec<String>) {
        let p = &self.problem;
        let needs_sources = |v: &mut Vec<String>| {
            if p.sources.is_empty() {
                v.push(format!("{command} needs at least one entry in problem.sources"));
            }
        };
        match command {
            Command::Solve => {
                needs_sources(v);
                if p.lambda.is_none() {
                    v.push("solve needs problem.lambda".into());
                }
            }
            Command::BolCheck | Command::Spectrum => {
                if p.lambda.is_some() {
                    needs_sources(v);
                } else if p.alpha.is_none() {
                    v.push(format!("{command} needs problem.lambda (solved data) or problem.alpha (model data)"));
                }
            }
            Command::RearrangeCheck | Command::KStar => {
                if p.alpha.is_none() {
                    v.push(format!("{command} needs problem.alpha"));
                }
            }
            Command::KelvinCheck => {
                needs_sources(v);
                let at_origin = p.sources.iter().any(|s| s.x.hypot(s.y) <= POSITION_EPS && s.strength < 0.0);
                if !at_origin {
                    v.push("kelvin-check needs a negative source at the origin".into());
                }
            }
            Command::Continue | Command::Probe => {
                needs_sources(v);
                if command == Command::Probe && self.numerics.probe_points == 0 {
                    v.push("numerics.probe_points must be positive".into());
                }
            }
        }
    }

    /// Parsed and validated; all violations are reported together.
    pub fn validated(text: &str) -> Result<Self> {
        let config = Self::parse(text)?;
        let v = config.violations();
        if v.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn weight_field(&self) -> Result<WeightField> {
        let sources = self
            .problem
            .sources
            .iter()
            .map(|s| SingularSource::new([s.x, s.y], s.strength))
            .collect::<Result<Vec<_>>>()?;
        let harmonic = match &self.problem.harmonic {
            Some(h) => HarmonicPart::Affine { constant: h.constant, gradient: h.gradient },
            None => HarmonicPart::Zero,
        };
        WeightField::new(sources, harmonic)
    }

    pub fn regions(&self) -> Result<Vec<RegionSpec>> {
        parse_region_list(&self.numerics.regions.join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::validated("command = \"kstar\"\n[problem]\nalpha = 0.3\n").unwrap();
        assert_eq!(c.command().unwrap(), Command::KStar);
        assert_eq!(c.numerics, NumericsBlock::default());
        assert_eq!(c.problem.radius, 1.0);
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"
command = "solve"
[problem]
radius = -1.0
sources = [{ x = 0.0, y = 0.0, strength = -1.5 }]
[numerics]
tol = 0.0
rings = 2
regions = ["disk 0 0 1"]
"#;
        let v = RunConfig::parse(text).unwrap().violations();
        let joined = v.join("\n");
        for needle in ["sources[0]", "radius", "numerics.tol", "numerics.rings", "regions[0]", "problem.lambda"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
        assert!(matches!(RunConfig::validated(text), Err(Error::Config(_))));
    }

    #[test]
    fn empty_and_unknown() {
        assert!(RunConfig::parse("").is_err());
        assert!(RunConfig::parse("command = \"kstar\"\nbogus = 1\n").is_err());
        let v = RunConfig::parse("command = \"fly\"").unwrap().violations();
        assert!(v[0].contains("not one of"));
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
    }
}
