//! Singular conformal weights `H(x) = e^{h(x)} Π |x - p_i|^{2 s_i}`, the
//! unit-disk Green's function and the cone-index predicates.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Positions closer than this are treated as the same point.
pub const POSITION_EPS: f64 = 1e-12;

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularSource {
    pub position: Point,
    pub strength: f64,
}

impl SingularSource {
    pub fn new(position: Point, strength: f64) -> Result<Self> {
        if !(strength > -1.0) || strength == 0.0 || !strength.is_finite() {
            return Err(Error::InvalidStrength(strength));
        }
        Ok(Self { position, strength })
    }

    /// Total cone angle `2π(1 + s)`.
    pub fn angle(&self) -> f64 {
        2.0 * std::f64::consts::PI * (1.0 + self.strength)
    }
}

/// The smooth factor `h` of a weight.
#[derive(Clone, Default)]
pub enum HarmonicPart {
    #[default]
    Zero,
    /// `h(x) = c + g · x`
    Affine { constant: f64, gradient: Point },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl HarmonicPart {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            HarmonicPart::Zero => 0.0,
            HarmonicPart::Affine { constant, gradient } => {
                constant + gradient[0] * x[0] + gradient[1] * x[1]
            }
            HarmonicPart::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for HarmonicPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarmonicPart::Zero => write!(f, "Zero"),
            HarmonicPart::Affine { constant, gradient } => f
                .debug_struct("Affine")
                .field("constant", constant)
                .field("gradient", gradient)
                .finish(),
            HarmonicPart::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct WeightField {
    sources: Vec<SingularSource>,
    harmonic: HarmonicPart,
}

impl WeightField {
    pub fn new(sources: Vec<SingularSource>, harmonic: HarmonicPart) -> Result<Self> {
        for (i, a) in sources.iter().enumerate() {
            SingularSource::new(a.position, a.strength)?;
            for b in &sources[i + 1..] {
                if dist(a.position, b.position) < POSITION_EPS {
                    return Err(Error::DuplicateSource(a.position[0], a.position[1]));
                }
            }
        }
        Ok(Self { sources, harmonic })
    }

    /// Weight `|x - p|^{2s}` of a single source with `h = 0`.
    pub fn single(position: Point, strength: f64) -> Result<Self> {
        Self::new(vec![SingularSource::new(position, strength)?], HarmonicPart::Zero)
    }

    pub fn constant_one() -> Self {
        Self::default()
    }

    pub fn sources(&self) -> &[SingularSource] {
        &self.sources
    }

    pub fn harmonic(&self) -> &HarmonicPart {
        &self.harmonic
    }

    /// The largest negative cone index `α_0 = max(0, -min s_i)`.
    pub fn alpha0(&self) -> f64 {
        self.sources
            .iter()
            .map(|s| -s.strength)
            .fold(0.0, f64::max)
    }

    /// `8π min(1, min_i (1 + s_i))`, the mean-field threshold `8π(1 - α_0)`.
    pub fn mean_field_threshold(&self) -> f64 {
        8.0 * std::f64::consts::PI * (1.0 - self.alpha0())
    }

    pub fn evaluate(&self, x: Point) -> Result<f64> {
        let h = self.harmonic.eval(x);
        if !h.is_finite() {
            return Err(Error::NonFiniteHarmonicPart(x[0], x[1]));
        }
        let mut log_prod = 0.0;
        for s in &self.sources {
            let d = dist(x, s.position);
            if d < POSITION_EPS {
                if s.strength < 0.0 {
                    return Err(Error::EvaluationAtNegativeSource(x[0], x[1]));
                }
                return Ok(0.0);
            }
            log_prod += 2.0 * s.strength * d.ln();
        }
        Ok((h + log_prod).exp())
    }

    /// `H(x) |x - p_k|^{-2 s_k}` for the source at index `k`, continuous at `p_k`.
    pub fn regular_factor(&self, k: usize, x: Point) -> Result<f64> {
        let h = self.harmonic.eval(x);
        if !h.is_finite() {
            return Err(Error::NonFiniteHarmonicPart(x[0], x[1]));
        }
        let mut log_prod = h;
        for (i, s) in self.sources.iter().enumerate() {
            if i == k {
                continue;
            }
            let d = dist(x, s.position);
            if d < POSITION_EPS {
                if s.strength < 0.0 {
                    return Err(Error::EvaluationAtNegativeSource(x[0], x[1]));
                }
                return Ok(0.0);
            }
            log_prod += 2.0 * s.strength * d.ln();
        }
        Ok(log_prod.exp())
    }

    /// Index of the source located at `x`, if any.
    pub fn source_at(&self, x: Point, eps: f64) -> Option<usize> {
        self.sources
            .iter()
            .position(|s| dist(s.position, x) <= eps)
    }
}

/// Green's function of `-Δ` on the unit disk scaled so that `-ΔG = 4πα δ_p`,
/// `G = 0` on the unit circle.
pub fn disk_green(alpha: f64, p: Point, x: Point) -> Result<f64> {
    let rp = p[0].hypot(p[1]);
    if rp >= 1.0 {
        return Err(Error::SourceOnBoundary(rp));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let d = dist(x, p);
    if d < POSITION_EPS {
        return Err(Error::CoincidentPoints);
    }
    if rp < POSITION_EPS {
        return Ok(-2.0 * alpha * x[0].hypot(x[1]).ln());
    }
    // reflected pole p / |p|^2 scaled by |p|
    let q = [rp * x[0] - p[0] / rp, rp * x[1] - p[1] / rp];
    Ok(2.0 * alpha * (q[0].hypot(q[1]) / d).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeClassification {
    pub chi: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

pub const CLASSIFICATION_TOL: f64 = 1e-12;

/// `χ(S, θ) = χ(S) + Σ (θ_i / 2π - 1)` against `min{2, θ_i / π}`.
pub fn classify_surface(sources: &[SingularSource], euler: f64) -> ConeClassification {
    let chi = euler + sources.iter().map(|s| s.strength).sum::<f64>();
    let threshold = sources
        .iter()
        .map(|s| 2.0 * (1.0 + s.strength))
        .fold(2.0, f64::min);
    let verdict = if (chi - threshold).abs() <= CLASSIFICATION_TOL {
        Verdict::Critical
    } else if chi > threshold {
        Verdict::Supercritical
    } else {
        Verdict::Subcritical
    };
    ConeClassification { chi, threshold, verdict }
}

/// Index inequality for one or two negative cones:
/// `-max α + min α + Σβ ≤ 0` (two) or `-α + Σβ ≤ 0` (one).
pub fn index_inequality_holds(sources: &[SingularSource]) -> Result<bool> {
    let alphas: Vec<f64> = sources
        .iter()
        .filter(|s| s.strength < 0.0)
        .map(|s| -s.strength)
        .collect();
    let beta_sum: f64 = sources
        .iter()
        .filter(|s| s.strength > 0.0)
        .map(|s| s.strength)
        .sum();
    let lhs = match alphas.as_slice() {
        [a] => -a + beta_sum,
        [a, b] => -a.max(*b) + a.min(*b) + beta_sum,
        _ => return Err(Error::UnsupportedSignPattern(alphas.len())),
    };
    Ok(lhs <= 1e-14)
}
