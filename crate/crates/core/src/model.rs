//! Closed-form radial model: `U_0`, the threshold eigenfunction `ψ` and the
//! model masses.
//!
//! With `T = r^{2(1-α)}` the model density is
//! `r^{-2α} e^{U_0} = 8(1-α)^2 r^{-2α} / (1+T)^2` and the substitution `t = T`
//! turns `2π r^{1-2α} e^{U_0} dr` into `8π(1-α) dt / (1+t)^2`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialModel {
    pub alpha: f64,
}

impl RadialModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "model index {alpha} must lie in [0, 1)"
            )));
        }
        Ok(Self { alpha })
    }

    fn beta(&self) -> f64 {
        2.0 * (1.0 - self.alpha)
    }

    /// `T = r^{2(1-α)}`
    pub fn t_of_r(&self, r: f64) -> f64 {
        r.powf(self.beta())
    }

    pub fn r_of_t(&self, t: f64) -> f64 {
        t.powf(1.0 / self.beta())
    }

    pub fn u0(&self, r: f64) -> f64 {
        let a = 1.0 - self.alpha;
        -2.0 * self.t_of_r(r).ln_1p() + (8.0 * a * a).ln()
    }

    /// `dU_0/dr`
    pub fn u0_prime(&self, r: f64) -> f64 {
        let t = self.t_of_r(r);
        -2.0 * self.beta() * t / ((1.0 + t) * r)
    }

    /// Model density `r^{-2α} e^{U_0(r)}`.
    pub fn density(&self, r: f64) -> f64 {
        let a = 1.0 - self.alpha;
        let t = self.t_of_r(r);
        8.0 * a * a * r.powf(-2.0 * self.alpha) / ((1.0 + t) * (1.0 + t))
    }

    /// `8π(1-α)`
    pub fn total_mass(&self) -> f64 {
        8.0 * PI * (1.0 - self.alpha)
    }

    /// `∫_{B_R} |x|^{-2α} e^{U_0}`; `R = ∞` is accepted.
    pub fn model_mass(&self, radius: f64) -> f64 {
        if radius.is_infinite() {
            return self.total_mass();
        }
        let t = self.t_of_r(radius);
        if t.is_infinite() {
            return self.total_mass();
        }
        self.total_mass() * t / (1.0 + t)
    }

    /// Radius enclosing model mass `m`; `∞` at `m = 8π(1-α)`.
    pub fn mass_radius(&self, mass: f64) -> f64 {
        let total = self.total_mass();
        if mass <= 0.0 {
            return 0.0;
        }
        if mass >= total {
            return f64::INFINITY;
        }
        self.r_of_t(mass / (total - mass))
    }

    pub fn psi(&self, r: f64) -> f64 {
        let t = self.t_of_r(r);
        if t.is_infinite() {
            return -self.beta();
        }
        self.beta() * (1.0 - t) / (1.0 + t)
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        let t = self.t_of_r(r);
        let b = self.beta();
        -2.0 * b * b * t / ((1.0 + t) * (1.0 + t) * r)
    }
}

/// Selects the zeroth-order term of [`radial_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// `(1/r)(r f')' + r^{-2α} e^{U_0} f`, the linearized operator at `U_0`.
    Linearized,
    /// `(1/r)(r f')' + r^{-2α} e^{f}`, the Liouville operator.
    Liouville,
}

/// Maximum residual of the radial operator on a strictly increasing grid,
/// using the conservative three-point form
/// `(1/r_i) [r_{i+1/2} f'_{i+1/2} - r_{i-1/2} f'_{i-1/2}] / h_i`.
pub fn radial_residual(
    model: &RadialModel,
    r: &[f64],
    values: &[f64],
    mode: Nonlinearity,
) -> Result<f64> {
    let n = r.len();
    if n < 8 || values.len() != n {
        return Err(Error::GridTooCoarse(n.min(values.len())));
    }
    if r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "radial grid must be positive and strictly increasing".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for i in 1..n - 1 {
        let hp = r[i + 1] - r[i];
        let hm = r[i] - r[i - 1];
        let rp = 0.5 * (r[i + 1] + r[i]);
        let rm = 0.5 * (r[i] + r[i - 1]);
        let flux_p = rp * (values[i + 1] - values[i]) / hp;
        let flux_m = rm * (values[i] - values[i - 1]) / hm;
        let lap = (flux_p - flux_m) / (0.5 * (hp + hm) * r[i]);
        let zeroth = match mode {
            Nonlinearity::Linearized => model.density(r[i]) * values[i],
            Nonlinearity::Liouville => r[i].powf(-2.0 * model.alpha) * values[i].exp(),
        };
        worst = worst.max((lap + zeroth).abs());
    }
    Ok(worst)
}

/// Geometric grid with `n` nodes on `[r_min, r_max]`.
pub fn geometric_grid(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
