//! One-dimensional and triangle quadrature rules.
//!
//! Singular weights of the form `|x - p|^e` are integrated with Gauss–Jacobi
//! rules in the collapsed (Duffy) coordinate of a triangle whose first vertex
//! is `p`, so the singular factor is absorbed into the rule itself.

use faer::{Mat, Side};

/// Nodes and weights of a rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

/// Gauss–Jacobi rule for `∫_0^1 y^b f(y) dy` with `n` points (`b > -1`).
///
/// Built by Golub–Welsch from the monic Jacobi recurrence with parameters
/// `(0, b)` on `[-1, 1]`, then mapped to `[0, 1]`.
pub fn gauss_jacobi01(n: usize, b: f64) -> Rule1d {
    assert!(n >= 1 && b > -1.0);
    let a = 0.0;
    let mut jac = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let diag = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let m = kf + 1.0;
            let s1 = 2.0 * m + a + b;
            let beta =
                4.0 * m * (m + a) * (m + b) * (m + a + b) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0));
            let off = beta.sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    // ∫_{-1}^{1} (1+x)^b dx
    let mu0 = 2f64.powf(b + 1.0) / (b + 1.0);
    let eig = jac
        .self_adjoint_eigen(Side::Lower)
        .expect("tridiagonal eigendecomposition");
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = vals[i];
            let v0 = vecs[(0, i)];
            (x, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    // y = (1+x)/2, (1+x)^b = 2^b y^b, dx = 2 dy
    let scale = 2f64.powf(-(b + 1.0));
    Rule1d {
        nodes: pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect(),
        weights: pairs.iter().map(|p| p.1 * scale).collect(),
    }
}

pub fn gauss_legendre01(n: usize) -> Rule1d {
    gauss_jacobi01(n, 0.0)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, tol)];
    let mut total = 0.0;
    let mut depth_guard = 0usize;
    while let Some((lo, hi, t)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        depth_guard += 1;
        if err <= t.max(1e-15 * val.abs()) || (hi - lo).abs() < 1e-14 * (b - a).abs() || depth_guard > 200_000 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t));
            stack.push((mid, hi, 0.5 * t));
        }
    }
    total
}

/// A quadrature point inside a triangle, in barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub bary: [f64; 3],
    /// Weight relative to the triangle area (sums to 1 for a regular rule).
    pub weight: f64,
}

/// Collapsed Gauss rule on the reference triangle with apex at vertex 0.
///
/// With `exponent = e != 0` the rule integrates `|x - v0|^e g(x)` for smooth
/// `g`; the weights already divide out the `s^e` factor so callers evaluate
/// the full integrand at the returned points. The weights are normalized so
/// that `area * Σ w f(x_k)` approximates `∫_T f`.
pub fn triangle_rule(n: usize, exponent: f64) -> Vec<TriPoint> {
    let rs = gauss_jacobi01(n, 1.0 + exponent);
    let rt = gauss_legendre01(n);
    let mut pts = Vec::with_capacity(n * n);
    for (&s, &ws) in rs.nodes.iter().zip(&rs.weights) {
        let unscale = if exponent == 0.0 { 1.0 } else { s.powf(-exponent) };
        for (&t, &wt) in rt.nodes.iter().zip(&rt.weights) {
            let b1 = s * (1.0 - t);
            let b2 = s * t;
            pts.push(TriPoint {
                bary: [1.0 - b1 - b2, b1, b2],
                weight: 2.0 * ws * wt * unscale,
            });
        }
    }
    pts
}

/// Rule with the apex moved to vertex `k` (barycentric coordinates rotated).
pub fn rotate_rule(rule: &[TriPoint], k: usize) -> Vec<TriPoint> {
    rule.iter()
        .map(|p| {
            let mut bary = [0.0; 3];
            for i in 0..3 {
                bary[(i + k) % 3] = p.bary[i];
            }
            TriPoint { bary, weight: p.weight }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre01(5);
        for k in 0..10 {
            let v = r.integrate(0.0, 1.0, |x| x.powi(k));
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn jacobi_absorbs_power_weight() {
        let b = -0.6;
        let r = gauss_jacobi01(6, b);
        // ∫ y^b y^3 = 1/(b+4)
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(3)).sum();
        assert!((v - 1.0 / (b + 4.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        let w = adaptive(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
        assert!((w - 2.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_rule_monomials() {
        // reference triangle (0,0),(1,0),(0,1): ∫ x^2 y = 2!1!/5! = 1/60
        let rule = triangle_rule(4, 0.0);
        let area = 0.5;
        let v: f64 = rule
            .iter()
            .map(|p| {
                let x = p.bary[1];
                let y = p.bary[2];
                p.weight * x * x * y
            })
            .sum::<f64>()
            * area;
        assert!((v - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_singular_apex() {
        // ∫_T r^{-1} over the reference triangle with apex at the origin:
        // ∫_0^{π/2} ∫_0^{1/(cosθ+sinθ)} dr dθ = √2 asinh(1)
        let rule = triangle_rule(24, -1.0);
        let v: f64 = rule
            .iter()
            .map(|p| {
                let x = p.bary[1];
                let y = p.bary[2];
                p.weight / (x * x + y * y).sqrt()
            })
            .sum::<f64>()
            * 0.5;
        let exact = 2f64.sqrt() * 1f64.asinh();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }
}
