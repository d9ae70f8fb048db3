//! Composite quadrature on a finite interval.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points per panel of the composite Gauss-Legendre rule.
pub const GAUSS_LEGENDRE_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    GaussLegendre,
    Simpson,
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureRule::GaussLegendre => "gauss-legendre",
            QuadratureRule::Simpson => "simpson",
        })
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss-legendre" | "gl" | "gauss" => Ok(QuadratureRule::GaussLegendre),
            "simpson" => Ok(QuadratureRule::Simpson),
            other => Err(Error::Config(format!("unknown quadrature rule '{other}'"))),
        }
    }
}

/// Integration over `[-truncation, truncation]` split into `panels` panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub truncation: f64,
    pub panels: usize,
    pub rule: QuadratureRule,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            truncation: 12.0,
            panels: 2048,
            rule: QuadratureRule::GaussLegendre,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::Config(format!(
                "truncation must be positive, got {}",
                self.truncation
            )));
        }
        if self.panels < 16 {
            return Err(Error::Config(format!("panels must be >= 16, got {}", self.panels)));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates a vector-valued integrand over `[a, b]` with `panels` panels.
///
/// Evaluating several integrands from one closure lets callers share the
/// expensive part (the activation value) across moments.
pub fn integrate<T: Scalar, const N: usize>(
    f: impl Fn(T) -> [T; N],
    a: T,
    b: T,
    panels: usize,
    rule: QuadratureRule,
) -> [T; N] {
    let mut acc = [T::zero(); N];
    if panels == 0 {
        return acc;
    }
    let width = (b - a) / T::lit(panels as f64);
    let half = width * T::lit(0.5);
    match rule {
        QuadratureRule::GaussLegendre => {
            let (xs, ws) = gauss_legendre(GAUSS_LEGENDRE_POINTS);
            let xs: Vec<T> = xs.into_iter().map(T::lit).collect();
            let ws: Vec<T> = ws.into_iter().map(T::lit).collect();
            for p in 0..panels {
                let mid = a + width * T::lit(p as f64 + 0.5);
                let mut panel = [T::zero(); N];
                for (&x, &w) in xs.iter().zip(&ws) {
                    let v = f(mid + half * x);
                    for k in 0..N {
                        panel[k] = panel[k] + w * v[k];
                    }
                }
                for k in 0..N {
                    acc[k] = acc[k] + half * panel[k];
                }
            }
        }
        QuadratureRule::Simpson => {
            let sixth = width / T::lit(6.0);
            let mut left = f(a);
            for p in 0..panels {
                let x0 = a + width * T::lit(p as f64);
                let mid = f(x0 + half);
                let right = if p + 1 == panels { f(b) } else { f(x0 + width) };
                for k in 0..N {
                    acc[k] = acc[k] + sixth * (left[k] + T::lit(4.0) * mid[k] + right[k]);
                }
                left = right;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_and_weights_are_exact_for_polynomials() {
        let (xs, ws) = gauss_legendre(8);
        assert!((ws.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Exact up to degree 15.
        for deg in 0..16u32 {
            let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "deg {deg}: {q} vs {exact}");
        }
        for w in xs.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn odd_node_count_has_zero_center() {
        let (xs, ws) = gauss_legendre(5);
        assert!(xs[2].abs() < 1e-15);
        assert!((ws[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn both_rules_integrate_gaussian_density() {
        let phi = |x: f64| [(-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()];
        for rule in [QuadratureRule::GaussLegendre, QuadratureRule::Simpson] {
            let [v] = integrate(phi, -12.0, 12.0, 2048, rule);
            assert!((v - 1.0).abs() < 1e-12, "{rule}: {v}");
        }
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let [v] = integrate(
            |x: f64| [x * x * x - 2.0 * x + 1.0],
            0.0,
            2.0,
            16,
            QuadratureRule::Simpson,
        );
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let bad = QuadratureConfig {
            panels: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureConfig {
            truncation: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
