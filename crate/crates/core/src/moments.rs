//! Output moments of an activation driven by a standard-normal input.
//!
//! `E[f(X)] = ∫ f(x) φ(x) dx` and `Var[f(X)] = ∫ f(x)² φ(x) dx - E[f(X)]²`
//! are evaluated by composite quadrature on `[-T, T]`. For SRS the integral
//! is first classified analytically: if the denominator has a real root the
//! integrand is not absolutely integrable and the cell is reported divergent.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::activation::{srs_pole_exists, Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentStatus {
    Convergent,
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentResult<T> {
    Convergent {
        mean: T,
        variance: T,
        /// Largest change of mean or variance when the panel count is halved.
        quadrature_error_estimate: T,
    },
    Divergent,
}

impl<T: Scalar> MomentResult<T> {
    pub fn status(&self) -> MomentStatus {
        match self {
            MomentResult::Convergent { .. } => MomentStatus::Convergent,
            MomentResult::Divergent => MomentStatus::Divergent,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, MomentResult::Divergent)
    }

    pub fn mean(&self) -> Option<T> {
        match *self {
            MomentResult::Convergent { mean, .. } => Some(mean),
            MomentResult::Divergent => None,
        }
    }

    pub fn variance(&self) -> Option<T> {
        match *self {
            MomentResult::Convergent { variance, .. } => Some(variance),
            MomentResult::Divergent => None,
        }
    }

    /// `mean (variance)` with four decimals, or `x` when divergent.
    pub fn cell_text(&self) -> String {
        match *self {
            MomentResult::Convergent { mean, variance, .. } => {
                format!("{:.4} ({:.4})", mean.as_f64(), variance.as_f64())
            }
            MomentResult::Divergent => "x".to_string(),
        }
    }
}

/// True when the activation's Gaussian moments do not exist.
pub fn diverges<T: Scalar>(act: &Activation<T>) -> bool {
    act.kind() == ActivationKind::Srs && srs_pole_exists(act.params()[0], act.params()[1])
}

fn normal_density<T: Scalar>(x: T) -> T {
    (-(x * x) * T::lit(0.5)).exp() / (T::TAU()).sqrt()
}

fn raw_moments<T: Scalar>(act: &Activation<T>, cfg: &QuadratureConfig, panels: usize) -> (T, T) {
    let t = T::lit(cfg.truncation);
    let slope = act.rrelu_midpoint();
    let [m1, m2] = integrate(
        |x| {
            let f = act.value(x, 0, slope);
            let w = normal_density(x);
            [f * w, f * f * w]
        },
        -t,
        t,
        panels,
        cfg.rule,
    );
    (m1, m2 - m1 * m1)
}

/// Expectation and variance of `f(X)`, `X ~ N(0, 1)`.
///
/// SRS parameters are not required to satisfy the pole condition here: a
/// parameter pair with a pole yields `Divergent` rather than an error.
pub fn moments<T: Scalar>(act: &Activation<T>, cfg: &QuadratureConfig) -> Result<MomentResult<T>> {
    cfg.validate()?;
    if diverges(act) {
        return Ok(MomentResult::Divergent);
    }
    act.validate()?;
    let (mean, variance) = raw_moments(act, cfg, cfg.panels);
    let (coarse_mean, coarse_var) = raw_moments(act, cfg, cfg.panels / 2);
    let err = (mean - coarse_mean).abs().max((variance - coarse_var).abs());
    Ok(MomentResult::Convergent {
        mean,
        variance: variance.max(T::zero()),
        quadrature_error_estimate: err,
    })
}

/// Sample statistics of `f(X)` from a seeded normal stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean, `sample_std / sqrt(n)`.
    pub stderr: f64,
    /// Large-sample standard error of the variance, `sqrt((m4 - s^4) / n)`.
    pub variance_stderr: f64,
    pub n: usize,
}

pub const MC_MIN_SAMPLES: usize = 10_000;

/// Monte-Carlo estimate of the same moments [`moments`] computes.
pub fn mc_oracle<T: Scalar>(act: &Activation<T>, n: usize, seed: u64) -> Result<McEstimate> {
    if n < MC_MIN_SAMPLES {
        return Err(Error::Config(format!(
            "Monte-Carlo needs n >= {MC_MIN_SAMPLES}, got {n}"
        )));
    }
    if diverges(act) {
        return Err(Error::Divergent(format!(
            "{} with parameters {:?} has no finite moments",
            act.kind(),
            act.params()
        )));
    }
    act.validate()?;
    let slope = act.rrelu_midpoint();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Streaming central moments up to order four.
    let (mut mean, mut m2, mut m3, mut m4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = act.value(T::lit(z), 0, slope).as_f64();
        let k = (i + 1) as f64;
        let delta = v - mean;
        let dn = delta / k;
        let dn2 = dn * dn;
        let term = delta * dn * (k - 1.0);
        mean += dn;
        m4 += term * dn2 * (k * k - 3.0 * k + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
        m3 += term * dn * (k - 2.0) - 3.0 * dn * m2;
        m2 += term;
    }
    let nf = n as f64;
    let variance = m2 / (nf - 1.0);
    let pop_var = m2 / nf;
    let fourth = m4 / nf;
    Ok(McEstimate {
        mean,
        variance,
        stderr: (variance / nf).sqrt(),
        variance_stderr: ((fourth - pop_var * pop_var).max(0.0) / nf).sqrt(),
        n,
    })
}

/// SRS moment grid: rows are `beta` values, columns `alpha` values.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable<T> {
    pub alphas: Vec<T>,
    pub betas: Vec<T>,
    pub cells: Vec<Vec<MomentResult<T>>>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn get(&self, beta_idx: usize, alpha_idx: usize) -> &MomentResult<T> {
        &self.cells[beta_idx][alpha_idx]
    }

    pub fn divergent_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_divergent()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|r| r.is_empty())
    }

    /// CSV with a header row of alphas and a leading column of betas.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta\\alpha");
        for a in &self.alphas {
            write!(out, ",{}", a.as_f64()).unwrap();
        }
        out.push('\n');
        for (b, row) in self.betas.iter().zip(&self.cells) {
            write!(out, "{}", b.as_f64()).unwrap();
            for cell in row {
                out.push(',');
                out.push_str(&cell.cell_text());
            }
            out.push('\n');
        }
        out
    }
}

/// Computes [`moments`] for every `(alpha, beta)` pair. Cells run in parallel.
pub fn moments_table<T: Scalar>(alphas: &[T], betas: &[T], cfg: &QuadratureConfig) -> Result<MomentTable<T>> {
    cfg.validate()?;
    if let Some(bad) = alphas.iter().chain(betas).find(|v| !(**v > T::zero())) {
        return Err(Error::InvalidParameter(format!(
            "alpha and beta must be positive, got {bad}"
        )));
    }
    let cells = betas
        .par_iter()
        .map(|&beta| {
            alphas
                .iter()
                .map(|&alpha| moments(&srs_unchecked(alpha, beta), cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentTable {
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        cells,
    })
}

/// SRS activation that may sit on the pole side; only used for classification.
fn srs_unchecked<T: Scalar>(alpha: T, beta: T) -> Activation<T> {
    let mut act = Activation::new(ActivationKind::Srs);
    act.params_mut().copy_from_slice(&[alpha, beta]);
    act
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srs(a: f64, b: f64) -> Activation<f64> {
        srs_unchecked(a, b)
    }

    #[test]
    fn identity_has_standard_normal_moments() {
        let act = Activation::<f64>::new(ActivationKind::Identity);
        let r = moments(&act, &QuadratureConfig::default()).unwrap();
        assert!(r.mean().unwrap().abs() < 1e-6);
        assert!((r.variance().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relu_mean_is_half_normal_expectation() {
        let act = Activation::<f64>::new(ActivationKind::Relu);
        let r = moments(&act, &QuadratureConfig::default()).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.mean().unwrap() - expect).abs() < 1e-10);
        // E[relu(X)^2] = 1/2.
        assert!((r.variance().unwrap() - (0.5 - expect * expect)).abs() < 1e-10);
    }

    #[test]
    fn printed_cells() {
        let cfg = QuadratureConfig::default();
        let r = moments(&srs(1.0, 1.0), &cfg).unwrap();
        assert!((r.mean().unwrap() - 0.0685).abs() < 0.005);
        assert!((r.variance().unwrap() - 0.2746).abs() < 0.005);
        let r = moments(&srs(5.0, 3.0), &cfg).unwrap();
        assert!((r.mean().unwrap() - 0.1179).abs() < 0.005);
        assert!((r.variance().unwrap() - 0.8461).abs() < 0.005);
        assert!(moments(&srs(0.5, 2.0), &cfg).unwrap().is_divergent());
    }

    #[test]
    fn rules_agree_and_error_estimate_small() {
        let act = srs(3.0, 2.0);
        let gl = moments(&act, &QuadratureConfig::default()).unwrap();
        let simpson = QuadratureConfig {
            rule: crate::quadrature::QuadratureRule::Simpson,
            ..Default::default()
        };
        let si = moments(&act, &simpson).unwrap();
        assert!((gl.mean().unwrap() - si.mean().unwrap()).abs() < 1e-10);
        match gl {
            MomentResult::Convergent {
                quadrature_error_estimate,
                ..
            } => {
                assert!(quadrature_error_estimate < 1e-10)
            }
            MomentResult::Divergent => unreachable!(),
        }
    }

    #[test]
    fn bad_config_is_an_error() {
        let cfg = QuadratureConfig {
            panels: 0,
            ..Default::default()
        };
        assert!(matches!(moments(&srs(1.0, 1.0), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mc_identity_and_refusals() {
        let act = Activation::<f64>::new(ActivationKind::Identity);
        let est = mc_oracle(&act, 1_000_000, 7).unwrap();
        assert!(est.mean.abs() < 3.0 * est.stderr);
        assert!((est.variance - 1.0).abs() < 3.0 * est.variance_stderr);
        assert!(matches!(mc_oracle(&srs(0.5, 2.0), 20_000, 1), Err(Error::Divergent(_))));
        assert!(matches!(mc_oracle(&act, 10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let act = srs(5.0, 3.0);
        assert_eq!(mc_oracle(&act, 20_000, 3).unwrap(), mc_oracle(&act, 20_000, 3).unwrap());
    }

    #[test]
    fn table_shapes_and_csv() {
        let cfg = QuadratureConfig::default();
        let empty = moments_table::<f64>(&[], &[1.0], &cfg).unwrap();
        assert!(empty.is_empty());
        let one = moments_table(&[1.0], &[1.0], &cfg).unwrap();
        assert_eq!(one.to_csv(), "beta\\alpha,1\n1,0.0685 (0.2746)\n");
        let t = moments_table(&[0.5, 1.0], &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(t.divergent_count(), 1);
        assert!(t.to_csv().lines().nth(2).unwrap().starts_with("2,x,"));
        assert!(moments_table(&[-1.0], &[1.0], &cfg).is_err());
    }
}
