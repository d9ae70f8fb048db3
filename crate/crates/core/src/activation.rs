//! Closed-form activations: values, input derivatives and parameter gradients.
//!
//! The Soft-Root-Sign activation is
//!
//! ```text
//! srs(x) = x / (x/alpha + exp(-x/beta))
//! ```
//!
//! Its denominator `D(x)` has minimum `(beta/alpha)(1 - ln(beta/alpha))` at
//! `x = -beta ln(beta/alpha)`, so `D` stays positive exactly when
//! `beta < alpha * e`. Every SRS entry point checks that condition.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LEAKY_RELU_SLOPE: f64 = 0.2;
pub const ELU_ALPHA: f64 = 1.0;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;
pub const PRELU_INIT: f64 = 0.1;
pub const DEFAULT_CLAMP_FLOOR: f64 = 0.01;
/// SRS parameters are projected onto `beta <= POLE_MARGIN * alpha * e`.
pub const POLE_MARGIN: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    /// Reference kind `f(x) = x`, used by analysis checks.
    Identity,
    Srs,
    Relu,
    LeakyRelu,
    Prelu,
    Softplus,
    Elu,
    Selu,
    Swish,
    Sigmoid,
    Softsign,
    Tanh,
    Hardtanh,
    Mish,
    Rrelu,
}

impl ActivationKind {
    /// The fourteen activations compared in the experiments (excludes `Identity`).
    pub const ALL: [ActivationKind; 14] = [
        ActivationKind::Srs,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Prelu,
        ActivationKind::Softplus,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Swish,
        ActivationKind::Sigmoid,
        ActivationKind::Softsign,
        ActivationKind::Tanh,
        ActivationKind::Hardtanh,
        ActivationKind::Mish,
        ActivationKind::Rrelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Srs => "srs",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "lrelu",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Swish => "swish",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softsign => "softsign",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Hardtanh => "hardtanh",
            ActivationKind::Mish => "mish",
            ActivationKind::Rrelu => "rrelu",
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            ActivationKind::Relu
            | ActivationKind::LeakyRelu
            | ActivationKind::Prelu
            | ActivationKind::Rrelu
            | ActivationKind::Selu => &[0.0],
            ActivationKind::Hardtanh => &[-1.0, 1.0],
            _ => &[],
        }
    }

    /// Output bound `sup |f|` for bounded kinds.
    pub fn output_bound(self) -> Option<f64> {
        match self {
            ActivationKind::Sigmoid | ActivationKind::Softsign | ActivationKind::Tanh | ActivationKind::Hardtanh => {
                Some(1.0)
            }
            _ => None,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "identity" | "linear" => ActivationKind::Identity,
            "srs" | "soft-root-sign" => ActivationKind::Srs,
            "relu" => ActivationKind::Relu,
            "lrelu" | "leaky-relu" | "leakyrelu" => ActivationKind::LeakyRelu,
            "prelu" => ActivationKind::Prelu,
            "softplus" => ActivationKind::Softplus,
            "elu" => ActivationKind::Elu,
            "selu" => ActivationKind::Selu,
            "swish" => ActivationKind::Swish,
            "sigmoid" => ActivationKind::Sigmoid,
            "softsign" => ActivationKind::Softsign,
            "tanh" => ActivationKind::Tanh,
            "hardtanh" => ActivationKind::Hardtanh,
            "mish" => ActivationKind::Mish,
            "rrelu" => ActivationKind::Rrelu,
            _ => return Err(Error::InvalidParameter(format!("unknown activation '{s}'"))),
        };
        Ok(kind)
    }
}

/// Extremes of the SRS curve for a fixed parameter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrsShape<T> {
    pub min_location: T,
    pub min_value: T,
    pub supremum: T,
}

/// An activation kind together with its parameters.
///
/// `params` holds the trainable scalars (`[alpha, beta]` for SRS, one slope
/// per channel for PReLU, `[alpha]` for Swish); parameterless kinds carry an
/// empty vector. SRS parameters are always trainable, Swish's only on request.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation<T> {
    kind: ActivationKind,
    params: Vec<T>,
    trainable: Vec<bool>,
    clamp_floor: T,
    rrelu_stochastic: bool,
}

impl<T: Scalar> Activation<T> {
    /// Default-parameterised activation of the given kind.
    ///
    /// SRS starts at `(alpha, beta) = (5, 3)`, PReLU with one channel at 0.1,
    /// Swish with a fixed `alpha = 1`.
    pub fn new(kind: ActivationKind) -> Self {
        let (params, trainable) = match kind {
            ActivationKind::Srs => (vec![T::lit(5.0), T::lit(3.0)], vec![true, true]),
            ActivationKind::Prelu => (vec![T::lit(PRELU_INIT)], vec![true]),
            ActivationKind::Swish => (vec![T::one()], vec![false]),
            _ => (Vec::new(), Vec::new()),
        };
        Activation {
            kind,
            params,
            trainable,
            clamp_floor: T::lit(DEFAULT_CLAMP_FLOOR),
            rrelu_stochastic: false,
        }
    }

    pub fn srs(alpha: T, beta: T) -> Result<Self> {
        check_srs(alpha, beta)?;
        let mut act = Self::new(ActivationKind::Srs);
        act.params = vec![alpha, beta];
        Ok(act)
    }

    pub fn prelu(init: T, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("PReLU needs at least one channel".into()));
        }
        let mut act = Self::new(ActivationKind::Prelu);
        act.params = vec![init; channels];
        act.trainable = vec![true; channels];
        Ok(act)
    }

    pub fn swish(alpha: T, trainable: bool) -> Self {
        let mut act = Self::new(ActivationKind::Swish);
        act.params = vec![alpha];
        act.trainable = vec![trainable];
        act
    }

    pub fn with_clamp_floor(mut self, floor: T) -> Result<Self> {
        if !(floor >= T::zero()) {
            return Err(Error::InvalidParameter(format!("clamp floor {floor} must be >= 0")));
        }
        self.clamp_floor = floor;
        Ok(self)
    }

    /// Switches RReLU between the midpoint slope and per-element sampled slopes.
    pub fn with_rrelu_stochastic(mut self, stochastic: bool) -> Self {
        self.rrelu_stochastic = stochastic;
        self
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn trainable_mask(&self) -> &[bool] {
        &self.trainable
    }

    pub fn clamp_floor(&self) -> T {
        self.clamp_floor
    }

    pub fn rrelu_stochastic(&self) -> bool {
        self.kind == ActivationKind::Rrelu && self.rrelu_stochastic
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            ActivationKind::Srs => vec!["alpha".into(), "beta".into()],
            ActivationKind::Prelu if self.params.len() == 1 => vec!["alpha".into()],
            ActivationKind::Prelu => (0..self.params.len()).map(|c| format!("alpha{c}")).collect(),
            ActivationKind::Swish => vec!["alpha".into()],
            _ => Vec::new(),
        }
    }

    /// Fixed constants of the kind, by name.
    pub fn fixed(&self) -> Vec<(&'static str, f64)> {
        match self.kind {
            ActivationKind::LeakyRelu => vec![("slope", LEAKY_RELU_SLOPE)],
            ActivationKind::Elu => vec![("alpha", ELU_ALPHA)],
            ActivationKind::Selu => vec![("lambda", SELU_LAMBDA), ("alpha", SELU_ALPHA)],
            ActivationKind::Rrelu => vec![("lower", RRELU_LOWER), ("upper", RRELU_UPPER)],
            _ => Vec::new(),
        }
    }

    /// Overwrites the parameter vector. Fails if the count or the SRS
    /// validity condition is violated.
    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} parameters, got {}",
                self.kind,
                self.params.len(),
                params.len()
            )));
        }
        if self.kind == ActivationKind::Srs {
            check_srs(params[0], params[1])?;
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Mutable access for optimisers. Call [`Activation::project`] afterwards.
    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Clamps trainable parameters to `clamp_floor` and, for SRS, pulls
    /// `beta` back to `POLE_MARGIN * alpha * e` when it exceeds that value.
    pub fn project(&mut self) {
        let floor = self.clamp_floor;
        for (p, &t) in self.params.iter_mut().zip(&self.trainable) {
            if t && !(*p >= floor) {
                *p = floor;
            }
        }
        if self.kind == ActivationKind::Srs {
            let cap = T::lit(POLE_MARGIN) * self.params[0] * T::E();
            if self.params[1] > cap {
                self.params[1] = cap;
            }
        }
    }

    /// Checks the parameter invariants of the kind.
    pub fn validate(&self) -> Result<()> {
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} has non-finite parameters",
                self.kind
            )));
        }
        if self.kind == ActivationKind::Srs {
            check_srs(self.params[0], self.params[1])?;
        }
        Ok(())
    }

    pub fn eval(&self, x: T) -> Result<T> {
        self.eval_channel(x, 0)
    }

    pub fn eval_dx(&self, x: T) -> Result<T> {
        self.eval_dx_channel(x, 0)
    }

    pub fn eval_dparams(&self, x: T) -> Result<Vec<T>> {
        self.eval_dparams_channel(x, 0)
    }

    /// Value at `x` for channel `ch` (only PReLU distinguishes channels).
    pub fn eval_channel(&self, x: T, ch: usize) -> Result<T> {
        self.checked(x)?;
        Ok(self.value(x, ch, self.rrelu_midpoint()))
    }

    pub fn eval_dx_channel(&self, x: T, ch: usize) -> Result<T> {
        self.checked(x)?;
        Ok(self.derivative(x, ch, self.rrelu_midpoint()))
    }

    pub fn eval_dparams_channel(&self, x: T, ch: usize) -> Result<Vec<T>> {
        self.checked(x)?;
        let mut out = vec![T::zero(); self.params.len()];
        self.accumulate_dparams(x, ch, T::one(), &mut out);
        Ok(out)
    }

    fn checked(&self, x: T) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x.as_f64()));
        }
        self.validate()
    }

    pub(crate) fn rrelu_midpoint(&self) -> T {
        T::lit(0.5 * (RRELU_LOWER + RRELU_UPPER))
    }

    fn channel_param(&self, ch: usize) -> T {
        self.params[ch % self.params.len()]
    }

    /// Unchecked value. `slope` is the negative-side RReLU slope.
    pub(crate) fn value(&self, x: T, ch: usize, slope: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Srs => srs_value(x, self.params[0], self.params[1]),
            ActivationKind::Relu => x.max(zero),
            ActivationKind::LeakyRelu => {
                if x >= zero {
                    x
                } else {
                    T::lit(LEAKY_RELU_SLOPE) * x
                }
            }
            ActivationKind::Prelu => {
                if x >= zero {
                    x
                } else {
                    self.channel_param(ch) * x
                }
            }
            ActivationKind::Rrelu => {
                if x >= zero {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Softplus => softplus(x),
            ActivationKind::Elu => {
                if x >= zero {
                    x
                } else {
                    T::lit(ELU_ALPHA) * x.exp_m1()
                }
            }
            ActivationKind::Selu => {
                let lambda = T::lit(SELU_LAMBDA);
                if x >= zero {
                    lambda * x
                } else {
                    lambda * T::lit(SELU_ALPHA) * x.exp_m1()
                }
            }
            ActivationKind::Swish => x * sigmoid(self.params[0] * x),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Softsign => x / (one + x.abs()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Hardtanh => x.max(-one).min(one),
            ActivationKind::Mish => x * softplus(x).tanh(),
        }
    }

    /// Unchecked derivative; kinks take the right-hand value.
    pub(crate) fn derivative(&self, x: T, ch: usize, slope: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self.kind {
            ActivationKind::Identity => one,
            ActivationKind::Srs => srs_derivative(x, self.params[0], self.params[1]),
            ActivationKind::Relu => {
                if x >= zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::LeakyRelu => {
                if x >= zero {
                    one
                } else {
                    T::lit(LEAKY_RELU_SLOPE)
                }
            }
            ActivationKind::Prelu => {
                if x >= zero {
                    one
                } else {
                    self.channel_param(ch)
                }
            }
            ActivationKind::Rrelu => {
                if x >= zero {
                    one
                } else {
                    slope
                }
            }
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::Elu => {
                if x >= zero {
                    one
                } else {
                    T::lit(ELU_ALPHA) * x.exp()
                }
            }
            ActivationKind::Selu => {
                let lambda = T::lit(SELU_LAMBDA);
                if x >= zero {
                    lambda
                } else {
                    lambda * T::lit(SELU_ALPHA) * x.exp()
                }
            }
            ActivationKind::Swish => {
                let a = self.params[0];
                let s = sigmoid(a * x);
                s + a * x * s * (one - s)
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (one - s)
            }
            ActivationKind::Softsign => {
                let d = one + x.abs();
                one / (d * d)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                one - t * t
            }
            ActivationKind::Hardtanh => {
                if x >= -one && x < one {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::Mish => {
                let t = softplus(x).tanh();
                t + x * (one - t * t) * sigmoid(x)
            }
        }
    }

    /// Adds `upstream * d f(x) / d params` into `out`, which is ordered like
    /// `params`. Non-trainable parameters receive nothing.
    pub(crate) fn accumulate_dparams(&self, x: T, ch: usize, upstream: T, out: &mut [T]) {
        match self.kind {
            ActivationKind::Srs => {
                let (da, db) = srs_param_grad(x, self.params[0], self.params[1]);
                out[0] = out[0] + upstream * da;
                out[1] = out[1] + upstream * db;
            }
            ActivationKind::Prelu => {
                if x < T::zero() {
                    let c = ch % self.params.len();
                    out[c] = out[c] + upstream * x;
                }
            }
            ActivationKind::Swish if self.trainable[0] => {
                let s = sigmoid(self.params[0] * x);
                out[0] = out[0] + upstream * x * x * s * (T::one() - s);
            }
            _ => {}
        }
    }
}

fn check_srs<T: Scalar>(alpha: T, beta: T) -> Result<()> {
    if !(alpha > T::zero() && beta > T::zero()) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "SRS needs finite alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}"
        )));
    }
    if srs_pole_exists(alpha, beta) {
        return Err(Error::InvalidParameter(format!(
            "SRS denominator has a real root: beta={beta} >= alpha*e={}",
            alpha * T::E()
        )));
    }
    Ok(())
}

/// True iff the SRS denominator `x/alpha + exp(-x/beta)` has a real root,
/// i.e. `beta >= alpha * e`.
pub fn srs_pole_exists<T: Scalar>(alpha: T, beta: T) -> bool {
    beta >= alpha * T::E()
}

/// Minimum location, minimum value and supremum of SRS.
pub fn srs_shape<T: Scalar>(alpha: T, beta: T) -> Result<SrsShape<T>> {
    check_srs(alpha, beta)?;
    Ok(SrsShape {
        min_location: -beta,
        min_value: alpha * beta / (beta - alpha * T::E()),
        supremum: alpha,
    })
}

/// SRS value. For `x <= 0` numerator and denominator are multiplied by
/// `exp(x/beta)` so nothing overflows for large negative inputs.
#[inline]
pub(crate) fn srs_value<T: Scalar>(x: T, alpha: T, beta: T) -> T {
    if x > T::zero() {
        // The ratio stays <= 1 after rounding, so the result never exceeds alpha.
        alpha * (x / (x + alpha * (-x / beta).exp()))
    } else {
        let e = (x / beta).exp();
        x * e / ((x / alpha) * e + T::one())
    }
}

#[inline]
pub(crate) fn srs_derivative<T: Scalar>(x: T, alpha: T, beta: T) -> T {
    let one = T::one();
    if x > T::zero() {
        let e = (-x / beta).exp();
        let d = x / alpha + e;
        (one + x / beta) * e / (d * d)
    } else {
        let e = (x / beta).exp();
        let d = (x / alpha) * e + one;
        (one + x / beta) * e / (d * d)
    }
}

/// `(d srs / d alpha, d srs / d beta)`.
#[inline]
pub(crate) fn srs_param_grad<T: Scalar>(x: T, alpha: T, beta: T) -> (T, T) {
    // r = x e / D and q = x / D keep every product finite at extreme x.
    let (r, q, e) = if x > T::zero() {
        let e = (-x / beta).exp();
        let d = x / alpha + e;
        (x / d, x / d, e)
    } else {
        let e = (x / beta).exp();
        let d = (x / alpha) * e + T::one();
        (x * e / d, x / d, e)
    };
    let d_alpha = r * r / (alpha * alpha);
    let d_beta = if x > T::zero() {
        -q * q * e / (beta * beta)
    } else {
        -r * q / (beta * beta)
    };
    (d_alpha, d_beta)
}

/// Derivative and both parameter gradients from one exponential.
#[inline]
pub(crate) fn srs_backward<T: Scalar>(x: T, alpha: T, beta: T) -> (T, T, T) {
    let one = T::one();
    let (e, d, r) = if x > T::zero() {
        let e = (-x / beta).exp();
        let d = x / alpha + e;
        (e, d, x / d)
    } else {
        let e = (x / beta).exp();
        let d = (x / alpha) * e + one;
        (e, d, x * e / d)
    };
    let q = x / d;
    let dx = (one + x / beta) * e / (d * d);
    let d_alpha = r * r / (alpha * alpha);
    let d_beta = if x > T::zero() {
        -q * q * e / (beta * beta)
    } else {
        -r * q / (beta * beta)
    };
    (dx, d_alpha, d_beta)
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
