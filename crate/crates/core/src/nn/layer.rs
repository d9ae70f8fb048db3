//! Layer types and their forward/backward kernels.

use rand::Rng;

use crate::activation::{srs_backward, Activation, ActivationKind, RRELU_LOWER, RRELU_UPPER};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What an optimiser needs to know about a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnScale,
    BnShift,
    Activation,
}

impl ParamRole {
    /// Weight decay applies to dense weights only.
    pub fn decays(self) -> bool {
        self == ParamRole::Weight
    }
}

/// Fully connected layer, `y = x W + b` with `W` stored `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(vec![inputs, outputs]),
            bias: Tensor::zeros(vec![outputs]),
            grad_weight: Tensor::zeros(vec![inputs, outputs]),
            grad_bias: Tensor::zeros(vec![outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.require_matrix(self.inputs(), "dense input")?;
        let (b, n, k) = (x.rows(), self.outputs(), self.inputs());
        let mut out = Vec::with_capacity(b * n);
        for _ in 0..b {
            out.extend_from_slice(self.bias.data());
        }
        T::gemm(
            b,
            k,
            n,
            T::one(),
            x.data(),
            k as isize,
            1,
            self.weight.data(),
            n as isize,
            1,
            T::one(),
            &mut out,
            n as isize,
            1,
        );
        Tensor::new(vec![b, n], out)
    }

    /// Fills the parameter gradients; returns `dx` only when asked.
    pub(crate) fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, want_dx: bool) -> Option<Tensor<T>> {
        let (b, n, k) = (x.rows(), self.outputs(), self.inputs());
        // dW = x^T dy
        T::gemm(
            k,
            b,
            n,
            T::one(),
            x.data(),
            1,
            k as isize,
            dy.data(),
            n as isize,
            1,
            T::zero(),
            self.grad_weight.data_mut(),
            n as isize,
            1,
        );
        let gb = self.grad_bias.data_mut();
        gb.iter_mut().for_each(|g| *g = T::zero());
        for r in 0..b {
            for (g, &d) in gb.iter_mut().zip(dy.row(r)) {
                *g = *g + d;
            }
        }
        if !want_dx {
            return None;
        }
        // dx = dy W^T
        let mut dx = vec![T::zero(); b * k];
        T::gemm(
            b,
            n,
            k,
            T::one(),
            dy.data(),
            n as isize,
            1,
            self.weight.data(),
            1,
            n as isize,
            T::zero(),
            &mut dx,
            k as isize,
            1,
        );
        Some(Tensor::new(vec![b, k], dx).expect("dense backward shape"))
    }
}

/// Elementwise activation. Trainable activation parameters are shared
/// across the layer (PReLU: one slope per feature when built per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ActLayer<T> {
    pub act: Activation<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> ActLayer<T> {
    pub fn new(act: Activation<T>) -> Self {
        let grad = vec![T::zero(); act.params().len()];
        ActLayer { act, grad }
    }

    /// Returns the output and, for stochastic RReLU in train mode, the sampled slopes.
    pub(crate) fn forward(&self, x: &Tensor<T>, mode: Mode, seed: u64) -> Result<(Tensor<T>, Option<Vec<T>>)> {
        self.act.validate()?;
        let cols = x.cols().max(1);
        let slopes = if mode == Mode::Train && self.act.rrelu_stochastic() {
            let mut r = rng::rng(seed, 0x5EED);
            Some(
                (0..x.len())
                    .map(|_| T::lit(r.random_range(RRELU_LOWER..RRELU_UPPER)))
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        let mid = self.act.rrelu_midpoint();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.act.value(v, i % cols, slopes.as_ref().map_or(mid, |s| s[i])))
            .collect();
        Ok((Tensor::new(x.shape().to_vec(), data)?, slopes))
    }

    pub(crate) fn backward(&mut self, x: &Tensor<T>, slopes: Option<&[T]>, dy: &Tensor<T>) -> Tensor<T> {
        let cols = x.cols().max(1);
        let mid = self.act.rrelu_midpoint();
        self.grad.iter_mut().for_each(|g| *g = T::zero());
        let has_params = !self.grad.is_empty();
        let mut dx = Vec::with_capacity(x.len());
        if self.act.kind() == ActivationKind::Srs {
            let (a, b) = (self.act.params()[0], self.act.params()[1]);
            let (mut ga, mut gb) = (T::zero(), T::zero());
            for (&v, &d) in x.data().iter().zip(dy.data()) {
                let (g, pa, pb) = srs_backward(v, a, b);
                dx.push(d * g);
                ga = ga + d * pa;
                gb = gb + d * pb;
            }
            self.grad[0] = ga;
            self.grad[1] = gb;
            return Tensor::new(x.shape().to_vec(), dx).expect("activation backward shape");
        }
        for (i, (&v, &d)) in x.data().iter().zip(dy.data()).enumerate() {
            let slope = slopes.map_or(mid, |s| s[i]);
            let ch = i % cols;
            dx.push(d * self.act.derivative(v, ch, slope));
            if has_params {
                self.act.accumulate_dparams(v, ch, d, &mut self.grad);
            }
        }
        Tensor::new(x.shape().to_vec(), dx).expect("activation backward shape")
    }
}

/// Batch normalisation over the batch dimension of a `(B, features)` input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub eps: T,
}

/// Values kept from a train-mode batch-norm forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(vec![features], T::one()),
            beta: Tensor::zeros(vec![features]),
            grad_gamma: Tensor::zeros(vec![features]),
            grad_beta: Tensor::zeros(vec![features]),
            running_mean: Tensor::zeros(vec![features]),
            running_var: Tensor::filled(vec![features], T::one()),
            momentum: T::lit(BATCHNORM_MOMENTUM),
            eps: T::lit(BATCHNORM_EPS),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Train mode normalises with batch statistics and updates the running
    /// averages; eval mode uses the running averages and leaves `self` alone.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
        match mode {
            Mode::Eval => Ok((self.forward_eval(x)?, None)),
            Mode::Train => {
                let (y, cache, mean, var) = self.forward_batch(x)?;
                let b = T::lit(x.rows() as f64);
                let unbias = b / (b - T::one());
                let m = self.momentum;
                let keep = T::one() - m;
                for j in 0..self.features() {
                    let rm = &mut self.running_mean.data_mut()[j];
                    *rm = keep * *rm + m * mean[j];
                    let rv = &mut self.running_var.data_mut()[j];
                    *rv = keep * *rv + m * var[j] * unbias;
                }
                Ok((y, Some(cache)))
            }
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.features();
        x.require_matrix(f, "batch-norm input")?;
        let scale: Vec<T> = (0..f)
            .map(|j| self.gamma.data()[j] / (self.running_var.data()[j] + self.eps).sqrt())
            .collect();
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(f) {
            for j in 0..f {
                row[j] = (row[j] - self.running_mean.data()[j]) * scale[j] + self.beta.data()[j];
            }
        }
        Tensor::new(x.shape().to_vec(), out)
    }

    #[allow(clippy::type_complexity)]
    fn forward_batch(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>, Vec<T>, Vec<T>)> {
        let f = self.features();
        x.require_matrix(f, "batch-norm input")?;
        let rows = x.rows();
        if rows < 2 {
            return Err(Error::Shape(format!(
                "train-mode batch norm needs at least 2 rows, got {rows}"
            )));
        }
        let b = T::lit(rows as f64);
        let mut mean = vec![T::zero(); f];
        for r in 0..rows {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / b);
        let mut var = vec![T::zero(); f];
        for r in 0..rows {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let d = v - m;
                *s = *s + d * d;
            }
        }
        var.iter_mut().for_each(|s| *s = *s / b);
        if var.iter().all(|&v| v == T::zero()) {
            return Err(Error::Shape(
                "train-mode batch norm on a batch with identical rows".into(),
            ));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut xhat = x.data().to_vec();
        let mut y = vec![T::zero(); xhat.len()];
        for (xr, yr) in xhat.chunks_mut(f).zip(y.chunks_mut(f)) {
            for j in 0..f {
                xr[j] = (xr[j] - mean[j]) * inv_std[j];
                yr[j] = self.gamma.data()[j] * xr[j] + self.beta.data()[j];
            }
        }
        let shape = x.shape().to_vec();
        let cache = BatchNormCache {
            xhat: Tensor::new(shape.clone(), xhat)?,
            inv_std,
        };
        Ok((Tensor::new(shape, y)?, cache, mean, var))
    }

    pub(crate) fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let f = self.features();
        let rows = dy.rows();
        let b = T::lit(rows as f64);
        let mut sum_dy = vec![T::zero(); f];
        let mut sum_dy_xhat = vec![T::zero(); f];
        for r in 0..rows {
            for j in 0..f {
                let d = dy.row(r)[j];
                sum_dy[j] = sum_dy[j] + d;
                sum_dy_xhat[j] = sum_dy_xhat[j] + d * cache.xhat.row(r)[j];
            }
        }
        self.grad_beta.data_mut().copy_from_slice(&sum_dy);
        self.grad_gamma.data_mut().copy_from_slice(&sum_dy_xhat);
        let mut dx = vec![T::zero(); rows * f];
        for r in 0..rows {
            for j in 0..f {
                let g = self.gamma.data()[j];
                let xh = cache.xhat.row(r)[j];
                let d = dy.row(r)[j];
                dx[r * f + j] = g * cache.inv_std[j] / b * (b * d - sum_dy[j] - xh * sum_dy_xhat[j]);
            }
        }
        Tensor::new(vec![rows, f], dx).expect("batch-norm backward shape")
    }
}

/// Inverted dropout: train-time survivors are scaled by `1 / (1 - rate)`,
/// eval mode is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub(crate) fn forward<T: Scalar>(&self, x: &Tensor<T>, mode: Mode, seed: u64) -> (Tensor<T>, Option<Vec<T>>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let mut r = rng::rng(seed, 0xD50F);
        let scale = T::lit(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if r.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        (
            Tensor::new(x.shape().to_vec(), data).expect("dropout shape"),
            Some(mask),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Act(ActLayer<T>),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout),
}

impl<T: Scalar> Layer<T> {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense(Dense::new(inputs, outputs))
    }

    pub fn act(act: Activation<T>) -> Self {
        Layer::Act(ActLayer::new(act))
    }

    pub fn batch_norm(features: usize) -> Self {
        Layer::BatchNorm(BatchNorm::new(features))
    }

    pub fn dropout(rate: f64) -> Result<Self> {
        Ok(Layer::Dropout(Dropout::new(rate)?))
    }

    pub fn name(&self) -> String {
        match self {
            Layer::Dense(d) => format!("dense({}, {})", d.inputs(), d.outputs()),
            Layer::Act(a) => format!("act({})", a.act.kind()),
            Layer::BatchNorm(bn) => format!("batchnorm({})", bn.features()),
            Layer::Dropout(d) => format!("dropout({})", d.rate()),
        }
    }

    /// Output width given the input width, or `None` if incompatible.
    pub fn output_width(&self, input: usize) -> Option<usize> {
        match self {
            Layer::Dense(d) => (d.inputs() == input).then_some(d.outputs()),
            Layer::BatchNorm(bn) => (bn.features() == input).then_some(input),
            Layer::Act(a) => {
                let p = a.act.params().len();
                let ok = a.act.kind() != ActivationKind::Prelu || p == 1 || p == input;
                ok.then_some(input)
            }
            Layer::Dropout(_) => Some(input),
        }
    }

    /// Named parameter tensors with their gradients and roles.
    pub fn params(&self) -> Vec<ParamView<'_, T>> {
        match self {
            Layer::Dense(d) => vec![
                ParamView {
                    name: "weight",
                    role: ParamRole::Weight,
                    value: d.weight.data(),
                    grad: d.grad_weight.data(),
                },
                ParamView {
                    name: "bias",
                    role: ParamRole::Bias,
                    value: d.bias.data(),
                    grad: d.grad_bias.data(),
                },
            ],
            Layer::BatchNorm(bn) => vec![
                ParamView {
                    name: "gamma",
                    role: ParamRole::BnScale,
                    value: bn.gamma.data(),
                    grad: bn.grad_gamma.data(),
                },
                ParamView {
                    name: "beta",
                    role: ParamRole::BnShift,
                    value: bn.beta.data(),
                    grad: bn.grad_beta.data(),
                },
            ],
            Layer::Act(a) if !a.act.params().is_empty() => vec![ParamView {
                name: "act",
                role: ParamRole::Activation,
                value: a.act.params(),
                grad: &a.grad,
            }],
            _ => Vec::new(),
        }
    }

    /// Mutable counterpart of [`Layer::params`]; activation parameters are
    /// visited only where trainable and re-projected afterwards.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, ParamRole, &mut [T], &[T])) {
        match self {
            Layer::Dense(d) => {
                f(0, ParamRole::Weight, d.weight.data_mut(), d.grad_weight.data());
                f(1, ParamRole::Bias, d.bias.data_mut(), d.grad_bias.data());
            }
            Layer::BatchNorm(bn) => {
                f(0, ParamRole::BnScale, bn.gamma.data_mut(), bn.grad_gamma.data());
                f(1, ParamRole::BnShift, bn.beta.data_mut(), bn.grad_beta.data());
            }
            Layer::Act(a) if !a.act.params().is_empty() => {
                let mask = a.act.trainable_mask().to_vec();
                let grad: Vec<T> = a
                    .grad
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &t)| if t { g } else { T::zero() })
                    .collect();
                if mask.iter().any(|&t| t) {
                    f(0, ParamRole::Activation, a.act.params_mut(), &grad);
                }
                a.act.project();
            }
            _ => {}
        }
    }
}

pub struct ParamView<'a, T> {
    pub name: &'static str,
    pub role: ParamRole,
    pub value: &'a [T],
    pub grad: &'a [T],
}
