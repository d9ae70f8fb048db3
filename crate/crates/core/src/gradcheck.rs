//! Central finite-difference check of the network's analytic gradients.
//!
//! Each sampled parameter entry is nudged by `±step` and the numerical slope
//! of the mean cross-entropy is compared with the backward pass. The error
//! measure is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-2)`, so a
//! 1e-5 relative tolerance doubles as a 1e-7 absolute floor for tiny
//! gradients. Probes whose perturbation moves any pre-activation across a
//! kink of a piecewise activation are skipped and counted.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::activation::{Activation, ActivationKind};
use crate::error::Result;
use crate::nn::{softmax_cross_entropy, Layer, Mode, Model};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{init_weights, InitScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Entries probed per parameter tensor; tensors at most this long are probed fully.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            samples_per_tensor: 16,
            seed: 0,
        }
    }
}

/// Denominator floor of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// `layer/param[index]` of the worst entry.
    pub worst: String,
}

impl GradCheckReport {
    fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }

    pub fn empty() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            checked: 0,
            skipped_kinks: 0,
            worst: String::new(),
        }
    }

    pub fn combine(reports: impl IntoIterator<Item = GradCheckReport>) -> Self {
        let mut out = Self::empty();
        for r in reports {
            out.merge(r);
        }
        out
    }
}

struct Probe {
    loss: f64,
    /// Per activation layer, which side of each kink every input lies on.
    regions: Vec<Vec<u8>>,
}

fn probe<T: Scalar>(model: &mut Model<T>, batch: &Tensor<T>, labels: &[usize], seed: u64) -> Result<Probe> {
    let (logits, tape) = model.forward(batch, seed)?;
    let (loss, _) = softmax_cross_entropy(&logits, labels)?;
    let kinds: Vec<_> = model.activations().map(|a| a.kind()).collect();
    let regions = tape
        .activation_inputs()
        .iter()
        .zip(&kinds)
        .map(|(input, kind)| {
            let kinks = kind.kinks();
            if kinks.is_empty() {
                return Vec::new();
            }
            input
                .data()
                .iter()
                .map(|v| kinks.iter().filter(|&&k| v.as_f64() >= k).count() as u8)
                .collect()
        })
        .collect();
    Ok(Probe {
        loss: loss.as_f64(),
        regions,
    })
}

fn nudge<T: Scalar>(model: &mut Model<T>, layer: usize, tensor: usize, index: usize, delta: f64) {
    model.layers_mut()[layer].for_each_param_mut(|t, _, values, _| {
        if t == tensor {
            values[index] = values[index] + T::lit(delta);
        }
    });
}

fn read<T: Scalar>(model: &Model<T>, layer: usize, tensor: usize, index: usize) -> T {
    model.layers()[layer].params()[tensor].value[index]
}

fn write<T: Scalar>(model: &mut Model<T>, layer: usize, tensor: usize, index: usize, value: T) {
    model.layers_mut()[layer].for_each_param_mut(|t, _, values, _| {
        if t == tensor {
            values[index] = value;
        }
    });
}

/// Compares backward-pass gradients of the mean cross-entropy with central
/// differences. The model is cloned; the caller's copy is untouched.
pub fn check_model<T: Scalar>(
    model: &Model<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    forward_seed: u64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut work = model.clone();
    work.set_mode(Mode::Train);
    let (logits, tape) = work.forward(batch, forward_seed)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, labels)?;
    work.backward(&tape, &dlogits)?;
    let base = probe(&mut work, batch, labels, forward_seed)?;

    // Analytic gradients as f64, indexed [layer][tensor][entry].
    let analytic: Vec<Vec<Vec<f64>>> = work
        .layers()
        .iter()
        .map(|l| {
            l.params()
                .iter()
                .map(|p| p.grad.iter().map(|g| g.as_f64()).collect())
                .collect()
        })
        .collect();

    let mut rng = rng::rng(cfg.seed, 0x6C4E);
    let mut report = GradCheckReport::empty();
    let layer_names: Vec<String> = work.layers().iter().map(Layer::name).collect();
    for (li, tensors) in analytic.iter().enumerate() {
        for (ti, grads) in tensors.iter().enumerate() {
            let trainable = match &work.layers()[li] {
                Layer::Act(a) => a.act.trainable_mask().to_vec(),
                _ => vec![true; grads.len()],
            };
            let indices: Vec<usize> = if grads.len() <= cfg.samples_per_tensor {
                (0..grads.len()).collect()
            } else {
                sample(&mut rng, grads.len(), cfg.samples_per_tensor).into_vec()
            };
            for idx in indices {
                if !trainable[idx] {
                    continue;
                }
                let original = read(&work, li, ti, idx);
                nudge(&mut work, li, ti, idx, cfg.step);
                let plus = probe(&mut work, batch, labels, forward_seed)?;
                write(&mut work, li, ti, idx, original);
                nudge(&mut work, li, ti, idx, -cfg.step);
                let minus = probe(&mut work, batch, labels, forward_seed)?;
                write(&mut work, li, ti, idx, original);
                if plus.regions != base.regions || minus.regions != base.regions {
                    report.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus.loss - minus.loss) / (2.0 * cfg.step);
                let err = relative_error(grads[idx], numeric);
                report.checked += 1;
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    let pname = work.layers()[li].params()[ti].name;
                    report.worst = format!(
                        "{li}:{}/{pname}[{idx}] analytic={} numeric={numeric}",
                        layer_names[li], grads[idx]
                    );
                }
            }
        }
    }
    Ok(report)
}

/// Hidden widths of the Fashion-MNIST network.
pub const FULL_MLP_HIDDEN: [usize; 4] = [512, 512, 512, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
}

fn small_activation(kind: ActivationKind) -> Activation<f64> {
    match kind {
        ActivationKind::Swish => Activation::swish(1.0, true),
        kind => Activation::new(kind),
    }
}

fn check_batches(
    model: &Model<f64>,
    inputs: &dyn Fn(&mut rand_chacha::ChaCha8Rng) -> (Tensor<f64>, Vec<usize>),
    batches: usize,
    seed: u64,
    stream: u64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut reports = Vec::with_capacity(batches);
    for b in 0..batches {
        let mut r = rng::rng(seed, stream + b as u64);
        let (x, y) = inputs(&mut r);
        let probe_cfg = GradCheckConfig {
            seed: rng::derive_seed(cfg.seed, stream + b as u64),
            ..*cfg
        };
        reports.push(check_model(model, &x, &y, b as u64, &probe_cfg)?);
    }
    Ok(GradCheckReport::combine(reports))
}

/// Finite-difference checks of every activation kind (6-8-8-3 network,
/// Gaussian inputs with std 2) and of the 784-input MLP with `full_hidden`
/// widths, batch norm off and on. Each case runs `batches` seeded batches of
/// 8 examples.
pub fn gradient_suite(
    batches: usize,
    seed: u64,
    full_hidden: &[usize],
    cfg: &GradCheckConfig,
) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    let small_inputs = |r: &mut rand_chacha::ChaCha8Rng| {
        let data: Vec<f64> = (0..8 * 6).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let labels = (0..8).map(|_| r.random_range(0..3)).collect();
        (Tensor::new(vec![8, 6], data).expect("batch shape"), labels)
    };
    for (k, kind) in ActivationKind::ALL.into_iter().enumerate() {
        let mut model = Model::mlp(6, &[8, 8], 3, &small_activation(kind), false, None)?;
        init_weights(&mut model, InitScheme::Xavier, None, rng::derive_seed(seed, k as u64))?;
        for layer in model.layers_mut() {
            if let Layer::Dense(d) = layer {
                d.bias
                    .data_mut()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(i, b)| *b = 0.1 * ((i + k) as f64).sin());
            }
        }
        let report = check_batches(&model, &small_inputs, batches, seed, 0x100 * (k as u64 + 1), cfg)?;
        out.push(SuiteCase {
            name: format!("activation/{kind}"),
            report,
        });
    }
    let full_inputs = |r: &mut rand_chacha::ChaCha8Rng| {
        let data: Vec<f64> = (0..8 * 784).map(|_| r.random::<f64>()).collect();
        let labels = (0..8).map(|_| r.random_range(0..10)).collect();
        (Tensor::new(vec![8, 784], data).expect("batch shape"), labels)
    };
    for use_bn in [false, true] {
        let act = Activation::srs(3.0, 2.0)?;
        let mut model = Model::mlp(784, full_hidden, 10, &act, use_bn, None)?;
        init_weights(&mut model, InitScheme::default(), None, seed)?;
        let stream = if use_bn { 0x20_000 } else { 0x10_000 };
        let report = check_batches(&model, &full_inputs, batches, seed, stream, cfg)?;
        out.push(SuiteCase {
            name: format!("mlp/srs/bn={}", if use_bn { "on" } else { "off" }),
            report,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_on_a_narrow_mlp() {
        let cases = gradient_suite(2, 5, &[16, 8], &GradCheckConfig::default()).unwrap();
        assert_eq!(cases.len(), ActivationKind::ALL.len() + 2);
        for c in &cases {
            assert!(c.report.checked > 0, "{}", c.name);
            assert!(c.report.max_rel_error < 1e-5, "{}: {}", c.name, c.report.worst);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        // Tiny gradients are judged against the 1e-2 floor.
        assert!((relative_error(1e-9, 0.0) - 1e-7).abs() < 1e-20);
    }
}
