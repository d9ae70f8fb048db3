//! Mini-batch training runs with metric logging.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::activation::{Activation, ActivationKind, PRELU_INIT};
use crate::error::{Error, Result};
use crate::nn::{accuracy, softmax_cross_entropy, Mode, Model};
use crate::rng;
use crate::scalar::Scalar;
use crate::train::config::TrainConfig;
use crate::train::data::DatasetSplit;
use crate::train::init::init_weights;
use crate::train::sgd::{Sgd, SgdConfig};

/// Rows per forward pass when scoring a whole split.
pub const EVAL_CHUNK: usize = 1000;

/// One logging interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step at which the record was taken.
    pub step: usize,
    /// Mean training loss over the interval.
    pub loss: f64,
    /// Mean training-batch accuracy over the interval.
    pub train_acc: f64,
    /// Test error in [0, 1], present on evaluation steps.
    pub test_err: Option<f64>,
    /// Post-activation batch mean per hidden layer, at the logged step.
    pub layer_means: Vec<f64>,
    /// Pre-activation batch mean per hidden layer, at the logged step.
    pub pre_means: Vec<f64>,
    /// `(alpha, beta)` per SRS layer.
    pub srs_params: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<StepRecord>,
    pub classes: usize,
    /// Test error after the last step; NaN if the run diverged first.
    pub final_test_error: f64,
    pub final_srs_params: Vec<(f64, f64)>,
    /// A loss or network output became non-finite; training stopped there.
    pub diverged: bool,
}

impl MetricsLog {
    /// Final test accuracy above 1.5x chance and no NaN along the way.
    pub fn converged(&self) -> bool {
        !self.diverged && self.final_test_error.is_finite() && 1.0 - self.final_test_error > 1.5 / self.classes as f64
    }

    /// `step,loss,train_acc,test_err,layer1_mean..layerK_mean` then
    /// `alpha_k,beta_k` per SRS layer. Test error is empty on steps without
    /// an evaluation.
    pub fn to_csv(&self) -> String {
        let layers = self.records.iter().map(|r| r.layer_means.len()).max().unwrap_or(0);
        let srs = self.records.iter().map(|r| r.srs_params.len()).max().unwrap_or(0);
        let mut s = String::from("step,loss,train_acc,test_err");
        for k in 1..=layers {
            write!(s, ",layer{k}_mean").unwrap();
        }
        for k in 1..=srs {
            write!(s, ",alpha_{k},beta_{k}").unwrap();
        }
        s.push('\n');
        for r in &self.records {
            write!(s, "{},{},{},", r.step, r.loss, r.train_acc).unwrap();
            if let Some(e) = r.test_err {
                write!(s, "{e}").unwrap();
            }
            for m in &r.layer_means {
                write!(s, ",{m}").unwrap();
            }
            for (a, b) in &r.srs_params {
                write!(s, ",{a},{b}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// The activation a config asks for, with its clamp floor applied.
pub fn build_activation<T: Scalar>(cfg: &TrainConfig) -> Result<Activation<T>> {
    let act = match cfg.activation {
        ActivationKind::Srs => Activation::srs(T::lit(cfg.srs_alpha), T::lit(cfg.srs_beta))?,
        ActivationKind::Swish => Activation::swish(T::one(), cfg.swish_trainable),
        ActivationKind::Prelu => Activation::prelu(T::lit(PRELU_INIT), 1)?,
        kind => Activation::new(kind),
    };
    act.with_clamp_floor(T::lit(cfg.clamp_floor))
}

/// A freshly initialised MLP for `cfg` with the given input and class counts.
pub fn build_model<T: Scalar>(cfg: &TrainConfig, features: usize, classes: usize) -> Result<Model<T>> {
    let act = build_activation::<T>(cfg)?;
    let dropout = (cfg.dropout > 0.0).then_some(cfg.dropout);
    let mut model = Model::mlp(features, &cfg.hidden, classes, &act, cfg.use_bn, dropout)?;
    init_weights(
        &mut model,
        cfg.init,
        Some((T::lit(cfg.srs_alpha), T::lit(cfg.srs_beta))),
        cfg.seed,
    )?;
    Ok(model)
}

/// Fraction of `split` misclassified by `model` in eval mode.
pub fn test_error<T: Scalar>(model: &Model<T>, split: &DatasetSplit<T>) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Shape("cannot evaluate on an empty split".into()));
    }
    let mut correct = 0.0;
    let mut start = 0;
    while start < split.len() {
        let end = (start + EVAL_CHUNK).min(split.len());
        let idx: Vec<usize> = (start..end).collect();
        let logits = model.predict(&split.inputs.gather_rows(&idx))?;
        correct += accuracy(&logits, &split.labels[start..end]) * (end - start) as f64;
        start = end;
    }
    Ok(1.0 - correct / split.len() as f64)
}

fn srs_params<T: Scalar>(model: &Model<T>) -> Vec<(f64, f64)> {
    model
        .activations()
        .filter(|a| a.kind() == ActivationKind::Srs)
        .map(|a| (a.params()[0].as_f64(), a.params()[1].as_f64()))
        .collect()
}

/// Seeded epoch-by-epoch permutation of example indices.
struct BatchOrder {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl BatchOrder {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = BatchOrder {
            order: (0..n).collect(),
            cursor: 0,
            epoch: 0,
            seed,
        };
        b.shuffle();
        b
    }

    fn shuffle(&mut self) {
        self.order.sort_unstable();
        self.order.shuffle(&mut rng::rng(self.seed, 0x2000 + self.epoch));
        self.cursor = 0;
    }

    /// Next `size` indices; a short tail starts the next epoch instead.
    fn next(&mut self, size: usize) -> &[usize] {
        if self.cursor + size > self.order.len() {
            self.epoch += 1;
            self.shuffle();
        }
        let out = &self.order[self.cursor..self.cursor + size];
        self.cursor += size;
        out
    }
}

/// Trains a fresh MLP (`cfg.hidden` hidden widths) on `train` and scores it
/// on `test` every `eval_every` steps and after the last step.
pub fn run_experiment<T: Scalar>(
    cfg: &TrainConfig,
    train: &DatasetSplit<T>,
    test: &DatasetSplit<T>,
) -> Result<MetricsLog> {
    cfg.validate()?;
    if train.features() != test.features() || train.classes != test.classes {
        return Err(Error::Shape(format!(
            "train {}x{} classes vs test {}x{} classes",
            train.features(),
            train.classes,
            test.features(),
            test.classes
        )));
    }
    if train.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "batch_size {} exceeds {} training examples",
            cfg.batch_size,
            train.len()
        )));
    }
    let mut model = build_model::<T>(cfg, train.features(), train.classes)?;
    let mut opt = Sgd::new(SgdConfig {
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    })?;
    let mut order = BatchOrder::new(train.len(), cfg.seed);

    let mut log = MetricsLog {
        records: Vec::new(),
        classes: train.classes,
        final_test_error: f64::NAN,
        final_srs_params: srs_params(&model),
        diverged: false,
    };
    let (mut loss_sum, mut acc_sum, mut since) = (0.0, 0.0, 0usize);
    for step in 1..=cfg.steps {
        let idx = order.next(cfg.batch_size).to_vec();
        let batch = train.inputs.gather_rows(&idx);
        let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();

        model.set_mode(Mode::Train);
        let (logits, tape) = match model.forward(&batch, rng::derive_seed(cfg.seed, step as u64)) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                log.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            log.diverged = true;
            break;
        }
        loss_sum += loss;
        acc_sum += accuracy(&logits, &labels);
        since += 1;
        model.backward_params(&tape, &dlogits)?;
        opt.step(&mut model)?;

        let last = step == cfg.steps;
        if step % cfg.log_every == 0 || last {
            model.set_mode(Mode::Eval);
            let test_err = if step % cfg.eval_every == 0 || last {
                match test_error(&model, test) {
                    Ok(e) => Some(e),
                    Err(Error::NonFinite(_)) => {
                        log.diverged = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let stats = tape.activation_stats();
            log.records.push(StepRecord {
                step,
                loss: loss_sum / since as f64,
                train_acc: acc_sum / since as f64,
                test_err,
                layer_means: stats.iter().map(|s| s.post_mean.as_f64()).collect(),
                pre_means: stats.iter().map(|s| s.pre_mean.as_f64()).collect(),
                srs_params: srs_params(&model),
            });
            (loss_sum, acc_sum, since) = (0.0, 0.0, 0);
            if last {
                log.final_test_error = test_err.unwrap_or(f64::NAN);
            }
        }
    }
    log.final_srs_params = srs_params(&model);
    Ok(log)
}
