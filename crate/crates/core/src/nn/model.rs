use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::nn::layer::{BatchNormCache, Layer, Mode};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Intermediates of one train-mode forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    entries: Vec<TapeEntry<T>>,
    trained: bool,
}

#[derive(Debug, Clone)]
enum TapeEntry<T> {
    Dense {
        input: Tensor<T>,
    },
    Act {
        input: Tensor<T>,
        slopes: Option<Vec<T>>,
        output_mean: T,
    },
    BatchNorm {
        cache: BatchNormCache<T>,
    },
    Dropout {
        mask: Option<Vec<T>>,
    },
}

/// Mean input and output of one activation layer over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationStats<T> {
    pub pre_mean: T,
    pub post_mean: T,
}

impl<T: Scalar> Tape<T> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inputs of every activation layer, in layer order.
    pub fn activation_inputs(&self) -> Vec<&Tensor<T>> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TapeEntry::Act { input, .. } => Some(input),
                _ => None,
            })
            .collect()
    }

    /// Pre- and post-activation batch means, one entry per activation layer.
    pub fn activation_stats(&self) -> Vec<ActivationStats<T>> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TapeEntry::Act { input, output_mean, .. } => Some(ActivationStats {
                    pre_mean: input.mean(),
                    post_mean: *output_mean,
                }),
                _ => None,
            })
            .collect()
    }
}

/// Ordered stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    layers: Vec<Layer<T>>,
    mode: Mode,
    input_width: usize,
    grads_ready: bool,
}

impl<T: Scalar> Model<T> {
    /// Checks that consecutive layer widths line up.
    pub fn new(input_width: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let mut width = input_width;
        for (i, layer) in layers.iter().enumerate() {
            width = layer
                .output_width(width)
                .ok_or_else(|| Error::Shape(format!("layer {i} ({}) does not accept width {width}", layer.name())))?;
        }
        Ok(Model {
            layers,
            mode: Mode::Train,
            input_width,
            grads_ready: false,
        })
    }

    /// `Dense -> [BatchNorm] -> Act -> [Dropout]` per hidden width, then a
    /// final dense layer. Weights start at zero; see `train::init_weights`.
    /// PReLU gets one slope per hidden unit.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        classes: usize,
        act: &Activation<T>,
        use_bn: bool,
        dropout: Option<f64>,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in hidden {
            layers.push(Layer::dense(width, h));
            if use_bn {
                layers.push(Layer::batch_norm(h));
            }
            let layer_act = if act.kind() == ActivationKind::Prelu && act.params().len() == 1 {
                Activation::prelu(act.params()[0], h)?.with_clamp_floor(act.clamp_floor())?
            } else {
                act.clone()
            };
            layers.push(Layer::act(layer_act));
            if let Some(rate) = dropout {
                layers.push(Layer::dropout(rate)?);
            }
            width = h;
        }
        layers.push(Layer::dense(width, classes));
        Model::new(input, layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_width, |w, l| l.output_width(w).unwrap_or(w))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.value.len()).sum()
    }

    /// Activations in layer order.
    pub fn activations(&self) -> impl Iterator<Item = &Activation<T>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Act(a) => Some(&a.act),
            _ => None,
        })
    }

    pub(crate) fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub(crate) fn clear_grads_ready(&mut self) {
        self.grads_ready = false;
    }

    /// Runs the network. In train mode batch norm uses batch statistics (and
    /// updates its running averages) and dropout/RReLU draw from `seed`; the
    /// returned tape feeds [`Model::backward`]. In eval mode nothing is
    /// mutated and the tape is empty.
    pub fn forward(&mut self, batch: &Tensor<T>, seed: u64) -> Result<(Tensor<T>, Tape<T>)> {
        if self.mode == Mode::Eval {
            return Ok((self.predict(batch)?, Tape::default()));
        }
        batch.require_matrix(self.input_width, "model input")?;
        if batch.rows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let layer_seed = derive_seed(seed, i as u64);
            x = match layer {
                Layer::Dense(d) => {
                    let y = d.forward(&x)?;
                    entries.push(TapeEntry::Dense { input: x });
                    y
                }
                Layer::Act(a) => {
                    let (y, slopes) = a.forward(&x, Mode::Train, layer_seed)?;
                    entries.push(TapeEntry::Act {
                        input: x,
                        slopes,
                        output_mean: y.mean(),
                    });
                    y
                }
                Layer::BatchNorm(bn) => {
                    let (y, cache) = bn.forward(&x, Mode::Train)?;
                    entries.push(TapeEntry::BatchNorm {
                        cache: cache.expect("train cache"),
                    });
                    y
                }
                Layer::Dropout(d) => {
                    let (y, mask) = d.forward(&x, Mode::Train, layer_seed);
                    entries.push(TapeEntry::Dropout { mask });
                    y
                }
            };
        }
        if !x.is_finite() {
            return Err(Error::NonFinite(f64::NAN));
        }
        Ok((x, Tape { entries, trained: true }))
    }

    /// Eval-mode forward pass; never mutates the model.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.predict_with_stats(batch).map(|(y, _)| y)
    }

    /// Eval-mode forward that also reports per-activation-layer means.
    pub fn predict_with_stats(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Vec<ActivationStats<T>>)> {
        batch.require_matrix(self.input_width, "model input")?;
        let mut stats = Vec::new();
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => d.forward(&x)?,
                Layer::Act(a) => {
                    let (y, _) = a.forward(&x, Mode::Eval, 0)?;
                    stats.push(ActivationStats {
                        pre_mean: x.mean(),
                        post_mean: y.mean(),
                    });
                    y
                }
                Layer::BatchNorm(bn) => bn.forward_eval(&x)?,
                Layer::Dropout(_) => x,
            };
        }
        if !x.is_finite() {
            return Err(Error::NonFinite(f64::NAN));
        }
        Ok((x, stats))
    }

    /// Backpropagates `grad_output` (d loss / d logits) through the tape,
    /// overwriting every layer's gradients. Returns d loss / d input.
    pub fn backward(&mut self, tape: &Tape<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_impl(tape, grad_output, true)
            .map(|dx| dx.expect("input gradient requested"))
    }

    /// As [`Model::backward`] but skips the input gradient.
    pub fn backward_params(&mut self, tape: &Tape<T>, grad_output: &Tensor<T>) -> Result<()> {
        self.backward_impl(tape, grad_output, false).map(|_| ())
    }

    fn backward_impl(
        &mut self,
        tape: &Tape<T>,
        grad_output: &Tensor<T>,
        want_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        if !tape.trained || tape.entries.len() != self.layers.len() {
            return Err(Error::State(
                "backward needs the tape of a train-mode forward pass on this model".into(),
            ));
        }
        grad_output.require_matrix(self.output_width(), "output gradient")?;
        let mut dy = grad_output.clone();
        for (i, (layer, entry)) in self.layers.iter_mut().zip(&tape.entries).enumerate().rev() {
            dy = match (layer, entry) {
                (Layer::Dense(d), TapeEntry::Dense { input }) => {
                    if dy.rows() != input.rows() {
                        return Err(Error::Shape("output gradient batch size differs from tape".into()));
                    }
                    match d.backward(input, &dy, want_input || i > 0) {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (Layer::Act(a), TapeEntry::Act { input, slopes, .. }) => a.backward(input, slopes.as_deref(), &dy),
                (Layer::BatchNorm(bn), TapeEntry::BatchNorm { cache }) => bn.backward(cache, &dy),
                (Layer::Dropout(_), TapeEntry::Dropout { mask }) => match mask {
                    Some(m) => {
                        let data = dy.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
                        Tensor::new(dy.shape().to_vec(), data)?
                    }
                    None => dy,
                },
                _ => return Err(Error::State("tape does not match the model's layers".into())),
            };
        }
        self.grads_ready = true;
        Ok(want_input.then_some(dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Dense;

    #[test]
    fn dense_then_srs_composes() {
        let mut d = Dense::<f64>::new(1, 1);
        d.weight = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        d.bias = Tensor::new(vec![1], vec![1.0]).unwrap();
        let act = Activation::srs(5.0, 3.0).unwrap();
        let mut m = Model::new(1, vec![Layer::Dense(d), Layer::act(act.clone())]).unwrap();
        let (y, tape) = m.forward(&Tensor::from_rows(&[vec![0.0]]).unwrap(), 0).unwrap();
        assert_eq!(y.data(), &[act.eval(1.0).unwrap()]);
        assert_eq!(tape.activation_stats().len(), 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let layers = vec![Layer::<f64>::dense(2, 3), Layer::dense(4, 1)];
        assert!(matches!(Model::new(2, layers), Err(Error::Shape(_))));
        let mut m = Model::<f64>::new(2, vec![Layer::dense(2, 3)]).unwrap();
        assert!(m.forward(&Tensor::zeros(vec![1, 3]), 0).is_err());
    }

    #[test]
    fn backward_requires_train_tape() {
        let mut m = Model::<f64>::new(2, vec![Layer::dense(2, 2)]).unwrap();
        let g = Tensor::zeros(vec![1, 2]);
        assert!(matches!(m.backward(&Tape::default(), &g), Err(Error::State(_))));
        m.set_mode(Mode::Eval);
        let (_, tape) = m.forward(&Tensor::zeros(vec![1, 2]), 0).unwrap();
        assert!(matches!(m.backward(&tape, &g), Err(Error::State(_))));
    }

    #[test]
    fn eval_forward_does_not_mutate() {
        let act = Activation::srs(3.0, 2.0).unwrap();
        let mut m = Model::<f64>::mlp(3, &[4], 2, &act, true, Some(0.5)).unwrap();
        m.set_mode(Mode::Eval);
        let before = m.clone();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![0.3, 0.2, 0.1]]).unwrap();
        let (a, _) = m.forward(&x, 1).unwrap();
        assert_eq!(m, before);
        assert_eq!(a, m.predict(&x).unwrap());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let act = Activation::srs(3.0, 2.0).unwrap();
        let mut m = Model::<f64>::mlp(3, &[4, 4], 2, &act, true, None).unwrap();
        for layer in m.layers_mut() {
            layer.for_each_param_mut(|_, _, v, _| {
                v.iter_mut().enumerate().for_each(|(i, p)| *p += 0.1 * (i as f64).sin())
            });
        }
        let x = Tensor::from_rows(&[vec![0.1, -0.2, 0.3], vec![0.5, 0.2, -0.1]]).unwrap();
        let (_, tape) = m.forward(&x, 0).unwrap();
        m.backward(&tape, &Tensor::zeros(vec![2, 2])).unwrap();
        for layer in m.layers() {
            for p in layer.params() {
                assert!(p.grad.iter().all(|&g| g == 0.0), "{}", p.name);
            }
        }
    }
}
