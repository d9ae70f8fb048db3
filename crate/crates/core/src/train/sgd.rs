use crate::error::{Error, Result};
use crate::nn::Model;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// SGD with momentum and L2 weight decay:
///
/// ```text
/// v <- momentum * v - lr * (g + weight_decay * p)
/// p <- p + v
/// ```
///
/// Weight decay touches dense weights only. Activation parameters are
/// re-projected (clamp floor, SRS pole margin) after each step.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    cfg: SgdConfig,
    velocity: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                cfg.momentum
            )));
        }
        if !(cfg.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                cfg.weight_decay
            )));
        }
        Ok(Sgd {
            cfg,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// Applies one update from the gradients left by the last backward pass.
    pub fn step(&mut self, model: &mut Model<T>) -> Result<()> {
        if !model.grads_ready() {
            return Err(Error::State("sgd step without gradients from a backward pass".into()));
        }
        let lr = T::lit(self.cfg.lr);
        let mu = T::lit(self.cfg.momentum);
        let wd = T::lit(self.cfg.weight_decay);
        if self.velocity.len() != model.layers().len() {
            self.velocity = vec![Vec::new(); model.layers().len()];
        }
        for (layer, vel) in model.layers_mut().iter_mut().zip(self.velocity.iter_mut()) {
            layer.for_each_param_mut(|t, role, values, grads| {
                if vel.len() <= t {
                    vel.resize(t + 1, Vec::new());
                }
                let v = &mut vel[t];
                if v.len() != values.len() {
                    *v = vec![T::zero(); values.len()];
                }
                let decay = if role.decays() { wd } else { T::zero() };
                for ((p, &g), vi) in values.iter_mut().zip(grads).zip(v.iter_mut()) {
                    *vi = mu * *vi - lr * (g + decay * *p);
                    *p = *p + *vi;
                }
            });
        }
        model.clear_grads_ready();
        Ok(())
    }
}
