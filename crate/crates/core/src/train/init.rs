use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal, Uniform};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::nn::{Layer, Model};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Weights `~ N(0, std^2)`.
    Gaussian { std: f64 },
    /// Weights `~ U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`.
    Xavier,
    /// Weights `~ N(0, 2/fan_in)`.
    He,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { std: 0.1 }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Gaussian { std } if *std == 0.1 => f.write_str("gaussian"),
            InitScheme::Gaussian { std } => write!(f, "gaussian:{std}"),
            InitScheme::Xavier => f.write_str("xavier"),
            InitScheme::He => f.write_str("he"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// `gaussian`, `gaussian:<std>`, `xavier` or `he`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => Ok(InitScheme::default()),
            "xavier" | "glorot" => Ok(InitScheme::Xavier),
            "he" | "kaiming" => Ok(InitScheme::He),
            _ => {
                if let Some(std) = s.strip_prefix("gaussian:") {
                    let std: f64 = std
                        .parse()
                        .map_err(|_| Error::Config(format!("bad gaussian std '{std}'")))?;
                    if std > 0.0 && std.is_finite() {
                        return Ok(InitScheme::Gaussian { std });
                    }
                }
                Err(Error::Config(format!("unknown init scheme '{s}'")))
            }
        }
    }
}

/// Re-initialises every layer: dense weights from `scheme` (biases zero),
/// batch-norm to the identity, and SRS parameters to `srs_init` when given.
/// Each dense layer draws from its own seeded stream.
pub fn init_weights<T: Scalar>(
    model: &mut Model<T>,
    scheme: InitScheme,
    srs_init: Option<(T, T)>,
    seed: u64,
) -> Result<()> {
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Dense(d) => {
                let (fan_in, fan_out) = (d.inputs(), d.outputs());
                let mut r = rng::rng(seed, 0x1000 + i as u64);
                let values: Vec<T> = match scheme {
                    InitScheme::Gaussian { std } => {
                        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                        (0..fan_in * fan_out).map(|_| T::lit(dist.sample(&mut r))).collect()
                    }
                    InitScheme::Xavier => {
                        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Config(e.to_string()))?;
                        (0..fan_in * fan_out).map(|_| T::lit(dist.sample(&mut r))).collect()
                    }
                    InitScheme::He => {
                        let dist =
                            Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
                        (0..fan_in * fan_out).map(|_| T::lit(dist.sample(&mut r))).collect()
                    }
                };
                d.weight = Tensor::new(vec![fan_in, fan_out], values)?;
                d.bias = Tensor::zeros(vec![fan_out]);
            }
            Layer::BatchNorm(bn) => {
                let f = bn.features();
                bn.gamma = Tensor::filled(vec![f], T::one());
                bn.beta = Tensor::zeros(vec![f]);
                bn.running_mean = Tensor::zeros(vec![f]);
                bn.running_var = Tensor::filled(vec![f], T::one());
            }
            Layer::Act(a) if a.act.kind() == ActivationKind::Srs => {
                if let Some((alpha, beta)) = srs_init {
                    a.act.set_params(&[alpha, beta])?;
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;

    fn dense_weights(model: &Model<f64>, layer: usize) -> Vec<f64> {
        match &model.layers()[layer] {
            Layer::Dense(d) => d.weight.data().to_vec(),
            _ => panic!("not dense"),
        }
    }

    fn std_of(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn gaussian_std() {
        let act = Activation::new(ActivationKind::Relu);
        let mut m = Model::<f64>::mlp(1000, &[1000], 2, &act, false, None).unwrap();
        init_weights(&mut m, InitScheme::default(), None, 1).unwrap();
        let w = dense_weights(&m, 0);
        assert_eq!(w.len(), 1_000_000);
        assert!((std_of(&w) - 0.1).abs() < 0.001);
    }

    #[test]
    fn xavier_support() {
        let act = Activation::new(ActivationKind::Relu);
        let mut m = Model::<f64>::mlp(512, &[256], 2, &act, false, None).unwrap();
        init_weights(&mut m, InitScheme::Xavier, None, 2).unwrap();
        let bound = (6.0f64 / 768.0).sqrt();
        assert!(dense_weights(&m, 0).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn he_std() {
        let act = Activation::new(ActivationKind::Relu);
        let mut m = Model::<f64>::mlp(784, &[512], 2, &act, false, None).unwrap();
        init_weights(&mut m, InitScheme::He, None, 3).unwrap();
        let expect = (2.0f64 / 784.0).sqrt();
        assert!((std_of(&dense_weights(&m, 0)) - expect).abs() < 0.02 * expect);
    }

    #[test]
    fn srs_parameters_and_biases_set() {
        let act = Activation::srs(5.0, 3.0).unwrap();
        let mut m = Model::<f64>::mlp(4, &[3, 3], 2, &act, true, None).unwrap();
        init_weights(&mut m, InitScheme::Xavier, Some((3.0, 2.0)), 4).unwrap();
        assert!(m.activations().all(|a| a.params() == [3.0, 2.0]));
        for layer in m.layers() {
            if let Layer::Dense(d) = layer {
                assert!(d.bias.data().iter().all(|&b| b == 0.0));
            }
        }
        assert!(init_weights(&mut m, InitScheme::Xavier, Some((0.5, 2.0)), 4).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(
            "gaussian".parse::<InitScheme>().unwrap(),
            InitScheme::Gaussian { std: 0.1 }
        );
        assert_eq!(
            "gaussian:0.5".parse::<InitScheme>().unwrap(),
            InitScheme::Gaussian { std: 0.5 }
        );
        assert_eq!("He".parse::<InitScheme>().unwrap(), InitScheme::He);
        assert!("orthogonal".parse::<InitScheme>().is_err());
        for s in [
            InitScheme::default(),
            InitScheme::Xavier,
            InitScheme::He,
            InitScheme::Gaussian { std: 0.5 },
        ] {
            assert_eq!(s.to_string().parse::<InitScheme>().unwrap(), s);
        }
    }
}
