//! Training configuration and the flat `key = value` config-file format.

use std::fmt::Write as _;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::train::init::InitScheme;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Later duplicates override earlier ones.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", no + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        match out.iter_mut().find(|(ek, _)| *ek == k) {
            Some(slot) => slot.1 = v,
            None => out.push((k, v)),
        }
    }
    Ok(out)
}

fn parse_num<N: std::str::FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

fn parse_list<N: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<N>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// Everything one training run needs. Defaults reproduce the Fashion-MNIST
/// protocol: 784-512-512-512-256-10 MLP, 10,000 steps of batch 50, Gaussian
/// init, learning rate 0.01, SRS starting at (3, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub activation: ActivationKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub init: InitScheme,
    pub use_bn: bool,
    pub seed: u64,
    pub srs_alpha: f64,
    pub srs_beta: f64,
    pub clamp_floor: f64,
    pub hidden: Vec<usize>,
    /// 0 disables dropout.
    pub dropout: f64,
    pub swish_trainable: bool,
    pub log_every: usize,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            activation: ActivationKind::Srs,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 50,
            steps: 10_000,
            init: InitScheme::default(),
            use_bn: false,
            seed: 1,
            srs_alpha: 3.0,
            srs_beta: 2.0,
            clamp_floor: 0.01,
            hidden: vec![512, 512, 512, 256],
            dropout: 0.0,
            swish_trainable: false,
            log_every: 100,
            eval_every: 1000,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 17] = [
        "activation",
        "lr",
        "momentum",
        "weight_decay",
        "batch_size",
        "steps",
        "init",
        "use_bn",
        "seed",
        "srs_alpha",
        "srs_beta",
        "clamp_floor",
        "hidden",
        "dropout",
        "swish_trainable",
        "log_every",
        "eval_every",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "activation" => self.activation = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "lr" => self.lr = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "init" => self.init = value.parse()?,
            "use_bn" => self.use_bn = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "srs_alpha" => self.srs_alpha = parse_num(key, value)?,
            "srs_beta" => self.srs_beta = parse_num(key, value)?,
            "clamp_floor" => self.clamp_floor = parse_num(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "swish_trainable" => self.swish_trainable = parse_bool(key, value)?,
            "log_every" => self.log_every = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown training key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || (self.use_bn && self.batch_size < 2) {
            return fail(format!(
                "batch_size {} too small (>= 2 with batch norm)",
                self.batch_size
            ));
        }
        if self.steps == 0 {
            return fail("steps must be >= 1".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return fail("hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.clamp_floor >= 0.0) {
            return fail(format!("clamp_floor must be >= 0, got {}", self.clamp_floor));
        }
        if self.log_every == 0 || self.eval_every == 0 {
            return fail("log_every and eval_every must be >= 1".into());
        }
        Ok(())
    }

    /// `key = value` lines for every field, in [`TrainConfig::KEYS`] order.
    pub fn to_key_values(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let mut s = String::new();
        let fields: [(&str, String); 17] = [
            ("activation", self.activation.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("init", self.init.to_string()),
            ("use_bn", self.use_bn.to_string()),
            ("seed", self.seed.to_string()),
            ("srs_alpha", self.srs_alpha.to_string()),
            ("srs_beta", self.srs_beta.to_string()),
            ("clamp_floor", self.clamp_floor.to_string()),
            ("hidden", hidden.join(",")),
            ("dropout", self.dropout.to_string()),
            ("swish_trainable", self.swish_trainable.to_string()),
            ("log_every", self.log_every.to_string()),
            ("eval_every", self.eval_every.to_string()),
        ];
        for (k, v) in fields {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_parsing() {
        let kv = parse_key_values("# header\nlr = 0.1\n\nsteps=5 # trailing\nlr=0.2\n").unwrap();
        assert_eq!(kv, vec![("lr".into(), "0.2".into()), ("steps".into(), "5".into())]);
        assert!(parse_key_values("novalue\n").is_err());
        assert!(parse_key_values("=3\n").is_err());
    }

    #[test]
    fn every_field_round_trips() {
        let mut cfg = TrainConfig {
            activation: ActivationKind::Swish,
            lr: 0.1,
            momentum: 0.5,
            weight_decay: 0.0,
            batch_size: 8,
            steps: 12,
            init: InitScheme::He,
            use_bn: true,
            seed: 9,
            srs_alpha: 5.0,
            srs_beta: 3.0,
            clamp_floor: 0.02,
            hidden: vec![32, 16],
            dropout: 0.5,
            swish_trainable: true,
            log_every: 3,
            eval_every: 6,
        };
        let text = cfg.to_key_values();
        let mut back = TrainConfig::default();
        for (k, v) in parse_key_values(&text).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        assert_eq!(text.lines().count(), TrainConfig::KEYS.len());
        cfg.set("use_bn", "off").unwrap();
        assert!(!cfg.use_bn);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig {
            use_bn: true,
            batch_size: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            lr: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("lr", "fast").is_err());
        assert!(c.set("activation", "gelu").is_err());
    }
}
