//! Run settings: network shape, loss weights and optimizer, loadable from an
//! INI-style `key = value` file.
//!
//! `#` and `;` start comments, `[section]` headers are accepted and ignored,
//! and unknown keys are an error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::{DEFAULT_BETA2, DEFAULT_S_ALPHA};
use crate::net::config::parse;
use crate::net::{AdamConfig, NetConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub net: NetConfig,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    /// Used when neither `--seed` nor `PRL_SEED` is given.
    pub seed: Option<u64>,
}

/// `(key, value)` pairs in file order.
pub fn parse_ini(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.net.set(key, value)? {
            return Ok(());
        }
        let l = &mut self.loss;
        match key {
            "lambda1" => l.lambda1 = parse(key, value)?,
            "lambda2" => l.lambda2 = parse(key, value)?,
            "alpha_edge" => l.alpha_edge = parse(key, value)?,
            "psi_eps" => l.psi_eps = parse(key, value)?,
            "df_angle_eps" => l.df_angle_eps = parse(key, value)?,
            "w_max" => l.w_max = parse(key, value)?,
            "learning_rate" => self.adam.learning_rate = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_ini(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::default();
        s.apply_ini(&fs::read_to_string(path)?)?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.loss.validate()?;
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.learning_rate)));
        }
        Ok(())
    }

    /// Every hyperparameter as sorted `key = value` lines, including the
    /// fixed metric constants.
    pub fn hyperparameters(&self) -> String {
        let l = &self.loss;
        let mut lines: Vec<String> = self.net.to_ini().lines().map(str::to_string).collect();
        lines.extend([
            format!("alpha_edge = {}", l.alpha_edge),
            format!("df_angle_eps = {}", l.df_angle_eps),
            format!("f_beta2 = {DEFAULT_BETA2}"),
            format!("lambda1 = {}", l.lambda1),
            format!("lambda2 = {}", l.lambda2),
            format!("learning_rate = {}", self.adam.learning_rate),
            format!("psi_eps = {}", l.psi_eps),
            format!("s_alpha = {DEFAULT_S_ALPHA}"),
            format!("w_max = {}", l.w_max),
        ]);
        lines.sort();
        lines.join("\n") + "\n"
    }
}
