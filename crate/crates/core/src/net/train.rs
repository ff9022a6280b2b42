use std::fmt::Write as _;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::geometry::{self, BinaryMask, BoundaryRule, Normalization, Supervision};
use crate::losses::{self, LossWeights};
use crate::metrics::{self, SaliencyMap};
use crate::tensor::Tensor;

use super::config::NetConfig;
use super::model::{Prediction, PrlNet};
use super::params::ParamStore;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: DEFAULT_LEARNING_RATE, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { config, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// One aligned RGB-T pair with its mask and derived targets.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub rgb: Tensor,
    pub thermal: Tensor,
    pub mask: BinaryMask,
    pub targets: Supervision,
}

impl TrainSample {
    pub fn new(rgb: Tensor, thermal: Tensor, mask: BinaryMask) -> Result<Self> {
        Self::with_options(rgb, thermal, mask, Normalization::default(), BoundaryRule::default())
    }

    pub fn with_options(
        rgb: Tensor,
        thermal: Tensor,
        mask: BinaryMask,
        normalization: Normalization,
        rule: BoundaryRule,
    ) -> Result<Self> {
        let (h, w) = (mask.height(), mask.width());
        for t in [&rgb, &thermal] {
            if t.shape() != [h, w, 3] {
                return Err(Error::shape("train sample", format!("image {:?} vs mask {h}x{w}", t.shape())));
            }
        }
        let targets = geometry::supervision(&mask, normalization, rule);
        Ok(Self { rgb, thermal, mask, targets })
    }
}

/// Bright rectangle on a dark background, in both spectra.
pub fn rectangle_scene(size: usize) -> Result<TrainSample> {
    let (r0, r1) = (size * 5 / 16, size * 11 / 16);
    let (c0, c1) = (size / 4, size * 3 / 4);
    let mask = BinaryMask::from_fn(size, size, |r, c| (r0..r1).contains(&r) && (c0..c1).contains(&c));
    let paint = |inside: [f64; 3], outside: [f64; 3]| {
        let mut data = Vec::with_capacity(size * size * 3);
        for &m in mask.data() {
            data.extend_from_slice(if m == 1 { &inside } else { &outside });
        }
        Tensor::from_vec(&[size, size, 3], data)
    };
    let rgb = paint([0.9, 0.8, 0.7], [0.1, 0.15, 0.2])?;
    let thermal = paint([0.85; 3], [0.2; 3])?;
    TrainSample::new(rgb, thermal, mask)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: usize,
    pub prl: f64,
    pub sal: f64,
    pub sdm: f64,
    pub df: f64,
}

pub struct Trainer {
    net: PrlNet,
    adam: Adam,
    weights: LossWeights,
    sample: TrainSample,
    step: usize,
}

impl Trainer {
    pub fn new(net: PrlNet, sample: TrainSample, weights: LossWeights, adam: AdamConfig) -> Result<Self> {
        weights.validate()?;
        let hw = net.config().image_size;
        if (sample.mask.height(), sample.mask.width()) != (hw, hw) {
            return Err(Error::shape("trainer", format!("sample {}x{} vs network {hw}", sample.mask.height(), sample.mask.width())));
        }
        let adam = Adam::new(adam, net.params());
        Ok(Self { net, adam, weights, sample, step: 0 })
    }

    pub fn net(&self) -> &PrlNet {
        &self.net
    }

    pub fn into_net(self) -> PrlNet {
        self.net
    }

    /// Loss terms at the current parameters, without updating.
    pub fn evaluate(&self) -> Result<StepLosses> {
        let mut g = Graph::new();
        let p = self.net.params().bind(&mut g);
        let (_, losses) = self.record(&mut g, &p)?;
        Ok(losses)
    }

    /// Forward, backward and one Adam update. Returns the losses measured
    /// before the update.
    pub fn step(&mut self) -> Result<StepLosses> {
        let mut g = Graph::new();
        let (grads, losses) = {
            let p = self.net.params().bind(&mut g);
            let (total, losses) = self.record(&mut g, &p).map_err(|e| self.numerical(e))?;
            let grads = g.backward(total)?;
            (p.collect(&grads), losses)
        };
        if !losses.prl.is_finite() || grads.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numerical(format!("divergence at step {}", self.step)));
        }
        self.adam.step(self.net.params_mut(), &grads);
        self.step += 1;
        Ok(losses)
    }

    fn numerical(&self, e: Error) -> Error {
        match e {
            Error::NonFinite(op) => Error::Numerical(format!("non-finite {op} at step {}", self.step)),
            other => other,
        }
    }

    fn record(&self, g: &mut Graph, p: &super::params::Bound) -> Result<(crate::autograd::Var, StepLosses)> {
        let s = &self.sample;
        let rgb = g.constant(s.rgb.clone());
        let th = g.constant(s.thermal.clone());
        let out = self.net.forward(g, p, rgb, th)?;
        let sal = losses::loss_ds(g, out.saliency, &s.mask, &s.targets.field, &self.weights)?;
        let sdm = losses::loss_sdm(g, out.sdm, &s.targets.sdm)?;
        let df = losses::loss_df(g, out.field, &s.targets.field, self.weights.df_angle_eps)?;
        let total = losses::loss_prl(g, sal, sdm, df, &self.weights)?;
        let losses = StepLosses {
            step: self.step,
            prl: g.value(total).item(),
            sal: g.value(sal).item(),
            sdm: g.value(sdm).item(),
            df: g.value(df).item(),
        };
        Ok((total, losses))
    }

    pub fn predict(&self) -> Result<Prediction> {
        self.net.predict(&self.sample.rgb, &self.sample.thermal)
    }

    /// MAE of the current prediction against the training mask.
    pub fn training_mae(&self) -> Result<f64> {
        let pred = self.predict()?;
        let hw = self.net.config().image_size;
        let map = SaliencyMap::new(hw, hw, pred.saliency.into_data())?;
        metrics::mae(&map, &self.sample.mask)
    }
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    /// One entry per update, measured before it.
    pub steps: Vec<StepLosses>,
    /// Measured after the last update.
    pub last: StepLosses,
    pub final_mae: f64,
}

impl TrainLog {
    /// Relative drop of the total loss from the first step to `last`.
    pub fn prl_reduction(&self) -> f64 {
        match self.steps.first() {
            Some(first) if first.prl > 0.0 => 1.0 - self.last.prl / first.prl,
            _ => 0.0,
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("step,prl,sal,sdm,df\n");
        for s in self.steps.iter().chain(std::iter::once(&self.last)) {
            let _ = writeln!(out, "{},{:.9e},{:.9e},{:.9e},{:.9e}", s.step, s.prl, s.sal, s.sdm, s.df);
        }
        out
    }
}

/// Runs `steps` updates and measures the result.
pub fn train(trainer: &mut Trainer, steps: usize) -> Result<TrainLog> {
    let mut log = Vec::with_capacity(steps);
    for _ in 0..steps {
        log.push(trainer.step()?);
    }
    let last = trainer.evaluate()?;
    Ok(TrainLog { steps: log, last, final_mae: trainer.training_mae()? })
}

/// Which setting a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    K,
    Lambda1,
    Lambda2,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "K",
            SweepParam::Lambda1 => "lambda1",
            SweepParam::Lambda2 => "lambda2",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepParam::K),
            "lambda1" => Ok(SweepParam::Lambda1),
            "lambda2" => Ok(SweepParam::Lambda2),
            _ => Err(Error::Config(format!("unknown sweep parameter {s:?} (K, lambda1, lambda2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub last: StepLosses,
    pub final_mae: f64,
}

/// Trains a fresh network from the same seed for each value.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    config: &NetConfig,
    seed: u64,
    sample: &TrainSample,
    weights: LossWeights,
    adam: AdamConfig,
    steps: usize,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let (mut cfg, mut w) = (config.clone(), weights);
        match param {
            SweepParam::K => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("K must be a nonnegative integer, got {value}")));
                }
                cfg.frdf_iterations = value as usize;
            }
            SweepParam::Lambda1 => w.lambda1 = value,
            SweepParam::Lambda2 => w.lambda2 = value,
        }
        let mut trainer = Trainer::new(PrlNet::new(cfg, seed)?, sample.clone(), w, adam)?;
        let log = train(&mut trainer, steps)?;
        rows.push(SweepRow { value, last: log.last, final_mae: log.final_mae });
    }
    Ok(rows)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{},prl,sal,sdm,df,mae\n", param.name());
    for r in rows {
        let l = r.last;
        let _ = writeln!(out, "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6}", r.value, l.prl, l.sal, l.sdm, l.df, r.final_mae);
    }
    out
}
