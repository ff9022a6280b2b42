//! Supervision losses: SDM regression, direction-field regression, the
//! direction-aware smoothness loss on the saliency map, and their weighted
//! combination.
//!
//! Every loss is a sum over all pixels (not a mean) and is recorded on the
//! graph as a single fused op with a hand-written backward rule.

use std::f64::consts::PI;

use crate::autograd::{Backward, Graph, Var};
use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, DirectionField, SignedDistanceMap};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA1: f64 = 1.0;
pub const DEFAULT_LAMBDA2: f64 = 1.0;
pub const DEFAULT_ALPHA_EDGE: f64 = 10.0;
pub const DEFAULT_PSI_EPS: f64 = 0.001;
pub const DEFAULT_DF_ANGLE_EPS: f64 = 1e-6;
pub const DEFAULT_W_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Weight of the SDM loss.
    pub lambda1: f64,
    /// Weight of the direction-field loss.
    pub lambda2: f64,
    /// Edge-awareness factor in `exp(-alpha |dG|)`.
    pub alpha_edge: f64,
    /// `psi(m) = sqrt(m^2 + psi_eps^2)`.
    pub psi_eps: f64,
    /// Vectors shorter than this have no defined direction; their angle term is 0.
    pub df_angle_eps: f64,
    /// Cap on the salient-pixel weight `1 / |F(p)|`.
    pub w_max: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            alpha_edge: DEFAULT_ALPHA_EDGE,
            psi_eps: DEFAULT_PSI_EPS,
            df_angle_eps: DEFAULT_DF_ANGLE_EPS,
            w_max: DEFAULT_W_MAX,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.alpha_edge, self.psi_eps, self.df_angle_eps, self.w_max];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        if self.alpha_edge <= 0.0 || self.psi_eps <= 0.0 || self.w_max <= 0.0 {
            return Err(Error::Config("alpha_edge, psi_eps and w_max must be positive".into()));
        }
        Ok(())
    }

    pub fn psi(&self, m: f64) -> f64 {
        (m * m + self.psi_eps * self.psi_eps).sqrt()
    }

    /// Per-pixel smoothness weight: `min(1 / max(|F(p)|, 1), w_max)` on
    /// salient pixels, 1 on background.
    pub fn pixel_weight(&self, salient: bool, field_norm: f64) -> f64 {
        if salient {
            (1.0 / field_norm.max(1.0)).min(self.w_max)
        } else {
            1.0
        }
    }
}

/// `pred` may be `[H, W]` or `[H, W, 1]`.
fn check_map(g: &Graph, pred: Var, h: usize, w: usize, op: &'static str) -> Result<()> {
    match *g.shape(pred) {
        [a, b] | [a, b, 1] if a == h && b == w => Ok(()),
        ref s => Err(Error::shape(op, format!("prediction {s:?} vs target {h}x{w}"))),
    }
}

struct SdmRule {
    target: Vec<f64>,
}

impl Backward for SdmRule {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let g = grad.item();
        let d = inputs[0].data().iter().zip(&self.target).map(|(p, t)| 2.0 * (p - t) * g).collect();
        vec![Tensor::from_vec(inputs[0].shape(), d).unwrap()]
    }
}

/// `sum_p (D(p) - D_gt(p))^2` against the normalized target channel.
pub fn loss_sdm(g: &mut Graph, pred: Var, target: &SignedDistanceMap) -> Result<Var> {
    check_map(g, pred, target.height(), target.width(), "loss_sdm")?;
    let target = target.normalized().to_vec();
    let value: f64 = g.value(pred).data().iter().zip(&target).map(|(p, t)| (p - t).powi(2)).sum();
    g.custom("loss_sdm", &[pred], Tensor::scalar(value), Box::new(SdmRule { target }))
}

/// Per-pixel value and gradient of the direction-field loss.
///
/// The angle is `atan2(|u x v|, u . v)`: the same as `acos` of the clamped
/// cosine, but exactly 0 for parallel vectors.
fn df_pixel(u: [f64; 2], v: [f64; 2], eps: f64) -> (f64, [f64; 2]) {
    let diff = [u[0] - v[0], u[1] - v[1]];
    let dist = diff[0].hypot(diff[1]);
    let mut value = dist;
    let mut grad = if dist > 0.0 { [diff[0] / dist, diff[1] / dist] } else { [0.0, 0.0] };

    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if nu >= eps && nv >= eps {
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        let theta = cross.abs().atan2(dot);
        value += theta * theta;
        // d theta / du = (dot * d|cross|/du - |cross| * v) / (|u| |v|)^2;
        // d|cross|/du is taken as 0 on the parallel line
        let sign = if cross > 0.0 { 1.0 } else if cross < 0.0 { -1.0 } else { 0.0 };
        let dcross = [sign * v[1], -sign * v[0]];
        let den = (nu * nv).powi(2);
        for k in 0..2 {
            grad[k] += 2.0 * theta * (dot * dcross[k] - cross.abs() * v[k]) / den;
        }
    }
    (value, grad)
}

struct DfRule {
    target: Vec<f64>,
    eps: f64,
}

impl Backward for DfRule {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let g = grad.item();
        let pred = inputs[0].data();
        let mut d = vec![0.0; pred.len()];
        for (i, (u, v)) in pred.chunks_exact(2).zip(self.target.chunks_exact(2)).enumerate() {
            let (_, gr) = df_pixel([u[0], u[1]], [v[0], v[1]], self.eps);
            d[2 * i] = gr[0] * g;
            d[2 * i + 1] = gr[1] * g;
        }
        vec![Tensor::from_vec(inputs[0].shape(), d).unwrap()]
    }
}

/// `sum_p ( |F - F_gt| + angle(F, F_gt)^2 )` over `[H, W, 2]` offset fields.
///
/// The angle is the one between the unit-normalized vectors; it is 0 wherever
/// either vector is shorter than `eps`.
pub fn loss_df(g: &mut Graph, pred: Var, target: &DirectionField, eps: f64) -> Result<Var> {
    let (h, w) = (target.height(), target.width());
    if g.shape(pred) != [h, w, 2] {
        return Err(Error::shape("loss_df", format!("prediction {:?} vs target [{h}, {w}, 2]", g.shape(pred))));
    }
    let target = target.to_tensor().into_data();
    let value: f64 = g
        .value(pred)
        .data()
        .chunks_exact(2)
        .zip(target.chunks_exact(2))
        .map(|(u, v)| df_pixel([u[0], u[1]], [v[0], v[1]], eps).0)
        .sum();
    g.custom("loss_df", &[pred], Tensor::scalar(value), Box::new(DfRule { target, eps }))
}

/// The smoothness loss as one term per forward difference. `pairs` holds
/// `(p, q, weight, edge)`: difference `O(q) - O(p)` weighted by `w(p)` and
/// damped by `edge = exp(-alpha |G(q) - G(p)|)`.
struct DsRule {
    pairs: Vec<(usize, usize, f64, f64)>,
    psi_eps: f64,
}

impl DsRule {
    fn build(gt: &BinaryMask, field: &DirectionField, weights: &LossWeights) -> Self {
        let (h, w) = (gt.height(), gt.width());
        let mut pairs = Vec::with_capacity(2 * h * w);
        let wp = |r: usize, c: usize| weights.pixel_weight(gt.get(r, c), field.norm_at(r, c));
        let edge = |a: bool, b: bool| (-weights.alpha_edge * (a as u8 as f64 - b as u8 as f64).abs()).exp();
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                if c + 1 < w {
                    pairs.push((p, p + 1, wp(r, c), edge(gt.get(r, c + 1), gt.get(r, c))));
                }
                if r + 1 < h {
                    pairs.push((p, p + w, wp(r, c), edge(gt.get(r + 1, c), gt.get(r, c))));
                }
            }
        }
        Self { pairs, psi_eps: weights.psi_eps }
    }

    fn value(&self, o: &[f64]) -> f64 {
        let e2 = self.psi_eps * self.psi_eps;
        self.pairs
            .iter()
            .map(|&(p, q, wt, k)| {
                let m = (o[q] - o[p]) * k;
                wt * (m * m + e2).sqrt()
            })
            .sum()
    }
}

impl Backward for DsRule {
    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let g = grad.item();
        let o = inputs[0].data();
        let e2 = self.psi_eps * self.psi_eps;
        let mut d = vec![0.0; o.len()];
        for &(p, q, wt, k) in &self.pairs {
            let diff = o[q] - o[p];
            let m = diff * k;
            let dd = g * wt * k * k * diff / (m * m + e2).sqrt();
            d[q] += dd;
            d[p] -= dd;
        }
        vec![Tensor::from_vec(inputs[0].shape(), d).unwrap()]
    }
}

/// Direction-aware smoothness loss on a saliency prediction `[H, W]` or
/// `[H, W, 1]`. Forward differences only; terms that would leave the grid are
/// omitted.
pub fn loss_ds(
    g: &mut Graph,
    pred: Var,
    gt: &BinaryMask,
    gt_field: &DirectionField,
    weights: &LossWeights,
) -> Result<Var> {
    let (h, w) = (gt.height(), gt.width());
    check_map(g, pred, h, w, "loss_ds")?;
    if gt_field.height() != h || gt_field.width() != w {
        return Err(Error::shape("loss_ds", "field and mask extents differ"));
    }
    let rule = DsRule::build(gt, gt_field, weights);
    let value = rule.value(g.value(pred).data());
    g.custom("loss_ds", &[pred], Tensor::scalar(value), Box::new(rule))
}

/// `L_sal + lambda1 L_sdm + lambda2 L_df`.
pub fn loss_prl(g: &mut Graph, sal: Var, sdm: Var, df: Var, weights: &LossWeights) -> Result<Var> {
    let a = g.scale(sdm, weights.lambda1)?;
    let b = g.scale(df, weights.lambda2)?;
    let ab = g.add(a, b)?;
    g.add(sal, ab)
}

pub fn prl_value(sal: f64, sdm: f64, df: f64, weights: &LossWeights) -> f64 {
    sal + weights.lambda1 * sdm + weights.lambda2 * df
}

/// `(pi/2)^2`, the angle term for orthogonal directions.
pub const ORTHOGONAL_ANGLE_SQ: f64 = PI * PI / 4.0;
