//! Salient object detection metrics.
//!
//! ## Definitions used
//!
//! **P-R curve.** For each `t` in `0..=255` a pixel is predicted salient iff
//! `pred >= t / 255`. `P = TP / (TP + FP)` and `R = TP / (TP + FN)`, with
//! `P = 1` when nothing is predicted salient and `R = 1` when the ground
//! truth has no foreground.
//!
//! **F-measure.** `F = (1 + b2) P R / (b2 P + R)`, 0 when the denominator is
//! 0, with `b2 = 0.3`. Reported three ways: mean and max over the 256
//! thresholds, and adaptive (single threshold `min(2 mean(pred), 1)`).
//!
//! **S-measure.** `S = a S_o + (1 - a) S_r`, `a = 0.5`, clamped to [0, 1].
//! - `S_o = mu O_fg + (1 - mu) O_bg`, `mu` the foreground ratio of the ground
//!   truth, `O_fg = 2 m / (m^2 + 1 + s)` over the prediction inside the
//!   foreground (mean `m`, sample std `s`), `O_bg` likewise over `1 - pred`
//!   inside the background.
//! - `S_r`: split both maps into four blocks at the ground-truth centroid
//!   (rounded half-to-even, split index one past the centroid), score each
//!   block with `4 mx my sxy / ((mx^2 + my^2)(sx^2 + sy^2))` (1 when both
//!   numerator and denominator vanish, 0 when only the numerator does), and
//!   weight each block by its area fraction. Sample (N - 1) statistics; a
//!   block with fewer than two pixels has zero variance.
//! - All-background ground truth scores `1 - mean(pred)`; all-foreground
//!   scores `mean(pred)`.
//!
//! **E-measure.** The prediction is binarized at `min(2 mean(pred), 1)`.
//! With `A`, `B` the mean-centred binary prediction and ground truth,
//! `phi = 2 A B / (A^2 + B^2)` and the enhanced matrix is `(1 + phi)^2 / 4`,
//! averaged over all H·W pixels. All-background ground truth uses
//! `1 - FM` as the enhanced matrix, all-foreground uses `FM`.
//!
//! **MAE.** `mean |pred - gt|`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BinaryMask;
use crate::io;

pub const PR_THRESHOLDS: usize = 256;
pub const DEFAULT_BETA2: f64 = 0.3;
pub const DEFAULT_S_ALPHA: f64 = 0.5;

/// H×W prediction with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::shape("saliency map", format!("{height}x{width} with {} values", data.len())));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format { format: "saliency map", detail: "values must lie in [0, 1]".into() });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_gray(height: usize, width: usize, gray: &[u8]) -> Result<Self> {
        Self::new(height, width, gray.iter().map(|&v| v as f64 / 255.0).collect())
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        let data = mask.data().iter().map(|&v| v as f64).collect();
        Self { height: mask.height(), width: mask.width(), data }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

fn check(pred: &SaliencyMap, gt: &BinaryMask, op: &'static str) -> Result<()> {
    if pred.height != gt.height() || pred.width != gt.width() {
        return Err(Error::shape(
            op,
            format!("prediction {}x{} vs gt {}x{}", pred.height, pred.width, gt.height(), gt.width()),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Indexed by threshold `t`, i.e. binarization at `t / 255`.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrCurve {
    pub fn f_curve(&self, beta2: f64) -> Vec<f64> {
        self.precision.iter().zip(&self.recall).map(|(&p, &r)| f_measure(p, r, beta2)).collect()
    }
}

/// Largest `t` in `0..=255` with `v >= t / 255`.
fn level(v: f64) -> usize {
    let mut t = ((v * 255.0).floor() as isize).clamp(0, 255) as usize;
    while t < 255 && v >= (t + 1) as f64 / 255.0 {
        t += 1;
    }
    while t > 0 && v < t as f64 / 255.0 {
        t -= 1;
    }
    t
}

fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    (p, r)
}

pub fn pr_curve(pred: &SaliencyMap, gt: &BinaryMask) -> Result<PrCurve> {
    check(pred, gt, "pr_curve")?;
    let mut fg_hist = [0usize; PR_THRESHOLDS];
    let mut bg_hist = [0usize; PR_THRESHOLDS];
    for (&v, &g) in pred.data.iter().zip(gt.data()) {
        if g == 1 {
            fg_hist[level(v)] += 1;
        } else {
            bg_hist[level(v)] += 1;
        }
    }
    let total_fg = gt.foreground_count();
    let mut precision = vec![0.0; PR_THRESHOLDS];
    let mut recall = vec![0.0; PR_THRESHOLDS];
    let (mut tp, mut fp) = (0usize, 0usize);
    for t in (0..PR_THRESHOLDS).rev() {
        tp += fg_hist[t];
        fp += bg_hist[t];
        let (p, r) = precision_recall(tp, fp, total_fg - tp);
        precision[t] = p;
        recall[t] = r;
    }
    Ok(PrCurve { precision, recall })
}

pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FMeasures {
    pub mean: f64,
    pub max: f64,
    pub adaptive: f64,
}

pub fn adaptive_threshold(pred: &SaliencyMap) -> f64 {
    (2.0 * pred.mean()).min(1.0)
}

pub fn f_measures(pred: &SaliencyMap, gt: &BinaryMask, beta2: f64) -> Result<FMeasures> {
    let curve = pr_curve(pred, gt)?;
    let f = curve.f_curve(beta2);
    let th = adaptive_threshold(pred);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&v, &g) in pred.data.iter().zip(gt.data()) {
        match (v >= th, g == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let (p, r) = precision_recall(tp, fp, fn_);
    Ok(FMeasures {
        mean: f.iter().sum::<f64>() / f.len() as f64,
        max: f.iter().copied().fold(0.0, f64::max),
        adaptive: f_measure(p, r, beta2),
    })
}

pub fn mae(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt, "mae")?;
    let total: f64 = pred.data.iter().zip(gt.data()).map(|(&p, &g)| (p - g as f64).abs()).sum();
    Ok(total / pred.data.len() as f64)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn object_similarity(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (m, s) = mean_std(values);
    // denominator >= 1, no guard needed
    2.0 * m / (m * m + 1.0 + s)
}

fn block_ssim(pred: &SaliencyMap, gt: &BinaryMask, rows: (usize, usize), cols: (usize, usize)) -> f64 {
    let n = (rows.1 - rows.0) * (cols.1 - cols.0);
    if n == 0 {
        return 0.0;
    }
    let idx = || (rows.0..rows.1).flat_map(move |r| (cols.0..cols.1).map(move |c| r * pred.width + c));
    let x = idx().map(|i| pred.data[i]).sum::<f64>() / n as f64;
    let y = idx().map(|i| gt.data()[i] as f64).sum::<f64>() / n as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    if n > 1 {
        for i in idx() {
            let dx = pred.data[i] - x;
            let dy = gt.data()[i] as f64 - y;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
        let d = (n - 1) as f64;
        sx /= d;
        sy /= d;
        sxy /= d;
    }
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    // alpha != 0 needs both variances nonzero, so beta > 0
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// S-measure components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureScores {
    pub object: f64,
    pub region: f64,
    pub score: f64,
}

pub fn s_measure(pred: &SaliencyMap, gt: &BinaryMask, alpha: f64) -> Result<f64> {
    Ok(s_measure_parts(pred, gt, alpha)?.score)
}

pub fn s_measure_parts(pred: &SaliencyMap, gt: &BinaryMask, alpha: f64) -> Result<StructureScores> {
    check(pred, gt, "s_measure")?;
    let n = pred.data.len();
    let fg = gt.foreground_count();
    if fg == 0 {
        let s = 1.0 - pred.mean();
        return Ok(StructureScores { object: s, region: s, score: s });
    }
    if fg == n {
        let s = pred.mean();
        return Ok(StructureScores { object: s, region: s, score: s });
    }
    let mu = fg as f64 / n as f64;
    let pairs = || pred.data.iter().zip(gt.data());
    let o_fg = object_similarity(pairs().filter(|(_, &g)| g == 1).map(|(&p, _)| p));
    let o_bg = object_similarity(pairs().filter(|(_, &g)| g == 0).map(|(&p, _)| 1.0 - p));
    let object = mu * o_fg + (1.0 - mu) * o_bg;

    let (h, w) = (pred.height, pred.width);
    let (mut sr, mut sc) = (0usize, 0usize);
    for (i, &g) in gt.data().iter().enumerate() {
        if g == 1 {
            sr += i / w;
            sc += i % w;
        }
    }
    let cy = (sr as f64 / fg as f64).round_ties_even() as usize + 1;
    let cx = (sc as f64 / fg as f64).round_ties_even() as usize + 1;
    let (cy, cx) = (cy.min(h), cx.min(w));
    let blocks = [
        ((0, cy), (0, cx)),
        ((0, cy), (cx, w)),
        ((cy, h), (0, cx)),
        ((cy, h), (cx, w)),
    ];
    // area-weighted with integer areas, so four perfect blocks give exactly 1
    let region = blocks
        .iter()
        .map(|&(rows, cols)| {
            let area = (rows.1 - rows.0) * (cols.1 - cols.0);
            if area == 0 {
                0.0
            } else {
                area as f64 * block_ssim(pred, gt, rows, cols)
            }
        })
        .sum::<f64>()
        / (h * w) as f64;
    let score = (alpha * object + (1.0 - alpha) * region).clamp(0.0, 1.0);
    Ok(StructureScores { object, region, score })
}

pub fn e_measure(pred: &SaliencyMap, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt, "e_measure")?;
    let th = adaptive_threshold(pred);
    let fm: Vec<f64> = pred.data.iter().map(|&v| if v >= th { 1.0 } else { 0.0 }).collect();
    let n = fm.len() as f64;
    let fg = gt.foreground_count();
    let total: f64 = if fg == 0 {
        fm.iter().map(|v| 1.0 - v).sum()
    } else if fg == gt.data().len() {
        fm.iter().sum()
    } else {
        let mean_fm = fm.iter().sum::<f64>() / n;
        let mean_gt = fg as f64 / n;
        fm.iter()
            .zip(gt.data())
            .map(|(&f, &g)| {
                let a = f - mean_fm;
                let b = g as f64 - mean_gt;
                let phi = 2.0 * a * b / (a * a + b * b);
                (1.0 + phi).powi(2) / 4.0
            })
            .sum()
    };
    Ok(total / n)
}

/// Metrics for one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub s_measure: f64,
    pub f: FMeasures,
    pub e_measure: f64,
    pub mae: f64,
    pub pr: PrCurve,
    /// F at every threshold.
    pub f_curve: Vec<f64>,
}

pub fn evaluate_pair(id: &str, pred: &SaliencyMap, gt: &BinaryMask) -> Result<ImageMetrics> {
    let pr = pr_curve(pred, gt)?;
    Ok(ImageMetrics {
        id: id.to_string(),
        s_measure: s_measure(pred, gt, DEFAULT_S_ALPHA)?,
        f: f_measures(pred, gt, DEFAULT_BETA2)?,
        e_measure: e_measure(pred, gt)?,
        mae: mae(pred, gt)?,
        f_curve: pr.f_curve(DEFAULT_BETA2),
        pr,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub s_measure: f64,
    /// Max over thresholds of the image-averaged F curve.
    pub max_f: f64,
    pub mean_f: f64,
    pub adaptive_f: f64,
    pub e_measure: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// Sorted by id.
    pub images: Vec<ImageMetrics>,
    pub aggregate: Aggregate,
    /// Image-averaged P-R curve.
    pub pr: PrCurve,
}

impl MetricReport {
    pub fn from_images(mut images: Vec<ImageMetrics>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("no images to aggregate".into()));
        }
        images.sort_by(|a, b| a.id.cmp(&b.id));
        let n = images.len() as f64;
        let mean = |f: &dyn Fn(&ImageMetrics) -> f64| images.iter().map(f).sum::<f64>() / n;
        let mut precision = vec![0.0; PR_THRESHOLDS];
        let mut recall = vec![0.0; PR_THRESHOLDS];
        let mut f_curve = vec![0.0; PR_THRESHOLDS];
        for im in &images {
            for t in 0..PR_THRESHOLDS {
                precision[t] += im.pr.precision[t] / n;
                recall[t] += im.pr.recall[t] / n;
                f_curve[t] += im.f_curve[t] / n;
            }
        }
        let aggregate = Aggregate {
            s_measure: mean(&|m| m.s_measure),
            max_f: f_curve.iter().copied().fold(0.0, f64::max),
            mean_f: mean(&|m| m.f.mean),
            adaptive_f: mean(&|m| m.f.adaptive),
            e_measure: mean(&|m| m.e_measure),
            mae: mean(&|m| m.mae),
        };
        Ok(Self { images, aggregate, pr: PrCurve { precision, recall } })
    }

    /// One row per image plus a final `mean` row.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("id,s_measure,max_f,mean_f,adaptive_f,e_measure,mae\n");
        for m in &self.images {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.id, m.s_measure, m.f.max, m.f.mean, m.f.adaptive, m.e_measure, m.mae
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "mean,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            a.s_measure, a.max_f, a.mean_f, a.adaptive_f, a.e_measure, a.mae
        );
        out
    }

    /// 256 rows: threshold, precision, recall.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for t in 0..PR_THRESHOLDS {
            let _ = writeln!(out, "{t},{:.6},{:.6}", self.pr.precision[t], self.pr.recall[t]);
        }
        out
    }
}

/// Pair predictions and ground truths by file stem and evaluate every pair.
///
/// Every prediction must have a ground truth and vice versa; any unmatched
/// or unreadable file fails the whole evaluation.
pub fn evaluate_dir(pred_dir: &Path, gt_dir: &Path) -> Result<MetricReport> {
    let preds = io::image_files_by_stem(pred_dir)?;
    let gts = io::image_files_by_stem(gt_dir)?;
    if let Some((_, path)) = preds.iter().find(|(stem, _)| !gts.contains_key(*stem)) {
        return Err(Error::Unmatched(path.clone()));
    }
    if let Some((_, path)) = gts.iter().find(|(stem, _)| !preds.contains_key(*stem)) {
        return Err(Error::Unmatched(path.clone()));
    }
    if preds.is_empty() {
        return Err(Error::Unmatched(pred_dir.to_path_buf()));
    }
    let pairs: BTreeMap<_, _> = preds.iter().map(|(stem, p)| (stem.clone(), (p.clone(), gts[stem].clone()))).collect();
    let mut images = Vec::with_capacity(pairs.len());
    for (stem, (p, g)) in pairs {
        let gt = io::read_mask(&g)?;
        let pred = io::read_saliency(&p)?;
        images.push(evaluate_pair(&stem, &pred, &gt)?);
    }
    MetricReport::from_images(images)
}
