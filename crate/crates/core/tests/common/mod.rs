//! Shared fixtures and naive loop oracles. Everything here is written
//! independently of the library's own implementations.

#![allow(dead_code)]

use prlnet::geometry::BinaryMask;
use prlnet::rng::Rng;

/// Random non-constant mask: either pixel noise at a random density or a
/// union of rectangles and discs.
pub fn random_mask(rng: &mut Rng, h: usize, w: usize) -> BinaryMask {
    loop {
        let data: Vec<u8> = if rng.bernoulli(0.5) {
            let p = rng.uniform(0.05, 0.95);
            (0..h * w).map(|_| u8::from(rng.bernoulli(p))).collect()
        } else {
            let mut d = vec![0u8; h * w];
            for _ in 0..1 + rng.below(4) {
                let (r0, c0) = (rng.below(h), rng.below(w));
                let (rh, rw) = (1 + rng.below(h / 2 + 1), 1 + rng.below(w / 2 + 1));
                let disc = rng.bernoulli(0.5);
                for r in 0..h {
                    for c in 0..w {
                        let (dr, dc) = (r as f64 - r0 as f64, c as f64 - c0 as f64);
                        let inside = if disc {
                            (dr / rh as f64).powi(2) + (dc / rw as f64).powi(2) <= 1.0
                        } else {
                            (r0..r0 + rh).contains(&r) && (c0..c0 + rw).contains(&c)
                        };
                        if inside {
                            d[r * w + c] = 1;
                        }
                    }
                }
            }
            d
        };
        let mask = BinaryMask::new(h, w, data).unwrap();
        if !mask.is_constant() {
            return mask;
        }
    }
}

/// Foreground pixels with a 4-neighbour in the background.
pub fn boundary_loop(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let bg = |rr: isize, cc: isize| {
                rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && !mask.get(rr as usize, cc as usize)
            };
            let (ri, ci) = (r as isize, c as isize);
            if bg(ri - 1, ci) || bg(ri + 1, ci) || bg(ri, ci - 1) || bg(ri, ci + 1) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Squared distance to the nearest boundary pixel, and that pixel (first in
/// row-major order on ties), for every pixel.
pub fn nearest_loop(mask: &BinaryMask) -> (Vec<u64>, Vec<(usize, usize)>) {
    let boundary = boundary_loop(mask);
    let (h, w) = (mask.height(), mask.width());
    let mut sq = Vec::with_capacity(h * w);
    let mut site = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut best = (u64::MAX, (0, 0));
            for &(br, bc) in &boundary {
                let d = (r.abs_diff(br).pow(2) + c.abs_diff(bc).pow(2)) as u64;
                if d < best.0 {
                    best = (d, (br, bc));
                }
            }
            sq.push(best.0);
            site.push(best.1);
        }
    }
    (sq, site)
}

pub fn sdm_loss_loop(pred: &[f64], target: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        total += d * d;
    }
    total
}

/// Per pixel: Euclidean offset error plus squared angle, the latter skipped
/// when either vector is shorter than `eps`.
pub fn df_loss_loop(pred: &[f64], target: &[f64], eps: f64) -> f64 {
    let mut total = 0.0;
    for p in 0..pred.len() / 2 {
        let (u0, u1) = (pred[2 * p], pred[2 * p + 1]);
        let (v0, v1) = (target[2 * p], target[2 * p + 1]);
        total += ((u0 - v0).powi(2) + (u1 - v1).powi(2)).sqrt();
        let nu = (u0 * u0 + u1 * u1).sqrt();
        let nv = (v0 * v0 + v1 * v1).sqrt();
        if nu >= eps && nv >= eps {
            let cos = ((u0 / nu) * (v0 / nv) + (u1 / nu) * (v1 / nv)).clamp(-1.0, 1.0);
            total += cos.acos().powi(2);
        }
    }
    total
}

/// Direction-aware smoothness with forward differences, weight taken at the
/// left/upper pixel of each pair.
#[allow(clippy::too_many_arguments)]
pub fn ds_loss_loop(
    o: &[f64],
    gt: &BinaryMask,
    fx: &[f64],
    fy: &[f64],
    alpha: f64,
    psi_eps: f64,
    w_max: f64,
) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let g = |r: usize, c: usize| if gt.get(r, c) { 1.0f64 } else { 0.0 };
    let weight = |r: usize, c: usize| {
        if !gt.get(r, c) {
            return 1.0;
        }
        let n = (fx[r * w + c].powi(2) + fy[r * w + c].powi(2)).sqrt();
        f64::min(1.0 / n.max(1.0), w_max)
    };
    let psi = |m: f64| (m * m + psi_eps * psi_eps).sqrt();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w - 1 {
            let d_o = o[r * w + c + 1] - o[r * w + c];
            let d_g = g(r, c + 1) - g(r, c);
            total += weight(r, c) * psi(d_o.abs() * (-alpha * d_g.abs()).exp());
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            let d_o = o[(r + 1) * w + c] - o[r * w + c];
            let d_g = g(r + 1, c) - g(r, c);
            total += weight(r, c) * psi(d_o.abs() * (-alpha * d_g.abs()).exp());
        }
    }
    total
}

/// Precision and recall at threshold `t / 255` (prediction `>= t/255`
/// counts as positive), one threshold at a time. Empty denominators give 1.
pub fn pr_loop(pred: &[f64], gt: &BinaryMask) -> (Vec<f64>, Vec<f64>) {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let positives = gt.data().iter().filter(|&&g| g == 1).count() as f64;
    for t in 0..256 {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (i, &p) in pred.iter().enumerate() {
            if p >= t as f64 / 255.0 {
                if gt.data()[i] == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        precision.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 1.0 });
        recall.push(if positives > 0.0 { tp / positives } else { 1.0 });
    }
    (precision, recall)
}

/// Prediction quantized to multiples of 1/255, as read back from an 8-bit file.
pub fn random_quantized_map(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.below(256) as f64 / 255.0).collect()
}
