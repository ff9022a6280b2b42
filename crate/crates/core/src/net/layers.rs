//! Building blocks recorded on a [`Graph`]. Feature maps are `[H, W, C]`.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::LN_EPS;
use super::params::{Bound, Initializer};

/// Added to masked attention logits; large enough that `exp` underflows to 0.
pub const MASK_LOGIT: f64 = -1e9;

fn hwc(g: &Graph, x: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *g.shape(x) {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::shape(op, format!("expected [H, W, C], got {s:?}"))),
    }
}

pub fn linear(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.w"));
    let b = p.var(&format!("{name}.b"));
    g.linear(x, w, Some(b))
}

pub fn layer_norm(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let gamma = p.var(&format!("{name}.gamma"));
    let beta = p.var(&format!("{name}.beta"));
    g.layernorm(x, gamma, beta, LN_EPS)
}

/// `[H, W, C]` to `[nW, ws*ws, C]`, windows in row-major order.
pub fn window_partition(g: &mut Graph, x: Var, ws: usize) -> Result<Var> {
    let (h, w, c) = hwc(g, x, "window_partition")?;
    if ws == 0 || h % ws != 0 || w % ws != 0 {
        return Err(Error::shape("window_partition", format!("{h}x{w} grid with window {ws}")));
    }
    let x = g.reshape(x, &[h / ws, ws, w / ws, ws, c])?;
    let x = g.permute(x, &[0, 2, 1, 3, 4])?;
    g.reshape(x, &[(h / ws) * (w / ws), ws * ws, c])
}

pub fn window_reverse(g: &mut Graph, x: Var, ws: usize, h: usize, w: usize) -> Result<Var> {
    let c = match *g.shape(x) {
        [n, t, c] if ws > 0 && h % ws == 0 && w % ws == 0 && n == (h / ws) * (w / ws) && t == ws * ws => c,
        ref s => return Err(Error::shape("window_reverse", format!("{s:?} into {h}x{w} with window {ws}"))),
    };
    let x = g.reshape(x, &[h / ws, w / ws, ws, ws, c])?;
    let x = g.permute(x, &[0, 2, 1, 3, 4])?;
    g.reshape(x, &[h, w, c])
}

/// Region labels for the shifted-window mask: after a cyclic shift by
/// `-shift`, tokens that came from different sides of the seam carry
/// different labels.
fn shift_regions(n: usize, ws: usize, shift: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            if i < n - ws {
                0
            } else if i < n - shift {
                1
            } else {
                2
            }
        })
        .collect()
}

/// Additive logit mask `[nW, T, T]` for shifted windows: 0 between tokens of
/// the same region, [`MASK_LOGIT`] otherwise.
pub fn shifted_window_mask(h: usize, w: usize, ws: usize, shift: usize) -> Tensor {
    let rows = shift_regions(h, ws, shift);
    let cols = shift_regions(w, ws, shift);
    let (nh, nw, t) = (h / ws, w / ws, ws * ws);
    let mut out = Vec::with_capacity(nh * nw * t * t);
    for wr in 0..nh {
        for wc in 0..nw {
            let label = |k: usize| rows[wr * ws + k / ws] * 3 + cols[wc * ws + k % ws];
            for i in 0..t {
                for j in 0..t {
                    out.push(if label(i) == label(j) { 0.0 } else { MASK_LOGIT });
                }
            }
        }
    }
    Tensor::from_vec(&[nh * nw, t, t], out).expect("mask extents are nonzero")
}

pub struct Attention {
    pub out: Var,
    /// `[nW * heads, T, T]`, rows sum to 1.
    pub weights: Var,
}

/// Multi-head scaled dot-product attention over token groups.
/// `qkv` is `[B, T, 3C]`; `mask`, if any, is `[B, T, T]` and is repeated per
/// head. Returns `[B, T, C]`.
pub fn multi_head_attention(g: &mut Graph, qkv: Var, heads: usize, mask: Option<&Tensor>) -> Result<Attention> {
    let (b, t, c) = match *g.shape(qkv) {
        [b, t, c3] if c3 % 3 == 0 && heads > 0 && (c3 / 3) % heads == 0 => (b, t, c3 / 3),
        ref s => return Err(Error::shape("attention", format!("qkv {s:?} with {heads} heads"))),
    };
    let d = c / heads;
    let x = g.reshape(qkv, &[b, t, 3, heads, d])?;
    let x = g.permute(x, &[2, 0, 3, 1, 4])?;
    let x = g.reshape(x, &[3, b * heads, t, d])?;
    let q = g.select(x, 0)?;
    let k = g.select(x, 1)?;
    let v = g.select(x, 2)?;
    let logits = g.bmm(q, k, true)?;
    let mut logits = g.scale(logits, 1.0 / (d as f64).sqrt())?;
    if let Some(mask) = mask {
        if mask.shape() != [b, t, t] {
            return Err(Error::shape("attention", format!("mask {:?} for [{b}, {t}, {t}]", mask.shape())));
        }
        let mut rep = Vec::with_capacity(b * heads * t * t);
        for chunk in mask.data().chunks_exact(t * t) {
            for _ in 0..heads {
                rep.extend_from_slice(chunk);
            }
        }
        let m = g.constant(Tensor::from_vec(&[b * heads, t, t], rep)?);
        logits = g.add(logits, m)?;
    }
    let weights = g.softmax(logits, 2)?;
    let out = g.bmm(weights, v, false)?;
    let out = g.reshape(out, &[b, heads, t, d])?;
    let out = g.permute(out, &[0, 2, 1, 3])?;
    let out = g.reshape(out, &[b, t, c])?;
    Ok(Attention { out, weights })
}

/// Window attention with a cyclic shift (0 for W-MSA, `ws / 2` for SW-MSA).
/// Parameters: `{name}.qkv` (C -> 3C) and `{name}.proj` (C -> C).
pub fn window_attention(
    g: &mut Graph,
    p: &Bound,
    name: &str,
    x: Var,
    ws: usize,
    shift: usize,
    heads: usize,
) -> Result<Attention> {
    let (h, w, _) = hwc(g, x, "window_attention")?;
    if shift >= ws {
        return Err(Error::shape("window_attention", format!("shift {shift} with window {ws}")));
    }
    let shifted = if shift > 0 { g.roll(x, -(shift as isize), -(shift as isize))? } else { x };
    let windows = window_partition(g, shifted, ws)?;
    let qkv = linear(g, p, &format!("{name}.qkv"), windows)?;
    let mask = (shift > 0).then(|| shifted_window_mask(h, w, ws, shift));
    let att = multi_head_attention(g, qkv, heads, mask.as_ref())?;
    let out = linear(g, p, &format!("{name}.proj"), att.out)?;
    let out = window_reverse(g, out, ws, h, w)?;
    let out = if shift > 0 { g.roll(out, shift as isize, shift as isize)? } else { out };
    Ok(Attention { out, weights: att.weights })
}

pub fn init_attention(init: &mut Initializer, name: &str, c: usize) {
    init.linear(&format!("{name}.qkv"), c, 3 * c);
    init.linear(&format!("{name}.proj"), c, c);
}

pub fn mlp(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let hidden = linear(g, p, &format!("{name}.fc1"), x)?;
    let hidden = g.gelu(hidden)?;
    linear(g, p, &format!("{name}.fc2"), hidden)
}

pub fn init_mlp(init: &mut Initializer, name: &str, c: usize, ratio: usize) {
    init.linear(&format!("{name}.fc1"), c, ratio * c);
    init.linear(&format!("{name}.fc2"), ratio * c, c);
}

/// Window geometry for one Swin block pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub window: usize,
    pub shift: usize,
    pub heads: usize,
}

/// One W-MSA block followed by one SW-MSA block, each as
/// `x + attn(LN(x))` then `x + MLP(LN(x))`.
pub fn swin_block_pair(g: &mut Graph, p: &Bound, name: &str, x: Var, shape: BlockShape) -> Result<Var> {
    let mut x = x;
    for (k, shift) in [0, shape.shift].into_iter().enumerate() {
        let pre = format!("{name}.{k}");
        let n = layer_norm(g, p, &format!("{pre}.ln1"), x)?;
        let a = window_attention(g, p, &format!("{pre}.attn"), n, shape.window, shift, shape.heads)?;
        x = g.add(x, a.out)?;
        let n = layer_norm(g, p, &format!("{pre}.ln2"), x)?;
        let m = mlp(g, p, &format!("{pre}.mlp"), n)?;
        x = g.add(x, m)?;
    }
    Ok(x)
}

pub fn init_swin_block_pair(init: &mut Initializer, name: &str, c: usize, mlp_ratio: usize) {
    for k in 0..2 {
        let pre = format!("{name}.{k}");
        init.layer_norm(&format!("{pre}.ln1"), c);
        init_attention(init, &format!("{pre}.attn"), c);
        init.layer_norm(&format!("{pre}.ln2"), c);
        init_mlp(init, &format!("{pre}.mlp"), c, mlp_ratio);
    }
}

/// Gathers each 2×2 neighbourhood into one token (channel order: the four
/// sub-pixels row-major, each with its C channels) without projecting.
pub fn space_to_depth(g: &mut Graph, x: Var, k: usize) -> Result<Var> {
    let (h, w, c) = hwc(g, x, "space_to_depth")?;
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(Error::shape("space_to_depth", format!("{h}x{w} by {k}")));
    }
    let x = g.reshape(x, &[h / k, k, w / k, k, c])?;
    let x = g.permute(x, &[0, 2, 1, 3, 4])?;
    g.reshape(x, &[h / k, w / k, k * k * c])
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space(g: &mut Graph, x: Var, k: usize) -> Result<Var> {
    let (h, w, c) = hwc(g, x, "depth_to_space")?;
    if k == 0 || c % (k * k) != 0 {
        return Err(Error::shape("depth_to_space", format!("{c} channels by {k}")));
    }
    let x = g.reshape(x, &[h, w, k, k, c / (k * k)])?;
    let x = g.permute(x, &[0, 2, 1, 3, 4])?;
    g.reshape(x, &[h * k, w * k, c / (k * k)])
}

/// `[H, W, C]` to `[H/2, W/2, 2C]`: concatenate each 2×2 block, then a
/// linear map 4C -> 2C (`{name}`).
pub fn patch_merging(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let (h, w, _) = hwc(g, x, "patch_merging")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("patch_merging", format!("odd grid {h}x{w}")));
    }
    let x = space_to_depth(g, x, 2)?;
    linear(g, p, name, x)
}

/// `[H, W, C]` to `[2H, 2W, C/2]`: a linear map C -> 2C (`{name}`), then each
/// token's 2C channels become a 2×2 block of C/2.
pub fn patch_separating(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let (_, _, c) = hwc(g, x, "patch_separating")?;
    if c % 2 != 0 {
        return Err(Error::shape("patch_separating", format!("odd channel count {c}")));
    }
    let x = linear(g, p, name, x)?;
    depth_to_space(g, x, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_shape_and_symmetry() {
        let m = shifted_window_mask(12, 12, 6, 3);
        assert_eq!(m.shape(), &[4, 36, 36]);
        // The top-left window never wraps.
        assert!(m.data()[..36 * 36].iter().all(|&v| v == 0.0));
        let last = &m.data()[3 * 36 * 36..];
        for i in 0..36 {
            assert_eq!(last[i * 36 + i], 0.0);
            for j in 0..36 {
                assert_eq!(last[i * 36 + j], last[j * 36 + i]);
            }
        }
        // The bottom-right window mixes four regions of 9 tokens each.
        assert_eq!(last.iter().filter(|&&v| v == 0.0).count(), 4 * 81);
    }

    #[test]
    fn space_to_depth_round_trip() {
        let mut g = Graph::new();
        let t = Tensor::from_vec(&[4, 6, 2], (0..48).map(f64::from).collect()).unwrap();
        let x = g.constant(t.clone());
        let y = space_to_depth(&mut g, x, 2).unwrap();
        assert_eq!(g.shape(y), &[2, 3, 8]);
        // Token (0, 0) holds pixels (0,0), (0,1), (1,0), (1,1).
        assert_eq!(&g.value(y).data()[..8], &[0.0, 1.0, 2.0, 3.0, 12.0, 13.0, 14.0, 15.0]);
        let z = depth_to_space(&mut g, y, 2).unwrap();
        assert_eq!(g.value(z), &t);
    }
}
