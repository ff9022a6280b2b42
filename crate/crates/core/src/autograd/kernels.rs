//! Forward and backward numerics behind the graph ops.
//!
//! Everything here works on raw row-major slices. Layout conventions:
//! images and feature maps are `[H, W, C]` (channels last), token batches are
//! `[B, T, C]`.

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Relu,
    Gelu,
    Sigmoid,
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Relu => "relu",
            Unary::Gelu => "gelu",
            Unary::Sigmoid => "sigmoid",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.max(0.0),
            // tanh approximation
            Unary::Gelu => 0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh()),
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative given the input `x` and the output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Gelu => {
                let u = GELU_K * (x + GELU_C * x * x * x);
                let t = u.tanh();
                let du = GELU_K * (1.0 + 3.0 * GELU_C * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
            Unary::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Split a shape around `axis` into `(outer, n, inner)`.
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax_forward(x: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (x[at(j)] - max).exp();
                y[at(j)] = e;
                total += e;
            }
            for j in 0..n {
                y[at(j)] /= total;
            }
        }
    }
    y
}

pub fn softmax_backward(y: &[f64], dy: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let dot: f64 = (0..n).map(|j| y[at(j)] * dy[at(j)]).sum();
            for j in 0..n {
                dx[at(j)] = y[at(j)] * (dy[at(j)] - dot);
            }
        }
    }
    dx
}

/// Per-token statistics saved by layer norm for its backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormSaved {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layernorm_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    c: usize,
    eps: f64,
) -> (Vec<f64>, LayerNormSaved) {
    let tokens = x.len() / c;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; tokens];
    for t in 0..tokens {
        let row = &x[t * c..(t + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let r = 1.0 / (var + eps).sqrt();
        rstd[t] = r;
        for j in 0..c {
            let h = (row[j] - mean) * r;
            xhat[t * c + j] = h;
            y[t * c + j] = h * gamma[j] + beta[j];
        }
    }
    (y, LayerNormSaved { xhat, rstd })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layernorm_backward(
    saved: &LayerNormSaved,
    gamma: &[f64],
    dy: &[f64],
    c: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let tokens = saved.rstd.len();
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for t in 0..tokens {
        let xh = &saved.xhat[t * c..(t + 1) * c];
        let g = &dy[t * c..(t + 1) * c];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for j in 0..c {
            let d = g[j] * gamma[j];
            mean_d += d;
            mean_dx += d * xh[j];
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
        }
        mean_d /= c as f64;
        mean_dx /= c as f64;
        for j in 0..c {
            let d = g[j] * gamma[j];
            dx[t * c + j] = saved.rstd[t] * (d - mean_d - xh[j] * mean_dx);
        }
    }
    (dx, dgamma, dbeta)
}

pub fn permute(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let new_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < new_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * new_shape[ax];
            idx[ax] = 0;
        }
    }
    (out, new_shape)
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Zero-padded 3×3 convolution, stride 1, on `[H, W, Cin]` with weights
/// `[3, 3, Cin, Cout]`.
pub fn conv3x3_forward(
    x: &[f64],
    w: &[f64],
    b: Option<&[f64]>,
    h: usize,
    wd: usize,
    cin: usize,
    cout: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; h * wd * cout];
    for r in 0..h {
        for c in 0..wd {
            let out = &mut y[(r * wd + c) * cout..(r * wd + c + 1) * cout];
            if let Some(b) = b {
                out.copy_from_slice(b);
            }
            for kr in 0..3 {
                let rr = r as isize + kr as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for kc in 0..3 {
                    let cc = c as isize + kc as isize - 1;
                    if cc < 0 || cc >= wd as isize {
                        continue;
                    }
                    let xin = &x[(rr as usize * wd + cc as usize) * cin..][..cin];
                    let wk = &w[(kr * 3 + kc) * cin * cout..][..cin * cout];
                    for (i, &xv) in xin.iter().enumerate() {
                        for (o, &wv) in out.iter_mut().zip(&wk[i * cout..(i + 1) * cout]) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub fn conv3x3_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    h: usize,
    wd: usize,
    cin: usize,
    cout: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for r in 0..h {
        for c in 0..wd {
            let g = &dy[(r * wd + c) * cout..(r * wd + c + 1) * cout];
            for (d, &gv) in db.iter_mut().zip(g) {
                *d += gv;
            }
            for kr in 0..3 {
                let rr = r as isize + kr as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for kc in 0..3 {
                    let cc = c as isize + kc as isize - 1;
                    if cc < 0 || cc >= wd as isize {
                        continue;
                    }
                    let base = (rr as usize * wd + cc as usize) * cin;
                    let koff = (kr * 3 + kc) * cin * cout;
                    for i in 0..cin {
                        let wk = &w[koff + i * cout..koff + (i + 1) * cout];
                        dx[base + i] += wk.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        let xv = x[base + i];
                        for (d, &gv) in dw[koff + i * cout..koff + (i + 1) * cout].iter_mut().zip(g) {
                            *d += xv * gv;
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    /// Half-pixel centres with edge clamping.
    Bilinear,
}

/// Per-output-index source taps `(i0, i1, frac)` for integer-factor bilinear
/// upsampling of an axis of length `n`.
pub fn bilinear_taps(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

pub fn upsample_forward(
    x: &[f64],
    h: usize,
    w: usize,
    c: usize,
    factor: usize,
    mode: UpsampleMode,
) -> Vec<f64> {
    let (oh, ow) = (h * factor, w * factor);
    let mut y = vec![0.0; oh * ow * c];
    match mode {
        UpsampleMode::Nearest => {
            for r in 0..oh {
                for col in 0..ow {
                    let src = &x[((r / factor) * w + col / factor) * c..][..c];
                    y[(r * ow + col) * c..][..c].copy_from_slice(src);
                }
            }
        }
        UpsampleMode::Bilinear => {
            let rt = bilinear_taps(h, factor);
            let ct = bilinear_taps(w, factor);
            for (r, &(r0, r1, fr)) in rt.iter().enumerate() {
                for (col, &(c0, c1, fc)) in ct.iter().enumerate() {
                    let out = &mut y[(r * ow + col) * c..][..c];
                    let taps = [
                        (r0, c0, (1.0 - fr) * (1.0 - fc)),
                        (r0, c1, (1.0 - fr) * fc),
                        (r1, c0, fr * (1.0 - fc)),
                        (r1, c1, fr * fc),
                    ];
                    for (sr, sc, wt) in taps {
                        if wt == 0.0 {
                            continue;
                        }
                        let src = &x[(sr * w + sc) * c..][..c];
                        for (o, &v) in out.iter_mut().zip(src) {
                            *o += wt * v;
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn upsample_backward(
    dy: &[f64],
    h: usize,
    w: usize,
    c: usize,
    factor: usize,
    mode: UpsampleMode,
) -> Vec<f64> {
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = vec![0.0; h * w * c];
    match mode {
        UpsampleMode::Nearest => {
            for r in 0..oh {
                for col in 0..ow {
                    let g = &dy[(r * ow + col) * c..][..c];
                    let d = &mut dx[((r / factor) * w + col / factor) * c..][..c];
                    for (a, &b) in d.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
        }
        UpsampleMode::Bilinear => {
            let rt = bilinear_taps(h, factor);
            let ct = bilinear_taps(w, factor);
            for (r, &(r0, r1, fr)) in rt.iter().enumerate() {
                for (col, &(c0, c1, fc)) in ct.iter().enumerate() {
                    let g = &dy[(r * ow + col) * c..][..c];
                    let taps = [
                        (r0, c0, (1.0 - fr) * (1.0 - fc)),
                        (r0, c1, (1.0 - fr) * fc),
                        (r1, c0, fr * (1.0 - fc)),
                        (r1, c1, fr * fc),
                    ];
                    for (sr, sc, wt) in taps {
                        if wt == 0.0 {
                            continue;
                        }
                        let d = &mut dx[(sr * w + sc) * c..][..c];
                        for (a, &b) in d.iter_mut().zip(g) {
                            *a += wt * b;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Cyclic shift of a `[H, W, C]` map: element `(r, c)` moves to
/// `((r + dr) mod H, (c + dc) mod W)`.
pub fn roll(x: &[f64], h: usize, w: usize, c: usize, dr: isize, dc: isize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for r in 0..h {
        let nr = (r as isize + dr).rem_euclid(h as isize) as usize;
        for col in 0..w {
            let nc = (col as isize + dc).rem_euclid(w as isize) as usize;
            y[(nr * w + nc) * c..][..c].copy_from_slice(&x[(r * w + col) * c..][..c]);
        }
    }
    y
}

/// One bilinear tap set for a sampling location, with clamping flags.
struct Sample {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    fr: f64,
    fc: f64,
    row_clamped: bool,
    col_clamped: bool,
}

fn sample_at(y: f64, x: f64, h: usize, w: usize) -> Sample {
    let ymax = (h - 1) as f64;
    let xmax = (w - 1) as f64;
    let row_clamped = !(0.0..=ymax).contains(&y);
    let col_clamped = !(0.0..=xmax).contains(&x);
    let y = y.clamp(0.0, ymax);
    let x = x.clamp(0.0, xmax);
    let r0 = y.floor() as usize;
    let c0 = x.floor() as usize;
    Sample {
        r0,
        r1: (r0 + 1).min(h - 1),
        c0,
        c1: (c0 + 1).min(w - 1),
        fr: y - r0 as f64,
        fc: x - c0 as f64,
        row_clamped,
        col_clamped,
    }
}

/// Bilinear sampling of `src[H, W, C]` at `p + flow(p)` for every pixel `p`,
/// where `flow[H, W, 2]` holds (row, column) offsets. Out-of-range
/// coordinates are clamped to the border.
pub fn grid_sample_forward(src: &[f64], flow: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut y = vec![0.0; h * w * c];
    for r in 0..h {
        for col in 0..w {
            let p = r * w + col;
            let s = sample_at(r as f64 + flow[2 * p], col as f64 + flow[2 * p + 1], h, w);
            let out = &mut y[p * c..][..c];
            let taps = [
                (s.r0, s.c0, (1.0 - s.fr) * (1.0 - s.fc)),
                (s.r0, s.c1, (1.0 - s.fr) * s.fc),
                (s.r1, s.c0, s.fr * (1.0 - s.fc)),
                (s.r1, s.c1, s.fr * s.fc),
            ];
            for (sr, sc, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&src[(sr * w + sc) * c..][..c]) {
                    *o += wt * v;
                }
            }
        }
    }
    y
}

/// Returns `(dsrc, dflow)`.
pub fn grid_sample_backward(
    src: &[f64],
    flow: &[f64],
    dy: &[f64],
    h: usize,
    w: usize,
    c: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dsrc = vec![0.0; src.len()];
    let mut dflow = vec![0.0; flow.len()];
    for r in 0..h {
        for col in 0..w {
            let p = r * w + col;
            let s = sample_at(r as f64 + flow[2 * p], col as f64 + flow[2 * p + 1], h, w);
            let g = &dy[p * c..][..c];
            let v00 = &src[(s.r0 * w + s.c0) * c..][..c];
            let v01 = &src[(s.r0 * w + s.c1) * c..][..c];
            let v10 = &src[(s.r1 * w + s.c0) * c..][..c];
            let v11 = &src[(s.r1 * w + s.c1) * c..][..c];
            let mut d_row = 0.0;
            let mut d_col = 0.0;
            for k in 0..c {
                d_row += g[k] * ((1.0 - s.fc) * (v10[k] - v00[k]) + s.fc * (v11[k] - v01[k]));
                d_col += g[k] * ((1.0 - s.fr) * (v01[k] - v00[k]) + s.fr * (v11[k] - v10[k]));
            }
            if !s.row_clamped {
                dflow[2 * p] = d_row;
            }
            if !s.col_clamped {
                dflow[2 * p + 1] = d_col;
            }
            let taps = [
                (s.r0, s.c0, (1.0 - s.fr) * (1.0 - s.fc)),
                (s.r0, s.c1, (1.0 - s.fr) * s.fc),
                (s.r1, s.c0, s.fr * (1.0 - s.fc)),
                (s.r1, s.c1, s.fr * s.fc),
            ];
            for (sr, sc, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                for (d, &gv) in dsrc[(sr * w + sc) * c..][..c].iter_mut().zip(g) {
                    *d += wt * gv;
                }
            }
        }
    }
    (dsrc, dflow)
}
