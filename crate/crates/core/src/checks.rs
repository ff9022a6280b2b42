//! Finite-difference gradient suite over every differentiable kernel and loss.
//!
//! Inputs are drawn away from non-differentiable points: ReLU kinks, integer
//! sampling coordinates, zero-length vectors and parallel/antiparallel field
//! directions.

use crate::autograd::{grad_check_with, GradCheckReport, Graph, UpsampleMode, Var};
use crate::error::Result;
use crate::geometry::{self, BinaryMask, DirectionField, SignedDistanceMap};
use crate::losses::{self, LossWeights};
use crate::net::layers;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;
pub const DEFAULT_INSTANCES: usize = 10;
/// Rng stream for the suite's random instances.
pub const SUITE_STREAM: u64 = 7;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub report: GradCheckReport,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

type Case = fn(&mut Rng, bool) -> Result<GradCheckReport>;

/// Reduce `y` to a scalar with a fixed random projection.
fn project(g: &mut Graph, y: Var, r: &Tensor) -> Result<Var> {
    let c = g.constant(r.clone());
    let m = g.mul(y, c)?;
    g.sum(m)
}

fn check<F>(rng: &mut Rng, x: &Tensor, out_shape: &[usize], flip: bool, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let r = rng.uniform_tensor(out_shape, -1.0, 1.0);
    grad_check_with(
        |g, v| {
            let y = f(g, v)?;
            project(g, y, &r)
        },
        x,
        FD_STEP,
        GRAD_TOL,
        flip,
    )
}

fn away_from_zero(rng: &mut Rng, shape: &[usize], margin: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.uniform(margin, 1.0);
            if rng.bernoulli(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("nonzero extents")
}

fn unary(kind: crate::autograd::Unary) -> impl Fn(&mut Rng, bool) -> Result<GradCheckReport> {
    move |rng, flip| {
        let x = away_from_zero(rng, &[3, 4], 0.05);
        check(rng, &x, &[3, 4], flip, move |g, v| g.unary(v, kind))
    }
}

fn case_add(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[3, 4], -1.0, 1.0);
    let b = rng.uniform_tensor(&[3, 4], -1.0, 1.0);
    check(rng, &x, &[3, 4], flip, |g, v| {
        let c = g.constant(b.clone());
        let s = g.add(v, c)?;
        let d = g.sub(s, v)?;
        let d = g.sub(c, d)?;
        g.add(s, d)
    })
}

fn case_mul(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[3, 4], -1.0, 1.0);
    let b = rng.uniform_tensor(&[3, 4], -1.0, 1.0);
    check(rng, &x, &[3, 4], flip, |g, v| {
        let c = g.constant(b.clone());
        let m = g.mul(v, c)?;
        let sq = g.mul(m, v)?;
        g.scale(sq, 1.7)
    })
}

fn case_matmul(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let a = rng.uniform_tensor(&[3, 4], -1.0, 1.0);
    let b = rng.uniform_tensor(&[4, 5], -1.0, 1.0);
    let (a2, b2) = (a.clone(), b.clone());
    let ra = check(rng, &a, &[3, 5], flip, |g, v| {
        let c = g.constant(b2.clone());
        g.matmul(v, c)
    })?;
    let rb = check(rng, &b, &[3, 5], flip, |g, v| {
        let c = g.constant(a2.clone());
        g.matmul(c, v)
    })?;
    Ok(ra.merge(rb))
}

fn case_bmm(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let a = rng.uniform_tensor(&[2, 3, 4], -1.0, 1.0);
    let b = rng.uniform_tensor(&[2, 5, 4], -1.0, 1.0);
    let (a2, b2) = (a.clone(), b.clone());
    let ra = check(rng, &a, &[2, 3, 5], flip, |g, v| {
        let c = g.constant(b2.clone());
        g.bmm(v, c, true)
    })?;
    let rb = check(rng, &b, &[2, 3, 5], flip, |g, v| {
        let c = g.constant(a2.clone());
        g.bmm(c, v, true)
    })?;
    let bt = rng.uniform_tensor(&[2, 4, 5], -1.0, 1.0);
    let rc = check(rng, &bt, &[2, 3, 5], flip, |g, v| {
        let c = g.constant(a2.clone());
        g.bmm(c, v, false)
    })?;
    Ok(ra.merge(rb).merge(rc))
}

fn case_linear(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[2, 3, 4], -1.0, 1.0);
    let w = rng.uniform_tensor(&[4, 5], -1.0, 1.0);
    let b = rng.uniform_tensor(&[5], -1.0, 1.0);
    let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
    let rx = check(rng, &x, &[2, 3, 5], flip, |g, v| {
        let (w, b) = (g.constant(w2.clone()), g.constant(b2.clone()));
        g.linear(v, w, Some(b))
    })?;
    let rw = check(rng, &w, &[2, 3, 5], flip, |g, v| {
        let (x, b) = (g.constant(x2.clone()), g.constant(b2.clone()));
        g.linear(x, v, Some(b))
    })?;
    let rb = check(rng, &b, &[2, 3, 5], flip, |g, v| {
        let (x, w) = (g.constant(x2.clone()), g.constant(w2.clone()));
        g.linear(x, w, Some(v))
    })?;
    Ok(rx.merge(rw).merge(rb))
}

fn case_softmax(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[2, 3, 4], -2.0, 2.0);
    let mut report: Option<GradCheckReport> = None;
    for axis in 0..3 {
        let r = check(rng, &x, &[2, 3, 4], flip, move |g, v| g.softmax(v, axis))?;
        report = Some(match report {
            None => r,
            Some(p) => p.merge(r),
        });
    }
    Ok(report.expect("three axes"))
}

fn case_layernorm(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[3, 5], -2.0, 2.0);
    let gamma = rng.uniform_tensor(&[5], 0.5, 1.5);
    let beta = rng.uniform_tensor(&[5], -0.5, 0.5);
    let (x2, g2, b2) = (x.clone(), gamma.clone(), beta.clone());
    let rx = check(rng, &x, &[3, 5], flip, |g, v| {
        let (ga, be) = (g.constant(g2.clone()), g.constant(b2.clone()));
        g.layernorm(v, ga, be, 1e-5)
    })?;
    let rg = check(rng, &gamma, &[3, 5], flip, |g, v| {
        let (x, be) = (g.constant(x2.clone()), g.constant(b2.clone()));
        g.layernorm(x, v, be, 1e-5)
    })?;
    let rb = check(rng, &beta, &[3, 5], flip, |g, v| {
        let (x, ga) = (g.constant(x2.clone()), g.constant(g2.clone()));
        g.layernorm(x, ga, v, 1e-5)
    })?;
    Ok(rx.merge(rg).merge(rb))
}

fn case_shape_ops(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[2, 3, 4], -1.0, 1.0);
    let other = rng.uniform_tensor(&[2, 3, 2], -1.0, 1.0);
    check(rng, &x, &[14], flip, |g, v| {
        let o = g.constant(other.clone());
        let c = g.concat(&[v, o], 2)?;
        let p = g.permute(c, &[2, 0, 1])?;
        let s = g.select(p, 1)?;
        let t = g.transpose(s)?;
        let sq = g.mul(t, t)?;
        let both = g.concat(&[sq, t], 1)?;
        let flat = g.reshape(both, &[12])?;
        let m = g.mean(c)?;
        let m = g.reshape(m, &[1])?;
        let total = g.sum(sq)?;
        let total = g.reshape(total, &[1])?;
        g.concat(&[flat, m, total], 0)
    })
}

fn case_conv3x3(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[4, 5, 2], -1.0, 1.0);
    let w = rng.uniform_tensor(&[3, 3, 2, 3], -1.0, 1.0);
    let b = rng.uniform_tensor(&[3], -1.0, 1.0);
    let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
    let rx = check(rng, &x, &[4, 5, 3], flip, |g, v| {
        let (w, b) = (g.constant(w2.clone()), g.constant(b2.clone()));
        g.conv3x3(v, w, Some(b))
    })?;
    let rw = check(rng, &w, &[4, 5, 3], flip, |g, v| {
        let (x, b) = (g.constant(x2.clone()), g.constant(b2.clone()));
        g.conv3x3(x, v, Some(b))
    })?;
    let rb = check(rng, &b, &[4, 5, 3], flip, |g, v| {
        let (x, w) = (g.constant(x2.clone()), g.constant(w2.clone()));
        g.conv3x3(x, w, Some(v))
    })?;
    Ok(rx.merge(rw).merge(rb))
}

fn case_upsample(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[3, 2, 2], -1.0, 1.0);
    let a = check(rng, &x, &[12, 8, 2], flip, |g, v| g.upsample(v, 4, UpsampleMode::Bilinear))?;
    let b = check(rng, &x, &[6, 4, 2], flip, |g, v| g.upsample(v, 2, UpsampleMode::Nearest))?;
    Ok(a.merge(b))
}

fn case_roll(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let x = rng.uniform_tensor(&[3, 4, 2], -1.0, 1.0);
    let (dr, dc) = (rng.below(7) as isize - 3, rng.below(9) as isize - 4);
    check(rng, &x, &[3, 4, 2], flip, move |g, v| g.roll(v, dr, dc))
}

/// Flow whose sample points have fractional parts in [0.1, 0.9]; a third of
/// them land outside the grid, on the clamped side.
fn random_flow(rng: &mut Rng, h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            for (p, n) in [(r, h), (c, w)] {
                let target = if rng.bernoulli(0.33) {
                    if rng.bernoulli(0.5) {
                        -1.5 - rng.uniform(0.0, 1.0)
                    } else {
                        n as f64 + 0.5 + rng.uniform(0.0, 1.0)
                    }
                } else {
                    rng.below(n - 1) as f64 + rng.uniform(0.1, 0.9)
                };
                data.push(target - p as f64);
            }
        }
    }
    Tensor::from_vec(&[h, w, 2], data).expect("nonzero extents")
}

fn case_grid_sample(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let src = rng.uniform_tensor(&[4, 5, 2], -1.0, 1.0);
    let flow = random_flow(rng, 4, 5);
    let (s2, f2) = (src.clone(), flow.clone());
    let rs = check(rng, &src, &[4, 5, 2], flip, |g, v| {
        let f = g.constant(f2.clone());
        g.grid_sample(v, f)
    })?;
    let rf = check(rng, &flow, &[4, 5, 2], flip, |g, v| {
        let s = g.constant(s2.clone());
        g.grid_sample(s, v)
    })?;
    Ok(rs.merge(rf))
}

fn case_window_attention(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    // Shifted, masked attention on a 4x4 grid with window 2 and 2 heads.
    let x = rng.uniform_tensor(&[4, 4, 4], -1.0, 1.0);
    let w = rng.uniform_tensor(&[4, 12], -0.5, 0.5);
    check(rng, &x, &[4, 4, 4], flip, |g, v| {
        let wq = g.constant(w.clone());
        let shifted = g.roll(v, -1, -1)?;
        let win = layers::window_partition(g, shifted, 2)?;
        let qkv = g.linear(win, wq, None)?;
        let mask = layers::shifted_window_mask(4, 4, 2, 1);
        let att = layers::multi_head_attention(g, qkv, 2, Some(&mask))?;
        let out = layers::window_reverse(g, att.out, 2, 4, 4)?;
        g.roll(out, 1, 1)
    })
}

fn random_mask(rng: &mut Rng, h: usize, w: usize) -> BinaryMask {
    loop {
        let bits: Vec<u8> = (0..h * w).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let m = BinaryMask::new(h, w, bits).expect("sized mask");
        if !m.is_constant() {
            return m;
        }
    }
}

fn size(rng: &mut Rng) -> (usize, usize) {
    (8 + rng.below(9), 8 + rng.below(9))
}

fn case_loss_sdm(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let (h, w) = size(rng);
    let target = geometry::supervision(&random_mask(rng, h, w), Default::default(), Default::default()).sdm;
    let x = rng.uniform_tensor(&[h, w, 1], -1.0, 1.0);
    grad_check_with(|g, v| losses::loss_sdm(g, v, &target), &x, FD_STEP, GRAD_TOL, flip)
}

/// Vector of length in [0.5, 2] at an angle away from `avoid` (if any).
fn random_vector(rng: &mut Rng, avoid: Option<[f64; 2]>) -> [f64; 2] {
    loop {
        let len = rng.uniform(0.5, 2.0);
        let a = rng.uniform(0.0, std::f64::consts::TAU);
        let v = [len * a.cos(), len * a.sin()];
        let Some(t) = avoid else { return v };
        let cos = (v[0] * t[0] + v[1] * t[1]) / (len * (t[0] * t[0] + t[1] * t[1]).sqrt());
        if cos.abs() < 0.99 {
            return v;
        }
    }
}

fn case_loss_df(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let (h, w) = size(rng);
    let n = h * w;
    let (mut fx, mut fy, mut pred) = (vec![0.0; n], vec![0.0; n], Vec::with_capacity(2 * n));
    for i in 0..n {
        let t = rng.bernoulli(0.6).then(|| random_vector(rng, None));
        if let Some(t) = t {
            fx[i] = t[0];
            fy[i] = t[1];
        }
        pred.extend(random_vector(rng, t));
    }
    let target = DirectionField::new(h, w, fx, fy)?;
    let x = Tensor::from_vec(&[h, w, 2], pred)?;
    grad_check_with(
        |g, v| losses::loss_df(g, v, &target, losses::DEFAULT_DF_ANGLE_EPS),
        &x,
        FD_STEP,
        GRAD_TOL,
        flip,
    )
}

fn case_loss_ds(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    let (h, w) = size(rng);
    let mask = random_mask(rng, h, w);
    let field = geometry::supervision(&mask, Default::default(), Default::default()).field;
    let x = rng.uniform_tensor(&[h, w, 1], 0.0, 1.0);
    let weights = LossWeights::default();
    grad_check_with(|g, v| losses::loss_ds(g, v, &mask, &field, &weights), &x, FD_STEP, GRAD_TOL, flip)
}

fn case_loss_prl(rng: &mut Rng, flip: bool) -> Result<GradCheckReport> {
    // All three terms driven by one input through different heads.
    let (h, w) = size(rng);
    let mask = random_mask(rng, h, w);
    let sup = geometry::supervision(&mask, Default::default(), Default::default());
    let weights = LossWeights { lambda1: rng.uniform(0.1, 2.0), lambda2: rng.uniform(0.1, 2.0), ..Default::default() };
    let x = rng.uniform_tensor(&[h, w, 1], -1.0, 1.0);
    let lift = away_from_zero(rng, &[1, 2], 0.5);
    let sdm_target: SignedDistanceMap = sup.sdm.clone();
    grad_check_with(
        |g, v| {
            let sal = g.sigmoid(v)?;
            let sdm = g.tanh(v)?;
            let l = g.constant(lift.clone());
            let field = g.linear(v, l, None)?;
            let a = losses::loss_ds(g, sal, &mask, &sup.field, &weights)?;
            let b = losses::loss_sdm(g, sdm, &sdm_target)?;
            let c = losses::loss_df(g, field, &sup.field, weights.df_angle_eps)?;
            losses::loss_prl(g, a, b, c, &weights)
        },
        &x,
        FD_STEP,
        GRAD_TOL,
        flip,
    )
}

pub fn cases() -> Vec<(&'static str, Box<dyn Fn(&mut Rng, bool) -> Result<GradCheckReport>>)> {
    use crate::autograd::Unary;
    let plain = |f: Case| -> Box<dyn Fn(&mut Rng, bool) -> Result<GradCheckReport>> { Box::new(f) };
    vec![
        ("add/sub", plain(case_add)),
        ("mul/scale", plain(case_mul)),
        ("tanh", Box::new(unary(Unary::Tanh))),
        ("relu", Box::new(unary(Unary::Relu))),
        ("gelu", Box::new(unary(Unary::Gelu))),
        ("sigmoid", Box::new(unary(Unary::Sigmoid))),
        ("matmul", plain(case_matmul)),
        ("bmm", plain(case_bmm)),
        ("linear", plain(case_linear)),
        ("softmax", plain(case_softmax)),
        ("layernorm", plain(case_layernorm)),
        ("concat/permute/select/reshape/sum/mean", plain(case_shape_ops)),
        ("conv3x3", plain(case_conv3x3)),
        ("upsample", plain(case_upsample)),
        ("roll", plain(case_roll)),
        ("grid_sample", plain(case_grid_sample)),
        ("window_attention", plain(case_window_attention)),
        ("loss_sdm", plain(case_loss_sdm)),
        ("loss_df", plain(case_loss_df)),
        ("loss_ds", plain(case_loss_ds)),
        ("loss_prl", plain(case_loss_prl)),
    ]
}

/// Runs every case on `instances` random inputs. `inject_bug` negates the
/// reverse-mode gradients, which must make every case fail.
pub fn gradient_suite(seed: u64, instances: usize, inject_bug: bool) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::new(seed, SUITE_STREAM);
    let mut out = Vec::new();
    for (name, case) in cases() {
        let mut merged: Option<GradCheckReport> = None;
        for _ in 0..instances {
            let r = case(&mut rng, inject_bug)?;
            merged = Some(match merged {
                None => r,
                Some(m) => m.merge(r),
            });
        }
        if let Some(report) = merged {
            out.push(CheckResult { name, instances, report });
        }
    }
    Ok(out)
}
