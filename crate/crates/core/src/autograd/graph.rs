use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::kernels::{self, LayerNormSaved, Unary, UpsampleMode};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an op defined outside this module.
///
/// Receives the op's input values, its output and the incoming gradient;
/// returns one gradient per input with the input's shape.
pub trait Backward {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    Matmul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Linear { x: Var, w: Var, b: Option<Var> },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, saved: LayerNormSaved },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Select { x: Var, index: usize },
    Conv3x3 { x: Var, w: Var, b: Option<Var> },
    Upsample { x: Var, factor: usize, mode: UpsampleMode },
    Roll { x: Var, dr: isize, dc: isize },
    GridSample { src: Var, flow: Var },
    Sum(Var),
    Mean(Var),
    Custom { inputs: Vec<Var>, rule: Box<dyn Backward> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape for reverse-mode differentiation.
///
/// Every op appends a node holding its forward value; [`Graph::backward`]
/// walks the tape in reverse and accumulates gradients additively.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.value(a).expect_same_shape(self.value(b), op)
    }

    fn hwc(&self, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
        match *self.shape(v) {
            [h, w, c] => Ok((h, w, c)),
            ref s => Err(Error::shape(op, format!("expected [H, W, C], got {s:?}"))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * s);
        self.push("scale", v, Op::Scale(a, s), &[a])
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Result<Var> {
        let v = self.value(x).map(|t| kind.apply(t));
        self.push(kind.name(), v, Op::Unary(x, kind), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    /// `[m×k] · [k×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, k2, n) = match (self.shape(a), self.shape(b)) {
            (&[m, k], &[k2, n]) => (m, k, k2, n),
            (sa, sb) => return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}"))),
        };
        if k != k2 {
            return Err(Error::shape("matmul", format!("inner dims {k} vs {k2}")));
        }
        let mut out = vec![0.0; m * n];
        kernels::mm_nn(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let v = Tensor::from_vec(&[m, n], out)?;
        self.push("matmul", v, Op::Matmul(a, b), &[a, b])
    }

    /// Batched product `[B×m×k] · [B×k×n]`, or `[B×m×k] · [B×n×k]ᵀ` when
    /// `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (bs, m, k, bs2, kb, n) = match (self.shape(a), self.shape(b)) {
            (&[bs, m, k], &[bs2, r, c]) if trans_b => (bs, m, k, bs2, c, r),
            (&[bs, m, k], &[bs2, r, c]) => (bs, m, k, bs2, r, c),
            (sa, sb) => return Err(Error::shape("bmm", format!("{sa:?} x {sb:?}"))),
        };
        if bs != bs2 || k != kb {
            return Err(Error::shape("bmm", format!("{:?} x {:?}", self.shape(a), self.shape(b))));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            let o = &mut out[i * m * n..(i + 1) * m * n];
            let ai = &ad[i * m * k..(i + 1) * m * k];
            let bi = &bd[i * k * n..(i + 1) * k * n];
            if trans_b {
                kernels::mm_nt(ai, bi, m, k, n, o);
            } else {
                kernels::mm_nn(ai, bi, m, k, n, o);
            }
        }
        let v = Tensor::from_vec(&[bs, m, n], out)?;
        self.push("bmm", v, Op::Bmm { a, b, trans_b }, &[a, b])
    }

    /// Affine map over the trailing axis: `x[.., in] · w[in, out] + b[out]`.
    /// A 1×1 (pointwise) convolution on `[H, W, C]` maps is exactly this.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (fan_in, fan_out) = match *self.shape(w) {
            [i, o] => (i, o),
            ref s => return Err(Error::shape("linear", format!("weight {s:?}"))),
        };
        if *xs.last().unwrap() != fan_in {
            return Err(Error::shape("linear", format!("input {xs:?} vs weight [{fan_in}, {fan_out}]")));
        }
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(Error::shape("linear", format!("bias {:?}", self.shape(b))));
            }
        }
        let rows = self.value(x).len() / fan_in;
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bd = self.value(b).data();
            for r in 0..rows {
                out[r * fan_out..(r + 1) * fan_out].copy_from_slice(bd);
            }
        }
        kernels::mm_nn(self.value(x).data(), self.value(w).data(), rows, fan_in, fan_out, &mut out);
        let mut shape = xs;
        *shape.last_mut().unwrap() = fan_out;
        let v = Tensor::from_vec(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", v, Op::Linear { x, w, b }, &inputs)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {axis} of {shape:?}")));
        }
        let (o, n, i) = kernels::split_axis(&shape, axis);
        let y = kernels::softmax_forward(self.value(x).data(), o, n, i);
        let v = Tensor::from_vec(&shape, y)?;
        self.push("softmax", v, Op::Softmax { x, axis }, &[x])
    }

    /// Normalizes each token over its trailing axis, then applies `gamma`
    /// and `beta`.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("layernorm", format!("affine params for width {c}")));
        }
        let (y, saved) = kernels::layernorm_forward(
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            c,
            eps,
        );
        let v = Tensor::from_vec(&shape, y)?;
        self.push("layernorm", v, Op::LayerNorm { x, gamma, beta, saved }, &[x, gamma, beta])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} of {first:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {first:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let mut shape = first.clone();
        shape[axis] = total;
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.len() / outer;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let v = Tensor::from_vec(&shape, out)?;
        self.push("concat", v, Op::Concat { parts: parts.to_vec(), axis }, parts)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        self.push("reshape", v, Op::Reshape(x), &[x])
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x);
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..shape.len()).collect::<Vec<_>>() {
            return Err(Error::shape("permute", format!("{perm:?} for {shape:?}")));
        }
        let (data, new_shape) = kernels::permute(self.value(x).data(), shape, perm);
        let v = Tensor::from_vec(&new_shape, data)?;
        self.push("permute", v, Op::Permute { x, perm: perm.to_vec() }, &[x])
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return Err(Error::shape("transpose", "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(x, &perm)
    }

    /// Slice `index` along axis 0, dropping that axis.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || index >= shape[0] {
            return Err(Error::shape("select", format!("index {index} of {shape:?}")));
        }
        let chunk: usize = shape[1..].iter().product();
        let data = self.value(x).data()[index * chunk..(index + 1) * chunk].to_vec();
        let v = Tensor::from_vec(&shape[1..], data)?;
        self.push("select", v, Op::Select { x, index }, &[x])
    }

    /// 3×3 convolution, stride 1, zero padding: `[H, W, Cin]` with weight
    /// `[3, 3, Cin, Cout]` gives `[H, W, Cout]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (h, wd, cin) = self.hwc(x, "conv3x3")?;
        let cout = match *self.shape(w) {
            [3, 3, ci, co] if ci == cin => co,
            ref s => return Err(Error::shape("conv3x3", format!("weight {s:?} for {cin} inputs"))),
        };
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv3x3", format!("bias {:?}", self.shape(b))));
            }
        }
        let y = kernels::conv3x3_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            h,
            wd,
            cin,
            cout,
        );
        let v = Tensor::from_vec(&[h, wd, cout], y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv3x3", v, Op::Conv3x3 { x, w, b }, &inputs)
    }

    pub fn upsample(&mut self, x: Var, factor: usize, mode: UpsampleMode) -> Result<Var> {
        let (h, w, c) = self.hwc(x, "upsample")?;
        if factor == 0 {
            return Err(Error::shape("upsample", "factor 0"));
        }
        let y = kernels::upsample_forward(self.value(x).data(), h, w, c, factor, mode);
        let v = Tensor::from_vec(&[h * factor, w * factor, c], y)?;
        self.push("upsample", v, Op::Upsample { x, factor, mode }, &[x])
    }

    /// Cyclic 2-D shift of a `[H, W, C]` map.
    pub fn roll(&mut self, x: Var, dr: isize, dc: isize) -> Result<Var> {
        let (h, w, c) = self.hwc(x, "roll")?;
        let y = kernels::roll(self.value(x).data(), h, w, c, dr, dc);
        let v = Tensor::from_vec(&[h, w, c], y)?;
        self.push("roll", v, Op::Roll { x, dr, dc }, &[x])
    }

    /// Bilinear resampling of `src[H, W, C]` at `p + flow(p)`; `flow` is
    /// `[H, W, 2]` (row, column) offsets. Differentiable in both inputs.
    pub fn grid_sample(&mut self, src: Var, flow: Var) -> Result<Var> {
        let (h, w, c) = self.hwc(src, "grid_sample")?;
        if self.shape(flow) != [h, w, 2] {
            return Err(Error::shape("grid_sample", format!("flow {:?} for [{h}, {w}, _]", self.shape(flow))));
        }
        let y = kernels::grid_sample_forward(self.value(src).data(), self.value(flow).data(), h, w, c);
        let v = Tensor::from_vec(&[h, w, c], y)?;
        self.push("grid_sample", v, Op::GridSample { src, flow }, &[src, flow])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).sum());
        self.push("sum", v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).mean());
        self.push("mean", v, Op::Mean(x), &[x])
    }

    /// Record an op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: Tensor,
        rule: Box<dyn Backward>,
    ) -> Result<Var> {
        self.push(name, value, Op::Custom { inputs: inputs.to_vec(), rule }, inputs)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::shape("backward", format!("non-scalar output {:?}", self.shape(output))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::ones(self.shape(output)));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.node_backward(node, &g)?;
            grads[idx] = Some(g);
            for (v, d) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn node_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| self.value(v);
        let like = |v: Var, data: Vec<f64>| Tensor::from_vec(val(v).shape(), data);
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(val(*b), |x, y| x * y)?),
                (*b, g.zip_map(val(*a), |x, y| x * y)?),
            ],
            Op::Scale(a, s) => vec![(*a, g.map(|x| x * s))],
            Op::Unary(x, kind) => {
                let d: Vec<f64> = val(*x)
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Matmul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                kernels::mm_nt(g.data(), val(*b).data(), m, n, k, &mut da);
                kernels::mm_tn(val(*a).data(), g.data(), k, m, n, &mut db);
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::Bmm { a, b, trans_b } => {
                let [bs, m, k] = val(*a).shape()[..] else { unreachable!() };
                let n = node.value.shape()[2];
                let (ad, bd, gd) = (val(*a).data(), val(*b).data(), g.data());
                let mut da = vec![0.0; bs * m * k];
                let mut db = vec![0.0; bs * k * n];
                for i in 0..bs {
                    let gi = &gd[i * m * n..(i + 1) * m * n];
                    let ai = &ad[i * m * k..(i + 1) * m * k];
                    let bi = &bd[i * k * n..(i + 1) * k * n];
                    let dai = &mut da[i * m * k..(i + 1) * m * k];
                    let dbi = &mut db[i * k * n..(i + 1) * k * n];
                    if *trans_b {
                        // b is [n×k]
                        kernels::mm_nn(gi, bi, m, n, k, dai);
                        kernels::mm_tn(gi, ai, n, m, k, dbi);
                    } else {
                        kernels::mm_nt(gi, bi, m, n, k, dai);
                        kernels::mm_tn(ai, gi, k, m, n, dbi);
                    }
                }
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::Linear { x, w, b } => {
                let [fan_in, fan_out] = val(*w).shape()[..] else { unreachable!() };
                let rows = val(*x).len() / fan_in;
                let mut dx = vec![0.0; rows * fan_in];
                let mut dw = vec![0.0; fan_in * fan_out];
                kernels::mm_nt(g.data(), val(*w).data(), rows, fan_out, fan_in, &mut dx);
                kernels::mm_tn(val(*x).data(), g.data(), fan_in, rows, fan_out, &mut dw);
                let mut res = vec![(*x, like(*x, dx)?), (*w, like(*w, dw)?)];
                if let Some(b) = b {
                    let mut db = vec![0.0; fan_out];
                    for row in g.data().chunks_exact(fan_out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    res.push((*b, like(*b, db)?));
                }
                res
            }
            Op::Softmax { x, axis } => {
                let (o, n, i) = kernels::split_axis(node.value.shape(), *axis);
                let dx = kernels::softmax_backward(node.value.data(), g.data(), o, n, i);
                vec![(*x, like(*x, dx)?)]
            }
            Op::LayerNorm { x, gamma, beta, saved } => {
                let c = val(*gamma).len();
                let (dx, dg, db) = kernels::layernorm_backward(saved, val(*gamma).data(), g.data(), c);
                vec![(*x, like(*x, dx)?), (*gamma, like(*gamma, dg)?), (*beta, like(*beta, db)?)]
            }
            Op::Concat { parts, axis } => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let mut bufs: Vec<Vec<f64>> = parts.iter().map(|p| Vec::with_capacity(val(*p).len())).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (buf, p) in bufs.iter_mut().zip(parts) {
                        let chunk = val(*p).len() / outer;
                        buf.extend_from_slice(&g.data()[off..off + chunk]);
                        off += chunk;
                    }
                }
                let mut res = Vec::with_capacity(parts.len());
                for (buf, p) in bufs.into_iter().zip(parts) {
                    res.push((*p, like(*p, buf)?));
                }
                res
            }
            Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape())?)],
            Op::Permute { x, perm } => {
                let inv = kernels::inverse_permutation(perm);
                let (d, _) = kernels::permute(g.data(), g.shape(), &inv);
                vec![(*x, like(*x, d)?)]
            }
            Op::Select { x, index } => {
                let mut d = vec![0.0; val(*x).len()];
                let chunk = g.len();
                d[index * chunk..(index + 1) * chunk].copy_from_slice(g.data());
                vec![(*x, like(*x, d)?)]
            }
            Op::Conv3x3 { x, w, b } => {
                let [h, wd, cin] = val(*x).shape()[..] else { unreachable!() };
                let cout = node.value.shape()[2];
                let (dx, dw, db) = kernels::conv3x3_backward(val(*x).data(), val(*w).data(), g.data(), h, wd, cin, cout);
                let mut res = vec![(*x, like(*x, dx)?), (*w, like(*w, dw)?)];
                if let Some(b) = b {
                    res.push((*b, like(*b, db)?));
                }
                res
            }
            Op::Upsample { x, factor, mode } => {
                let [h, w, c] = val(*x).shape()[..] else { unreachable!() };
                let dx = kernels::upsample_backward(g.data(), h, w, c, *factor, *mode);
                vec![(*x, like(*x, dx)?)]
            }
            Op::Roll { x, dr, dc } => {
                let [h, w, c] = val(*x).shape()[..] else { unreachable!() };
                vec![(*x, like(*x, kernels::roll(g.data(), h, w, c, -dr, -dc))?)]
            }
            Op::GridSample { src, flow } => {
                let [h, w, c] = val(*src).shape()[..] else { unreachable!() };
                let (ds, df) = kernels::grid_sample_backward(val(*src).data(), val(*flow).data(), g.data(), h, w, c);
                vec![(*src, like(*src, ds)?), (*flow, like(*flow, df)?)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()))],
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                vec![(*x, Tensor::full(val(*x).shape(), g.item() / n))]
            }
            Op::Custom { inputs, rule } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let ds = rule.backward(&ins, &node.value, g);
                if ds.len() != inputs.len() {
                    return Err(Error::shape("custom backward", "gradient count"));
                }
                inputs.iter().copied().zip(ds).collect()
            }
        };
        Ok(out)
    }
}
