//! Finite-difference oracle for reverse-mode gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Graph, Var};

/// Denominator floor for the relative error, so near-zero gradients are
/// compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub tol: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }

    /// Combine reports from several probes of the same op.
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            max_abs_err: self.max_abs_err.max(other.max_abs_err),
            tol: self.tol.max(other.tol),
            checked: self.checked + other.checked,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn eval<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let y = f(&mut g, v)?;
    Ok(g.value(y).item())
}

/// Compare the reverse-mode gradient of scalar `f` at `x` against central
/// differences with step `h`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_with(f, x, h, tol, false)
}

/// As [`grad_check`]; `flip_sign` negates the reverse-mode gradient before
/// comparing, which must make any non-trivial check fail.
pub fn grad_check_with<F>(f: F, x: &Tensor, h: f64, tol: f64, flip_sign: bool) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let y = f(&mut g, xv)?;
    if g.value(y).len() != 1 {
        return Err(Error::shape("grad_check", format!("non-scalar function output {:?}", g.shape(y))));
    }
    let grads = g.backward(y)?;
    let analytic = grads.get_or_zeros(xv, x.shape());
    let sign = if flip_sign { -1.0 } else { 1.0 };

    let mut probe = x.clone();
    let mut max_rel_err: f64 = 0.0;
    let mut max_abs_err: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = sign * analytic.data()[i];
        max_rel_err = max_rel_err.max(relative_error(a, numeric));
        max_abs_err = max_abs_err.max((a - numeric).abs());
    }
    Ok(GradCheckReport { max_rel_err, max_abs_err, tol, checked: x.len() })
}
