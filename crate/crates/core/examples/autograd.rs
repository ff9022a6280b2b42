//! Build a small graph, differentiate it, and compare against finite
//! differences, then run the full per-operation gradient suite.
//!
//! Usage: cargo run --example autograd [seed]

use prlnet::autograd::{grad_check, Graph};
use prlnet::checks;
use prlnet::rng::Rng;

fn main() -> prlnet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = Rng::new(seed, 0);

    // f(x) = sum(softmax(tanh(x W), axis 1))^2 style composition.
    let x = rng.normal_tensor(&[4, 3], 1.0);
    let w = rng.normal_tensor(&[3, 5], 0.5);
    let report = grad_check(
        |g: &mut Graph, x| {
            let w = g.constant(w.clone());
            let h = g.matmul(x, w)?;
            let h = g.tanh(h)?;
            let s = g.softmax(h, 1)?;
            let sq = g.mul(s, h)?;
            g.sum(sq)
        },
        &x,
        1e-6,
        1e-4,
    )?;
    println!("composite: {} values, max rel err {:.2e}, ok = {}", report.checked, report.max_rel_err, report.passed());

    for r in checks::gradient_suite(seed, 3, false)? {
        println!("{:<40} max rel err {:.2e}  {}", r.name, r.report.max_rel_err, if r.passed() { "ok" } else { "FAIL" });
    }
    Ok(())
}
