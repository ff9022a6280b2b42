//! Feature refinement along a direction field: inside a square, each warp
//! step replaces a pixel's feature with the one a unit step further from the
//! boundary, so interior content spreads toward the edges.
//!
//! Usage: cargo run --example frdf [K]

use prlnet::autograd::Graph;
use prlnet::geometry::{self, BinaryMask};
use prlnet::net::{frdf_refine, FrdfMode, ParamStore};
use prlnet::Tensor;

fn main() -> prlnet::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let n = 16;
    let mask = BinaryMask::from_fn(n, n, |r, c| (4..12).contains(&r) && (4..12).contains(&c));
    let field = geometry::direction_field(&mask)?;
    // Unit-length steps, one pixel per warp.
    let unit: Vec<f64> = (0..n * n)
        .flat_map(|i| {
            let (dr, dc) = field.at(i / n, i % n);
            let len = (dr * dr + dc * dc).sqrt().max(1.0);
            [dr / len, dc / len]
        })
        .collect();
    let features = Tensor::from_vec(&[n, n, 1], (0..n * n).map(|i| ((i % n) % 4 == 0) as u8 as f64).collect())?;

    let mut g = Graph::new();
    let params = ParamStore::new();
    let bound = params.bind(&mut g);
    let z = g.constant(features);
    let flow = g.constant(Tensor::from_vec(&[n, n, 2], unit)?);
    let steps = frdf_refine(&mut g, &bound, z, flow, k, FrdfMode::Warp)?;

    for (i, v) in [0, k].into_iter().zip([steps[0], steps[k]]) {
        println!("z_{i}:");
        let data = g.value(v).data();
        for r in 0..n {
            let row: String = (0..n).map(|c| if data[r * n + c] > 0.5 { '#' } else if data[r * n + c] > 0.1 { '+' } else { '.' }).collect();
            println!("  {row}");
        }
    }
    println!("{} intermediate maps (z_0..z_{k})", steps.len());
    Ok(())
}
