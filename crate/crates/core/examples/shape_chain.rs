//! Shape chains for the toy and paper configurations, and one timed forward
//! pass of the toy network on random inputs.
//!
//! Usage: cargo run --example shape_chain

use std::time::Instant;

use prlnet::net::{NetConfig, PrlNet, ShapeChain};
use prlnet::rng::Rng;

fn main() -> prlnet::Result<()> {
    let paper = NetConfig::paper();
    println!("paper config, shapes only:\n{}", ShapeChain::new(&paper)?);

    let toy = NetConfig::toy();
    let net = PrlNet::new(toy.clone(), 0)?;
    println!("toy config, {} parameters in {} tensors:\n{}", net.params().size(), net.params().len(), net.shape_chain());

    let mut rng = Rng::new(0, 9);
    let n = toy.image_size;
    let rgb = rng.uniform_tensor(&[n, n, 3], 0.0, 1.0);
    let thermal = rng.uniform_tensor(&[n, n, 3], 0.0, 1.0);
    let start = Instant::now();
    let pred = net.predict(&rgb, &thermal)?;
    let range = |d: &[f64]| d.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (s0, s1) = range(pred.saliency.data());
    let (d0, d1) = range(pred.sdm.data());
    println!("forward in {:.1?}: saliency in [{s0:.3}, {s1:.3}], sdm in [{d0:.3}, {d1:.3}]", start.elapsed());
    Ok(())
}
