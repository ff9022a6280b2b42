//! Overfit the toy network on one synthetic RGB-T pair and print the losses.
//!
//! Usage: cargo run --example train_toy [steps]

use prlnet::losses::LossWeights;
use prlnet::net::{rectangle_scene, train, AdamConfig, NetConfig, PrlNet, Trainer};

fn main() -> prlnet::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let config = NetConfig::toy();
    let sample = rectangle_scene(config.image_size)?;
    let net = PrlNet::new(config, 0)?;
    println!("{} parameters", net.params().size());
    let mut trainer = Trainer::new(net, sample, LossWeights::default(), AdamConfig::default())?;
    let start = std::time::Instant::now();
    let log = train(&mut trainer, steps)?;
    for s in log.steps.iter().step_by(10.max(steps / 20)) {
        println!("step {:>4}  prl {:>12.3}  sal {:>10.3}  sdm {:>10.3}  df {:>12.3}", s.step, s.prl, s.sal, s.sdm, s.df);
    }
    let l = log.last;
    println!("final     prl {:>12.3}  sal {:>10.3}  sdm {:>10.3}  df {:>12.3}", l.prl, l.sal, l.sdm, l.df);
    println!("reduction {:.4}, training MAE {:.4}, {:.1?}", log.prl_reduction(), log.final_mae, start.elapsed());
    Ok(())
}
