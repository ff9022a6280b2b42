//! Train a few steps, save a checkpoint, reload it into a freshly initialized
//! network and confirm the predictions match exactly.
//!
//! Usage: cargo run --example checkpoint [steps]

use prlnet::losses::LossWeights;
use prlnet::net::{rectangle_scene, train, AdamConfig, NetConfig, ParamStore, PrlNet, Trainer};

fn main() -> prlnet::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let config = NetConfig::toy();
    let sample = rectangle_scene(config.image_size)?;
    let mut trainer = Trainer::new(PrlNet::new(config.clone(), 0)?, sample.clone(), LossWeights::default(), AdamConfig::default())?;
    let log = train(&mut trainer, steps)?;
    println!("trained {steps} steps, prl {:.2} -> {:.2}", log.steps[0].prl, log.last.prl);

    let dir = std::env::temp_dir().join(format!("prl-checkpoint-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.prlt");
    trainer.net().params().save(&path)?;
    println!("saved {} bytes plus manifest", std::fs::metadata(&path)?.len());

    let mut fresh = PrlNet::new(config, 1)?;
    fresh.params_mut().load_from(&ParamStore::load(&path)?)?;
    let before = trainer.predict()?;
    let after = fresh.predict(&sample.rgb, &sample.thermal)?;
    // Storage is f32, so compare to single precision.
    let diff = before.saliency.data().iter().zip(after.saliency.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max saliency difference after reload: {diff:.2e}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
