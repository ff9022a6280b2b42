//! Score a few synthetic predictions against one ground truth with every
//! metric, then aggregate them into report and P-R CSVs.
//!
//! Usage: cargo run --example metrics

use prlnet::geometry::BinaryMask;
use prlnet::metrics::{self, MetricReport, SaliencyMap};

fn main() -> prlnet::Result<()> {
    let (h, w) = (40, 60);
    let gt = BinaryMask::from_fn(h, w, |r, c| (10..30).contains(&r) && (20..45).contains(&c));

    let blurred: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            let inside = (r - 19.5).abs().max((c - 32.0).abs() * 0.8);
            1.0 / (1.0 + ((inside - 10.0) / 1.5).exp())
        })
        .collect();
    let shifted = BinaryMask::from_fn(h, w, |r, c| (14..34).contains(&r) && (24..49).contains(&c));

    let candidates = [
        ("perfect", SaliencyMap::from_mask(&gt)),
        ("blurred", SaliencyMap::new(h, w, blurred)?),
        ("shifted", SaliencyMap::from_mask(&shifted)),
        ("flat", SaliencyMap::constant(h, w, 0.5)?),
    ];
    let mut images = Vec::new();
    for (id, pred) in &candidates {
        let m = metrics::evaluate_pair(id, pred, &gt)?;
        println!(
            "{id:<8} S {:.4}  maxF {:.4}  meanF {:.4}  adpF {:.4}  E {:.4}  MAE {:.4}",
            m.s_measure, m.f.max, m.f.mean, m.f.adaptive, m.e_measure, m.mae
        );
        images.push(m);
    }

    let report = MetricReport::from_images(images)?;
    println!("\n{}", report.report_csv());
    let pr = report.pr_csv();
    println!("P-R curve, first rows of {}:", pr.lines().count() - 1);
    for line in pr.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
