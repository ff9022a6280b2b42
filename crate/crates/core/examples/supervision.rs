//! Signed distance map and direction field for a small disc mask, printed as
//! text and optionally written as PFM files.
//!
//! Usage: cargo run --example supervision [out_dir]

use std::path::PathBuf;

use prlnet::geometry::{self, BinaryMask, BoundaryRule, Normalization};
use prlnet::io;

fn main() -> prlnet::Result<()> {
    let (h, w) = (11, 15);
    let mask = BinaryMask::from_fn(h, w, |r, c| {
        let (dr, dc) = (r as f64 - 5.0, c as f64 - 7.0);
        dr * dr + dc * dc <= 12.0
    });
    let sup = geometry::supervision(&mask, Normalization::None, BoundaryRule::Interface);

    println!("mask ({} foreground pixels):", mask.foreground_count());
    for r in 0..h {
        let row: String = (0..w).map(|c| if mask.get(r, c) { '#' } else { '.' }).collect();
        println!("  {row}");
    }

    println!("\nsigned distance (negative inside):");
    for r in 0..h {
        let row: Vec<String> = (0..w).map(|c| format!("{:5.1}", sup.sdm.at(r, c))).collect();
        println!("  {}", row.join(""));
    }

    // Arrows point away from the nearest boundary pixel; background is zero.
    println!("\ndirection field, dominant axis:");
    for r in 0..h {
        let row: String = (0..w)
            .map(|c| match sup.field.at(r, c) {
                (0.0, 0.0) => 'o',
                (dr, dc) if dr.abs() >= dc.abs() => if dr > 0.0 { 'v' } else { '^' },
                (_, dc) => if dc > 0.0 { '>' } else { '<' },
            })
            .collect();
        println!("  {row}");
    }

    let normalized = geometry::normalize_sdm(&sup.sdm, Normalization::MaxAbs);
    let range = normalized.normalized().iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("\nmax-abs normalized range [{:.3}, {:.3}]", range.0, range.1);

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        io::write_pfm(&dir.join("disc_sdm.pfm"), h, w, normalized.normalized())?;
        io::write_pfm(&dir.join("disc_fx.pfm"), h, w, sup.field.fx())?;
        io::write_pfm(&dir.join("disc_fy.pfm"), h, w, sup.field.fy())?;
        println!("wrote disc_sdm.pfm, disc_fx.pfm, disc_fy.pfm to {}", dir.display());
    }
    Ok(())
}
