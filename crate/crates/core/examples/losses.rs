//! The four training losses on a perfect prediction and on perturbed ones,
//! with gradient norms from one backward pass.
//!
//! Usage: cargo run --example losses

use prlnet::autograd::Graph;
use prlnet::geometry::{self, BinaryMask, BoundaryRule, Normalization};
use prlnet::losses::{self, LossWeights};
use prlnet::rng::Rng;

fn main() -> prlnet::Result<()> {
    let (h, w) = (24, 24);
    let mask = BinaryMask::from_fn(h, w, |r, c| (6..18).contains(&r) && (8..16).contains(&c));
    let sup = geometry::supervision(&mask, Normalization::MaxAbs, BoundaryRule::Interface);
    let weights = LossWeights::default();
    let mut rng = Rng::new(3, 0);

    for noise in [0.0, 0.05, 0.3] {
        let mut g = Graph::new();
        let sdm_pred = sup.sdm.to_tensor().zip_map(&rng.normal_tensor(&[h, w, 1], noise), |a, b| a + b)?;
        let field_pred = sup.field.to_tensor().zip_map(&rng.normal_tensor(&[h, w, 2], 3.0 * noise), |a, b| a + b)?;
        let sal_pred = mask.to_tensor().reshape(&[h, w, 1])?.zip_map(&rng.normal_tensor(&[h, w, 1], noise), |a, b| (a + b).clamp(0.0, 1.0))?;

        let sdm = g.param(sdm_pred);
        let field = g.param(field_pred);
        let sal = g.param(sal_pred);
        let l_sdm = losses::loss_sdm(&mut g, sdm, &sup.sdm)?;
        let l_df = losses::loss_df(&mut g, field, &sup.field, weights.df_angle_eps)?;
        let l_ds = losses::loss_ds(&mut g, sal, &mask, &sup.field, &weights)?;
        let total = losses::loss_prl(&mut g, l_ds, l_sdm, l_df, &weights)?;
        let grads = g.backward(total)?;
        let norm = |v| grads.get(v).map_or(0.0, |t| t.data().iter().map(|x| x * x).sum::<f64>().sqrt());

        println!(
            "noise {noise:<4}  sdm {:>9.4}  df {:>10.4}  ds {:>8.4}  prl {:>10.4}  |grad| sdm {:.3} df {:.3} sal {:.3}",
            g.value(l_sdm).item(),
            g.value(l_df).item(),
            g.value(l_ds).item(),
            g.value(total).item(),
            norm(sdm),
            norm(field),
            norm(sal),
        );
    }
    Ok(())
}
