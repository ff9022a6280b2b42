use prlnet::autograd::Graph;
use prlnet::geometry::{self, BinaryMask};
use prlnet::losses::{self, LossWeights};
use prlnet::net::layers::{self, BlockShape};
use prlnet::net::params::Initializer;
use prlnet::net::{frdf_refine, rectangle_scene, FrdfMode, NetConfig, ParamStore, PrlNet, ShapeChain};
use prlnet::rng::Rng;
use prlnet::Tensor;

fn block_params(c: usize) -> ParamStore {
    let mut init = Initializer::new(Rng::new(4, 2));
    layers::init_swin_block_pair(&mut init, "blk", c, 4);
    init.finish()
}

#[test]
fn window_partition_and_roll_round_trip() {
    let mut rng = Rng::new(1, 0);
    let x = rng.normal_tensor(&[12, 18, 5], 1.0);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let parts = layers::window_partition(&mut g, v, 6).unwrap();
    assert_eq!(g.shape(parts), [6, 36, 5]);
    let back = layers::window_reverse(&mut g, parts, 6, 12, 18).unwrap();
    assert_eq!(g.value(back), &x);

    let shifted = g.roll(v, -3, -3).unwrap();
    let unshifted = g.roll(shifted, 3, 3).unwrap();
    assert_eq!(g.value(unshifted), &x);

    // First window holds the top-left 6x6 block in row-major order.
    let first: Vec<f64> = g.value(parts).data()[..36 * 5].to_vec();
    for t in 0..36 {
        let (r, c) = (t / 6, t % 6);
        assert_eq!(&first[t * 5..t * 5 + 5], &x.data()[(r * 18 + c) * 5..(r * 18 + c) * 5 + 5]);
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let p = block_params(8);
    let mut rng = Rng::new(2, 0);
    for shift in [0, 3] {
        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let x = g.constant(rng.normal_tensor(&[12, 12, 8], 1.0));
        let att = layers::window_attention(&mut g, &bound, "blk.0.attn", x, 6, shift, 2).unwrap();
        for row in g.value(att.weights).data().chunks_exact(36) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        if shift > 0 {
            // Masked pairs get exactly zero weight.
            let mask = layers::shifted_window_mask(12, 12, 6, 3);
            let w = g.value(att.weights).data();
            for (win, m) in mask.data().chunks_exact(36 * 36).enumerate() {
                for head in 0..2 {
                    let base = (win * 2 + head) * 36 * 36;
                    for (k, &mv) in m.iter().enumerate() {
                        if mv != 0.0 {
                            assert_eq!(w[base + k], 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn shifted_attention_keeps_constant_maps_constant() {
    let p = block_params(8);
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let row: Vec<f64> = (0..8).map(|k| k as f64 * 0.1 - 0.3).collect();
    let x = g.constant(Tensor::from_vec(&[12, 12, 8], row.iter().copied().cycle().take(12 * 12 * 8).collect()).unwrap());
    let out = layers::window_attention(&mut g, &bound, "blk.1.attn", x, 6, 3, 2).unwrap().out;
    let data = g.value(out).data();
    for px in data.chunks_exact(8) {
        for (a, b) in px.iter().zip(&data[..8]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn block_pair_with_zero_output_projections_is_identity() {
    let mut p = block_params(8);
    for k in 0..2 {
        for name in ["attn.proj.w", "attn.proj.b", "mlp.fc2.w", "mlp.fc2.b"] {
            let t = p.get_mut(&format!("blk.{k}.{name}")).unwrap();
            *t = Tensor::zeros(t.shape());
        }
    }
    let x = Rng::new(3, 0).normal_tensor(&[12, 12, 8], 1.0);
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let v = g.constant(x.clone());
    let out = layers::swin_block_pair(&mut g, &bound, "blk", v, BlockShape { window: 6, shift: 3, heads: 2 }).unwrap();
    assert_eq!(g.value(out), &x);
}

#[test]
fn patch_merging_and_separating() {
    let mut init = Initializer::new(Rng::new(5, 0));
    init.linear("merge", 16, 8);
    init.linear("sep", 8, 16);
    let p = init.finish();
    let x = Rng::new(5, 1).normal_tensor(&[6, 10, 4], 1.0);
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let v = g.constant(x.clone());

    let merged = layers::patch_merging(&mut g, &bound, "merge", v).unwrap();
    assert_eq!(g.shape(merged), [3, 5, 8]);
    // Token (1, 2) is the linear map of the 2x2 block at rows 2..4, cols 4..6.
    let mut block = Vec::new();
    for (r, c) in [(2, 4), (2, 5), (3, 4), (3, 5)] {
        block.extend_from_slice(&x.data()[(r * 10 + c) * 4..(r * 10 + c) * 4 + 4]);
    }
    let (w, b) = (p.get("merge.w").unwrap().data(), p.get("merge.b").unwrap().data());
    for o in 0..8 {
        let expect: f64 = b[o] + (0..16).map(|i| block[i] * w[i * 8 + o]).sum::<f64>();
        assert!((g.value(merged).data()[(5 + 2) * 8 + o] - expect).abs() < 1e-12);
    }

    let sep = layers::patch_separating(&mut g, &bound, "sep", merged).unwrap();
    assert_eq!(g.shape(sep), [6, 10, 4]);

    let s2d = layers::space_to_depth(&mut g, v, 2).unwrap();
    let d2s = layers::depth_to_space(&mut g, s2d, 2).unwrap();
    assert_eq!(g.value(d2s), &x);
    let odd = g.constant(Tensor::zeros(&[5, 4, 4]));
    assert!(layers::patch_merging(&mut g, &bound, "merge", odd).is_err());
}

#[test]
fn fusion_is_permutation_equivariant() {
    let net = PrlNet::new(NetConfig::toy(), 6).unwrap();
    let c = net.config().width(3);
    let mut rng = Rng::new(6, 1);
    let (xr, xt) = (rng.normal_tensor(&[3, 3, c], 1.0), rng.normal_tensor(&[3, 3, c], 1.0));
    let perm = [4, 0, 8, 2, 6, 1, 3, 7, 5];
    let permute = |t: &Tensor| {
        let mut out = Vec::with_capacity(t.len());
        for &src in &perm {
            out.extend_from_slice(&t.data()[src * c..(src + 1) * c]);
        }
        Tensor::from_vec(&[3, 3, c], out).unwrap()
    };
    let run = |a: &Tensor, b: &Tensor| {
        let mut g = Graph::new();
        let p = net.params().bind(&mut g);
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let z = net.fuse(&mut g, &p, va, vb).unwrap();
        g.value(z).clone()
    };
    let base = run(&xr, &xt);
    let permuted = run(&permute(&xr), &permute(&xt));
    for (a, b) in permute(&base).data().iter().zip(permuted.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn refine(z: &Tensor, field: &Tensor, k: usize) -> Tensor {
    let store = ParamStore::new();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let (zv, fv) = (g.constant(z.clone()), g.constant(field.clone()));
    let out = frdf_refine(&mut g, &p, zv, fv, k, FrdfMode::Warp).unwrap();
    g.value(*out.last().unwrap()).clone()
}

#[test]
fn frdf_identities() {
    let mut rng = Rng::new(7, 0);
    let z = rng.normal_tensor(&[10, 12, 3], 1.0);
    assert_eq!(refine(&z, &Tensor::zeros(&[10, 12, 2]), 5), z);
    let constant = Tensor::full(&[10, 12, 3], 0.7);
    let field = rng.normal_tensor(&[10, 12, 2], 4.0);
    for v in refine(&constant, &field, 5).data() {
        assert!((v - 0.7).abs() < 1e-12);
    }

    // Additive mode with a zero field is also the identity.
    let mut init = Initializer::new(Rng::new(7, 1));
    init.linear_no_bias("refine.field", 2, 3);
    let store = init.finish();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let (zv, fv) = (g.constant(z.clone()), g.constant(Tensor::zeros(&[10, 12, 2])));
    let out = frdf_refine(&mut g, &p, zv, fv, 3, FrdfMode::Additive).unwrap();
    assert_eq!(g.value(out[3]), &z);
}

#[test]
fn frdf_true_field_preserves_convex_interior() {
    let (h, w, k) = (24, 30, 5);
    let mask = BinaryMask::from_fn(h, w, |r, c| (6..18).contains(&r) && (5..25).contains(&c));
    let df = geometry::direction_field(&mask).unwrap();
    let z = mask.to_tensor().reshape(&[h, w, 1]).unwrap();
    let out = refine(&z, &df.to_tensor(), k);

    let mut kept = 0;
    for r in 0..h {
        for c in 0..w {
            let (mut qr, mut qc) = (r as f64, c as f64);
            let mut inside = mask.get(r, c);
            for _ in 0..k {
                if !inside {
                    break;
                }
                let (dr, dc) = df.at(qr as usize, qc as usize);
                (qr, qc) = (qr + dr, qc + dc);
                inside = qr >= 0.0 && qc >= 0.0 && (qr as usize) < h && (qc as usize) < w && mask.get(qr as usize, qc as usize);
            }
            let v = out.data()[r * w + c];
            if !mask.get(r, c) {
                assert_eq!(v, 0.0, "background ({r},{c})");
            } else if inside {
                assert_eq!(v, 1.0, "interior ({r},{c})");
                kept += 1;
            }
        }
    }
    assert!(kept > mask.foreground_count() / 2, "{kept} of {}", mask.foreground_count());
}

fn zero_param(net: &mut PrlNet, name: &str) {
    let t = net.params_mut().get_mut(name).unwrap();
    *t = Tensor::zeros(t.shape());
}

#[test]
fn zero_weight_heads() {
    let mut net = PrlNet::new(NetConfig::toy(), 8).unwrap();
    let scene = rectangle_scene(96).unwrap();
    zero_param(&mut net, "df_head.w");
    zero_param(&mut net, "df_head.b");
    zero_param(&mut net, "head.w");
    zero_param(&mut net, "head.b");
    let pred = net.predict(&scene.rgb, &scene.thermal).unwrap();
    assert!(pred.field.data().iter().all(|&v| v == 0.0));
    assert!(pred.saliency.data().iter().all(|&v| v == 0.5));
}

#[test]
fn zero_inputs_stay_finite() {
    let net = PrlNet::new(NetConfig::toy(), 9).unwrap();
    let zero = Tensor::zeros(&[96, 96, 3]);
    let pred = net.predict(&zero, &zero).unwrap();
    assert!(pred.saliency.is_finite() && pred.sdm.is_finite() && pred.field.is_finite());
}

fn dead_parameters(mode: FrdfMode) -> Vec<String> {
    let config = NetConfig { frdf_mode: mode, ..NetConfig::toy() };
    let net = PrlNet::new(config, 10).unwrap();
    let scene = rectangle_scene(96).unwrap();
    let mut g = Graph::new();
    let p = net.params().bind(&mut g);
    let (r, t) = (g.constant(scene.rgb.clone()), g.constant(scene.thermal.clone()));
    let out = net.forward(&mut g, &p, r, t).unwrap();
    let weights = LossWeights::default();
    let sal = losses::loss_ds(&mut g, out.saliency, &scene.mask, &scene.targets.field, &weights).unwrap();
    let sdm = losses::loss_sdm(&mut g, out.sdm, &scene.targets.sdm).unwrap();
    let df = losses::loss_df(&mut g, out.field, &scene.targets.field, weights.df_angle_eps).unwrap();
    let total = losses::loss_prl(&mut g, sal, sdm, df, &weights).unwrap();
    let grads = p.collect(&g.backward(total).unwrap());
    net.params()
        .names()
        .iter()
        .zip(&grads)
        .filter(|(_, gr)| gr.data().iter().all(|&v| v == 0.0))
        .map(|(n, _)| n.clone())
        .collect()
}

#[test]
fn every_parameter_receives_gradient() {
    assert_eq!(dead_parameters(FrdfMode::Warp), Vec::<String>::new());
    assert_eq!(dead_parameters(FrdfMode::Additive), Vec::<String>::new());
}

#[test]
fn paper_chain_matches_stated_dimensions() {
    let cfg = NetConfig::paper();
    let (h, c) = (384, 128);
    let chain = ShapeChain::new(&cfg).unwrap();
    let expect: Vec<(&str, [usize; 3])> = vec![
        ("x1", [h / 4, h / 4, c]),
        ("x2", [h / 8, h / 8, 2 * c]),
        ("x3", [h / 16, h / 16, 4 * c]),
        ("x4", [h / 32, h / 32, 8 * c]),
        ("y1", [h / 4, h / 4, 32]),
        ("y2", [h / 4, h / 4, 32]),
        ("y3", [h / 4, h / 4, 32]),
        ("D", [h, h, 1]),
        ("z4", [h / 32, h / 32, 8 * c]),
        ("z3", [h / 16, h / 16, 4 * c]),
        ("z2", [h / 8, h / 8, 2 * c]),
        ("z1", [h / 4, h / 4, c]),
        ("z", [h, h, 64]),
        ("F", [h, h, 2]),
        ("z*", [h, h, 2 * c]),
        ("O_sal", [h, h, 1]),
    ];
    let got: Vec<(String, [usize; 3])> = chain.entries();
    assert_eq!(got.len(), expect.len());
    for ((label, shape), (l, s)) in got.iter().zip(&expect) {
        assert_eq!((label.as_str(), shape), (*l, s));
    }
}
