//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fail.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use prlnet::autograd::Graph;
use prlnet::checks;
use prlnet::config::Settings;
use prlnet::geometry::{self, BinaryMask, BoundaryRule, Normalization};
use prlnet::io;
use prlnet::losses::{self, LossWeights};
use prlnet::metrics::{self, SaliencyMap, DEFAULT_BETA2, DEFAULT_S_ALPHA};
use prlnet::net::{frdf_refine, rectangle_scene, train, AdamConfig, FrdfMode, NetConfig, ParamStore, PrlNet, ShapeChain, Trainer};
use prlnet::rng::Rng;
use prlnet::Tensor;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn sdm_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(100, 0);
    for n in 0..100 {
        let mask = common::random_mask(&mut rng, 64, 64);
        let boundary = geometry::extract_boundary(&mask);
        let mut is_site = vec![false; 64 * 64];
        for &(r, c) in boundary.pixels() {
            is_site[r * 64 + c] = true;
        }
        let fast = geometry::nearest_sites(64, 64, &is_site).ok_or("no boundary")?;
        let (sq, _) = common::nearest_loop(&mask);
        ensure(fast.sq_dist == sq, || format!("mask {n}: squared distances differ"))?;
        let sdm = geometry::signed_distance_map(&mask).map_err(|e| e.to_string())?;
        for (i, &d2) in sq.iter().enumerate() {
            ensure(sdm.raw()[i].abs() == (d2 as f64).sqrt(), || format!("mask {n}: SDM magnitude at {i}"))?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {}", secs(t)))?;
    Ok(format!("100 masks 64x64 bit-exact, {}", secs(t)))
}

fn df_consistency() -> Outcome {
    let mut rng = Rng::new(200, 0);
    let mut checked = 0usize;
    for n in 0..200 {
        let mask = common::random_mask(&mut rng, 32, 32);
        let sup = geometry::supervision(&mask, Normalization::None, BoundaryRule::Interface);
        let boundary = geometry::extract_boundary(&mask);
        for r in 0..32 {
            for c in 0..32 {
                let (dr, dc) = sup.field.at(r, c);
                if !mask.get(r, c) {
                    ensure(dr == 0.0 && dc == 0.0, || format!("mask {n}: background ({r},{c}) nonzero"))?;
                    continue;
                }
                let err = (dr.hypot(dc) - sup.sdm.at(r, c).abs()).abs();
                ensure(err <= 1e-9, || format!("mask {n}: |F| vs |D| off by {err:e} at ({r},{c})"))?;
                let (br, bc) = (r as f64 - dr, c as f64 - dc);
                ensure(br >= 0.0 && bc >= 0.0 && boundary.contains(br as usize, bc as usize), || {
                    format!("mask {n}: ({r},{c}) - F not on the boundary")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("200 masks 32x32, {checked} foreground pixels"))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let results = checks::gradient_suite(0, 10, false).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let worst = results.iter().map(|r| r.report.max_rel_err).fold(0.0, f64::max);
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    ensure(failed.is_empty(), || format!("failed: {}", failed.join(", ")))?;
    ensure(results.iter().all(|r| r.instances >= 10), || "fewer than 10 instances".into())?;
    ensure(t < Duration::from_secs(60), || format!("took {}", secs(t)))?;
    Ok(format!("{} operations x 10 instances, worst rel err {worst:.1e}, {}", results.len(), secs(t)))
}

fn loss_oracles() -> Outcome {
    let mut rng = Rng::new(400, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (h, w) = (8 + rng.below(9), 8 + rng.below(9));
        let mask = common::random_mask(&mut rng, h, w);
        let sup = geometry::supervision(&mask, Normalization::MaxAbs, BoundaryRule::Interface);
        let weights = LossWeights::default();
        let (sdm_p, df_p, sal_p) =
            (rng.uniform_tensor(&[h, w, 1], -1.0, 1.0), rng.normal_tensor(&[h, w, 2], 3.0), rng.uniform_tensor(&[h, w, 1], 0.0, 1.0));
        let mut g = Graph::new();
        let (a, b, c) = (g.param(sdm_p.clone()), g.param(df_p.clone()), g.param(sal_p.clone()));
        let l_sdm = losses::loss_sdm(&mut g, a, &sup.sdm).map_err(|e| e.to_string())?;
        let l_df = losses::loss_df(&mut g, b, &sup.field, weights.df_angle_eps).map_err(|e| e.to_string())?;
        let l_ds = losses::loss_ds(&mut g, c, &mask, &sup.field, &weights).map_err(|e| e.to_string())?;
        let target: Vec<f64> = (0..h * w).flat_map(|i| [sup.field.fx()[i], sup.field.fy()[i]]).collect();
        let pairs = [
            (g.value(l_sdm).item(), common::sdm_loss_loop(sdm_p.data(), sup.sdm.normalized())),
            (g.value(l_df).item(), common::df_loss_loop(df_p.data(), &target, weights.df_angle_eps)),
            (
                g.value(l_ds).item(),
                common::ds_loss_loop(sal_p.data(), &mask, sup.field.fx(), sup.field.fy(), weights.alpha_edge, weights.psi_eps, weights.w_max),
            ),
        ];
        for (lib, naive) in pairs {
            let err = (lib - naive).abs() / naive.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1e-10, || format!("worst relative difference {worst:e}"))?;
    Ok(format!("30 instances 8..16 px, worst relative difference {worst:.1e}"))
}

fn shape_chain() -> Outcome {
    let chain = ShapeChain::new(&NetConfig::paper()).map_err(|e| e.to_string())?;
    let (h, c) = (384, 128);
    let stated: [(&str, [usize; 3]); 16] = [
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
    let got = chain.entries();
    ensure(got.len() == stated.len(), || format!("{} entries", got.len()))?;
    for ((label, shape), (l, s)) in got.iter().zip(&stated) {
        ensure(label == l && shape == s, || format!("{label} {shape:?}, expected {l} {s:?}"))?;
    }
    Ok("16 stated shapes at 384x384, c=128".into())
}

fn metric_fixed_points() -> Outcome {
    for p in [0.05, 0.4, 0.77, 1.0] {
        let f = metrics::f_measure(p, p, DEFAULT_BETA2);
        ensure((f - p).abs() < 1e-15, || format!("F(P=R={p}) = {f}"))?;
    }
    let mut rng = Rng::new(600, 0);
    for _ in 0..30 {
        let gt = common::random_mask(&mut rng, 16, 16);
        let same = SaliencyMap::from_mask(&gt);
        let mae = metrics::mae(&same, &gt).map_err(|e| e.to_string())?;
        let s = metrics::s_measure(&same, &gt, DEFAULT_S_ALPHA).map_err(|e| e.to_string())?;
        let e = metrics::e_measure(&same, &gt).map_err(|e| e.to_string())?;
        ensure(mae == 0.0 && s == 1.0 && e == 1.0, || format!("identical pair: MAE {mae}, S {s}, E {e}"))?;

        let data: Vec<f64> = if rng.bernoulli(0.5) { common::random_quantized_map(&mut rng, 256) } else { (0..256).map(|_| rng.uniform(0.0, 1.0)).collect() };
        let curve = metrics::pr_curve(&SaliencyMap::new(16, 16, data.clone()).map_err(|e| e.to_string())?, &gt).map_err(|e| e.to_string())?;
        let (p, r) = common::pr_loop(&data, &gt);
        ensure(curve.precision == p && curve.recall == r, || "P-R curve differs from the loop oracle".into())?;
    }
    for v in [0.0, 1.0] {
        let gt = BinaryMask::from_fn(8, 8, |_, _| v == 0.0);
        let mae = metrics::mae(&SaliencyMap::constant(8, 8, v).map_err(|e| e.to_string())?, &gt).map_err(|e| e.to_string())?;
        ensure(mae == 1.0, || format!("complementary constants: MAE {mae}"))?;
    }
    Ok("F(P=R)=P, identical pairs exact, complementary MAE 1, 30 P-R curves exact".into())
}

fn frdf_invariants() -> Outcome {
    let warp = |z: &Tensor, f: &Tensor| -> Result<Tensor, String> {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let (zv, fv) = (g.constant(z.clone()), g.constant(f.clone()));
        let out = frdf_refine(&mut g, &p, zv, fv, 5, FrdfMode::Warp).map_err(|e| e.to_string())?;
        Ok(g.value(out[5]).clone())
    };
    let mut rng = Rng::new(700, 0);
    let z = rng.normal_tensor(&[16, 20, 4], 1.0);
    ensure(warp(&z, &Tensor::zeros(&[16, 20, 2]))? == z, || "zero field is not the identity".into())?;
    let constant = Tensor::full(&[16, 20, 4], -0.35);
    let moved = warp(&constant, &rng.normal_tensor(&[16, 20, 2], 5.0))?;
    ensure(moved.data().iter().all(|v| (v + 0.35).abs() < 1e-12), || "constant features changed".into())?;

    let (h, w) = (40, 48);
    let mask = BinaryMask::from_fn(h, w, |r, c| (10..30).contains(&r) && (8..40).contains(&c));
    let df = geometry::direction_field(&mask).map_err(|e| e.to_string())?;
    let out = warp(&mask.to_tensor().reshape(&[h, w, 1]).map_err(|e| e.to_string())?, &df.to_tensor())?;
    let mut kept = 0;
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let (mut qr, mut qc, mut inside) = (r as f64, c as f64, true);
            for _ in 0..5 {
                let (dr, dc) = df.at(qr as usize, qc as usize);
                (qr, qc) = (qr + dr, qc + dc);
                inside = qr >= 0.0 && qc >= 0.0 && (qr as usize) < h && (qc as usize) < w && mask.get(qr as usize, qc as usize);
                if !inside {
                    break;
                }
            }
            if inside {
                ensure(out.data()[r * w + c] == 1.0, || format!("interior ({r},{c}) lost"))?;
                kept += 1;
            }
        }
    }
    Ok(format!("identities exact; {kept}/{} rectangle pixels preserved over K=5", mask.foreground_count()))
}

fn toy_overfit() -> Outcome {
    let config = NetConfig::toy();
    let sample = rectangle_scene(config.image_size).map_err(|e| e.to_string())?;
    let net = PrlNet::new(config, 0).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(net, sample, LossWeights::default(), AdamConfig::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let log = train(&mut trainer, 200).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let reduction = log.prl_reduction();
    let summary = format!(
        "L_prl {:.1} -> {:.1} ({:.1}% reduction, need >= 90%), training MAE {:.4} (need < 0.05), {} (need < 300s)",
        log.steps[0].prl,
        log.last.prl,
        100.0 * reduction,
        log.final_mae,
        secs(t)
    );
    ensure(reduction >= 0.9 && log.final_mae < 0.05 && t < Duration::from_secs(300), || summary.clone())?;
    Ok(summary)
}

fn prl(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_prl")).args(args).env_remove("PRL_SEED").output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("prl {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn constants() -> Outcome {
    let settings = Settings::default();
    let w = settings.loss;
    ensure(w.lambda1 == 1.0 && w.lambda2 == 1.0, || "lambda defaults".into())?;
    ensure(w.alpha_edge == 10.0 && w.psi_eps == 0.001, || "alpha / psi defaults".into())?;
    ensure(settings.net.frdf_iterations == 5, || "K default".into())?;
    ensure(DEFAULT_BETA2 == 0.3 && DEFAULT_S_ALPHA == 0.5, || "metric constants".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("t");
    prl(&["train-toy", "--synthetic", "--steps", "0", "--out", s(&out)])?;
    let manifest = fs::read_to_string(out.join("manifest.txt")).map_err(|e| e.to_string())?;
    let required = ["lambda1 = 1", "lambda2 = 1", "frdf_iterations = 5", "alpha_edge = 10", "psi_eps = 0.001", "f_beta2 = 0.3", "s_alpha = 0.5"];
    for line in required {
        ensure(manifest.lines().any(|l| l == line), || format!("manifest lacks {line:?}"))?;
        ensure(settings.hyperparameters().lines().any(|l| l == line), || format!("config lacks {line:?}"))?;
    }
    Ok("defaults and manifests carry lambda1, lambda2, K, alpha, psi eps, beta2, S alpha".into())
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let inputs = root.join("inputs");
    fs::create_dir_all(inputs.join("masks")).map_err(|e| e.to_string())?;
    fs::create_dir_all(inputs.join("pred")).map_err(|e| e.to_string())?;
    let scene = rectangle_scene(96).map_err(|e| e.to_string())?;
    let (rgb, thermal, mask) = (inputs.join("rgb.png"), inputs.join("thermal.png"), inputs.join("masks/scene.png"));
    io::write_rgb_png(&rgb, &scene.rgb).map_err(|e| e.to_string())?;
    io::write_rgb_png(&thermal, &scene.thermal).map_err(|e| e.to_string())?;
    io::write_mask_png(&mask, &scene.mask).map_err(|e| e.to_string())?;
    let blur: Vec<f64> = scene.mask.data().iter().enumerate().map(|(i, &m)| 0.7 * m as f64 + 0.2 * ((i % 7) as f64 / 7.0)).collect();
    io::write_gray_png(&inputs.join("pred/scene.png"), 96, 96, &blur).map_err(|e| e.to_string())?;

    let mut commands = 0;
    let mut stdout = Vec::new();
    for run in ["a", "b"] {
        let o = root.join(run);
        let mut text = String::new();
        text += &prl(&["gen-supervision", "--mask", s(&inputs.join("masks")), "--out", s(&o.join("sup"))])?;
        let (report, pr) = (o.join("report.csv"), o.join("pr.csv"));
        fs::create_dir_all(&o).map_err(|e| e.to_string())?;
        text += &prl(&["eval", "--pred", s(&inputs.join("pred")), "--gt", s(&inputs.join("masks")), "--out", s(&report), "--pr", s(&pr)])?;
        text += &prl(&["--seed", "1", "forward", "--rgb", s(&rgb), "--thermal", s(&thermal), "--out", s(&o.join("fwd"))])?;
        text += &prl(&["forward", "--dry-run", "--preset", "paper"])?;
        text += &prl(&["grad-check", "--seed", "2", "--instances", "2"])?;
        text += &prl(&["--seed", "3", "train-toy", "--rgb", s(&rgb), "--thermal", s(&thermal), "--mask", s(&mask), "--steps", "3", "--out", s(&o.join("train"))])?;
        text += &prl(&["train-toy", "--synthetic", "--steps", "1", "--sweep", "lambda2", "--values", "0.5,2", "--out", s(&o.join("sweep"))])?;
        stdout.push(text);
        commands = 7;
    }
    let (a, b) = (snapshot(&root.join("a")), snapshot(&root.join("b")));
    ensure(!a.is_empty() && a.len() == b.len(), || format!("{} vs {} files", a.len(), b.len()))?;
    for ((pa, da), (pb, db)) in a.iter().zip(&b) {
        ensure(pa == pb && da == db, || format!("{} differs", pa.display()))?;
    }
    ensure(stdout[0] == stdout[1], || "stdout differs".into())?;
    Ok(format!("{commands} invocations covering all 5 subcommands, {} output files byte-identical", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("SDM oracle equivalence", sdm_oracle),
        ("direction-field consistency", df_consistency),
        ("gradient checks", gradient_checks),
        ("loss loop-oracle equality", loss_oracles),
        ("shape-chain reproduction", shape_chain),
        ("metric fixed points", metric_fixed_points),
        ("FRDF invariants", frdf_invariants),
        ("toy overfit regression", toy_overfit),
        ("hyperparameter constants", constants),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (verdict, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2}: {verdict}  {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
