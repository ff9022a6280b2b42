mod common;

use std::path::Path;

use prlnet::geometry::BinaryMask;
use prlnet::io;
use prlnet::metrics::{self, SaliencyMap, DEFAULT_BETA2, DEFAULT_S_ALPHA};
use prlnet::rng::Rng;

fn mixed_mask(rng: &mut Rng, h: usize, w: usize) -> BinaryMask {
    common::random_mask(rng, h, w)
}

#[test]
fn f_measure_fixed_points() {
    for p in [0.1, 0.5, 0.93] {
        for beta2 in [0.3, 1.0, 2.0] {
            assert!((metrics::f_measure(p, p, beta2) - p).abs() < 1e-15);
        }
    }
    assert_eq!(metrics::f_measure(1.0, 0.0, DEFAULT_BETA2), 0.0);
    assert!((metrics::f_measure(0.9, 0.6, DEFAULT_BETA2) - 0.702 / 0.87).abs() < 1e-12);
}

#[test]
fn identical_and_complementary_pairs() {
    let mut rng = Rng::new(20, 0);
    for _ in 0..20 {
        let gt = mixed_mask(&mut rng, 16, 20);
        let pred = SaliencyMap::from_mask(&gt);
        assert_eq!(metrics::mae(&pred, &gt).unwrap(), 0.0);
        assert_eq!(metrics::s_measure(&pred, &gt, DEFAULT_S_ALPHA).unwrap(), 1.0);
        assert_eq!(metrics::e_measure(&pred, &gt).unwrap(), 1.0);
    }
    // Centred objects: every centroid block mixes foreground and background.
    // (A block holding a single gt class scores 1 for any constant prediction
    // under the reference block rule, so off-centre masks do not go to 0.)
    for (rh, rw) in [(3, 4), (5, 7), (6, 9)] {
        let gt = BinaryMask::from_fn(16, 20, |r, c| r.abs_diff(8) < rh && c.abs_diff(10) < rw);
        let inverted = SaliencyMap::from_mask(&gt.inverted());
        assert!(metrics::s_measure(&inverted, &gt, DEFAULT_S_ALPHA).unwrap() < 0.05);
    }
    let empty = BinaryMask::from_fn(8, 8, |_, _| false);
    assert_eq!(metrics::mae(&SaliencyMap::constant(8, 8, 1.0).unwrap(), &empty).unwrap(), 1.0);
    assert_eq!(metrics::mae(&SaliencyMap::constant(8, 8, 0.25).unwrap(), &empty).unwrap(), 0.25);
}

#[test]
fn e_measure_anti_aligned_and_centered() {
    let gt = BinaryMask::from_fn(10, 10, |_, c| c < 5);
    let anti = SaliencyMap::from_mask(&gt.inverted());
    assert!(metrics::e_measure(&anti, &gt).unwrap() < 0.05);
    // A constant prediction binarizes to all ones, so its centred map is zero.
    let flat = SaliencyMap::constant(10, 10, 0.5).unwrap();
    assert!((metrics::e_measure(&flat, &gt).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn s_measure_is_the_even_mix_of_its_parts() {
    let mut rng = Rng::new(21, 0);
    for _ in 0..10 {
        let gt = mixed_mask(&mut rng, 18, 14);
        let pred = SaliencyMap::new(18, 14, common::random_quantized_map(&mut rng, 18 * 14)).unwrap();
        let parts = metrics::s_measure_parts(&pred, &gt, 0.5).unwrap();
        let expect = (0.5 * (parts.object + parts.region)).clamp(0.0, 1.0);
        assert!((parts.score - expect).abs() < 1e-15);
    }
}

#[test]
fn pr_curve_equals_loop_oracle() {
    let mut rng = Rng::new(22, 0);
    for i in 0..50 {
        let gt = mixed_mask(&mut rng, 16, 16);
        let data = if i % 2 == 0 {
            common::random_quantized_map(&mut rng, 256)
        } else {
            (0..256).map(|_| rng.uniform(0.0, 1.0)).collect()
        };
        let pred = SaliencyMap::new(16, 16, data.clone()).unwrap();
        let curve = metrics::pr_curve(&pred, &gt).unwrap();
        let (p, r) = common::pr_loop(&data, &gt);
        assert_eq!(curve.precision, p);
        assert_eq!(curve.recall, r);
    }
}

#[test]
fn metrics_stay_in_unit_range_and_mae_is_symmetric() {
    let mut rng = Rng::new(23, 0);
    for _ in 0..30 {
        let gt = mixed_mask(&mut rng, 12, 15);
        let data = common::random_quantized_map(&mut rng, 12 * 15);
        let pred = SaliencyMap::new(12, 15, data.clone()).unwrap();
        let m = metrics::evaluate_pair("x", &pred, &gt).unwrap();
        for v in [m.s_measure, m.f.max, m.f.mean, m.f.adaptive, m.e_measure, m.mae] {
            assert!((0.0..=1.0).contains(&v));
        }
        let flipped = SaliencyMap::new(12, 15, data.iter().map(|v| 1.0 - v).collect()).unwrap();
        let a = metrics::mae(&pred, &gt).unwrap();
        let b = metrics::mae(&flipped, &gt.inverted()).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}

fn write_pair(dir: &Path, id: &str, pred: &[f64], gt: &BinaryMask) {
    let (h, w) = (gt.height(), gt.width());
    io::write_gray_png(&dir.join("pred").join(format!("{id}.png")), h, w, pred).unwrap();
    io::write_mask_png(&dir.join("gt").join(format!("{id}.png")), gt).unwrap();
}

/// Three fixed pairs: a perfect one, a blurred disc and an offset rectangle.
pub fn toy_set(dir: &Path) {
    std::fs::create_dir_all(dir.join("pred")).unwrap();
    std::fs::create_dir_all(dir.join("gt")).unwrap();
    let (h, w) = (24, 32);
    let rect = BinaryMask::from_fn(h, w, |r, c| (6..18).contains(&r) && (8..24).contains(&c));
    write_pair(dir, "a_perfect", &SaliencyMap::from_mask(&rect).data().to_vec(), &rect);
    let disc = BinaryMask::from_fn(h, w, |r, c| (r as f64 - 12.0).powi(2) + (c as f64 - 16.0).powi(2) <= 49.0);
    let blur: Vec<f64> = (0..h * w)
        .map(|i| {
            let d = ((((i / w) as f64 - 12.0).powi(2) + ((i % w) as f64 - 16.0).powi(2)).sqrt() - 7.0) / 1.5;
            1.0 / (1.0 + d.exp())
        })
        .collect();
    write_pair(dir, "b_blur", &blur, &disc);
    let offset: Vec<f64> = (0..h * w).map(|i| if (9..21).contains(&(i / w)) && (11..27).contains(&(i % w)) { 0.8 } else { 0.1 }).collect();
    write_pair(dir, "c_offset", &offset, &rect);
}

#[test]
fn golden_three_pair_report() {
    let dir = tempfile::tempdir().unwrap();
    toy_set(dir.path());
    let report = metrics::evaluate_dir(&dir.path().join("pred"), &dir.path().join("gt")).unwrap();
    let golden = include_str!("data/golden_report.csv");
    if std::env::var_os("PRL_PRINT_GOLDEN").is_some() {
        print!("{}", report.report_csv());
    }
    assert_eq!(report.report_csv(), golden);
    let again = metrics::evaluate_dir(&dir.path().join("pred"), &dir.path().join("gt")).unwrap();
    assert_eq!(again.pr_csv(), report.pr_csv());
    assert_eq!(report.pr_csv().lines().count(), 257);
}

#[test]
fn directory_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&p).unwrap();
    std::fs::create_dir_all(&g).unwrap();
    let m = BinaryMask::from_fn(4, 4, |r, _| r < 2);
    io::write_mask_png(&p.join("one.png"), &m).unwrap();
    io::write_mask_png(&g.join("two.png"), &m).unwrap();
    assert!(metrics::evaluate_dir(&p, &g).is_err());

    io::write_mask_png(&p.join("two.png"), &m).unwrap();
    let single = metrics::evaluate_dir(&p, &g);
    assert!(single.is_err(), "unmatched files must not produce a partial report");

    std::fs::remove_file(p.join("one.png")).unwrap();
    let perfect = metrics::evaluate_dir(&p, &g).unwrap().aggregate;
    assert_eq!((perfect.s_measure, perfect.max_f, perfect.e_measure, perfect.mae), (1.0, 1.0, 1.0, 0.0));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert!(metrics::evaluate_dir(&empty, &empty).is_err());
}
