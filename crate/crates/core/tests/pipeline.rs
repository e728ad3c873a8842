use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqseg_core::nn::{build_efficient_unet, init_weights, Tensor, Variant};
use sqseg_core::pipeline::{
    assemble_semantic_map, evaluate_scene, extract_patch, one_hot, reinhard_normalize, segment_one,
    segment_pairs, segment_scene, ClassProbMap, ConstantModel, EfficientUnet, OracleModel,
    SegmentOptions, StainStats,
};
use sqseg_core::signal::{make_training_pair, GenParams, SignalPair};
use sqseg_core::synth::{random_label_map, scene_image, squiggles_for};
use sqseg_core::LabelMask;

fn scene(seed: u64) -> (LabelMask, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(48..160);
    let h = rng.random_range(48..160);
    let labels = random_label_map(w, h, 5, rng.random_range(3..9), &mut rng);
    let image = scene_image(&labels, &mut rng);
    (labels, image)
}

#[test]
fn oracle_stub_recovers_gt_from_generated_signals() {
    for seed in 0..50 {
        let (gt, image) = scene(seed);
        let pairs: Vec<(u8, SignalPair)> = gt
            .classes()
            .into_iter()
            .map(|c| {
                (
                    c,
                    make_training_pair(&gt, c, &GenParams::with_seed(seed)).unwrap(),
                )
            })
            .collect();
        let model = OracleModel::new(gt.clone());
        let out = segment_pairs(&image, &pairs, &model, &SegmentOptions::default()).unwrap();
        assert_eq!(out.labels, gt, "scene {seed}");
    }
}

#[test]
fn oracle_stub_recovers_gt_from_squiggles() {
    for seed in 100..150 {
        let (gt, image) = scene(seed);
        let strokes = squiggles_for(&gt);
        let model = OracleModel::new(gt.clone());
        let out = segment_scene(&image, &strokes, &[], &model, &SegmentOptions::default()).unwrap();
        assert_eq!(out.labels, gt, "scene {seed}");
        let report = evaluate_scene(&out.labels, &out.probs, &gt).unwrap();
        assert_eq!(report.overall.dice, 1.0);
        assert_eq!(report.overall.accuracy, 1.0);
    }
}

#[test]
fn small_patches_only_label_what_they_cover() {
    let (gt, image) = scene(7);
    let strokes = squiggles_for(&gt);
    let model = OracleModel::new(gt.clone());
    let opts = SegmentOptions { patch_size: 32 };
    let out = segment_scene(&image, &strokes, &[], &model, &opts).unwrap();
    let mut hits = 0;
    for (&p, &g) in out.labels.labels().iter().zip(gt.labels()) {
        assert!(p == 0 || p == g);
        hits += (p != 0) as usize;
    }
    assert!(hits > 0);
}

#[test]
fn constant_half_stub_is_at_threshold() {
    let (_, image) = scene(3);
    let (patch, placement) = extract_patch(&image, (20, 20), 64).unwrap();
    let pair = SignalPair::empty(64, 64);
    let out = segment_one(&patch, &pair, 4, &ConstantModel { value: 0.5 }, &placement).unwrap();
    assert!(out.probs.iter().all(|&p| p == 0.5));
    let labels = assemble_semantic_map(&[out]).unwrap();
    assert!(labels.labels().iter().all(|&l| l == 4));
}

#[test]
fn assembly_is_idempotent_and_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let labels = random_label_map(40, 30, 5, 6, &mut rng);
        if labels.classes().is_empty() {
            continue;
        }
        assert_eq!(assemble_semantic_map(&one_hot(&labels)).unwrap(), labels);

        let maps: Vec<ClassProbMap> = (1..=4u8)
            .map(|c| {
                let probs = (0..1200).map(|_| rng.random::<f32>()).collect();
                ClassProbMap::new(c, 40, 30, probs).unwrap()
            })
            .collect();
        let mut shuffled = maps.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(
            assemble_semantic_map(&maps).unwrap(),
            assemble_semantic_map(&shuffled).unwrap()
        );
    }
}

#[test]
fn random_weights_segment_deterministically() {
    let spec = build_efficient_unet(Variant::B0);
    let model = EfficientUnet::new(&spec, init_weights(&spec, 5).unwrap()).unwrap();
    let (gt, image) = scene(21);
    let strokes = squiggles_for(&gt);
    let opts = SegmentOptions { patch_size: 64 };
    let a = segment_scene(&image, &strokes, &[], &model, &opts).unwrap();
    let b = segment_scene(&image, &strokes, &[], &model, &opts).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.probs, b.probs);
    for m in &a.probs {
        assert!(m.probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

// Reference lαβ conversion using the inverse matrix as published, which
// is only accurate to about three decimals.
fn reference_reinhard(rgb: [f64; 3], src: &StainStats, dst: &StainStats) -> [f64; 3] {
    let lms = [
        0.3811 * rgb[0] + 0.5783 * rgb[1] + 0.0402 * rgb[2],
        0.1967 * rgb[0] + 0.7244 * rgb[1] + 0.0782 * rgb[2],
        0.0241 * rgb[0] + 0.1288 * rgb[1] + 0.8444 * rgb[2],
    ]
    .map(|v| v.max(1e-6).log10());
    let lab = [
        (lms[0] + lms[1] + lms[2]) / 3f64.sqrt(),
        (lms[0] + lms[1] - 2.0 * lms[2]) / 6f64.sqrt(),
        (lms[0] - lms[1]) / 2f64.sqrt(),
    ];
    let t: Vec<f64> = (0..3)
        .map(|k| (lab[k] - src.mean[k]) * dst.std[k] / src.std[k] + dst.mean[k])
        .collect();
    let (a, b, c) = (t[0] / 3f64.sqrt(), t[1] / 6f64.sqrt(), t[2] / 2f64.sqrt());
    let lms = [a + b + c, a + b - c, a - 2.0 * b].map(|v| 10f64.powf(v));
    [
        4.4679 * lms[0] - 3.5873 * lms[1] + 0.1193 * lms[2],
        -1.2186 * lms[0] + 2.3809 * lms[1] - 0.1624 * lms[2],
        0.0497 * lms[0] - 0.2439 * lms[1] + 1.2045 * lms[2],
    ]
}

#[test]
fn reinhard_matches_reference() {
    let image = Tensor::from_fn(&[3, 40, 50], |i| {
        let (k, px) = (i / 2000, i % 2000);
        0.3 + 0.4 * (((px * (k + 3)) % 97) as f32 / 97.0)
    });
    let src = StainStats::of(&image).unwrap();
    let mut dst = src;
    for k in 0..3 {
        dst.mean[k] += 0.02;
        dst.std[k] *= 0.9;
    }
    let out = reinhard_normalize(&image, &dst).unwrap();
    let n = image.len() / 3;
    let (inp, got) = (image.data(), out.data());
    let mut checked = 0;
    for i in 0..n {
        let rgb = [0, 1, 2].map(|k| inp[k * n + i] as f64);
        let want = reference_reinhard(rgb, &src, &dst);
        if want.iter().any(|v| !(0.0..=1.0).contains(v)) {
            continue;
        }
        for k in 0..3 {
            assert!((got[k * n + i] as f64 - want[k]).abs() < 5e-3, "pixel {i}");
        }
        checked += 1;
    }
    assert!(checked > n * 9 / 10);
}
