//! Acceptance runner. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails, except for the thread speedup check on machines
//! with fewer than four CPUs, which is reported but not fatal unless
//! `SQSEG_ACCEPTANCE_STRICT=1`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sqseg_cli::rle::rle_decode;
use sqseg_cli::segment::Segmenter;
use sqseg_cli::service::{router, AppState, SegmentResponse};
use sqseg_core::loss::{hybrid_loss, hybrid_loss_grad};
use sqseg_core::mask::{
    approximate_polygon, connected_components, distance_transform, skeletonize, BinaryMask,
    Connectivity, Point, Polygon,
};
use sqseg_core::nn::ops::{conv2d, transposed_conv2d, Conv2dParams};
use sqseg_core::nn::{
    build_efficient_unet, count_parameters, init_weights, tensor_from_bytes, tensor_to_bytes,
    Block, Network, Tensor, Variant, Weights,
};
use sqseg_core::pipeline::io::{encode_label_png, write_label_png, write_rgb_png};
use sqseg_core::pipeline::{segment_scene, OracleModel, Palette, SegmentOptions};
use sqseg_core::signal::{make_training_pair_traced, GenParams, SignalRole};
use sqseg_core::synth::{random_label_map, scene_image, squiggles_for};
use sqseg_core::{Error, LabelMask};
use tower::ServiceExt;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Failed only because the machine cannot show it.
    Waived(String),
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

// ---------------------------------------------------------------- signals

fn components(m: &BinaryMask) -> Vec<BinaryMask> {
    connected_components(m, Connectivity::Eight).masks()
}

fn signal_suite() -> Check {
    let start = Instant::now();
    let mut pairs = 0usize;
    let mut hits = [0usize; 4];
    let mut draws = 0usize;
    for map in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + map);
        let blobs = 2 + (map as usize % 7);
        let gt = random_label_map(96, 96, 5, blobs, &mut rng);
        let classes = gt.classes();
        if classes.is_empty() {
            return Err(format!("map {map} has no classes"));
        }
        // Streams are keyed by (seed, class), so reusing seeds 0..20 on every
        // map would replay the same coin flips; each map gets its own seeds.
        for seed in map * 20..map * 20 + 20 {
            let class = classes[seed as usize % classes.len()];
            let traced = make_training_pair_traced(&gt, class, &GenParams::with_seed(seed))
                .map_err(|e| format!("map {map} seed {seed}: {e}"))?;
            let pair = &traced.pair;
            let region = gt.class_mask(class);
            let ctx = || format!("map {map} seed {seed} class {class}");
            ensure(pair.inclusion.is_subset_of(&region), || {
                format!("{}: inclusion leaves region", ctx())
            })?;
            ensure(pair.inclusion.is_disjoint(&pair.exclusion), || {
                format!("{}: inclusion meets exclusion", ctx())
            })?;
            for c in components(&region) {
                ensure(!c.intersection(&pair.inclusion).is_empty(), || {
                    format!("{}: inclusion misses a component", ctx())
                })?;
            }
            let mut others = BinaryMask::new(96, 96);
            for other in classes.iter().copied().filter(|&c| c != class) {
                let r = gt.class_mask(other);
                for c in components(&r) {
                    ensure(!c.intersection(&pair.exclusion).is_empty(), || {
                        format!("{}: exclusion misses a class {other} component", ctx())
                    })?;
                }
                others.union_with(&r);
            }
            ensure(pair.exclusion.is_subset_of(&others), || {
                format!("{}: exclusion outside other classes", ctx())
            })?;
            for d in traced
                .draws
                .iter()
                .filter(|d| d.role == SignalRole::Inclusion)
            {
                draws += 1;
                hits[0] += d.stages.approx_epsilon.is_some() as usize;
                hits[1] += d.stages.smooth.is_some() as usize;
                hits[2] += d.stages.partitioned as usize;
                hits[3] += d.stages.distthresh_fraction.is_some() as usize;
            }
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    let freqs: Vec<f64> = hits.iter().map(|&h| h as f64 / draws as f64).collect();
    for (f, p) in freqs.iter().zip([0.75, 0.75, 0.5, 0.5]) {
        ensure((f - p).abs() <= 0.02, || {
            format!("stage frequency {f:.4} vs {p} over {draws} draws")
        })?;
    }
    ensure(draws >= 10_000, || format!("only {draws} inclusion draws"))?;
    ensure(elapsed <= Duration::from_secs(120), || {
        format!("took {:.1}s", secs(elapsed))
    })?;
    Ok(format!(
        "{pairs} pairs, 0 violations, frequencies {:.3}/{:.3}/{:.3}/{:.3} over {draws} draws, {:.1}s",
        freqs[0],
        freqs[1],
        freqs[2],
        freqs[3],
        secs(elapsed)
    ))
}

// --------------------------------------------------------------- geometry

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

fn douglas_peucker_cases() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0);
    for case in 0..1000 {
        let n = rng.random_range(2..80);
        let (mut x, mut y) = (0.0f64, 0.0f64);
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                x += rng.random_range(-6.0..10.0);
                y += rng.random_range(-9.0..9.0);
                Point::new(x, y)
            })
            .collect();
        let eps = rng.random_range(0.0..8.0);
        let simple = approximate_polygon(&Polygon::open(pts.clone()).unwrap(), eps)
            .map_err(|e| format!("polyline {case}: {e}"))?;
        let mut idx = Vec::new();
        let mut i = 0;
        for v in simple.vertices() {
            while i < pts.len() && pts[i] != *v {
                i += 1;
            }
            ensure(i < pts.len(), || {
                format!("polyline {case}: not a subsequence")
            })?;
            idx.push(i);
            i += 1;
        }
        ensure(
            idx.first() == Some(&0) && idx.last() == Some(&(n - 1)),
            || format!("polyline {case}: endpoints dropped"),
        )?;
        for w in idx.windows(2) {
            let (a, b) = (pts[w[0]], pts[w[1]]);
            for p in &pts[w[0]..=w[1]] {
                let d = seg_dist((p.x, p.y), (a.x, a.y), (b.x, b.y));
                ensure(d <= eps + 1e-9, || format!("polyline {case}: {d} > {eps}"))?;
            }
        }
    }
    Ok(())
}

fn brute_edt(m: &BinaryMask, x: usize, y: usize) -> f64 {
    let (w, h) = m.dims();
    let mut best = f64::INFINITY;
    for by in -1..=h as isize {
        for bx in -1..=w as isize {
            let inside = bx >= 0 && by >= 0 && bx < w as isize && by < h as isize;
            if inside && m.get(bx as usize, by as usize) {
                continue;
            }
            let d = (((bx - x as isize).pow(2) + (by - y as isize).pow(2)) as f64).sqrt();
            best = best.min(d);
        }
    }
    best
}

fn distance_cases() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xed);
    for case in 0..300 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let density = rng.random_range(0.2..1.0);
        let m = BinaryMask::from_fn(w, h, |_, _| rng.random::<f64>() < density);
        let got = distance_transform(&m);
        for y in 0..h {
            for x in 0..w {
                let want = if m.get(x, y) {
                    brute_edt(&m, x, y)
                } else {
                    0.0
                };
                let v = got.get(x, y);
                ensure((v - want).abs() <= 1e-9, || {
                    format!("mask {case} ({x},{y}): {v} vs {want}")
                })?;
            }
        }
    }
    Ok(())
}

fn skeleton_cases() -> Result<(), String> {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5e + seed);
        let n = rng.random_range(1..7);
        let m = random_label_map(72, 56, 1, n, &mut rng).class_mask(1);
        let s = skeletonize(&m);
        ensure(s.is_subset_of(&m), || format!("blob {seed}: not a subset"))?;
        let solid = s.foreground().any(|(x, y)| {
            (-1..=1).all(|dy| (-1..=1).all(|dx| s.get_or_bg(x as isize + dx, y as isize + dy)))
        });
        ensure(!solid, || format!("blob {seed}: skeleton has a solid 3x3"))?;
        let before = components(&m);
        ensure(before.len() == components(&s).len(), || {
            format!("blob {seed}: component count changed")
        })?;
        for c in &before {
            ensure(!c.intersection(&s).is_empty(), || {
                format!("blob {seed}: a component lost its skeleton")
            })?;
        }
    }
    Ok(())
}

fn geometry() -> Check {
    douglas_peucker_cases()?;
    distance_cases()?;
    skeleton_cases()?;
    Ok("1000 polylines, 300 masks, 200 blobs, 0 violations".into())
}

// ------------------------------------------------------------------- loss

fn oracle_loss(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let inter: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let sq: f64 = p.iter().chain(g).map(|v| v * v).sum();
    let ce: f64 = p.iter().zip(g).map(|(&a, &b)| b * a.max(1e-7).ln()).sum();
    1.0 - (2.0 * inter + 1.0) / (sq + 1.0) - ce / n
}

fn instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let p = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
    let g = (0..n).map(|_| rng.random_bool(0.35) as u8 as f64).collect();
    (p, g)
}

fn loss() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1055);
    let mut worst_value = 0.0f64;
    for i in 0..1000 {
        let n = rng.random_range(1..300);
        let (p, g) = instance(&mut rng, n);
        let got = hybrid_loss(&p, &g).map_err(|e| e.to_string())?;
        let err = (got - oracle_loss(&p, &g)).abs();
        worst_value = worst_value.max(err);
        ensure(err <= 1e-9, || format!("instance {i}: off by {err:e}"))?;
    }
    let h = 1e-5;
    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let (p, g) = instance(&mut rng, 64);
        let grad = hybrid_loss_grad(&p, &g).map_err(|e| e.to_string())?;
        for i in 0..64 {
            let (mut up, mut down) = (p.clone(), p.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (oracle_loss(&up, &g) - oracle_loss(&down, &g)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            worst_grad = worst_grad.max(rel);
        }
    }
    ensure(worst_grad < 1e-4, || {
        format!("gradient relative error {worst_grad:e}")
    })?;
    for n in [1, 7, 64] {
        let g: Vec<f64> = (0..n).map(|_| rng.random_bool(0.5) as u8 as f64).collect();
        let l = hybrid_loss(&g, &g).map_err(|e| e.to_string())?;
        ensure(l == 0.0, || format!("L(g, g) = {l} for n = {n}"))?;
    }
    Ok(format!(
        "value error {worst_value:.1e}, gradient relative error {worst_grad:.1e}, L(g,g) = 0"
    ))
}

// ---------------------------------------------------------------- network

/// Parameter count derived directly from the architecture table; width and
/// depth factors are passed in tenths.
fn table_count(w10: usize, d10: usize) -> usize {
    let f = |c: usize| (((c * w10) as f64 / 80.0 + 0.5).floor() as usize * 8).max(8);
    let r = |n: usize| (n * d10).div_ceil(10);
    let conv_bn = |i: usize, o: usize, k: usize| i * o * k * k + 2 * o;
    let mirse = |i: usize, o: usize, k: usize, ratio: usize| {
        let e = i * ratio;
        let se = ((i as f64 / 4.0).round() as usize).max(1);
        let expand = if ratio == 1 { 0 } else { conv_bn(i, e, 1) };
        expand + e * k * k + 2 * e + e * se + se + se * e + e + conv_bn(e, o, 1)
    };
    let stage = |c: &mut usize, k: usize, out: usize, reps: usize, ratio: usize| {
        (0..r(reps))
            .map(|_| {
                let t = mirse(*c, f(out), k, ratio);
                *c = f(out);
                t
            })
            .sum::<usize>()
    };
    let rms = |c: usize, ks: [usize; 4]| {
        ks.iter().map(|&k| conv_bn(c, c, k)).sum::<usize>() + conv_bn(4 * c, c, 1)
    };
    let up = |c: &mut usize, out: usize, skip: usize| {
        let t = *c * f(out) * 9 + 2 * f(out);
        *c = f(out) + skip;
        t
    };

    let mut c = f(32);
    let mut total = conv_bn(5, c, 3);
    total += stage(&mut c, 3, 16, 1, 1);
    let s1 = c;
    total += stage(&mut c, 3, 24, 2, 6);
    let s2 = c;
    total += stage(&mut c, 5, 40, 2, 6);
    let s3 = c;
    total += stage(&mut c, 3, 80, 3, 6);
    total += stage(&mut c, 5, 112, 3, 6);
    let s4 = c;
    total += stage(&mut c, 5, 192, 5, 6);
    total += stage(&mut c, 3, 320, 1, 6);
    total += up(&mut c, 320, s4);
    total += stage(&mut c, 5, 192, 3, 6);
    total += rms(c, [3, 5, 5, 7]);
    total += stage(&mut c, 5, 112, 3, 6);
    total += up(&mut c, 112, s3);
    total += stage(&mut c, 3, 80, 3, 6);
    total += rms(c, [3, 3, 5, 5]);
    total += up(&mut c, 80, s2);
    total += stage(&mut c, 5, 40, 2, 6);
    total += up(&mut c, 40, s1);
    total += stage(&mut c, 3, 24, 2, 6);
    total += up(&mut c, 24, 0);
    total += stage(&mut c, 3, 16, 1, 6);
    total + c + 1
}

fn naive_conv(x: &Tensor, k: &Tensor, p: Conv2dParams) -> Tensor {
    let (c, h, w) = x.chw().unwrap();
    let (o, cpg, kk) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let pad = (p.dilation * (kk - 1) / 2) as isize;
    let (oh, ow) = (h.div_ceil(p.stride), w.div_ceil(p.stride));
    let per_group = o / p.groups;
    Tensor::from_fn(&[o, oh, ow], |i| {
        let (oc, oy, ox) = (i / (oh * ow), i / ow % oh, i % ow);
        let g = oc / per_group;
        let mut acc = 0.0f64;
        for il in 0..cpg {
            let ic = g * (c / p.groups) + il;
            for ky in 0..kk {
                for kx in 0..kk {
                    let iy = (oy * p.stride + ky * p.dilation) as isize - pad;
                    let ix = (ox * p.stride + kx * p.dilation) as isize - pad;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        continue;
                    }
                    let xv = x.data()[(ic * h + iy as usize) * w + ix as usize] as f64;
                    acc += xv * k.data()[((oc * cpg + il) * kk + ky) * kk + kx] as f64;
                }
            }
        }
        acc as f32
    })
}

fn naive_transposed(x: &Tensor, k: &Tensor, stride: usize) -> Tensor {
    let (c, h, w) = x.chw().unwrap();
    let (o, kk) = (k.shape()[1], k.shape()[2]);
    let pad = ((kk - 1) / 2) as isize;
    let (oh, ow) = (h * stride, w * stride);
    let mut acc = vec![0.0f64; o * oh * ow];
    for ic in 0..c {
        for iy in 0..h {
            for ix in 0..w {
                let xv = x.data()[(ic * h + iy) * w + ix] as f64;
                for oc in 0..o {
                    for ky in 0..kk {
                        for kx in 0..kk {
                            let y = (iy * stride + ky) as isize - pad;
                            let xx = (ix * stride + kx) as isize - pad;
                            if y < 0 || xx < 0 || y >= oh as isize || xx >= ow as isize {
                                continue;
                            }
                            let kv = k.data()[((ic * o + oc) * kk + ky) * kk + kx] as f64;
                            acc[(oc * oh + y as usize) * ow + xx as usize] += xv * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[o, oh, ow], acc.into_iter().map(|v| v as f32).collect()).unwrap()
}

fn convolution_oracles() -> Result<f32, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    let mut worst = 0.0f32;
    for case in 0..60 {
        let k = [1, 3, 5, 7][case % 4];
        let stride = 1 + case % 2;
        let dilation = if stride == 1 { 1 + (case / 4) % 3 } else { 1 };
        let groups = [1, 2, 4][case % 3];
        let c = groups * rng.random_range(1..4);
        let o = groups * rng.random_range(1..4);
        let (h, w) = (rng.random_range(3..20), rng.random_range(3..20));
        let p = Conv2dParams {
            stride,
            dilation,
            groups,
        };
        let x = random_tensor(&[c, h, w], &mut rng);
        let kern = random_tensor(&[o, c / groups, k, k], &mut rng);
        let got = conv2d(&x, &kern, None, p).map_err(|e| e.to_string())?;
        let want = naive_conv(&x, &kern, p);
        ensure(got.shape() == want.shape(), || {
            format!("conv case {case}: shape")
        })?;
        worst = worst.max(got.max_abs_diff(&want));

        let kern = random_tensor(&[c, o, 3, 3], &mut rng);
        let got = transposed_conv2d(&x, &kern, None, 2).map_err(|e| e.to_string())?;
        let want = naive_transposed(&x, &kern, 2);
        ensure(got.shape() == want.shape(), || {
            format!("transposed case {case}: shape")
        })?;
        worst = worst.max(got.max_abs_diff(&want));
    }
    ensure(worst <= 1e-5, || format!("convolution error {worst:e}"))?;
    Ok(worst)
}

fn zeroed_blocks_are_identity(net: &Network, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut checked = 0;
    for block in net.blocks() {
        let channels = match *block {
            Block::Mirse {
                in_c,
                out_c,
                stride: 1,
                ..
            } if in_c == out_c => in_c,
            Block::Rms { channels, .. } => channels,
            _ => continue,
        };
        let w = Weights::zeros(&block.params());
        let x = random_tensor(&[channels, 8, 8], rng);
        let y = block.forward(&x, &w, None).map_err(|e| e.to_string())?;
        ensure(bits(&y) == bits(&x), || {
            format!("{} is not the identity", block.name())
        })?;
        checked += 1;
    }
    Ok(checked)
}

fn network() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e7);
    let factors = [(10, 10), (10, 11), (11, 12), (12, 14)];
    let mut counts = Vec::new();
    let mut identities = 0;
    let mut shapes = 0;
    for (v, (w10, d10)) in Variant::ALL.into_iter().zip(factors) {
        let spec = build_efficient_unet(v);
        let net = Network::new(&spec).map_err(|e| format!("{v}: {e}"))?;
        let n = count_parameters(&spec).map_err(|e| e.to_string())?;
        ensure(n == table_count(w10, d10), || {
            format!("{v}: {n} parameters, table gives {}", table_count(w10, d10))
        })?;
        counts.push(n);
        identities += zeroed_blocks_are_identity(&net, &mut rng)?;

        let weights = init_weights(&spec, 3).map_err(|e| e.to_string())?;
        let mut sizes: Vec<(usize, usize)> = (1..=16).map(|k| (32, 32 * k)).collect();
        if v == Variant::B0 {
            sizes.extend((2..=16).map(|k| (32 * k, 32)));
            sizes.extend([(64, 64), (128, 128), (256, 256)]);
        }
        for (h, w) in sizes {
            let x = random_tensor(&[5, h, w], &mut rng);
            let y = net
                .forward(&weights, &x)
                .map_err(|e| format!("{v} {h}x{w}: {e}"))?;
            ensure(y.shape() == [1, h, w], || {
                format!("{v} {h}x{w}: got {:?}", y.shape())
            })?;
            shapes += 1;
        }
    }
    ensure(counts.windows(2).all(|w| w[0] < w[1]), || {
        format!("counts not increasing: {counts:?}")
    })?;
    let conv_err = convolution_oracles()?;

    let spec = build_efficient_unet(Variant::B0);
    let weights = init_weights(&spec, 9).map_err(|e| e.to_string())?;
    let net = Network::new(&spec).unwrap();
    let x = random_tensor(&[5, 128, 160], &mut rng);
    let one = pool(1)
        .install(|| net.forward(&weights, &x))
        .map_err(|e| e.to_string())?;
    let four = pool(4)
        .install(|| net.forward(&weights, &x))
        .map_err(|e| e.to_string())?;
    ensure(bits(&one) == bits(&four), || {
        "1 and 4 thread outputs differ".into()
    })?;

    Ok(format!(
        "parameters {counts:?}, {shapes} shapes, {identities} zeroed residual blocks, conv error {conv_err:.1e}, 1 vs 4 threads bit-identical"
    ))
}

// ------------------------------------------------------------ performance

fn performance() -> (Outcome, Outcome) {
    let spec = build_efficient_unet(Variant::B0);
    let weights = init_weights(&spec, 1).unwrap();
    let net = Network::new(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x512);
    let x = random_tensor(&[5, 512, 512], &mut rng);
    let timed = |threads: usize| {
        pool(threads).install(|| {
            let t = Instant::now();
            let y = net.forward(&weights, &x).unwrap();
            (t.elapsed(), y)
        })
    };
    let (single, y) = timed(1);
    let budget = if single <= Duration::from_secs(120) && y.shape() == [1, 512, 512] {
        Outcome::Pass(format!("B0 at 512x512 on 1 thread in {:.1}s", secs(single)))
    } else {
        Outcome::Fail(format!(
            "B0 at 512x512 on 1 thread took {:.1}s",
            secs(single)
        ))
    };

    let (four, _) = timed(4);
    let speedup = secs(single) / secs(four);
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let msg = format!(
        "4 threads {:.1}s, speedup {speedup:.2}x on {cpus} available CPU(s)",
        secs(four)
    );
    let scaling = if speedup >= 2.0 {
        Outcome::Pass(msg)
    } else if cpus < 4 {
        Outcome::Waived(msg)
    } else {
        Outcome::Fail(msg)
    };
    (budget, scaling)
}

// ------------------------------------------------------------ end to end

fn e2e_scene(seed: u64) -> (LabelMask, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (rng.random_range(40..144), rng.random_range(40..144));
    let gt = random_label_map(w, h, 5, rng.random_range(2..9), &mut rng);
    let image = scene_image(&gt, &mut rng);
    (gt, image)
}

async fn post(app: &axum::Router, body: Value) -> Result<SegmentResponse, String> {
    let req = Request::builder()
        .method("POST")
        .uri("/api/segment")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    if status != StatusCode::OK {
        return Err(format!(
            "service returned {status}: {}",
            String::from_utf8_lossy(&bytes)
        ));
    }
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn end_to_end() -> Check {
    let palette = Palette::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    let mut compared = 0;
    for i in 0..50u64 {
        let (gt, image) = e2e_scene(7_000 + i);
        let strokes = squiggles_for(&gt);
        let model = OracleModel::new(gt.clone());
        let out = segment_scene(&image, &strokes, &[], &model, &SegmentOptions::default())
            .map_err(|e| format!("scene {i}: {e}"))?;
        ensure(out.labels == gt, || {
            format!("scene {i}: labels differ from ground truth")
        })?;

        // The CLI and the service run the same request on the same files.
        let scene_dir = dir.path().join(format!("scene{i}"));
        fs::create_dir(&scene_dir).unwrap();
        let (gt_png, img_png, sq) = (
            scene_dir.join("gt.png"),
            scene_dir.join("image.png"),
            scene_dir.join("squiggles.json"),
        );
        write_label_png(&gt, &palette, &gt_png).unwrap();
        write_rgb_png(&image, &img_png).unwrap();
        fs::write(&sq, serde_json::to_vec(&strokes).unwrap()).unwrap();
        let out_dir = scene_dir.join("out");
        let run = Command::new(env!("CARGO_BIN_EXE_sqseg"))
            .args(["segment", "--probs", "--oracle"])
            .arg(&gt_png)
            .arg("--image")
            .arg(&img_png)
            .arg("--squiggles")
            .arg(&sq)
            .arg("--out")
            .arg(&out_dir)
            .env_remove("SQSEG_WEIGHTS")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(run.status.success(), || {
            format!(
                "scene {i}: cli failed: {}",
                String::from_utf8_lossy(&run.stderr)
            )
        })?;
        let cli_png = fs::read(out_dir.join("labels.png")).unwrap();

        let segmenter = Segmenter {
            model: Arc::new(OracleModel::new(gt.clone())),
            palette: palette.clone(),
            stain: None,
            options: SegmentOptions::default(),
        };
        let app = router(Arc::new(AppState::new(segmenter, 1)));
        let body = json!({
            "image": { "base64": B64.encode(fs::read(&img_png).unwrap()) },
            "squiggles": strokes,
            "return_tensors": true,
        });
        let resp = runtime.block_on(post(&app, body))?;
        let labels = rle_decode(&resp.label_mask).map_err(|e| e.to_string())?;
        let service_png = encode_label_png(&labels, &resp.palette).map_err(|e| e.to_string())?;
        ensure(cli_png == service_png, || {
            format!("scene {i}: label PNGs differ")
        })?;
        for c in resp.per_class.unwrap_or_default() {
            let cli = fs::read(
                out_dir
                    .join("probs")
                    .join(format!("class_{}.eutn", c.class_id)),
            )
            .map_err(|e| format!("scene {i}: {e}"))?;
            let svc = B64
                .decode(c.tensor.unwrap_or_default())
                .map_err(|e| e.to_string())?;
            ensure(cli == svc, || {
                format!("scene {i}: class {} tensors differ", c.class_id)
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "50 scenes reproduced exactly, CLI and service byte-identical ({compared} probability tensors)"
    ))
}

// ---------------------------------------------------------------- formats

fn rewrite_manifest(bytes: &[u8], edit: impl FnOnce(&mut Value)) -> Vec<u8> {
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let mut m: Value = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
    edit(&mut m);
    let json = serde_json::to_vec(&m).unwrap();
    let mut out = bytes[..5].to_vec();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[9 + len..]);
    out
}

fn formats() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf0);
    for v in Variant::ALL {
        let spec = build_efficient_unet(v);
        let w = init_weights(&spec, 17).map_err(|e| e.to_string())?;
        let bytes = w.to_bytes();
        let back = Weights::from_bytes(&bytes).map_err(|e| format!("{v}: {e}"))?;
        ensure(back.to_bytes() == bytes, || {
            format!("{v}: container bytes changed")
        })?;
        for (a, b) in w.entries().iter().zip(back.entries()) {
            ensure(a == b, || format!("{v}: entry {} changed", a.name))?;
        }
    }
    for _ in 0..50 {
        let rank = rng.random_range(1..5);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..7)).collect();
        let mut t = random_tensor(&shape, &mut rng);
        // Values that a lossy round trip would mangle.
        let specials = [f32::NAN, -0.0, f32::INFINITY, f32::MIN_POSITIVE / 2.0];
        for (slot, v) in t.data_mut().iter_mut().zip(specials) {
            *slot = v;
        }
        let back = tensor_from_bytes(&tensor_to_bytes(&t)).map_err(|e| e.to_string())?;
        ensure(back.shape() == t.shape() && bits(&back) == bits(&t), || {
            "raw tensor changed in a round trip".into()
        })?;
    }

    let bytes = init_weights(&build_efficient_unet(Variant::B0), 2)
        .unwrap()
        .to_bytes();
    let mut magic = bytes.clone();
    magic[0] = b'Z';
    let reshaped = rewrite_manifest(&bytes, |m| m["entries"][0]["shape"] = json!([3]));
    let missing = rewrite_manifest(&bytes, |m| {
        m["entries"].as_array_mut().unwrap().remove(1);
    });
    let mut garbage = bytes[..9].to_vec();
    garbage.resize(bytes.len(), b'{');
    type Case<'a> = (&'a str, &'a [u8], fn(&Error) -> bool);
    let cases: [Case; 5] = [
        ("bad magic", &magic, |e| matches!(e, Error::BadMagic { .. })),
        ("truncated", &bytes[..bytes.len() - 3], |e| {
            matches!(e, Error::TruncatedBlob { .. })
        }),
        ("layer shape", &reshaped, |e| {
            matches!(e, Error::LayerShape { .. })
        }),
        ("missing layer", &missing, |e| {
            matches!(e, Error::MissingLayer(_))
        }),
        ("manifest", &garbage, |e| matches!(e, Error::Manifest(_))),
    ];
    let mut messages = Vec::new();
    for (what, data, expected) in cases {
        match Weights::from_bytes(data) {
            Err(e) if expected(&e) => messages.push(e.to_string()),
            other => return Err(format!("{what}: got {other:?}")),
        }
    }
    let raw = tensor_to_bytes(&random_tensor(&[2, 3], &mut rng));
    ensure(
        matches!(
            tensor_from_bytes(&raw[..raw.len() - 1]),
            Err(Error::TruncatedBlob { .. })
        ),
        || "truncated raw tensor accepted".into(),
    )?;
    ensure(
        matches!(
            tensor_from_bytes(b"EUNW1\0\0\0"),
            Err(Error::BadMagic { .. })
        ),
        || "raw tensor with wrong magic accepted".into(),
    )?;
    let distinct: std::collections::HashSet<_> = messages
        .iter()
        .map(|m| m.split(':').next().unwrap_or(""))
        .collect();
    Ok(format!(
        "B0-B3 containers and 50 raw tensors bit-exact, corruption errors: {}",
        distinct.len()
    ))
}

// ------------------------------------------------------------------- main

fn run(f: impl FnOnce() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(msg)) => Outcome::Pass(msg),
        Ok(Err(msg)) => Outcome::Fail(msg),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Outcome::Fail(format!("panic: {msg}"))
        }
    }
}

fn main() {
    let strict = std::env::var("SQSEG_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = false;
    let mut report = |id: &str, name: &str, outcome: Outcome| {
        let (tag, msg, bad) = match outcome {
            Outcome::Pass(m) => ("PASS", m, false),
            Outcome::Fail(m) => ("FAIL", m, true),
            Outcome::Waived(m) => ("FAIL", format!("{m} (needs at least 4 CPUs)"), strict),
        };
        fatal |= bad;
        println!("criterion {id} {tag} {name}: {msg}");
    };

    let started = Instant::now();
    report("1", "signal generation", run(signal_suite));
    report("2", "geometry oracles", run(geometry));
    report("3", "loss verification", run(loss));
    report("4", "network verification", run(network));
    match catch_unwind(performance) {
        Ok((budget, scaling)) => {
            report("5a", "single-thread forward budget", budget);
            report("5b", "four-thread speedup", scaling);
        }
        Err(_) => report("5", "performance", Outcome::Fail("panic".into())),
    }
    report("6", "end-to-end stub oracle", run(end_to_end));
    report("7", "formats", run(formats));
    println!("acceptance finished in {:.1}s", secs(started.elapsed()));
    if fatal {
        std::process::exit(1);
    }
}
