use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sqseg_core::nn::{
    build_efficient_unet, count_parameters, init_weights, load_weights, read_tensor, save_weights,
    write_tensor, Network, NetworkSpec, Tensor,
};
use sqseg_core::pipeline::io::{read_label_png, read_rgb_png, write_label_png, write_mask_png};
use sqseg_core::pipeline::{
    evaluate_scene, ClassProbMap, Palette, SceneDescriptor, SegmentOptions, StainStats,
};
use sqseg_core::signal::{make_training_pair_traced, ClassDraw, GenParams, Squiggle};
use sqseg_core::Error;
use tracing::{info, warn};

use crate::args::{EvalArgs, GensigArgs, InitWeightsArgs, InspectArgs, ModelArgs, SegmentArgs};
use crate::error::{Context, Failure};
use crate::segment::{load_model, read_json, unknown_class, Segmenter};

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).context(format!("creating {}", dir.display()))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).context("serializing")?;
    bytes.push(b'\n');
    fs::write(path, bytes).context(format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Provenance<'a> {
    gt: String,
    class_id: u8,
    seed: u64,
    params: &'a GenParams,
    draws: Vec<ClassDraw>,
    inclusion_pixels: usize,
    exclusion_pixels: usize,
}

fn gensig_one(gt: &Path, class_id: u8, params: &GenParams, out: &Path) -> Result<(), Failure> {
    let labels = read_label_png(gt).context(format!("reading {}", gt.display()))?;
    if !labels.contains_class(class_id) {
        return Err(Failure {
            context: format!("{}", gt.display()),
            source: Error::ClassNotPresent(class_id),
        });
    }
    let traced = make_training_pair_traced(&labels, class_id, params)
        .context(format!("generating signals for {}", gt.display()))?;
    create_dir(out)?;
    let pair = &traced.pair;
    write_mask_png(&pair.inclusion, out.join("inclusion.png")).context("writing inclusion.png")?;
    write_mask_png(&pair.exclusion, out.join("exclusion.png")).context("writing exclusion.png")?;
    let provenance = Provenance {
        gt: gt
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        class_id,
        seed: params.seed,
        params,
        draws: traced.draws,
        inclusion_pixels: pair.inclusion.count(),
        exclusion_pixels: pair.exclusion.count(),
    };
    write_json(&provenance, &out.join("provenance.json"))
}

/// One label PNG, or every PNG in a directory. In batch mode an image
/// without the class is skipped rather than fatal.
pub fn gensig(args: &GensigArgs) -> Result<Value, Failure> {
    let mut params: GenParams = match &args.params {
        Some(p) => read_json(p)?,
        None => GenParams::default(),
    };
    params.seed = args.seed;
    params.validate().context("generator parameters")?;

    if !args.gt.is_dir() {
        let started = Instant::now();
        gensig_one(&args.gt, args.class_id, &params, &args.out)?;
        info!(image = %args.gt.display(), ms = ms(started), "signals written");
        return Ok(json!({ "processed": 1, "skipped": 0 }));
    }

    let mut images: Vec<PathBuf> = fs::read_dir(&args.gt)
        .context(format!("listing {}", args.gt.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    images.sort();
    let batch_started = Instant::now();
    let (mut processed, mut skipped) = (0usize, Vec::new());
    for image in &images {
        let started = Instant::now();
        let stem = image.file_stem().unwrap_or_default();
        match gensig_one(image, args.class_id, &params, &args.out.join(stem)) {
            Ok(()) => {
                processed += 1;
                info!(image = %image.display(), ms = ms(started), "signals written");
            }
            Err(Failure {
                source: Error::ClassNotPresent(c),
                ..
            }) => {
                warn!(image = %image.display(), class_id = c, "class absent, skipped");
                skipped.push(stem.to_string_lossy().into_owned());
            }
            Err(e) => return Err(e),
        }
    }
    let total_ms = ms(batch_started);
    info!(processed, skipped = skipped.len(), total_ms, "batch done");
    Ok(json!({ "processed": processed, "skipped": skipped.len(), "skipped_images": skipped }))
}

pub fn segmenter(model: &ModelArgs) -> Result<Segmenter, Failure> {
    let palette = match &model.palette {
        Some(p) => read_json(p)?,
        None => Palette::default(),
    };
    let stain: Option<StainStats> = match &model.stain {
        Some(p) => {
            let s: StainStats = read_json(p)?;
            s.validate().context(format!("{}", p.display()))?;
            Some(s)
        }
        None => None,
    };
    Ok(Segmenter {
        model: load_model(model.weights.as_deref(), model.oracle.as_deref())?,
        palette,
        stain,
        options: SegmentOptions {
            patch_size: model.patch_size,
        },
    })
}

pub fn segment(args: &SegmentArgs) -> Result<Value, Failure> {
    let (image_path, squiggles, mut classes): (PathBuf, Vec<Squiggle>, Vec<u8>) = match &args.scene
    {
        Some(scene) => {
            let desc: SceneDescriptor = read_json(scene)?;
            let base = scene.parent().unwrap_or(Path::new("."));
            (base.join(&desc.image), desc.squiggles, desc.classes)
        }
        None => {
            let (Some(image), Some(sq)) = (&args.image, &args.squiggles) else {
                unreachable!("clap requires --image and --squiggles without --scene");
            };
            (image.clone(), read_json(sq)?, Vec::new())
        }
    };
    if !args.classes.is_empty() {
        classes = args.classes.clone();
    }
    let segmenter = segmenter(&args.model)?;
    if let Some(c) = unknown_class(&segmenter.palette, &squiggles, &classes) {
        return Err(Failure {
            context: format!("class {c} is not in the palette"),
            source: Error::ClassNotPresent(c),
        });
    }
    let image = read_rgb_png(&image_path).context(format!("reading {}", image_path.display()))?;
    let out = segmenter
        .segment(&image, &squiggles, &classes)
        .context("segmenting")?;

    create_dir(&args.out)?;
    let labels_path = args.out.join("labels.png");
    write_label_png(&out.labels, &segmenter.palette, &labels_path)
        .context(format!("writing {}", labels_path.display()))?;
    if args.probs {
        let dir = args.out.join("probs");
        create_dir(&dir)?;
        for m in &out.probs {
            let t = Tensor::from_vec(&[m.height, m.width], m.probs.clone())?;
            let path = dir.join(format!("class_{}.eutn", m.class_id));
            write_tensor(&t, &path).context(format!("writing {}", path.display()))?;
        }
    }
    let t = out.timings;
    info!(
        model = segmenter.model.id(),
        signal_ms = t.signal_ms,
        inference_ms = t.inference_ms,
        assembly_ms = t.assembly_ms,
        "segmented {}",
        image_path.display()
    );
    Ok(json!({
        "labels": labels_path,
        "width": out.labels.width(),
        "height": out.labels.height(),
        "classes": out.probs.iter().map(|m| m.class_id).collect::<Vec<_>>(),
        "model_id": segmenter.model.id(),
        "timing_ms": t,
    }))
}

fn read_probs(dir: &Path, width: usize, height: usize) -> Result<Vec<ClassProbMap>, Failure> {
    let mut maps = Vec::new();
    for entry in fs::read_dir(dir).context(format!("listing {}", dir.display()))? {
        let path = entry.context(format!("listing {}", dir.display()))?.path();
        let Some(class_id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| {
            n.strip_prefix("class_")?
                .strip_suffix(".eutn")?
                .parse()
                .ok()
        }) else {
            continue;
        };
        let t = read_tensor(&path).context(format!("reading {}", path.display()))?;
        let ok = match t.shape() {
            [h, w] | [1, h, w] => (*w, *h) == (width, height),
            _ => false,
        };
        if !ok {
            return Err(Failure {
                context: format!("{}", path.display()),
                source: Error::ShapeMismatch(format!(
                    "tensor {:?} does not match {width}x{height} labels",
                    t.shape()
                )),
            });
        }
        maps.push(ClassProbMap::new(class_id, width, height, t.into_data())?);
    }
    maps.sort_by_key(|m| m.class_id);
    Ok(maps)
}

pub fn eval(args: &EvalArgs) -> Result<Value, Failure> {
    let pred = read_label_png(&args.pred).context(format!("reading {}", args.pred.display()))?;
    let gt = read_label_png(&args.gt).context(format!("reading {}", args.gt.display()))?;
    if pred.dims() != gt.dims() {
        return Err(Failure {
            context: "eval".into(),
            source: Error::ShapeMismatch(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )),
        });
    }
    let maps = match &args.probs {
        Some(dir) => read_probs(dir, gt.width(), gt.height())?,
        None => Vec::new(),
    };
    let report = evaluate_scene(&pred, &maps, &gt).context("evaluating")?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&report, &out.join("metrics.json"))?;
        let csv = out.join("metrics.csv");
        fs::write(&csv, report.to_csv()).context(format!("writing {}", csv.display()))?;
    }
    serde_json::to_value(&report).context("serializing")
}

fn describe(spec: &NetworkSpec) -> Result<Value, Failure> {
    let net = Network::new(spec).context("building network")?;
    let block = |(stage, b): (usize, &sqseg_core::nn::Block)| json!({ "stage": stage, "name": b.name(), "kind": b.kind(), "out_channels": b.out_channels() });
    let mut stages: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    for b in net.blocks() {
        let part = if b.name().starts_with("encoder") {
            "encoder"
        } else {
            "decoder"
        };
        let stage: usize = b
            .name()
            .split('.')
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        stages.entry(part).or_default().push(block((stage, b)));
    }
    let params = net.params();
    Ok(json!({
        "label": spec.label(),
        "variant": spec.variant.map(|v| v.to_string()),
        "width_mult": spec.width_mult,
        "depth_mult": spec.depth_mult,
        "trainable_parameters": count_parameters(spec).context("counting parameters")?,
        "stored_values": params.iter().map(|p| p.numel()).sum::<usize>(),
        "tensors": params.len(),
        "size_multiple": net.size_multiple(),
        "blocks": stages,
    }))
}

pub fn inspect(args: &InspectArgs) -> Result<Value, Failure> {
    let (spec, weights) = match &args.weights {
        Some(path) => {
            let w = load_weights(path).context(format!("loading {}", path.display()))?;
            let spec = w.spec().cloned().ok_or_else(|| Failure {
                context: format!("{}", path.display()),
                source: Error::Manifest("weights carry no network spec".into()),
            })?;
            (spec, Some(w))
        }
        None => (build_efficient_unet(args.variant), None),
    };
    let mut report = describe(&spec)?;
    if let Some(w) = &weights {
        let net = Network::new(&spec).context("building network")?;
        w.check_against(&net.params()).context("checking weights")?;
        report["weights"] = json!({ "entries": w.len(), "valid": true });
    }
    if args.layers {
        let net = Network::new(&spec).context("building network")?;
        report["layers"] = net
            .params()
            .iter()
            .map(|p| json!({ "name": p.name, "shape": p.shape }))
            .collect();
    }
    Ok(report)
}

pub fn init_weights_cmd(args: &InitWeightsArgs) -> Result<Value, Failure> {
    let spec = build_efficient_unet(args.variant);
    let weights = init_weights(&spec, args.seed).context("initialising weights")?;
    save_weights(&weights, &args.out).context(format!("writing {}", args.out.display()))?;
    Ok(json!({
        "out": args.out,
        "variant": args.variant.to_string(),
        "seed": args.seed,
        "trainable_parameters": count_parameters(&spec).context("counting parameters")?,
    }))
}
