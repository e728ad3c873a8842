use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    assemble_semantic_map, combine_by_class, extract_patch, ClassProbMap, Placement,
    SegmentationModel,
};
use crate::error::{Error, Result};
use crate::label::LabelMask;
use crate::mask::{connected_components, BinaryMask, Connectivity};
use crate::metrics::MetricsReport;
use crate::nn::Tensor;
use crate::signal::{rasterize_squiggle, SignalPair, Squiggle};

pub const DEFAULT_PATCH_SIZE: usize = 512;

/// Scene description consumed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub image: PathBuf,
    /// Classes to segment; defaults to every class with a squiggle.
    #[serde(default)]
    pub classes: Vec<u8>,
    pub squiggles: Vec<Squiggle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentOptions {
    pub patch_size: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            patch_size: DEFAULT_PATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub signal_ms: f64,
    pub inference_ms: f64,
    pub assembly_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutput {
    pub labels: LabelMask,
    /// One scene-sized map per segmented class, by class id.
    pub probs: Vec<ClassProbMap>,
    pub timings: StageTimings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// `[R, G, B, inclusion, exclusion]` as one `(5, S, S)` tensor.
pub fn stack_input(rgb: &Tensor, pair: &SignalPair) -> Result<Tensor> {
    let (c, h, w) = rgb.chw()?;
    if c != 3 || pair.dims() != (w, h) {
        return Err(Error::shape(format!(
            "image {:?} does not match {}x{} signals",
            rgb.shape(),
            pair.dims().0,
            pair.dims().1
        )));
    }
    let mut data = Vec::with_capacity(5 * h * w);
    data.extend_from_slice(rgb.data());
    for m in [&pair.inclusion, &pair.exclusion] {
        data.extend(m.bits().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
    }
    Tensor::from_vec(&[5, h, w], data)
}

/// Runs the model on one patch and its signals.
pub fn segment_one(
    patch: &Tensor,
    pair: &SignalPair,
    class_id: u8,
    model: &dyn SegmentationModel,
    placement: &Placement,
) -> Result<ClassProbMap> {
    let input = stack_input(patch, pair)?;
    let (_, h, w) = input.chw()?;
    let out = model.predict(&input, placement)?;
    if out.shape() != [1, h, w] {
        return Err(Error::shape(format!(
            "model returned {:?} for a {w}x{h} patch",
            out.shape()
        )));
    }
    ClassProbMap::new(class_id, w, h, out.into_data())
}

/// Patches to run for one inclusion map: the whole scene when it fits in a
/// single patch, otherwise one patch around the signal, or one per signal
/// component when the signal is too spread out.
fn placements(inclusion: &BinaryMask, patch_size: usize) -> Vec<Placement> {
    let (w, h) = inclusion.dims();
    let fit = w.max(h).div_ceil(32) * 32;
    if fit <= patch_size {
        return vec![Placement::centered(w / 2, h / 2, fit, w, h)];
    }
    let around = |(x0, y0, x1, y1): (usize, usize, usize, usize)| {
        Placement::centered(
            (x0 + x1).div_ceil(2),
            (y0 + y1).div_ceil(2),
            patch_size,
            w,
            h,
        )
    };
    match inclusion.bounding_box() {
        None => Vec::new(),
        Some((x0, y0, x1, y1)) if x1 - x0 < patch_size && y1 - y0 < patch_size => {
            vec![around((x0, y0, x1, y1))]
        }
        Some(_) => connected_components(inclusion, Connectivity::Eight)
            .masks()
            .iter()
            .filter_map(BinaryMask::bounding_box)
            .map(around)
            .collect(),
    }
}

/// Segments each `(class, signals)` pair over a `(3, H, W)` image in
/// `[0, 1]` and assembles the label map. A class whose inclusion map is
/// empty gets an all-zero probability map.
pub fn segment_pairs(
    image: &Tensor,
    pairs: &[(u8, SignalPair)],
    model: &dyn SegmentationModel,
    opts: &SegmentOptions,
) -> Result<SceneOutput> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape(format!(
            "expected an RGB image, got {c} channels"
        )));
    }
    if opts.patch_size == 0 || !opts.patch_size.is_multiple_of(32) {
        return Err(Error::invalid(format!(
            "patch size must be a positive multiple of 32, got {}",
            opts.patch_size
        )));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("nothing to segment: no guiding signals"));
    }
    let started = Instant::now();
    let mut maps = Vec::with_capacity(pairs.len());
    for (class_id, pair) in pairs {
        if pair.dims() != (w, h) {
            return Err(Error::shape(format!(
                "class {class_id} signals are {}x{}, image is {w}x{h}",
                pair.dims().0,
                pair.dims().1
            )));
        }
        let mut scene = vec![0.0f32; w * h];
        if !pair.inclusion.is_empty() {
            for placement in placements(&pair.inclusion, opts.patch_size) {
                let center = (
                    (placement.x0 + (placement.size / 2) as isize) as usize,
                    (placement.y0 + (placement.size / 2) as isize) as usize,
                );
                let (patch, p) = extract_patch(image, center, placement.size)?;
                debug_assert_eq!(p, placement);
                let crop = SignalPair {
                    inclusion: placement.crop_mask(&pair.inclusion),
                    exclusion: placement.crop_mask(&pair.exclusion),
                };
                let out = segment_one(&patch, &crop, *class_id, model, &placement)?;
                placement.max_back(&out.probs, &mut scene)?;
            }
        }
        maps.push(ClassProbMap::new(*class_id, w, h, scene)?);
    }
    let inference_ms = ms(started);

    let started = Instant::now();
    let probs = combine_by_class(&maps)?;
    let labels = assemble_semantic_map(&probs)?;
    Ok(SceneOutput {
        labels,
        probs,
        timings: StageTimings {
            signal_ms: 0.0,
            inference_ms,
            assembly_ms: ms(started),
        },
    })
}

/// Rasterizes the squiggles of each class in `classes` (every squiggle
/// class when empty) and segments the scene.
pub fn segment_scene(
    image: &Tensor,
    squiggles: &[Squiggle],
    classes: &[u8],
    model: &dyn SegmentationModel,
    opts: &SegmentOptions,
) -> Result<SceneOutput> {
    let (_, h, w) = image.chw()?;
    let started = Instant::now();
    let mut wanted: Vec<u8> = if classes.is_empty() {
        squiggles.iter().map(|s| s.class_id).collect()
    } else {
        classes.to_vec()
    };
    wanted.sort_unstable();
    wanted.dedup();
    let pairs = wanted
        .iter()
        .map(|&c| Ok((c, rasterize_squiggle(squiggles, c, w, h)?)))
        .collect::<Result<Vec<_>>>()?;
    let signal_ms = ms(started);
    let mut out = segment_pairs(image, &pairs, model, opts)?;
    out.timings.signal_ms = signal_ms;
    Ok(out)
}

/// Metrics of an assembled map against ground truth, with AUC taken from
/// the pre-threshold probabilities.
pub fn evaluate_scene(
    pred: &LabelMask,
    probmaps: &[ClassProbMap],
    gt: &LabelMask,
) -> Result<MetricsReport> {
    let scores: BTreeMap<u8, Vec<f32>> = if probmaps.is_empty() {
        BTreeMap::new()
    } else {
        combine_by_class(probmaps)?
            .into_iter()
            .map(|m| {
                if m.dims() != gt.dims() {
                    return Err(Error::shape(format!(
                        "class {} probabilities are {}x{}, scene is {}x{}",
                        m.class_id,
                        m.width,
                        m.height,
                        gt.width(),
                        gt.height()
                    )));
                }
                Ok((m.class_id, m.probs))
            })
            .collect::<Result<_>>()?
    };
    MetricsReport::evaluate(pred, gt, &scores)
}
