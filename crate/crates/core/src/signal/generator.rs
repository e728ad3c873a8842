use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GenParams, SignalPair};
use crate::error::{Error, Result};
use crate::label::LabelMask;
use crate::mask::{
    approximate_polygon, connected_components, distance_transform, mask_to_polygons,
    partition_component, polygons_to_mask, skeletonize, smooth_mask, threshold_distance_component,
    BinaryMask, Connectivity, SmoothFilter,
};

/// Which stages fired on one draw, with the parameters they drew.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub approx_epsilon: Option<f64>,
    pub smooth: Option<SmoothFilter>,
    pub partitioned: bool,
    pub distthresh_fraction: Option<f64>,
    /// Original components that needed the fallback pixel.
    pub fallback_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRole {
    Inclusion,
    Exclusion,
}

/// Independent random stream for one (class, role) pair under a seed.
pub fn class_stream(seed: u64, class: u8, role: SignalRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(class) << 1 | (role == SignalRole::Exclusion) as u64);
    rng
}

fn coin(rng: &mut impl Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn odd_in(rng: &mut impl Rng, [lo, hi]: [usize; 2]) -> usize {
    lo + 2 * rng.random_range(0..=(hi - lo) / 2)
}

/// Approximates every component's boundary (outer ring and holes) and
/// re-rasterizes it.
fn approximate_mask(mask: &BinaryMask, epsilon: f64) -> Result<BinaryMask> {
    let (w, h) = mask.dims();
    let mut out = BinaryMask::new(w, h);
    for component in connected_components(mask, Connectivity::Eight).masks() {
        let rings = mask_to_polygons(&component)
            .iter()
            .map(|p| approximate_polygon(p, epsilon))
            .collect::<Result<Vec<_>>>()?;
        out.union_with(&polygons_to_mask(&rings, w, h)?);
    }
    Ok(out)
}

/// Stage order is fixed: approximate, smooth, partition, distance-threshold,
/// then skeletonize each piece. Each stage costs exactly one coin flip from
/// `rng`, followed by its parameter draws when it fires.
pub fn generate_guiding_signal_traced(
    gt_region: &BinaryMask,
    params: &GenParams,
    rng: &mut impl Rng,
) -> Result<(BinaryMask, StageTrace)> {
    params.validate()?;
    if gt_region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut trace = StageTrace::default();
    let mut work = gt_region.clone();

    if coin(rng, params.p_approx) {
        let eps = uniform(rng, params.approx_eps_range);
        trace.approx_epsilon = Some(eps);
        work = approximate_mask(&work, eps)?;
    }

    if coin(rng, params.p_smooth) {
        let kernel = odd_in(rng, params.smooth_kernel_range);
        let filter = if rng.random::<bool>() {
            SmoothFilter::Gaussian {
                kernel,
                sigma: uniform(rng, params.smooth_sigma_range),
            }
        } else {
            SmoothFilter::Median { kernel }
        };
        trace.smooth = Some(filter);
        work = smooth_mask(&work, filter)?;
    }

    let pieces = if coin(rng, params.p_partition) {
        trace.partitioned = true;
        let mut pieces = Vec::new();
        for component in connected_components(&work, Connectivity::Eight).masks() {
            pieces.extend(partition_component(&component, params.partition_cell)?);
        }
        pieces
    } else {
        vec![work]
    };

    if coin(rng, params.p_distthresh) {
        trace.distthresh_fraction = Some(uniform(rng, params.distthresh_fraction_range));
    }

    let (w, h) = gt_region.dims();
    let mut signal = BinaryMask::new(w, h);
    for piece in &pieces {
        let piece = match trace.distthresh_fraction {
            Some(f) => threshold_distance_component(piece, f)?,
            None => piece.clone(),
        };
        signal.union_with(&skeletonize(&piece));
    }
    signal.intersect_with(gt_region);

    // Every original component keeps at least its deepest pixel.
    let cc = connected_components(gt_region, Connectivity::Eight);
    let mut covered = vec![false; cc.count() + 1];
    for (x, y) in signal.foreground() {
        covered[cc.get(x, y) as usize] = true;
    }
    if covered[1..].iter().any(|&c| !c) {
        let dist = distance_transform(gt_region);
        let mut best: Vec<Option<(f64, usize)>> = vec![None; cc.count() + 1];
        for (i, (&label, &d)) in cc.labels().iter().zip(dist.values()).enumerate() {
            if label == 0 || covered[label as usize] {
                continue;
            }
            let slot = &mut best[label as usize];
            if slot.is_none_or(|(bd, _)| d > bd) {
                *slot = Some((d, i));
            }
        }
        for (_, i) in best.into_iter().flatten() {
            signal.set(i % w, i / w, true);
            trace.fallback_pixels += 1;
        }
    }
    Ok((signal, trace))
}

/// Randomized minimalistic guiding signal for one region: a thin scribble
/// inside `gt_region` that touches every 8-connected component of it.
pub fn generate_guiding_signal(
    gt_region: &BinaryMask,
    params: &GenParams,
    rng: &mut impl Rng,
) -> Result<BinaryMask> {
    generate_guiding_signal_traced(gt_region, params, rng).map(|(signal, _)| signal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDraw {
    pub class_id: u8,
    pub role: SignalRole,
    pub stages: StageTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedPair {
    pub pair: SignalPair,
    pub draws: Vec<ClassDraw>,
}

/// Builds the inclusion map from the target class and the exclusion map from
/// every other class present, each from its own random stream derived from
/// `params.seed`. Overlap goes to inclusion.
pub fn make_training_pair_traced(
    gt_labels: &LabelMask,
    target_class: u8,
    params: &GenParams,
) -> Result<TracedPair> {
    params.validate()?;
    if !gt_labels.contains_class(target_class) {
        return Err(Error::ClassNotPresent(target_class));
    }
    let jobs: Vec<(u8, SignalRole)> = std::iter::once((target_class, SignalRole::Inclusion))
        .chain(
            gt_labels
                .classes()
                .into_iter()
                .filter(|&c| c != target_class)
                .map(|c| (c, SignalRole::Exclusion)),
        )
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(class, role)| {
            let mut rng = class_stream(params.seed, class, role);
            let (signal, stages) =
                generate_guiding_signal_traced(&gt_labels.class_mask(class), params, &mut rng)?;
            Ok((
                signal,
                ClassDraw {
                    class_id: class,
                    role,
                    stages,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let (w, h) = gt_labels.dims();
    let mut pair = SignalPair::empty(w, h);
    let mut draws = Vec::with_capacity(results.len());
    for (signal, draw) in results {
        match draw.role {
            SignalRole::Inclusion => pair.inclusion = signal,
            SignalRole::Exclusion => pair.exclusion.union_with(&signal),
        }
        draws.push(draw);
    }
    pair.resolve_overlap();
    Ok(TracedPair { pair, draws })
}

pub fn make_training_pair(
    gt_labels: &LabelMask,
    target_class: u8,
    params: &GenParams,
) -> Result<SignalPair> {
    make_training_pair_traced(gt_labels, target_class, params).map(|t| t.pair)
}
