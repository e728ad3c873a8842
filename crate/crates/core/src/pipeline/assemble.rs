use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::LabelMask;

/// Scene-sized foreground probabilities for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbMap {
    pub class_id: u8,
    pub width: usize,
    pub height: usize,
    pub probs: Vec<f32>,
}

impl ClassProbMap {
    pub fn new(class_id: u8, width: usize, height: usize, probs: Vec<f32>) -> Result<Self> {
        if class_id == 0 {
            return Err(Error::invalid("class 0 is reserved for background"));
        }
        if probs.len() != width * height {
            return Err(Error::shape(format!(
                "{} probabilities for a {width}x{height} map",
                probs.len()
            )));
        }
        Ok(ClassProbMap {
            class_id,
            width,
            height,
            probs,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// `(min, mean, max)` of the probabilities.
    pub fn summary(&self) -> (f32, f32, f32) {
        let (mut lo, mut hi, mut sum) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64);
        for &p in &self.probs {
            lo = lo.min(p);
            hi = hi.max(p);
            sum += p as f64;
        }
        (lo, (sum / self.probs.len().max(1) as f64) as f32, hi)
    }
}

/// Folds maps of the same class together by element-wise maximum; the
/// result is ordered by class id.
pub fn combine_by_class(maps: &[ClassProbMap]) -> Result<Vec<ClassProbMap>> {
    let dims = maps
        .first()
        .map(ClassProbMap::dims)
        .ok_or_else(|| Error::invalid("no probability maps"))?;
    let mut by_class: BTreeMap<u8, ClassProbMap> = BTreeMap::new();
    for m in maps {
        if m.dims() != dims || m.probs.len() != dims.0 * dims.1 {
            return Err(Error::shape(format!(
                "class {} map is {}x{}, expected {}x{}",
                m.class_id, m.width, m.height, dims.0, dims.1
            )));
        }
        match by_class.get_mut(&m.class_id) {
            Some(acc) => acc
                .probs
                .iter_mut()
                .zip(&m.probs)
                .for_each(|(a, &b)| *a = a.max(b)),
            None => {
                by_class.insert(m.class_id, m.clone());
            }
        }
    }
    Ok(by_class.into_values().collect())
}

/// Per pixel: the most probable class if its probability is at least 0.5,
/// otherwise 0. Ties go to the lower class id.
pub fn assemble_semantic_map(maps: &[ClassProbMap]) -> Result<LabelMask> {
    let combined = combine_by_class(maps)?;
    let (w, h) = combined[0].dims();
    let mut labels = vec![0u8; w * h];
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0.5f32;
        for m in &combined {
            let p = m.probs[i];
            if p > best || (p == best && *label == 0) {
                best = p;
                *label = m.class_id;
            }
        }
    }
    LabelMask::from_labels(w, h, labels)
}

/// One 0/1 map per non-zero class in `labels`.
pub fn one_hot(labels: &LabelMask) -> Vec<ClassProbMap> {
    let (w, h) = labels.dims();
    labels
        .classes()
        .into_iter()
        .map(|c| ClassProbMap {
            class_id: c,
            width: w,
            height: h,
            probs: labels
                .labels()
                .iter()
                .map(|&l| if l == c { 1.0 } else { 0.0 })
                .collect(),
        })
        .collect()
}
