//! Run-length encoding of label grids for the wire.

use serde::{Deserialize, Serialize};
use sqseg_core::{Error, LabelMask, Result};

/// Row-major runs of `[label, length]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<(u8, u32)>,
}

pub fn rle_encode(labels: &LabelMask) -> RleMask {
    let mut runs: Vec<(u8, u32)> = Vec::new();
    for &l in labels.labels() {
        match runs.last_mut() {
            Some((v, n)) if *v == l && *n < u32::MAX => *n += 1,
            _ => runs.push((l, 1)),
        }
    }
    RleMask {
        width: labels.width(),
        height: labels.height(),
        runs,
    }
}

/// Rejects zero-length runs and totals other than `width * height`.
pub fn rle_decode(rle: &RleMask) -> Result<LabelMask> {
    let total = rle
        .width
        .checked_mul(rle.height)
        .ok_or_else(|| Error::InvalidArgument(format!("{}x{} overflows", rle.width, rle.height)))?;
    let mut labels = Vec::with_capacity(total);
    for &(v, n) in &rle.runs {
        if n == 0 {
            return Err(Error::InvalidArgument("zero-length run".into()));
        }
        if labels.len() + n as usize > total {
            return Err(Error::ShapeMismatch(format!(
                "runs exceed {}x{} labels",
                rle.width, rle.height
            )));
        }
        labels.resize(labels.len() + n as usize, v);
    }
    if labels.len() != total {
        return Err(Error::ShapeMismatch(format!(
            "runs cover {} of {total} labels",
            labels.len()
        )));
    }
    LabelMask::from_labels(rle.width, rle.height, labels)
}
