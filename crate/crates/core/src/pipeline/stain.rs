//! Reinhard colour transfer in the lαβ opponent space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

/// Floor applied to LMS before the logarithm so black stays finite.
const LMS_FLOOR: f64 = 1e-6;

fn invert(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    inv
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [l, m, s] = mul(&RGB_TO_LMS, rgb).map(|v| v.max(LMS_FLOOR).log10());
    [
        (l + m + s) / 3f64.sqrt(),
        (l + m - 2.0 * s) / 6f64.sqrt(),
        (l - m) / 2f64.sqrt(),
    ]
}

pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let a = lab[0] / 3f64.sqrt();
    let b = lab[1] / 6f64.sqrt();
    let c = lab[2] / 2f64.sqrt();
    let lms = [a + b + c, a + b - c, a - 2.0 * b].map(|v| 10f64.powf(v));
    mul(&invert(RGB_TO_LMS), lms)
}

/// Per-channel mean and standard deviation in lαβ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StainStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

fn rgb_pixels(image: &Tensor) -> Result<impl Iterator<Item = [f64; 3]> + '_> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape(format!(
            "expected an RGB image, got {c} channels"
        )));
    }
    let n = h * w;
    let d = image.data();
    Ok((0..n).map(move |i| [d[i] as f64, d[n + i] as f64, d[2 * n + i] as f64]))
}

impl StainStats {
    pub fn of(image: &Tensor) -> Result<Self> {
        let labs: Vec<[f64; 3]> = rgb_pixels(image)?.map(rgb_to_lab).collect();
        let n = labs.len() as f64;
        let mut mean = [0.0; 3];
        for lab in &labs {
            for k in 0..3 {
                mean[k] += lab[k];
            }
        }
        mean = mean.map(|v| v / n);
        let mut var = [0.0; 3];
        for lab in &labs {
            for k in 0..3 {
                var[k] += (lab[k] - mean[k]).powi(2);
            }
        }
        Ok(StainStats {
            mean,
            std: var.map(|v| (v / n).sqrt()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().chain(&self.std).any(|v| !v.is_finite()) {
            return Err(Error::invalid("stain statistics must be finite"));
        }
        if self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid("target standard deviations must be > 0"));
        }
        Ok(())
    }
}

/// Matches the lαβ statistics of a `(3, H, W)` image in `[0, 1]` to
/// `target`. A flat source channel only gets its mean shifted.
pub fn reinhard_normalize(image: &Tensor, target: &StainStats) -> Result<Tensor> {
    target.validate()?;
    let src = StainStats::of(image)?;
    let scale: [f64; 3] = [0, 1, 2].map(|k| {
        if src.std[k] > 1e-12 {
            target.std[k] / src.std[k]
        } else {
            1.0
        }
    });
    let n = image.len() / 3;
    let mut out = Tensor::zeros(image.shape());
    let data = out.data_mut();
    for (i, rgb) in rgb_pixels(image)?.enumerate() {
        let lab = rgb_to_lab(rgb);
        let mapped = [0, 1, 2].map(|k| (lab[k] - src.mean[k]) * scale[k] + target.mean[k]);
        let back = lab_to_rgb(mapped);
        for k in 0..3 {
            data[k * n + i] = back[k].clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}
