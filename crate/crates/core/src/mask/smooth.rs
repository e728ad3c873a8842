use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothFilter {
    Gaussian { kernel: usize, sigma: f64 },
    Median { kernel: usize },
}

impl SmoothFilter {
    pub fn kernel(&self) -> usize {
        match *self {
            SmoothFilter::Gaussian { kernel, .. } | SmoothFilter::Median { kernel } => kernel,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.kernel();
        if k < 3 || k.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel must be odd and >= 3, got {k}"
            )));
        }
        if let SmoothFilter::Gaussian { sigma, .. } = *self {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// Maps an out-of-range index into `0..n` by mirroring about the edge pixels
/// (`-1 -> 1`, `n -> n-2`), repeating for offsets larger than the image.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= n as isize {
        r = period - r;
    }
    r as usize
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn gaussian(mask: &BinaryMask, kernel: usize, sigma: f64) -> BinaryMask {
    let (w, h) = mask.dims();
    let taps = gaussian_kernel(kernel, sigma);
    let r = (kernel / 2) as isize;
    let src: Vec<f64> = mask.bits().iter().map(|&b| b as u8 as f64).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(t, &k)| k * row[reflect_index(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    BinaryMask::from_fn(w, h, |x, y| {
        let v: f64 = taps
            .iter()
            .enumerate()
            .map(|(t, &k)| k * tmp[reflect_index(y as isize + t as isize - r, h) * w + x])
            .sum();
        v >= 0.5
    })
}

/// On a 0/1 image the median is the majority vote over the window; a box sum
/// over the reflect-padded image gives it directly.
fn median(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let r = (kernel / 2) as isize;
    let (pw, ph) = (w + 2 * r as usize, h + 2 * r as usize);
    // Summed-area table over the padded image, one extra leading row/column.
    let mut sat = vec![0u32; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = reflect_index(py as isize - r, h);
        let mut run = 0u32;
        for px in 0..pw {
            let sx = reflect_index(px as isize - r, w);
            run += mask.get(sx, sy) as u32;
            sat[(py + 1) * (pw + 1) + px + 1] = sat[py * (pw + 1) + px + 1] + run;
        }
    }
    let k = kernel;
    let half = (k * k / 2) as u32;
    BinaryMask::from_fn(w, h, |x, y| {
        let (x0, y0, x1, y1) = (x, y, x + k, y + k);
        let s = sat[y1 * (pw + 1) + x1] + sat[y0 * (pw + 1) + x0]
            - sat[y0 * (pw + 1) + x1]
            - sat[y1 * (pw + 1) + x0];
        s > half
    })
}

/// Filters the mask as a 0/1 image and re-binarizes at 0.5. Borders are
/// reflect-padded.
pub fn smooth_mask(mask: &BinaryMask, filter: SmoothFilter) -> Result<BinaryMask> {
    filter.validate()?;
    Ok(match filter {
        SmoothFilter::Gaussian { kernel, sigma } => gaussian(mask, kernel, sigma),
        SmoothFilter::Median { kernel } => median(mask, kernel),
    })
}
