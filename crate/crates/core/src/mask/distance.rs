use super::{connected_components, BinaryMask, Connectivity};
use crate::error::{Error, Result};

/// Euclidean distance from every pixel to the nearest background pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// 1-D squared distance transform (lower envelope of parabolas rooted at
/// every sample). Non-sites carry a large finite cost.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

const FAR: f64 = 1e18;

/// Exact Euclidean distance transform. The canvas is surrounded by one ring
/// of implicit background, so a fully foreground image still has finite
/// distances (1 at the border).
pub fn distance_transform(mask: &BinaryMask) -> DistanceMap {
    let (w, h) = mask.dims();
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                grid[(y + 1) * pw + x + 1] = FAR;
            }
        }
    }
    let n = pw.max(ph);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        f[..pw].copy_from_slice(row);
        edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        row.copy_from_slice(&out[..pw]);
    }
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(grid[(y + 1) * pw + x + 1].sqrt());
        }
    }
    DistanceMap {
        width: w,
        height: h,
        values,
    }
}

/// Keeps, within each 8-connected component, the pixels whose distance is at
/// least `fraction` of that component's own maximum distance.
pub fn threshold_distance_component(mask: &BinaryMask, fraction: f64) -> Result<BinaryMask> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "threshold fraction must be in [0, 1), got {fraction}"
        )));
    }
    let dist = distance_transform(mask);
    let cc = connected_components(mask, Connectivity::Eight);
    let mut peak = vec![0.0f64; cc.count() + 1];
    for (&label, &d) in cc.labels().iter().zip(dist.values()) {
        if label > 0 {
            peak[label as usize] = peak[label as usize].max(d);
        }
    }
    let bits = cc
        .labels()
        .iter()
        .zip(dist.values())
        .map(|(&label, &d)| label > 0 && d >= fraction * peak[label as usize])
        .collect();
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}
