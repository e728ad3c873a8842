use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{reflect_index, BinaryMask};
use crate::nn::Tensor;

/// Where a square patch sits in its scene. The origin may be negative or
/// run past the far edge; those pixels were padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub x0: isize,
    pub y0: isize,
    pub size: usize,
    pub scene_width: usize,
    pub scene_height: usize,
}

impl Placement {
    /// Patch of `size` centred on pixel `(cx, cy)`.
    pub fn centered(
        cx: usize,
        cy: usize,
        size: usize,
        scene_width: usize,
        scene_height: usize,
    ) -> Self {
        Placement {
            x0: cx as isize - (size / 2) as isize,
            y0: cy as isize - (size / 2) as isize,
            size,
            scene_width,
            scene_height,
        }
    }

    /// The whole scene, unpadded; only square scenes qualify.
    pub fn whole(width: usize, height: usize) -> Option<Self> {
        (width == height).then_some(Placement {
            x0: 0,
            y0: 0,
            size: width,
            scene_width: width,
            scene_height: height,
        })
    }

    /// Scene coordinates of patch pixel `(px, py)`, if inside the scene.
    pub fn to_scene(&self, px: usize, py: usize) -> Option<(usize, usize)> {
        let x = self.x0 + px as isize;
        let y = self.y0 + py as isize;
        (x >= 0 && y >= 0 && x < self.scene_width as isize && y < self.scene_height as isize)
            .then_some((x as usize, y as usize))
    }

    /// Patch-row ranges `(py, px_lo..px_hi)` that map into the scene.
    fn overlap(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let clip = |o: isize, n: usize| {
            let lo = (-o).clamp(0, self.size as isize) as usize;
            let hi = (n as isize - o).clamp(0, self.size as isize) as usize;
            lo..hi.max(lo)
        };
        (
            clip(self.x0, self.scene_width),
            clip(self.y0, self.scene_height),
        )
    }

    /// Copies the in-scene part of a `size × size` patch plane into a
    /// scene-sized plane.
    pub fn write_back(&self, patch: &[f32], scene: &mut [f32]) -> Result<()> {
        self.check(patch.len(), scene.len())?;
        let (xs, ys) = self.overlap();
        for py in ys {
            let sy = (self.y0 + py as isize) as usize;
            let sx = (self.x0 + xs.start as isize) as usize;
            let dst = &mut scene[sy * self.scene_width + sx..][..xs.len()];
            dst.copy_from_slice(&patch[py * self.size + xs.start..][..xs.len()]);
        }
        Ok(())
    }

    /// Like [`write_back`](Self::write_back) but keeps the larger value.
    pub fn max_back(&self, patch: &[f32], scene: &mut [f32]) -> Result<()> {
        self.check(patch.len(), scene.len())?;
        let (xs, ys) = self.overlap();
        for py in ys {
            for px in xs.clone() {
                let (sx, sy) = self.to_scene(px, py).expect("inside overlap");
                let d = &mut scene[sy * self.scene_width + sx];
                *d = d.max(patch[py * self.size + px]);
            }
        }
        Ok(())
    }

    fn check(&self, patch: usize, scene: usize) -> Result<()> {
        if patch != self.size * self.size || scene != self.scene_width * self.scene_height {
            return Err(Error::shape(format!(
                "placement {}x{} in {}x{} got {patch} patch and {scene} scene values",
                self.size, self.size, self.scene_width, self.scene_height
            )));
        }
        Ok(())
    }

    /// Mask crop; pixels outside the scene are background.
    pub fn crop_mask(&self, mask: &BinaryMask) -> BinaryMask {
        BinaryMask::from_fn(self.size, self.size, |px, py| {
            self.to_scene(px, py).is_some_and(|(x, y)| mask.get(x, y))
        })
    }
}

/// `size × size` crop of a `(C, H, W)` image centred on `center`,
/// reflect-padded where it overruns the image.
pub fn extract_patch(
    image: &Tensor,
    center: (usize, usize),
    size: usize,
) -> Result<(Tensor, Placement)> {
    let (c, h, w) = image.chw()?;
    if size == 0 || !size.is_multiple_of(32) {
        return Err(Error::invalid(format!(
            "patch size must be a positive multiple of 32, got {size}"
        )));
    }
    let placement = Placement::centered(center.0, center.1, size, w, h);
    let xs: Vec<usize> = (0..size)
        .map(|px| reflect_index(placement.x0 + px as isize, w))
        .collect();
    let src = image.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        let plane = &src[ch * h * w..][..h * w];
        for py in 0..size {
            let y = reflect_index(placement.y0 + py as isize, h);
            out.extend(xs.iter().map(|&x| plane[y * w + x]));
        }
    }
    Ok((Tensor::from_vec(&[c, size, size], out)?, placement))
}
