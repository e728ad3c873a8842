//! Binary-mask primitives: connected components, polygon conversion,
//! smoothing, distance transforms, partitioning and thinning.
//!
//! Every function here is a pure function of its arguments.

mod components;
mod distance;
mod partition;
mod polygon;
mod skeleton;
mod smooth;

pub use components::{connected_components, ComponentLabels, Connectivity};
pub use distance::{distance_transform, threshold_distance_component, DistanceMap};
pub use partition::partition_component;
pub use polygon::{
    approximate_polygon, mask_to_polygons, point_segment_distance, polygons_to_mask, Point, Polygon,
};
pub use skeleton::skeletonize;
pub(crate) use smooth::reflect_index;
pub use smooth::{smooth_mask, SmoothFilter};

use crate::error::{Error, Result};

/// A row-major grid of foreground/background flags.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{} [", self.width, self.height)?;
        if self.width * self.height <= 4096 {
            for y in 0..self.height {
                let row: String = (0..self.width)
                    .map(|x| if self.get(x, y) { '#' } else { '.' })
                    .collect();
                writeln!(f, "  {row}")?;
            }
        } else {
            writeln!(f, "  {} foreground pixels", self.count())?;
        }
        write!(f, "]")
    }
}

impl BinaryMask {
    /// An all-background mask.
    ///
    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be >= 1"));
        }
        if bits.len() != width * height {
            return Err(Error::shape(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                mask.bits[y * width + x] = f(x, y);
            }
        }
        mask
    }

    /// Parses rows of `#`/`.` characters; handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        BinaryMask::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    pub fn full(width: usize, height: usize) -> Self {
        BinaryMask::from_fn(width, height, |_, _| true)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but anything outside the canvas reads as background.
    #[inline]
    pub fn get_or_bg(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.foreground() {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bbox
    }

    fn check_dims(&self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        self.check_dims(other);
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &BinaryMask) {
        self.check_dims(other);
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
    }

    pub fn subtract(&mut self, other: &BinaryMask) {
        self.check_dims(other);
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn intersection(&self, other: &BinaryMask) -> BinaryMask {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && !self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }
}
