use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Class ids per pixel, row-major. `0` is background / unassigned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "label mask dimensions must be >= 1"
        );
        LabelMask {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("label mask dimensions must be >= 1"));
        }
        if labels.len() != width * height {
            return Err(Error::shape(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut m = LabelMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.labels[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Distinct non-zero labels, ascending.
    pub fn classes(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&c| seen[c as usize]).collect()
    }

    pub fn contains_class(&self, class: u8) -> bool {
        class != 0 && self.labels.contains(&class)
    }

    pub fn class_mask(&self, class: u8) -> BinaryMask {
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == class).collect(),
        )
        .expect("dimensions already validated")
    }
}
