//! Guiding-signal synthesis from ground truth and rasterization of
//! hand-drawn squiggles into inclusion/exclusion maps.

mod generator;
mod params;
mod squiggle;

pub use generator::{
    class_stream, generate_guiding_signal, generate_guiding_signal_traced, make_training_pair,
    make_training_pair_traced, ClassDraw, SignalRole, StageTrace, TracedPair,
};
pub use params::GenParams;
pub use squiggle::{rasterize_squiggle, Squiggle};

use crate::mask::BinaryMask;

/// The two auxiliary input channels: the region the user wants, and every
/// other region in view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalPair {
    pub inclusion: BinaryMask,
    pub exclusion: BinaryMask,
}

impl SignalPair {
    pub fn empty(width: usize, height: usize) -> Self {
        SignalPair {
            inclusion: BinaryMask::new(width, height),
            exclusion: BinaryMask::new(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.inclusion.dims()
    }

    /// Enforces disjointness with inclusion taking precedence.
    pub(crate) fn resolve_overlap(&mut self) {
        let inclusion = self.inclusion.clone();
        self.exclusion.subtract(&inclusion);
    }
}
