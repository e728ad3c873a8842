use std::path::Path;

use super::Placement;
use crate::error::{Error, Result};
use crate::label::LabelMask;
use crate::nn::{load_weights, Network, NetworkSpec, Tensor, Weights};

/// Anything that maps a `(5, S, S)` input to `(1, S, S)` probabilities.
///
/// `placement` says where the patch sits in its scene. Real networks ignore
/// it; oracle stubs use it to look up scene ground truth.
pub trait SegmentationModel: Send + Sync {
    fn id(&self) -> &str;

    fn predict(&self, input: &Tensor, placement: &Placement) -> Result<Tensor>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Efficient-UNet with loaded weights.
pub struct EfficientUnet {
    id: String,
    network: Network,
    weights: Weights,
}

impl EfficientUnet {
    pub fn new(spec: &NetworkSpec, weights: Weights) -> Result<Self> {
        let network = Network::new(spec)?;
        weights.check_against(&network.params())?;
        let id = format!(
            "efficient-unet-{}-{:016x}",
            spec.label(),
            fnv1a(&weights.to_bytes())
        );
        Ok(EfficientUnet {
            id,
            network,
            weights,
        })
    }

    /// Builds the network from the spec echoed in the weights.
    pub fn from_weights(weights: Weights) -> Result<Self> {
        let spec = weights
            .spec()
            .cloned()
            .ok_or_else(|| Error::Manifest("weights carry no network spec".into()))?;
        Self::new(&spec, weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weights(load_weights(path)?)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }
}

impl SegmentationModel for EfficientUnet {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, input: &Tensor, _: &Placement) -> Result<Tensor> {
        self.network.forward(&self.weights, input)
    }
}

/// Returns the same probability everywhere.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    pub value: f32,
}

impl SegmentationModel for ConstantModel {
    fn id(&self) -> &str {
        "constant"
    }

    fn predict(&self, input: &Tensor, _: &Placement) -> Result<Tensor> {
        let (_, h, w) = input.chw()?;
        Ok(Tensor::full(&[1, h, w], self.value))
    }
}

/// A perfect segmenter for testing: it finds the ground-truth class under
/// the inclusion channel and answers `inside` on that class's pixels and
/// `outside` everywhere else.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub gt: LabelMask,
    pub inside: f32,
    pub outside: f32,
}

impl OracleModel {
    pub fn new(gt: LabelMask) -> Self {
        OracleModel {
            gt,
            inside: 0.9,
            outside: 0.1,
        }
    }

    fn signaled_class(&self, inclusion: &[f32], placement: &Placement) -> Option<u8> {
        let mut votes = [0usize; 256];
        for (i, &v) in inclusion.iter().enumerate() {
            if v > 0.5 {
                if let Some((x, y)) = placement.to_scene(i % placement.size, i / placement.size) {
                    votes[self.gt.get(x, y) as usize] += 1;
                }
            }
        }
        (1..=255u8)
            .filter(|&c| votes[c as usize] > 0)
            .max_by_key(|&c| (votes[c as usize], std::cmp::Reverse(c)))
    }
}

impl SegmentationModel for OracleModel {
    fn id(&self) -> &str {
        "oracle"
    }

    fn predict(&self, input: &Tensor, placement: &Placement) -> Result<Tensor> {
        let (c, h, w) = input.chw()?;
        if c != 5 || h != placement.size || w != placement.size {
            return Err(Error::shape(format!(
                "oracle expects (5, {s}, {s}), got {:?}",
                input.shape(),
                s = placement.size
            )));
        }
        let class = self.signaled_class(input.plane(3), placement);
        let data = (0..h * w)
            .map(|i| {
                let hit = class.is_some_and(|c| {
                    placement
                        .to_scene(i % w, i / w)
                        .is_some_and(|(x, y)| self.gt.get(x, y) == c)
                });
                if hit {
                    self.inside
                } else {
                    self.outside
                }
            })
            .collect();
        Tensor::from_vec(&[1, h, w], data)
    }
}
