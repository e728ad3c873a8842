//! The segmentation path shared by the CLI and the service, so both give
//! the same answer for the same inputs.

use std::path::Path;
use std::sync::Arc;

use sqseg_core::nn::Tensor;
use sqseg_core::pipeline::{
    io::read_label_png, reinhard_normalize, segment_scene, EfficientUnet, OracleModel, Palette,
    SceneOutput, SegmentOptions, SegmentationModel, StainStats,
};
use sqseg_core::signal::Squiggle;
use sqseg_core::{Error, Result};

use crate::error::{Context, Failure};

#[derive(Clone)]
pub struct Segmenter {
    pub model: Arc<dyn SegmentationModel>,
    pub palette: Palette,
    pub stain: Option<StainStats>,
    pub options: SegmentOptions,
}

/// The first class id that is not in the palette.
pub fn unknown_class(palette: &Palette, squiggles: &[Squiggle], classes: &[u8]) -> Option<u8> {
    squiggles
        .iter()
        .map(|s| s.class_id)
        .chain(classes.iter().copied())
        .find(|&c| !palette.contains(c))
}

impl Segmenter {
    pub fn segment(
        &self,
        image: &Tensor,
        squiggles: &[Squiggle],
        classes: &[u8],
    ) -> Result<SceneOutput> {
        if squiggles.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one squiggle is required".into(),
            ));
        }
        if let Some(c) = unknown_class(&self.palette, squiggles, classes) {
            return Err(Error::ClassNotPresent(c));
        }
        let normalized;
        let image = match &self.stain {
            Some(target) => {
                normalized = reinhard_normalize(image, target)?;
                &normalized
            }
            None => image,
        };
        segment_scene(
            image,
            squiggles,
            classes,
            self.model.as_ref(),
            &self.options,
        )
    }
}

/// A network from a weight container, or the ground-truth oracle stub
/// when `oracle` names a label PNG.
pub fn load_model(
    weights: Option<&Path>,
    oracle: Option<&Path>,
) -> Result<Arc<dyn SegmentationModel>, Failure> {
    match (weights, oracle) {
        (_, Some(gt)) => {
            let gt = read_label_png(gt).context(format!("reading {}", gt.display()))?;
            Ok(Arc::new(OracleModel::new(gt)))
        }
        (Some(path), None) => {
            let model =
                EfficientUnet::load(path).context(format!("loading weights {}", path.display()))?;
            Ok(Arc::new(model))
        }
        (None, None) => Err(Failure {
            context: "no model".into(),
            source: Error::Manifest("pass --weights, set SQSEG_WEIGHTS, or use --oracle".into()),
        }),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read(path).context(format!("reading {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_slice(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Failure {
        context: format!("parsing {} at `{}`", path.display(), e.path()),
        source: Error::Json(e.into_inner()),
    })
}
