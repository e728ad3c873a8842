//! Scene-level glue: stain normalization, patching, per-class inference and
//! assembly into one label map.

mod assemble;
pub mod io;
mod model;
mod palette;
mod patch;
mod scene;
mod stain;

pub use assemble::{assemble_semantic_map, combine_by_class, one_hot, ClassProbMap};
pub use model::{ConstantModel, EfficientUnet, OracleModel, SegmentationModel};
pub use palette::{Palette, PaletteEntry};
pub use patch::{extract_patch, Placement};
pub use scene::{
    evaluate_scene, segment_one, segment_pairs, segment_scene, stack_input, SceneDescriptor,
    SceneOutput, SegmentOptions, StageTimings, DEFAULT_PATCH_SIZE,
};
pub use stain::{lab_to_rgb, reinhard_normalize, rgb_to_lab, StainStats};
