//! Image and annotation input/output, preprocessing, splitting and scene
//! synthesis.

pub mod image;
pub mod preprocess;
pub mod split;
pub mod synth;
pub mod voc;

pub use image::{ImageError, RgbImage};
pub use preprocess::{preprocess, preprocess_annotation, preprocess_image, PreprocessConfig, PreprocessPlan};
pub use split::{parse_manifest, split, write_manifest, DatasetSplit, ManifestError, SplitRatio};
pub use synth::{glyph_size, render_scene, synthesize_scene, Placement, SynthConfig};
pub use voc::{parse_voc, write_voc, Annotation, VocError, VocMode};
