//! Dataset ingestion, synthetic scene generation, prediction export and
//! sparse-to-dense label upsampling.

pub mod densify;
pub mod formats;
pub mod synth;

pub use densify::{brute_force_densify, densify_labels, DensifyConfig};
pub use formats::{read_xyz_label, write_predictions, CloudFormat};
pub use synth::{
    generate_scene, scene_spec, synthetic_label_set, DatasetSpec, Primitive, SceneSpec,
    CLASS_BUILDING, CLASS_CLUTTER, CLASS_GROUND, CLASS_VEGETATION,
};
