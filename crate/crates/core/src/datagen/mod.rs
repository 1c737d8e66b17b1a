//! Deterministic synthetic scenes: archetype taxonomy with attribute and
//! compatibility rules, noisy appearance embeddings, JSONL serialization.

mod generate;
mod io;
mod record;
mod taxonomy;

pub use generate::{gen_dataset, gen_scene, Dataset, DatasetManifest, GenConfig, GT_COUNT_WEIGHTS};
pub use io::{parse_scenes, read_scenes, scenes_to_jsonl, write_scenes};
pub use record::{GtTriplet, SceneObject, SceneRecord};
pub use taxonomy::{default_taxonomy, Archetype, Taxonomy, DEFAULT_RELATIONSHIPS, TOOL_NAMES};
