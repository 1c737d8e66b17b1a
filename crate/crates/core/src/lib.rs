//! Manipulation relationship graph inference over category-agnostic object
//! proposals.
//!
//! The pipeline builds every ordered pair of proposals, clusters pair union
//! boxes into shared subgraph regions, refines region features with a
//! spatial attention context module, predicts a relationship distribution
//! per pair, and assembles the surviving triplets into a directed graph.

pub mod atomic;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inference;
pub mod model;
pub mod nn;
pub mod pairs;
pub mod scene;
pub mod training;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use geometry::{iou, union_box, Box2D};
pub use scene::ObjectProposal;
