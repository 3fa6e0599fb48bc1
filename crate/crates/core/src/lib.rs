pub mod activation;
pub mod checksum;
pub mod dataset;
pub mod depth;
pub mod directionality;
pub mod error;
pub mod geometry;
pub mod intervention;
pub mod pipeline;
pub mod probe;
pub mod relation;
pub mod rng;
pub mod synthetic;
pub mod wordnet;

pub use error::{Error, Result};
pub use relation::{RelationLabel, N_CLASSES};
