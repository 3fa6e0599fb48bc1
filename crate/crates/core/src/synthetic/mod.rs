//! Synthetic data with known ground truth: a generated lexicon, planted
//! class signals, a small transformer and a hand-built sparse autoencoder.

pub mod direction;
pub mod lexicon;
pub mod planted;
pub mod toy_model;
pub mod toy_sae;

pub use lexicon::{generate_lexicon, write_wordnet, LexiconSpec, SynthSynset, SyntheticLexicon};
pub use planted::{draw_dims, gen_planted, PlantedData, PlantedSpec};
pub use toy_model::{concept_vectors, toy_activations, toy_forward, ToyModel, ToyModelSpec, ToyTrace, Vocabulary};
pub use direction::{gen_direction_null, DirectionNull, DirectionNullSpec};
pub use toy_sae::{random_orthonormal, toy_sae};
