//! Concrete models and priors.

pub mod lemmas;
pub mod locscale;
pub mod sparse;
pub mod translation;

pub use locscale::{BaseClass, LocScaleNet};
pub use sparse::SparsePrior;
pub use translation::TranslationFamily;
