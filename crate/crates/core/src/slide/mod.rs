//! Slide pyramid storage and the synthetic cohort generator.

pub mod pyramid;
pub mod synth;

pub use pyramid::{build_pyramid, Manifest, PyramidLevel, SlidePyramid};
pub use synth::{generate_synthetic_cohort, SyntheticCohort, SyntheticCohortSpec};
