//! Two-stage mammography CAD pipeline.
//!
//! A conditional-GAN detector (`cade`) turns a whole mammogram into a lesion
//! probability map; connected-component post-processing extracts regions of
//! interest; a DenseNet classifier (`cadi`) calls each region benign or
//! malignant; `metrics` and `fusion` score everything from per-pixel Dice up
//! to subject-level multi-view diagnosis. Clinical data is replaced by the
//! seeded `phantom` generator so every number in a run is reproducible from
//! one seed.

pub mod cade;
pub mod cadi;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fusion;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod raster;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use manifest::{CaseRecord, DatasetManifest, Label, Split, View};
pub use raster::{BinaryMask, BoundingBox, GrayImage};
