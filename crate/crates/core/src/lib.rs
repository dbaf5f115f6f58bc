//! Synthesis of labeled 3D facial-expression image datasets from a small
//! corpus of densely corresponded face scans.
//!
//! The pipeline scores every identity trio within an expression category by
//! the thin-plate-spline bending energy needed to deform its members into
//! one another, keeps the most dissimilar trios, averages each trio into a
//! new face and rasterizes that face into a 224×224 depth/azimuth/elevation
//! image.
//!
//! Modules, in pipeline order:
//! - [`corpus`]: face scans, PLY and CSV index loading, synthetic corpora
//! - [`tps`]: bending matrices and pairwise bending-energy tables
//! - [`trio`]: trio scoring and top-M selection
//! - [`synth`]: centroid face synthesis
//! - [`raster`]: normals, grid surface fitting, channel images
//! - [`pipeline`]: end-to-end generation, manifests, stats, export
//! - [`eval`]: linear softmax baseline for sanity-checking datasets

pub mod corpus;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod tps;
pub mod trio;

pub use corpus::{Corpus, Emotion, ExpressionLabel, Face};
pub use error::{Error, Result};
