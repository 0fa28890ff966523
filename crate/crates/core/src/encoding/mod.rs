//! Codebook training and spatial pyramid encoding.

pub mod kmeans;
pub mod spm;

pub use kmeans::{assign, train_codebook, train_codebook_traced, Codebook, KmeansParams, KmeansReport, RestartTrace};
pub use spm::{level_weight, place_descriptors, pyramid_cells, spm_encode, spm_from_placed, Placed, SpmVector};
