mod binio;
pub mod classify;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod features;
pub mod image;
pub mod pipeline;
mod raster;
pub mod saliency;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/saliency.md")]
    mod saliency {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/classify.md")]
    mod classify {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
