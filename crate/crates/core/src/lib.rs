pub mod conditioned;
pub mod error;
pub mod geometry;
pub mod harmonic;
pub mod sampling;
pub mod specfun;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/harmonic.md")]
    mod harmonic {}
    #[doc = include_str!("../../../book/src/conditioned.md")]
    mod conditioned {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
