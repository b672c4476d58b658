pub mod analysis;
pub mod constructions;
pub mod distribution;
pub mod erm;
pub mod error;
pub mod hypothesis;
pub mod selection;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hypotheses.md")]
    mod hypotheses {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/erm.md")]
    mod erm {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/constructions.md")]
    mod constructions {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
}
