pub mod config;
pub mod diffusion;
pub mod error;
pub mod fdt;
pub mod fit;
pub mod markov;
pub mod perturbation;
pub mod response;

pub use config::Tolerances;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/chains.md")]
    mod chains {}
    #[doc = include_str!("../../../book/src/perturbations.md")]
    mod perturbations {}
    #[doc = include_str!("../../../book/src/response.md")]
    mod response {}
    #[doc = include_str!("../../../book/src/fdt.md")]
    mod fdt {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
