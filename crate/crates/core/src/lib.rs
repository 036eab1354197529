//! Opinion diffusion with memory and asymmetric bias, model fitting, and
//! maximum-entropy learning of information-source costs.
//!
//! - [`graph`]: networks of humans and targets
//! - [`bias`]: confirmation and novelty kernels and their checks
//! - [`dynamics`]: the memorized update, step cache and series I/O
//! - [`fitting`]: exponent and decay recovery from a series
//! - [`irl`]: cost bases, likelihood and the learner

pub mod bias;
pub mod dynamics;
pub mod fitting;
pub mod graph;
pub mod irl;

// Book chapters, compiled so their snippets run under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graph.md")]
    mod graph {}
    #[doc = include_str!("../../../book/src/bias.md")]
    mod bias {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
