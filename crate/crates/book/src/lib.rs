//! Compiles the guide's code listings as doc-tests.
//!
//! mdbook cannot link external crates when testing a book, so each chapter
//! is included here as a module doc and `cargo test` runs the snippets.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/matrices.md")]
pub mod matrices {}
#[doc = include_str!("../../../book/src/thresholds.md")]
pub mod thresholds {}
#[doc = include_str!("../../../book/src/anova.md")]
pub mod anova {}
#[doc = include_str!("../../../book/src/rectangular.md")]
pub mod rectangular {}
#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
