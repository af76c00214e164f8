//! Large-average and ANOVA-fit submatrices of Gaussian random matrices.
//!
//! The crate has four layers:
//!
//! * [`matrix`]: dense matrices, submatrix index sets, Gaussian generation and
//!   the two block statistics (average `F` and ANOVA residual `G`);
//! * [`thresholds`]: closed-form and root-solved size thresholds and
//!   tail-probability bounds, plus the χ² tail helpers they rest on;
//! * [`search`]: the multi-restart alternating search for large-average
//!   blocks and exhaustive oracles at desk scale;
//! * [`experiments`]: seeded Monte Carlo and spectral studies that check the
//!   theory, with CSV/JSON persistence and replay.
//!
//! A command-line front end lives in [`cli`] and the `submax` binary.
//!
//! ```
//! use submax::thresholds::{solve_s, theorem1_interval};
//!
//! let s = solve_s(200, 1.0).unwrap();
//! assert!(s > 2.0 * 200f64.ln() && s < 4.0 * 200f64.ln());
//! let interval = theorem1_interval(200, 1.0).unwrap();
//! assert!(interval.contains(s));
//! ```

// Range checks are written as `!(x > a)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod roots;
pub mod search;
pub mod significance;
pub mod special;
pub mod spectral;
pub mod thresholds;

pub use error::{Error, Result};
pub use matrix::{
    anova_residual, embed_signal, gaussian_matrix, submatrix_average, DataMatrix, PlantedSignal,
    SubmatrixIndex,
};
