//! Deep Gaussian process priors over composition structures.
//!
//! The crate is organised bottom-up:
//!
//! * [`structure`]: composition graphs `(q, d, t, S)` and structures with smoothness `β`.
//! * [`rates`]: closed-form rate calculus: minimax rates, concentration-rate
//!   solutions per process family, the structure penalty and the entropy constant.
//! * [`funcspace`]: path representations, empirical Hölder and Besov norms,
//!   conditioning-set membership, composition and covering-number oracles.
//! * [`gp`]: samplers for the truncated wavelet, Lévy fBM and rescaled
//!   stationary families, plus accept/reject conditioning.
//! * [`prior`]: the structure prior and full deep GP prior draws.
//! * [`inference`]: regression data, information geometry, pCN MCMC and
//!   posterior diagnostics.
//! * [`io`]: the binary tensor container used for grid paths and traces.

// `!(x > 0.0)` is how NaN gets rejected; `1 + Σ d_i <= cap` mirrors `|d|₁`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::int_plus_one, clippy::needless_range_loop)]

pub mod error;
pub mod funcspace;
pub mod gp;
pub mod inference;
pub mod io;
pub mod prior;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod structure;
pub mod verify;

pub use error::{Error, Result};
pub use funcspace::{ConditioningMode, ConditioningSpec, LayerFunction, PathFunction, PathRepr};
pub use gp::{ConditionedSampleStats, GpSpec};
pub use inference::{PosteriorConfig, PosteriorTrace, RegressionSample};
pub use prior::{DgpDraw, StructurePriorSpec};
pub use rates::{GpFamily, LogWeight, RateProfile};
pub use structure::{CompositionGraph, CompositionStructure, StructureSpace};
