//! Asymptotically distribution-free Cramér–von Mises goodness-of-fit tests
//! for the drift of an ergodic scalar diffusion
//!
//! ```text
//! dX_t = S(θ, X_t) dt + σ(X_t) dW_t
//! ```
//!
//! observed on a fine time grid. The crate covers the whole pipeline:
//! invariant-law construction ([`models`]), Fisher and tail information
//! ([`information`]), Euler–Maruyama path simulation ([`simulate`]),
//! empirical estimators and the drift MLE ([`estimate`]), the martingale
//! transformation and the test statistics ([`transform`]), the limit law
//! `∫₀¹ w_t² dt` ([`limitdist`]) and experiment orchestration ([`harness`]).

pub mod error;
pub mod estimate;
pub mod harness;
pub mod information;
pub mod limitdist;
pub mod linalg;
pub mod models;
pub mod quad;
pub mod simulate;
pub mod transform;

pub use error::{Error, Result};
