//! Weight-space arithmetic on model checkpoints and a resource-limited
//! judging sandbox for candidate programs, together with the outcome
//! taxonomy, reward functions, frontier metrics, and ensemble analyses
//! built on top of them.
//!
//! The crate is organized by subsystem:
//!
//! - [`store`] — named-tensor checkpoint container (load/save/validate)
//! - [`arith`] — interpolation, extrapolation, layer stitching, block swap
//! - [`geometry`] — SVD spectra and per-layer variance of weight deltas
//! - [`verifier`] — sandboxed judging, outcome taxonomy, nested rewards
//! - [`reward`] — shaped rewards and policy identities on toy policies
//! - [`metrics`] — pass@k family, solved-set similarity, bootstrap CIs
//! - [`ensemble`] — pool construction, greedy coverage, transfer eval

pub mod arith;
pub mod ensemble;
pub mod geometry;
pub mod metrics;
pub mod reward;
pub mod store;
pub mod verifier;
