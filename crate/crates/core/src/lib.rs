//! Learns a revenue-optimal, DSIC, individually-rational single-item auction
//! for allocating one edge-compute unit among mobile blockchain miners.
//!
//! The mechanism runs a second-price auction with zero reserve (SPA-0) in a
//! transformed bid space: each miner's bid is mapped through a strictly
//! increasing piecewise-linear min-max network, the unit goes to the highest
//! transformed bid (if positive), and the winner pays the inverse transform of
//! the second-highest transformed bid. By Myerson's characterization any such
//! mechanism is DSIC and IR regardless of the transform parameters, so
//! training is free to pick the parameters that maximize expected seller
//! revenue. Training uses a softmax relaxation of the allocation so the
//! expected revenue is differentiable.
//!
//! Modules map onto the pipeline:
//!
//! - [`valuation`]: the block-size / compute-capacity model that generates
//!   miner valuations `v = t / c`, with the exact density of `v`.
//! - [`mechanism`]: monotone transforms, their exact inverses, softmax
//!   allocation, SPA-0 payments, and the exact (hard) deployment mechanism.
//! - [`training`]: negated-revenue loss, hand-written reverse-mode gradients,
//!   and the SGD loop.
//! - [`baselines`]: second-price baseline, Monte Carlo revenue estimators,
//!   empirical regret, and the winning-probability sweep.

pub mod baselines;
mod error;
pub mod mechanism;
pub mod training;
pub mod valuation;

pub use error::AuctionError;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, AuctionError>;
