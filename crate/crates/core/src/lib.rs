//! Multicanonical Monte Carlo for reconstructing the full density of a
//! scalar performance variable `y = g(x)`, including its far tails.
//!
//! The warped targets `q_t(x) ∝ p(x) / Θ_t(g(x))` of each multicanonical
//! iteration are sampled by a sequential Monte Carlo sampler (weighted
//! particles, Metropolis moves, systematic resampling, tempering between
//! distant tables), with single- and multi-chain MCMC and plain Monte Carlo
//! available as baselines.
//!
//! Per-particle work runs on rayon when the `parallel` feature is enabled
//! (the default). All random draws come from counter-based streams keyed by
//! seed and work-item path, so results are bit-identical for any number of
//! worker threads, with or without the feature.

pub mod error;
pub mod histogram;
pub mod kernels;
pub mod mmc;
pub mod model;
pub mod models;
pub mod par;
pub mod rng;
pub mod smcs;

pub use error::{Error, Result};
pub use histogram::{BinCounts, BinGrid, EmptyBinRule, ThetaTable};
pub use kernels::ProposalConfig;
pub use mmc::{
    run_mmc, run_plain_mc, tail_probability, tail_probability_bins, PdfEstimate, RunConfig,
    SamplerKind,
};
pub use model::{evaluate, PerformanceModel};
pub use rng::{derive_stream, RandomStream, StreamKey};
pub use smcs::{ParticleEnsemble, SmcsConfig};
