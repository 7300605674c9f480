//! Temporal ETAS (epidemic-type aftershock sequence) modelling and
//! simulation-based Bayesian inference.
//!
//! The crate provides, in one place:
//!
//! * an exact `O(n log n)` branching simulator for the marked temporal ETAS
//!   process (plus an independent `O(n^2)` thinning simulator used as an
//!   oracle),
//! * the 39-dimensional summary-statistic map (event count, inter-event
//!   quantiles, Ripley K profiles, magnitude-thresholded K profiles),
//! * exact reference inference: the ETAS log-likelihood, a Nelder-Mead MLE,
//!   and a latent-branching Gibbs sampler,
//! * a from-scratch conditional mixture density network and a sequential
//!   neural posterior estimation loop, with ABC rejection / ABC-MCMC
//!   baselines,
//! * distribution diagnostics: kernel MMD, classifier two-sample tests,
//!   simulation-based coverage, and compensator / time-rescaling checks.
//!
//! # Where to start
//!
//! The `examples/` directory is the primary interface; each example is a
//! runnable end-to-end capability demo:
//!
//! ```text
//! cargo run --release -p etas --example simulate_catalog     # branching simulation
//! cargo run --release -p etas --example summary_statistics   # 39-dim summary map
//! cargo run --release -p etas --example likelihood_mle       # exact likelihood + MLE
//! cargo run --release -p etas --example gibbs_posterior      # latent-branching Gibbs
//! cargo run --release -p etas --example snpe_posterior       # sequential neural posterior
//! cargo run --release -p etas --example abc_baselines        # ABC rejection / ABC-MCMC
//! cargo run --release -p etas --example model_diagnostics    # MMD / C2ST / coverage
//! cargo run --release -p etas --example compensator_check    # residual analysis
//! cargo run --release -p etas --example benchmark_scaling    # runtime scaling table
//! ```
//!
//! A thin CLI (`cargo run --release -p etas --bin etas -- --help`) exposes the
//! same capabilities as subcommands (`simulate`, `summarize`, `infer`,
//! `diagnose`, `bench`, `ingest`) driven by an INI-style config file.
//!
//! All stochastic entry points take explicit RNGs or seeds and are
//! deterministic for a fixed seed, independent of thread count.

pub mod abc;
pub mod bench;
pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod model;
pub mod prior;
pub mod gibbs;
pub mod io;
pub mod likelihood;
pub mod mdn;
pub mod nn;
pub mod snpe;
pub mod opt;
pub mod pipeline;
pub mod rng;
pub mod samples;
pub mod simulate;
pub mod summaries;
pub mod stats;
pub mod transform;

pub use error::{EtasError, Result};
pub use model::{Catalog, EtasParams};
