//! Approximate Bayesian computation baselines: rejection sampling and a
//! pseudo-marginal MCMC variant.
//!
//! Both compare simulated and observed summaries through a scaled Euclidean
//! distance
//!
//!   d(s, s_obs)^2 = sum_j ((s_j - s_obs_j) / mad_j)^2,
//!
//! where `mad_j` is the median absolute deviation of summary coordinate j
//! over a pilot set of prior simulations. Coordinates whose pilot MAD is
//! numerically zero carry no information at this scale and are dropped from
//! the distance (with a warning).
//!
//! * [`abc_rejection`]: draw from the prior, keep draws with distance below
//!   a tolerance (given explicitly or as an acceptance-fraction quantile of
//!   the simulated distances).
//! * [`abc_mcmc`]: a random-walk Metropolis chain in the unconstrained
//!   working space; a proposal is accepted only if the usual prior-ratio
//!   test passes *and* a fresh simulation at the proposed parameters lands
//!   within the tolerance. Different proposals never reuse simulations, so
//!   the chain targets the standard ABC posterior.
//!
//! All randomness derives from one master seed; pilot and main simulations
//! are slot-parallel with one stream per slot, so results do not depend on
//! the thread count.

use crate::engine::{ParamSpace, Simulator};
use crate::error::{EtasError, Result};
use crate::rng::{derive_rng, derive_seed};
use crate::stats::{mad, quantile};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const TAG_PILOT: u64 = 0xF0;
const TAG_MAIN: u64 = 0xF1;
const TAG_CHAIN: u64 = 0xF2;
const TAG_STEP: u64 = 0xF3;

/// How many consecutive failed simulations to tolerate per slot before
/// giving up on the run.
const MAX_FAILURES_PER_SLOT: usize = 25;

/// Settings for [`abc_rejection`].
#[derive(Debug, Clone, PartialEq)]
pub struct AbcConfig {
    /// Prior simulations in the main stage (the pilot stage is extra).
    pub n_sims: usize,
    /// Acceptance tolerance; when `None`, the `accept_fraction` quantile of
    /// the simulated distances is used.
    pub epsilon: Option<f64>,
    pub accept_fraction: f64,
    /// Prior simulations used to estimate the per-coordinate MAD scale.
    pub pilot_sims: usize,
    pub seed: u64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        AbcConfig {
            n_sims: 10_000,
            epsilon: None,
            accept_fraction: 0.01,
            pilot_sims: 500,
            seed: 0,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(EtasError::Config("n_sims must be positive".into()));
        }
        if self.pilot_sims < 20 {
            return Err(EtasError::Config("pilot_sims must be at least 20".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(EtasError::Config("epsilon must be positive".into()));
            }
        } else if !(self.accept_fraction > 0.0 && self.accept_fraction < 1.0) {
            return Err(EtasError::Config("accept_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of an [`abc_rejection`] run.
#[derive(Debug, Clone)]
pub struct AbcOutput {
    /// Accepted parameter draws (natural units), one row per draw.
    pub draws: Array2<f64>,
    /// Distances of the accepted draws (same order).
    pub distances: Vec<f64>,
    /// Tolerance actually applied.
    pub epsilon: f64,
    /// Total main-stage simulations (excluding redraws for failures).
    pub n_sims: usize,
    /// Simulation failures that were redrawn (pilot + main).
    pub n_failures: usize,
    /// Per-coordinate inverse scales used in the distance (0 = dropped).
    pub scale: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-coordinate MAD of pilot summaries; zero-MAD coordinates get weight 0.
struct DistanceScale {
    inv_mad: Vec<f64>,
    dropped: Vec<usize>,
}

fn fit_scale(summaries: &[Vec<f64>]) -> Result<DistanceScale> {
    let dim = summaries[0].len();
    let mut inv_mad = vec![0.0; dim];
    let mut dropped = Vec::new();
    for j in 0..dim {
        let col: Vec<f64> = summaries.iter().map(|s| s[j]).collect();
        let m = mad(&col)?;
        if m > 1e-12 {
            inv_mad[j] = 1.0 / m;
        } else {
            dropped.push(j);
        }
    }
    if dropped.len() == dim {
        return Err(EtasError::Numerical(
            "all summary coordinates have zero spread in the pilot stage".into(),
        ));
    }
    Ok(DistanceScale { inv_mad, dropped })
}

fn distance(s: &[f64], s_obs: &[f64], inv_mad: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((a, b), w) in s.iter().zip(s_obs).zip(inv_mad) {
        let d = (a - b) * w;
        acc += d * d;
    }
    acc.sqrt()
}

/// Simulate one slot: draw from the prior, redraw on failure.
fn prior_sim_slot<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    seed: u64,
    tag: u64,
    slot: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut rng = derive_rng(seed, &[tag, slot as u64]);
    let mut n_failures = 0;
    loop {
        let theta = space.sample_prior(&mut rng)?;
        let sim_seed = derive_seed(seed, &[tag, slot as u64, n_failures as u64]);
        match sim.simulate(&theta, sim_seed) {
            Ok(summary) => return Ok((theta, summary, n_failures)),
            Err(failure) => {
                n_failures += 1;
                if n_failures > MAX_FAILURES_PER_SLOT {
                    return Err(EtasError::RejectionExhausted(format!(
                        "slot {slot}: {MAX_FAILURES_PER_SLOT} consecutive simulation \
                         failures (last: {failure})"
                    )));
                }
            }
        }
    }
}

/// `(theta, summary)` pairs from prior simulations, plus the redraw count.
type PriorSims = (Vec<(Vec<f64>, Vec<f64>)>, usize);

fn run_prior_sims<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    n: usize,
    seed: u64,
    tag: u64,
) -> Result<PriorSims> {
    let slots: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|slot| prior_sim_slot(space, sim, seed, tag, slot))
        .collect::<Result<Vec<_>>>()?;
    let n_failures = slots.iter().map(|(_, _, f)| f).sum();
    Ok((slots.into_iter().map(|(t, s, _)| (t, s)).collect(), n_failures))
}

/// ABC rejection sampling against an observed summary.
pub fn abc_rejection<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    s_obs: &[f64],
    config: &AbcConfig,
) -> Result<AbcOutput> {
    config.validate()?;
    if s_obs.len() != sim.summary_len() {
        return Err(EtasError::DimensionMismatch(format!(
            "observed summary has {} entries, simulator produces {}",
            s_obs.len(),
            sim.summary_len()
        )));
    }
    let mut warnings = Vec::new();

    let (pilot, pilot_failures) =
        run_prior_sims(space, sim, config.pilot_sims, config.seed, TAG_PILOT)?;
    let pilot_summaries: Vec<Vec<f64>> = pilot.into_iter().map(|(_, s)| s).collect();
    let scale = fit_scale(&pilot_summaries)?;
    if !scale.dropped.is_empty() {
        warnings.push(format!(
            "{} summary coordinate(s) had zero pilot spread and were dropped \
             from the distance: {:?}",
            scale.dropped.len(),
            scale.dropped
        ));
    }

    let (main, main_failures) = run_prior_sims(space, sim, config.n_sims, config.seed, TAG_MAIN)?;
    let distances: Vec<f64> =
        main.iter().map(|(_, s)| distance(s, s_obs, &scale.inv_mad)).collect();

    let epsilon = match config.epsilon {
        Some(e) => e,
        None => quantile(&distances, config.accept_fraction)?,
    };
    let mut rows = Vec::new();
    let mut kept = Vec::new();
    for ((theta, _), &d) in main.iter().zip(&distances) {
        if d <= epsilon {
            rows.extend_from_slice(theta);
            kept.push(d);
        }
    }
    if kept.is_empty() {
        return Err(EtasError::RejectionExhausted(format!(
            "no draw among {} came within epsilon = {epsilon:.4e} of the observed summary",
            config.n_sims
        )));
    }
    let draws = Array2::from_shape_vec((kept.len(), space.dim()), rows)
        .expect("acceptance bookkeeping");
    Ok(AbcOutput {
        draws,
        distances: kept,
        epsilon,
        n_sims: config.n_sims,
        n_failures: pilot_failures + main_failures,
        scale: scale.inv_mad,
        warnings,
    })
}

/// Settings for [`abc_mcmc`].
#[derive(Debug, Clone, PartialEq)]
pub struct AbcMcmcConfig {
    /// Retained posterior samples.
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Tolerance; when `None`, the `accept_fraction` quantile of pilot
    /// distances is used.
    pub epsilon: Option<f64>,
    pub accept_fraction: f64,
    /// Prior simulations for the MAD scale, the tolerance, and the chain's
    /// starting point.
    pub pilot_sims: usize,
    /// Random-walk step size as a multiple of the per-coordinate pilot
    /// spread in working space.
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for AbcMcmcConfig {
    fn default() -> Self {
        AbcMcmcConfig {
            n_samples: 2000,
            burn_in: 1000,
            thinning: 1,
            epsilon: None,
            accept_fraction: 0.05,
            pilot_sims: 500,
            step_scale: 0.5,
            seed: 0,
        }
    }
}

impl AbcMcmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thinning == 0 {
            return Err(EtasError::Config("n_samples and thinning must be positive".into()));
        }
        if self.pilot_sims < 20 {
            return Err(EtasError::Config("pilot_sims must be at least 20".into()));
        }
        if !(self.step_scale.is_finite() && self.step_scale > 0.0) {
            return Err(EtasError::Config("step_scale must be positive".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(EtasError::Config("epsilon must be positive".into()));
            }
        } else if !(self.accept_fraction > 0.0 && self.accept_fraction < 1.0) {
            return Err(EtasError::Config("accept_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of an [`abc_mcmc`] run.
#[derive(Debug, Clone)]
pub struct AbcMcmcOutput {
    /// Retained chain states (natural units), one row per sample.
    pub draws: Array2<f64>,
    pub epsilon: f64,
    /// Overall proposal acceptance rate.
    pub acceptance_rate: f64,
    /// Total forward simulations, pilot included.
    pub n_sims: usize,
    pub warnings: Vec<String>,
}

/// ABC MCMC (pseudo-marginal random walk) against an observed summary.
pub fn abc_mcmc<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    s_obs: &[f64],
    config: &AbcMcmcConfig,
) -> Result<AbcMcmcOutput> {
    config.validate()?;
    if s_obs.len() != sim.summary_len() {
        return Err(EtasError::DimensionMismatch(format!(
            "observed summary has {} entries, simulator produces {}",
            s_obs.len(),
            sim.summary_len()
        )));
    }
    let dim = space.dim();
    let mut warnings = Vec::new();

    // pilot: distance scale, tolerance, starting point, and step sizes
    let (pilot, pilot_failures) =
        run_prior_sims(space, sim, config.pilot_sims, config.seed, TAG_PILOT)?;
    let pilot_summaries: Vec<Vec<f64>> = pilot.iter().map(|(_, s)| s.clone()).collect();
    let scale = fit_scale(&pilot_summaries)?;
    if !scale.dropped.is_empty() {
        warnings.push(format!(
            "{} summary coordinate(s) had zero pilot spread and were dropped \
             from the distance: {:?}",
            scale.dropped.len(),
            scale.dropped
        ));
    }
    let pilot_distances: Vec<f64> =
        pilot_summaries.iter().map(|s| distance(s, s_obs, &scale.inv_mad)).collect();
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => quantile(&pilot_distances, config.accept_fraction)?,
    };

    // start from the pilot draw closest to the observation
    let start_idx = pilot_distances
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite distances"))
        .map(|(i, _)| i)
        .expect("non-empty pilot");
    if pilot_distances[start_idx] > epsilon {
        return Err(EtasError::RejectionExhausted(format!(
            "no pilot draw within epsilon = {epsilon:.4e}; cannot start the chain"
        )));
    }
    let mut z = space.to_z(&pilot[start_idx].0)?;

    // per-coordinate step sizes from the pilot spread in z space
    let mut step = vec![0.0; dim];
    {
        let mut pilot_z = vec![Vec::with_capacity(config.pilot_sims); dim];
        for (theta, _) in &pilot {
            let zi = space.to_z(theta)?;
            for j in 0..dim {
                pilot_z[j].push(zi[j]);
            }
        }
        for j in 0..dim {
            // 1.4826 makes the MAD consistent for a normal spread
            let spread = (1.4826 * mad(&pilot_z[j])?).max(1e-3);
            step[j] = config.step_scale * spread;
        }
    }

    let mut log_target = space.log_prior(&space.from_z(&z)?) + space.log_jacobian(&z)?;
    let total_steps = config.burn_in + (config.n_samples - 1) * config.thinning + 1;
    let mut chain_rng = derive_rng(config.seed, &[TAG_CHAIN]);
    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut n_accept = 0usize;
    let mut n_sims = config.pilot_sims + pilot_failures;
    let mut window_accepts = 0usize;
    let mut stuck_warned = false;

    for t in 0..total_steps {
        let mut z_prop = z.clone();
        for (zp, &s) in z_prop.iter_mut().zip(&step) {
            *zp += s * chain_rng.sample::<f64, _>(StandardNormal);
        }
        let theta_prop = space.from_z(&z_prop)?;
        let log_target_prop =
            space.log_prior(&theta_prop) + space.log_jacobian(&z_prop)?;
        let log_ratio = log_target_prop - log_target;
        let u: f64 = chain_rng.gen();
        if log_target_prop > f64::NEG_INFINITY && u < log_ratio.exp() {
            // prior test passed; now require a fresh simulation within
            // tolerance
            let sim_seed = derive_seed(config.seed, &[TAG_STEP, t as u64]);
            n_sims += 1;
            if let Ok(summary) = sim.simulate(&theta_prop, sim_seed) {
                if distance(&summary, s_obs, &scale.inv_mad) <= epsilon {
                    z = z_prop;
                    log_target = log_target_prop;
                    n_accept += 1;
                    window_accepts += 1;
                }
            }
        }

        if (t + 1) % 1000 == 0 {
            if window_accepts < 10 && !stuck_warned {
                warnings.push(format!(
                    "chain acceptance below 1% in the {} proposals ending at step {}; \
                     consider a larger epsilon or smaller step_scale",
                    1000,
                    t + 1
                ));
                stuck_warned = true;
            }
            window_accepts = 0;
        }

        if t >= config.burn_in && (t - config.burn_in).is_multiple_of(config.thinning) {
            let theta = space.from_z(&z)?;
            draws.extend_from_slice(&theta);
        }
    }

    let draws = Array2::from_shape_vec((config.n_samples, dim), draws)
        .expect("retention bookkeeping");
    Ok(AbcMcmcOutput {
        draws,
        epsilon,
        acceptance_rate: n_accept as f64 / total_steps as f64,
        n_sims,
        warnings,
    })
}
