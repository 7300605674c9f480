//! Sequential neural posterior estimation with truncated-prior proposals.
//!
//! Each round draws parameters from a proposal, simulates summaries, and
//! refits a mixture density network q(z | s) by maximum likelihood on all
//! data gathered so far (z is the unconstrained reparameterisation from the
//! [`crate::engine::ParamSpace`]). Two proposal schemes are available:
//!
//! * **Truncated** (default): the round-r proposal is the prior restricted
//!   to the axis-aligned box spanned by the `[q, 1-q]` per-coordinate
//!   quantiles of draws from the current q(z | s_obs). Because the proposal
//!   is proportional to the prior wherever it is positive, plain unweighted
//!   maximum likelihood on the pooled data keeps estimating the posterior.
//! * **Importance-weighted**: rounds after the first draw directly from
//!   q(z | s_obs) and reweight each pair by prior/proposal density (clipped
//!   at a high quantile per round) in the training loss.
//!
//! Simulation failures (event-cap truncations, numerical failures) are
//! redrawn with fresh parameters up to a per-slot budget; every random
//! decision derives from one master seed, with one stream per (round, slot),
//! so results are reproducible and independent of thread count.
//!
//! The final posterior is sampled from the last network at the observed
//! summary, rejecting draws that fall outside the prior support.

use crate::engine::{ParamSpace, Simulator};
use crate::error::{EtasError, Result};
use crate::mdn::{Mdn, MdnConfig, TrainConfig};
use crate::rng::{derive_rng, derive_seed};
use crate::stats::quantile;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

const TAG_DRAW: u64 = 0xE0;
const TAG_SIM: u64 = 0xE1;
const TAG_TRAIN: u64 = 0xE2;
const TAG_BOX: u64 = 0xE3;
const TAG_FINAL: u64 = 0xE4;

/// Settings for [`snpe`]. Defaults match the reference ETAS study design
/// (15 rounds of 2000 simulations).
#[derive(Debug, Clone, PartialEq)]
pub struct SnpeConfig {
    pub n_rounds: usize,
    pub sims_per_round: usize,
    pub mdn: MdnConfig,
    /// Training settings; the seed field is ignored (a fresh training seed
    /// is derived per round from `seed`).
    pub train: TrainConfig,
    /// Per-coordinate tail mass cut when forming the truncation box.
    pub proposal_quantile: f64,
    /// Posterior draws used to estimate the truncation box.
    pub quantile_draws: usize,
    /// Failed simulations are redrawn with fresh parameters, at most this
    /// many times per slot.
    pub max_failures_per_slot: usize,
    /// Posterior draws returned after the final round.
    pub final_draws: usize,
    /// Give up on final sampling after `support_cap * final_draws` attempts
    /// fall outside the prior support.
    pub support_cap: usize,
    /// Use importance-weighted training instead of truncated proposals.
    pub importance_weighted: bool,
    /// Per-round clip quantile for importance weights.
    pub clip_quantile: f64,
    pub seed: u64,
}

impl Default for SnpeConfig {
    fn default() -> Self {
        SnpeConfig {
            n_rounds: 15,
            sims_per_round: 2000,
            mdn: MdnConfig::default(),
            train: TrainConfig::default(),
            proposal_quantile: 5e-4,
            quantile_draws: 10_000,
            max_failures_per_slot: 10,
            final_draws: 5000,
            support_cap: 100,
            importance_weighted: false,
            clip_quantile: 0.995,
            seed: 0,
        }
    }
}

impl SnpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.sims_per_round == 0 || self.final_draws == 0 {
            return Err(EtasError::Config(
                "n_rounds, sims_per_round, and final_draws must be positive".into(),
            ));
        }
        if !(self.proposal_quantile > 0.0 && self.proposal_quantile < 0.5) {
            return Err(EtasError::Config("proposal_quantile must lie in (0, 0.5)".into()));
        }
        if self.quantile_draws < 100 {
            return Err(EtasError::Config("quantile_draws must be at least 100".into()));
        }
        if !(self.clip_quantile > 0.5 && self.clip_quantile <= 1.0) {
            return Err(EtasError::Config("clip_quantile must lie in (0.5, 1]".into()));
        }
        if self.support_cap == 0 {
            return Err(EtasError::Config("support_cap must be positive".into()));
        }
        self.mdn.validate()?;
        self.train.validate()
    }
}

/// Per-round bookkeeping.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub n_sims: usize,
    /// Simulation failures that were redrawn during this round.
    pub n_failures: usize,
    pub epochs_run: usize,
    pub best_val_nll: f64,
    /// Truncation box (z space) used to *propose* this round; `None` for
    /// prior rounds.
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
    /// Effective sample size fraction of the importance weights, when
    /// importance weighting is active.
    pub weight_ess: Option<f64>,
}

/// Result of an [`snpe`] run.
#[derive(Debug, Clone)]
pub struct SnpeOutput {
    /// Posterior draws in natural units, one row per draw.
    pub draws: Array2<f64>,
    /// The final trained density estimator.
    pub mdn: Mdn,
    pub rounds: Vec<RoundRecord>,
    pub warnings: Vec<String>,
}

enum Proposal<'a> {
    Prior,
    TruncatedBox { lo: &'a [f64], hi: &'a [f64] },
    Posterior { mdn: &'a Mdn, s_obs: &'a [f64] },
}

/// Draw one parameter vector from the active proposal.
fn propose<P: ParamSpace>(
    space: &P,
    proposal: &Proposal<'_>,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<Vec<f64>> {
    match proposal {
        Proposal::Prior => space.sample_prior(rng),
        Proposal::TruncatedBox { lo, hi } => space.sample_prior_truncated(lo, hi, rng),
        Proposal::Posterior { mdn, s_obs } => {
            // support rejection against the prior
            for _ in 0..1000 {
                let z = mdn.sample_conditional(s_obs, 1, rng)?;
                let z = z.row(0).to_vec();
                let theta = space.from_z(&z)?;
                if space.log_prior(&theta) > f64::NEG_INFINITY {
                    return Ok(theta);
                }
            }
            Err(EtasError::RejectionExhausted(
                "posterior proposal produced no prior-supported draw in 1000 attempts".into(),
            ))
        }
    }
}

/// One accepted (parameter, summary) pair plus how many redraws it took.
struct SlotResult {
    theta: Vec<f64>,
    summary: Vec<f64>,
    n_failures: usize,
}

fn run_round<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    proposal: &Proposal<'_>,
    round: usize,
    n_slots: usize,
    max_failures: usize,
    seed: u64,
) -> Result<(Vec<SlotResult>, usize)> {
    let results: Vec<SlotResult> = (0..n_slots)
        .into_par_iter()
        .map(|slot| -> Result<SlotResult> {
            let mut rng = derive_rng(seed, &[TAG_DRAW, round as u64, slot as u64]);
            let mut n_failures = 0;
            loop {
                let theta = propose(space, proposal, &mut rng)?;
                let sim_seed =
                    derive_seed(seed, &[TAG_SIM, round as u64, slot as u64, n_failures as u64]);
                match sim.simulate(&theta, sim_seed) {
                    Ok(summary) => return Ok(SlotResult { theta, summary, n_failures }),
                    Err(failure) => {
                        n_failures += 1;
                        if n_failures > max_failures {
                            return Err(EtasError::RejectionExhausted(format!(
                                "round {round} slot {slot}: {max_failures} consecutive \
                                 simulation failures (last: {failure})"
                            )));
                        }
                    }
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let total_failures = results.iter().map(|r| r.n_failures).sum();
    Ok((results, total_failures))
}

/// Per-coordinate empirical quantile box of posterior draws in z space.
fn quantile_box(draws: ArrayView2<'_, f64>, q: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::with_capacity(draws.ncols());
    let mut hi = Vec::with_capacity(draws.ncols());
    for col in draws.columns() {
        let v: Vec<f64> = col.to_vec();
        lo.push(quantile(&v, q)?);
        hi.push(quantile(&v, 1.0 - q)?);
    }
    Ok((lo, hi))
}

/// Run sequential neural posterior estimation against an observed summary.
pub fn snpe<P: ParamSpace, S: Simulator>(
    space: &P,
    sim: &S,
    s_obs: &[f64],
    config: &SnpeConfig,
) -> Result<SnpeOutput> {
    config.validate()?;
    if s_obs.len() != sim.summary_len() {
        return Err(EtasError::DimensionMismatch(format!(
            "observed summary has {} entries, simulator produces {}",
            s_obs.len(),
            sim.summary_len()
        )));
    }
    if s_obs.iter().any(|v| !v.is_finite()) {
        return Err(EtasError::Data("observed summary contains non-finite values".into()));
    }
    let dim = space.dim();
    let mut warnings: Vec<String> = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();

    // accumulated training data
    let mut xs: Vec<f64> = Vec::new(); // summaries, row-major
    let mut ys: Vec<f64> = Vec::new(); // z draws, row-major
    let mut log_proposal: Vec<f64> = Vec::new(); // proposal density of each z
    let mut round_of: Vec<usize> = Vec::new();

    let mut mdn = Mdn::new(sim.summary_len(), dim, config.mdn.clone())?;
    let mut current_box: Option<(Vec<f64>, Vec<f64>)> = None;

    for round in 0..config.n_rounds {
        let proposal = if round == 0 {
            Proposal::Prior
        } else if config.importance_weighted {
            Proposal::Posterior { mdn: &mdn, s_obs }
        } else {
            match &current_box {
                Some((lo, hi)) => Proposal::TruncatedBox { lo, hi },
                None => Proposal::Prior,
            }
        };

        let (slots, n_failures) = run_round(
            space,
            sim,
            &proposal,
            round,
            config.sims_per_round,
            config.max_failures_per_slot,
            config.seed,
        )?;

        for slot in &slots {
            let z = space.to_z(&slot.theta)?;
            let lp = match &proposal {
                Proposal::Prior | Proposal::TruncatedBox { .. } => {
                    // prior-proportional; exact normalisation cancels in the
                    // unweighted scheme and equals the prior for round 0 of
                    // the importance-weighted scheme
                    space.log_prior(&slot.theta) + space.log_jacobian(&z)?
                }
                Proposal::Posterior { mdn, .. } => mdn.log_prob(s_obs, &z)?,
            };
            xs.extend_from_slice(&slot.summary);
            ys.extend_from_slice(&z);
            log_proposal.push(lp);
            round_of.push(round);
        }

        let n_rows = round_of.len();
        let x = Array2::from_shape_vec((n_rows, sim.summary_len()), xs.clone())
            .expect("row length bookkeeping");
        let y = Array2::from_shape_vec((n_rows, dim), ys.clone()).expect("row length bookkeeping");

        // importance weights: prior density over proposal density in z, per
        // row, clipped per round
        let (weights, weight_ess) = if config.importance_weighted {
            let mut w = vec![0.0; n_rows];
            for i in 0..n_rows {
                let z: Vec<f64> = y.row(i).to_vec();
                let theta = space.from_z(&z)?;
                let lp_prior = space.log_prior(&theta) + space.log_jacobian(&z)?;
                w[i] = (lp_prior - log_proposal[i]).exp();
                if !w[i].is_finite() {
                    w[i] = 0.0;
                }
            }
            for r in 0..=round {
                let block: Vec<f64> = (0..n_rows)
                    .filter(|&i| round_of[i] == r)
                    .map(|i| w[i])
                    .collect();
                if block.is_empty() {
                    continue;
                }
                let cap = quantile(&block, config.clip_quantile)?;
                for i in 0..n_rows {
                    if round_of[i] == r && w[i] > cap {
                        w[i] = cap;
                    }
                }
            }
            let sum: f64 = w.iter().sum();
            let sum_sq: f64 = w.iter().map(|v| v * v).sum();
            let ess = if sum_sq > 0.0 { sum * sum / sum_sq / n_rows as f64 } else { 0.0 };
            (Some(w), Some(ess))
        } else {
            (None, None)
        };

        // capture the proposal box for the round record now, so the
        // proposal's borrow of the old network ends before retraining
        let (record_box_lo, record_box_hi) = match &proposal {
            Proposal::TruncatedBox { lo, hi } => (Some(lo.to_vec()), Some(hi.to_vec())),
            _ => (None, None),
        };

        let mut train_cfg = config.train.clone();
        train_cfg.seed = derive_seed(config.seed, &[TAG_TRAIN, round as u64]);
        mdn = Mdn::new(sim.summary_len(), dim, config.mdn.clone())?;
        let report = mdn.train(x.view(), y.view(), weights.as_deref(), &train_cfg)?;
        warnings.extend(report.warnings.iter().map(|w| format!("round {round}: {w}")));

        rounds.push(RoundRecord {
            round,
            n_sims: slots.len(),
            n_failures,
            epochs_run: report.epochs_run,
            best_val_nll: report.best_val_nll,
            box_lo: record_box_lo,
            box_hi: record_box_hi,
            weight_ess,
        });

        if !config.importance_weighted && round + 1 < config.n_rounds {
            let mut box_rng = derive_rng(config.seed, &[TAG_BOX, round as u64]);
            let z_draws = mdn.sample_conditional(s_obs, config.quantile_draws, &mut box_rng)?;
            current_box = Some(quantile_box(z_draws.view(), config.proposal_quantile)?);
        }
    }

    // final posterior: sample the network at the observed summary, rejecting
    // draws outside the prior support
    let mut final_rng = derive_rng(config.seed, &[TAG_FINAL]);
    let mut accepted: Vec<f64> = Vec::with_capacity(config.final_draws * dim);
    let mut n_accepted = 0;
    let mut attempts = 0;
    let max_attempts = config.support_cap * config.final_draws;
    while n_accepted < config.final_draws {
        let batch = (config.final_draws - n_accepted).max(256);
        if attempts >= max_attempts {
            return Err(EtasError::RejectionExhausted(format!(
                "only {n_accepted}/{} final posterior draws fell inside the prior support \
                 after {attempts} attempts",
                config.final_draws
            )));
        }
        let block = mdn.sample_conditional(s_obs, batch.min(max_attempts - attempts), &mut final_rng)?;
        for row in block.rows() {
            attempts += 1;
            let z: Vec<f64> = row.to_vec();
            let theta = space.from_z(&z)?;
            if space.log_prior(&theta) > f64::NEG_INFINITY {
                accepted.extend_from_slice(&theta);
                n_accepted += 1;
                if n_accepted == config.final_draws {
                    break;
                }
            }
        }
    }
    let support_rate = config.final_draws as f64 / attempts as f64;
    if support_rate < 0.5 {
        warnings.push(format!(
            "only {:.1}% of final posterior draws fell inside the prior support",
            100.0 * support_rate
        ));
    }
    let draws = Array2::from_shape_vec((config.final_draws, dim), accepted)
        .expect("accepted draw bookkeeping");

    Ok(SnpeOutput { draws, mdn, rounds, warnings })
}
