//! Latent-branching Gibbs sampler — the exact-posterior reference.
//!
//! Augmenting the catalog with the branching structure `B` (each event is
//! either background, `B_i = 0`, or the direct offspring of an earlier event
//! `j`) makes the complete-data likelihood factorise:
//!
//! ```text
//! P(B_i = 0) ∝ mu,    P(B_i = j) ∝ k(m_j) h(t_i - t_j)
//!
//! L(theta | x, B) = mu^{n0} e^{-mu T}
//!                 x prod_{i: B_i = j} k(m_j) h(t_i - t_j)
//!                 x prod_j e^{-k(m_j) H(T - t_j)}
//! ```
//!
//! The sweep alternates (a) an exact categorical draw of every `B_i`,
//! (b) a `mu` draw — conjugate `Gamma(a + n0, b + T)` for a gamma prior, an
//! exact inverse-CDF draw from the truncated `Gamma(n0 + 1, T)` for a uniform
//! prior, adaptive random-walk MH for anything else — and (c, d) adaptive
//! 2-d random-walk Metropolis blocks for `(K, alpha)` and `(c, p)` in
//! unconstrained coordinates. Proposal covariances and scales adapt during
//! burn-in only and are frozen afterwards, preserving detailed balance for
//! every retained draw.
//!
//! The `B` draw is the `O(n^2)` hot path: rows are walked nearest-parent
//! first with a conservative early stop once the neglected tail is provably
//! below `1e-12` of the row mass (heavy Omori tails make harder kernel
//! truncation unsafe). Each (sweep, event) pair gets its own derived RNG
//! stream, so results are bit-identical for any thread count.

use crate::error::{EtasError, Result};
use crate::model::{
    gutenberg_richter_mle, omori_density, omori_integral, Catalog, EtasParams,
};
use crate::prior::{FixedParamMask, Marginal, PriorSpec};
use crate::rng::{derive_rng, derive_seed};
use crate::samples::PosteriorSamples;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

const TAG_B: u64 = 0xB0;
const TAG_MU: u64 = 0xB1;
const TAG_KALPHA: u64 = 0xB2;
const TAG_CP: u64 = 0xB3;
const TAG_INIT: u64 = 0xB4;

/// Neglected-tail tolerance for the sparse branching row walk.
const ROW_TAIL_TOL: f64 = 1e-12;
/// Catalog size above which a Gibbs run is legal but gets a cost warning.
const SIZE_WARN_THRESHOLD: usize = 20_000;
/// Post-adaptation acceptance rates outside this band trigger warnings.
const ACCEPT_BAND: (f64, f64) = (0.1, 0.6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Retained posterior draws (after burn-in and thinning).
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Sweeps between proposal-covariance refreshes during burn-in.
    pub adaptation_window: usize,
    /// Initial random-walk step for the `mu`, `(K, alpha)` and `(c, p)`
    /// blocks, in transformed coordinates.
    pub initial_step: [f64; 3],
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_samples: 5000,
            burn_in: 5000,
            thinning: 1,
            adaptation_window: 50,
            initial_step: [0.1, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thinning == 0 || self.adaptation_window == 0 {
            return Err(EtasError::Config(
                "n_samples, thinning and adaptation_window must be >= 1".into(),
            ));
        }
        if !self.initial_step.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(EtasError::Config("initial_step entries must be > 0".into()));
        }
        Ok(())
    }
}

/// Sparse per-event parent distributions; row `i` holds `(candidate, prob)`
/// with candidate `0` for background and `j` for the 1-based parent event.
#[derive(Debug, Clone)]
pub struct BranchingProbabilities {
    rows: Vec<Vec<(usize, f64)>>,
}

impl BranchingProbabilities {
    pub fn n_events(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Probability that event `i` is background.
    pub fn background_prob(&self, i: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|(j, _)| *j == 0)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }
}

/// Row walk shared by the probability table and the Gibbs draw: weights for
/// parents of event `i`, nearest first, truncated once the remaining tail is
/// provably below `ROW_TAIL_TOL` of the mass already seen.
///
/// Returns the weights pushed into `buf` (for `j = i-1, i-2, ...`) and the
/// total row mass `mu + sum(buf)` accumulated in walk order.
fn parent_row_walk(
    i: usize,
    times: &[f64],
    kvals: &[f64],
    kmax: f64,
    mu: f64,
    c: f64,
    p: f64,
    buf: &mut Vec<f64>,
) -> f64 {
    buf.clear();
    let mut total = mu;
    if kmax == 0.0 || i == 0 {
        return total;
    }
    let a = (p - 1.0) * c.powf(p - 1.0);
    let ti = times[i];
    let mut j = i;
    while j > 0 {
        j -= 1;
        let shifted = ti - times[j] + c;
        let decay = shifted.powf(-p);
        buf.push(kvals[j] * a * decay);
        total += kvals[j] * a * decay;
        // Amortised tail bound: every remaining delay exceeds the current
        // one, so each remaining weight is at most kmax * a * decay.
        if j & 63 == 0 && j > 0 {
            let remaining = j as f64 * kmax * a * decay;
            if remaining <= ROW_TAIL_TOL * total {
                break;
            }
        }
    }
    total
}

/// Exact categorical parent distributions for every event under `params`.
///
/// Materialises `O(n^2)` entries for clustered catalogs; refused above
/// 5000 events (the Gibbs sampler itself never builds this table).
pub fn branching_probabilities(
    catalog: &Catalog,
    params: &EtasParams,
) -> Result<BranchingProbabilities> {
    params.validate()?;
    if catalog.len() > 5000 {
        return Err(EtasError::InvalidCatalog(format!(
            "branching probability table would hold ~n^2/2 = {:.1e} entries; refusing n > 5000",
            (catalog.len() as f64).powi(2) / 2.0
        )));
    }
    let times = catalog.times();
    let kvals: Vec<f64> = catalog
        .mags()
        .iter()
        .map(|&m| crate::model::productivity(m, catalog.m0(), params.k, params.alpha))
        .collect();
    let kmax = kvals.iter().cloned().fold(0.0f64, f64::max);
    let rows: Vec<Vec<(usize, f64)>> = (0..times.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let total = parent_row_walk(i, times, &kvals, kmax, params.mu, params.c, params.p, buf);
            let mut row = Vec::with_capacity(buf.len() + 1);
            row.push((0usize, params.mu / total));
            // buf holds j = i-1 downwards; store ascending parent order
            for (offset, &w) in buf.iter().enumerate().rev() {
                let j = i - 1 - offset;
                row.push((j + 1, w / total));
            }
            row
        })
        .collect();
    Ok(BranchingProbabilities { rows })
}

/// Sufficient statistics of one branching draw.
#[derive(Debug, Clone, Default)]
struct BranchStats {
    n0: usize,
    n_off: usize,
    /// `sum over offspring of (m_parent - m0)`
    s_parent_mag: f64,
    /// offspring delays `t_i - t_parent`
    delays: Vec<f64>,
}

fn draw_branching(
    times: &[f64],
    mag_excess: &[f64],
    kvals: &[f64],
    mu: f64,
    c: f64,
    p: f64,
    seed: u64,
    sweep: u64,
) -> BranchStats {
    let kmax = kvals.iter().cloned().fold(0.0f64, f64::max);
    let parents: Vec<u32> = (0..times.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let total = parent_row_walk(i, times, kvals, kmax, mu, c, p, buf);
            let mut rng = derive_rng(seed, &[TAG_B, sweep, i as u64]);
            let u: f64 = rng.gen::<f64>() * total;
            if u <= mu || buf.is_empty() {
                return 0u32;
            }
            // Replay the same accumulation order as the total, so the final
            // partial sum reaches `total` exactly and `u` always selects.
            let mut acc = mu;
            for (offset, &w) in buf.iter().enumerate() {
                acc += w;
                if u <= acc {
                    return (i - offset) as u32; // parent j = i-1-offset, 1-based
                }
            }
            (i - (buf.len() - 1)) as u32
        })
        .collect();

    let mut stats = BranchStats::default();
    for (i, &par) in parents.iter().enumerate() {
        if par == 0 {
            stats.n0 += 1;
        } else {
            let j = par as usize - 1;
            stats.n_off += 1;
            stats.s_parent_mag += mag_excess[j];
            stats.delays.push(times[i] - times[j]);
        }
    }
    stats
}

/// Complete-data log-likelihood for a fixed branching assignment
/// (`parents[i]` 1-based, 0 = background). Used by tests and exposed for
/// debugging; the sampler itself only needs the per-block pieces.
pub fn complete_data_loglik(
    params: &EtasParams,
    catalog: &Catalog,
    parents: &[usize],
) -> Result<f64> {
    if parents.len() != catalog.len() {
        return Err(EtasError::DimensionMismatch(format!(
            "{} parent labels for {} events",
            parents.len(),
            catalog.len()
        )));
    }
    let (times, mags, m0, t_end) =
        (catalog.times(), catalog.mags(), catalog.m0(), catalog.window_end());
    let mut n0 = 0usize;
    let mut pair_terms = 0.0;
    for (i, &par) in parents.iter().enumerate() {
        if par == 0 {
            n0 += 1;
        } else {
            if par > i {
                return Err(EtasError::InvalidCatalog(format!(
                    "event {i} assigned to non-causal parent {par}"
                )));
            }
            let j = par - 1;
            let k_par = crate::model::productivity(mags[j], m0, params.k, params.alpha);
            pair_terms += k_par.ln() + omori_density(times[i] - times[j], params.c, params.p).ln();
        }
    }
    let mut integral = params.mu * t_end;
    for (&t, &m) in times.iter().zip(mags) {
        integral += crate::model::productivity(m, m0, params.k, params.alpha)
            * omori_integral(t_end - t, params.c, params.p);
    }
    let mu_term =
        if n0 == 0 { 0.0 } else { n0 as f64 * params.mu.ln() };
    Ok(mu_term + pair_terms - integral)
}

/// `(K, alpha)` conditional log-likelihood given the branching statistics,
/// up to terms constant in `(K, alpha)`.
fn kalpha_loglik(
    k: f64,
    alpha: f64,
    stats: &BranchStats,
    mag_excess: &[f64],
    h_end: &[f64],
) -> f64 {
    let mut integral = 0.0;
    for (&me, &h) in mag_excess.iter().zip(h_end) {
        integral += (alpha * me).exp() * h;
    }
    let k_term = if stats.n_off == 0 { 0.0 } else { stats.n_off as f64 * k.ln() };
    k_term + alpha * stats.s_parent_mag - k * integral
}

/// `(c, p)` conditional log-likelihood given the branching statistics, up to
/// terms constant in `(c, p)`.
fn cp_loglik(
    c: f64,
    p: f64,
    stats: &BranchStats,
    kvals: &[f64],
    times: &[f64],
    t_end: f64,
) -> f64 {
    let mut pair = 0.0;
    if stats.n_off > 0 {
        let mut sum_ln = 0.0;
        for &d in &stats.delays {
            sum_ln += (d + c).ln();
        }
        pair = stats.n_off as f64 * ((p - 1.0).ln() + (p - 1.0) * c.ln()) - p * sum_ln;
    }
    let mut integral = 0.0;
    for (&kv, &t) in kvals.iter().zip(times) {
        integral += kv * omori_integral(t_end - t, c, p);
    }
    pair - integral
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-coordinate transform used by the MH blocks.
#[derive(Debug, Clone, Copy)]
enum CoordMap {
    /// `theta = exp(z)`
    Log,
    /// `theta = beta * sigmoid(z)` (for `alpha` under the subcritical prior)
    ScaledLogit { scale: f64 },
    /// `theta = 1 + exp(z)` (for `p`)
    LogShift1,
}

impl CoordMap {
    fn forward(self, theta: f64) -> f64 {
        match self {
            CoordMap::Log => theta.ln(),
            CoordMap::ScaledLogit { scale } => logit(theta / scale),
            CoordMap::LogShift1 => (theta - 1.0).ln(),
        }
    }

    fn inverse(self, z: f64) -> f64 {
        match self {
            CoordMap::Log => z.exp(),
            CoordMap::ScaledLogit { scale } => scale * sigmoid(z),
            CoordMap::LogShift1 => 1.0 + z.exp(),
        }
    }

    /// `ln |d theta / d z|`
    fn log_jacobian(self, z: f64) -> f64 {
        match self {
            CoordMap::Log | CoordMap::LogShift1 => z,
            CoordMap::ScaledLogit { scale } => scale.ln() - softplus(z) - softplus(-z),
        }
    }
}

/// Adaptive random-walk Metropolis state for a 1- or 2-dimensional block.
struct AdaptiveRw {
    dim: usize,
    log_scale: f64,
    chol: [[f64; 2]; 2],
    // Welford accumulator over burn-in states
    w_n: usize,
    w_mean: [f64; 2],
    w_m2: [[f64; 2]; 2],
    // post-burn-in acceptance bookkeeping
    accepts: usize,
    proposals: usize,
}

impl AdaptiveRw {
    fn new(dim: usize, initial_step: f64) -> Self {
        let mut chol = [[0.0; 2]; 2];
        chol[0][0] = initial_step;
        chol[1][1] = initial_step;
        AdaptiveRw {
            dim,
            log_scale: 0.0,
            chol,
            w_n: 0,
            w_mean: [0.0; 2],
            w_m2: [[0.0; 2]; 2],
            accepts: 0,
            proposals: 0,
        }
    }

    fn propose<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Vec<f64> {
        let s = self.log_scale.exp();
        let e0: f64 = StandardNormal.sample(rng);
        let mut out = z.to_vec();
        if self.dim == 1 {
            out[0] += s * self.chol[0][0] * e0;
        } else {
            let e1: f64 = StandardNormal.sample(rng);
            out[0] += s * self.chol[0][0] * e0;
            out[1] += s * (self.chol[1][0] * e0 + self.chol[1][1] * e1);
        }
        out
    }

    fn observe_state(&mut self, z: &[f64]) {
        self.w_n += 1;
        let n = self.w_n as f64;
        let mut delta = [0.0; 2];
        for d in 0..self.dim {
            delta[d] = z[d] - self.w_mean[d];
            self.w_mean[d] += delta[d] / n;
        }
        for a in 0..self.dim {
            let delta2_a = z[a] - self.w_mean[a];
            for b in 0..self.dim {
                self.w_m2[a][b] += delta[b] * delta2_a;
            }
        }
    }

    /// Refresh the proposal shape from the Welford covariance (burn-in only).
    fn refresh_covariance(&mut self, fallback_step: f64) {
        if self.w_n < 20 * self.dim {
            return;
        }
        let nf = (self.w_n - 1) as f64;
        let scale = 5.6644 / self.dim as f64; // 2.38^2 / d
        let a11 = scale * self.w_m2[0][0] / nf + 1e-9;
        if self.dim == 1 {
            self.chol[0][0] = a11.sqrt();
            return;
        }
        let a21 = scale * self.w_m2[1][0] / nf;
        let a22 = scale * self.w_m2[1][1] / nf + 1e-9;
        if a11 <= 0.0 {
            self.chol = [[fallback_step, 0.0], [0.0, fallback_step]];
            return;
        }
        let l11 = a11.sqrt();
        let l21 = a21 / l11;
        let rest = a22 - l21 * l21;
        if rest <= 0.0 {
            self.chol = [[fallback_step, 0.0], [0.0, fallback_step]];
            return;
        }
        self.chol = [[l11, 0.0], [l21, rest.sqrt()]];
    }

    /// Robbins-Monro step-scale update toward 30% acceptance (burn-in only).
    fn adapt_scale(&mut self, accept_prob: f64, sweep: usize) {
        let gamma = ((sweep + 1) as f64).powf(-0.6);
        self.log_scale += gamma * (accept_prob - 0.3);
    }

    fn acceptance_rate(&self) -> Option<f64> {
        if self.proposals == 0 {
            None
        } else {
            Some(self.accepts as f64 / self.proposals as f64)
        }
    }
}

/// One Metropolis step on a block; returns the (possibly unchanged) state.
#[allow(clippy::too_many_arguments)]
fn mh_step<R: Rng + ?Sized, F: Fn(&[f64]) -> f64>(
    block: &mut AdaptiveRw,
    z: &mut Vec<f64>,
    target: F,
    rng: &mut R,
    adapting: bool,
    sweep: usize,
) {
    let t_cur = target(z);
    let prop = block.propose(z, rng);
    let t_prop = target(&prop);
    let log_ratio = t_prop - t_cur;
    let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    let u: f64 = rng.gen();
    let accepted = t_prop > f64::NEG_INFINITY && u < accept_prob;
    if accepted {
        *z = prop;
    }
    if adapting {
        block.adapt_scale(if t_cur == f64::NEG_INFINITY { 1.0 } else { accept_prob }, sweep);
        block.observe_state(z);
    } else {
        block.proposals += 1;
        if accepted {
            block.accepts += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    pub samples: PosteriorSamples,
    /// Post-burn-in acceptance rates; `None` for exact or fixed blocks.
    pub accept_mu: Option<f64>,
    pub accept_k_alpha: Option<f64>,
    pub accept_c_p: Option<f64>,
    /// Mean background fraction `n0/n` over retained sweeps.
    pub background_fraction: f64,
    pub warnings: Vec<String>,
}

enum MuUpdate {
    Fixed,
    ConjugateGamma { shape0: f64, rate0: f64 },
    TruncatedGamma { lo: f64, hi: f64 },
    RandomWalk,
}

/// Exact draw from `Gamma(shape, rate)` truncated to `[lo, hi]`.
fn truncated_gamma_draw<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Option<f64> {
    let dist = statrs::distribution::Gamma::new(shape, rate).ok()?;
    let flo = if lo <= 0.0 { 0.0 } else { dist.cdf(lo) };
    let fhi = dist.cdf(hi);
    if !(fhi - flo > 1e-300) {
        return None;
    }
    let u: f64 = rng.gen();
    let x = dist.inverse_cdf(flo + u * (fhi - flo));
    Some(x.clamp(lo.max(f64::MIN_POSITIVE), hi))
}

/// Latent-branching Gibbs sampler.
///
/// `beta` is fixed at its closed-form Gutenberg-Richter estimate from the
/// catalog. Masked coordinates stay at their mask values and their update
/// steps are skipped.
pub fn gibbs_sample(
    catalog: &Catalog,
    prior: &PriorSpec,
    config: &McmcConfig,
    mask: &FixedParamMask,
) -> Result<GibbsOutput> {
    config.validate()?;
    if catalog.is_empty() {
        return Err(EtasError::InvalidCatalog("cannot run the sampler on an empty catalog".into()));
    }
    let mut warnings: Vec<String> = Vec::new();
    if catalog.len() > SIZE_WARN_THRESHOLD {
        warnings.push(format!(
            "catalog has {} events; each sweep costs O(n^2) and this run will be slow",
            catalog.len()
        ));
    }
    let beta = gutenberg_richter_mle(catalog)?;
    let times = catalog.times();
    let t_end = catalog.window_end();
    let m0 = catalog.m0();
    let mag_excess: Vec<f64> = catalog.mags().iter().map(|&m| m - m0).collect();

    // --- initial state -----------------------------------------------------
    let mut init_rng = derive_rng(config.seed, &[TAG_INIT]);
    let init = prior.sample_masked(beta, mask, &mut init_rng)?;
    let mut theta = [init.mu, init.k, init.alpha, init.c, init.p];

    // --- block setup -------------------------------------------------------
    let mu_update = if mask.is_fixed(0) {
        MuUpdate::Fixed
    } else {
        match prior.mu {
            Marginal::Gamma { shape, rate } => MuUpdate::ConjugateGamma { shape0: shape, rate0: rate },
            Marginal::Uniform { lo, hi } => MuUpdate::TruncatedGamma { lo, hi },
            Marginal::LogNormal { .. } => MuUpdate::RandomWalk,
        }
    };
    let alpha_map = if prior.subcritical {
        CoordMap::ScaledLogit { scale: beta }
    } else {
        CoordMap::Log
    };
    // (coordinate index, transform) pairs for each MH block
    let ka_coords: Vec<(usize, CoordMap)> = [(1, CoordMap::Log), (2, alpha_map)]
        .into_iter()
        .filter(|(i, _)| !mask.is_fixed(*i))
        .collect();
    let cp_coords: Vec<(usize, CoordMap)> = [(3, CoordMap::Log), (4, CoordMap::LogShift1)]
        .into_iter()
        .filter(|(i, _)| !mask.is_fixed(*i))
        .collect();

    let mut mu_block = AdaptiveRw::new(1, config.initial_step[0]);
    let mut ka_block = AdaptiveRw::new(ka_coords.len().max(1), config.initial_step[1]);
    let mut cp_block = AdaptiveRw::new(cp_coords.len().max(1), config.initial_step[2]);
    let mut mu_rng = derive_rng(config.seed, &[TAG_MU]);
    let mut ka_rng = derive_rng(config.seed, &[TAG_KALPHA]);
    let mut cp_rng = derive_rng(config.seed, &[TAG_CP]);
    let b_seed = derive_seed(config.seed, &[TAG_B]);

    let subcritical_ok = |k: f64, alpha: f64| -> bool {
        !prior.subcritical || (alpha < beta && k * beta < beta - alpha)
    };

    let total_sweeps = config.burn_in + (config.n_samples - 1) * config.thinning + 1;
    let mut rows: Vec<[f64; 5]> = Vec::with_capacity(config.n_samples);
    let mut bg_acc = 0.0f64;
    let mut trunc_gamma_warned = false;

    for sweep in 0..total_sweeps {
        let adapting = sweep < config.burn_in;

        // (a) latent branching structure --------------------------------
        let kvals: Vec<f64> = mag_excess.iter().map(|&me| theta[1] * (theta[2] * me).exp()).collect();
        let stats = draw_branching(
            times,
            &mag_excess,
            &kvals,
            theta[0],
            theta[3],
            theta[4],
            b_seed,
            sweep as u64,
        );

        // (b) background rate -------------------------------------------
        match mu_update {
            MuUpdate::Fixed => {}
            MuUpdate::ConjugateGamma { shape0, rate0 } => {
                let g = rand_distr::Gamma::new(shape0 + stats.n0 as f64, 1.0 / (rate0 + t_end))
                    .map_err(|e| EtasError::Numerical(format!("mu conjugate draw: {e}")))?;
                theta[0] = g.sample(&mut mu_rng).max(f64::MIN_POSITIVE);
            }
            MuUpdate::TruncatedGamma { lo, hi } => {
                match truncated_gamma_draw(stats.n0 as f64 + 1.0, t_end, lo, hi, &mut mu_rng) {
                    Some(draw) => theta[0] = draw,
                    None => {
                        // conditional mass numerically outside the prior box
                        theta[0] = (stats.n0 as f64 / t_end).clamp(lo.max(f64::MIN_POSITIVE), hi);
                        if !trunc_gamma_warned {
                            warnings.push(
                                "mu conditional had no numerical mass inside the uniform prior; \
                                 clamped to the nearest bound"
                                    .into(),
                            );
                            trunc_gamma_warned = true;
                        }
                    }
                }
            }
            MuUpdate::RandomWalk => {
                let n0 = stats.n0 as f64;
                let target = |z: &[f64]| -> f64 {
                    let mu = z[0].exp();
                    if mu <= 0.0 || !mu.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    let lp = prior.mu.logpdf(mu);
                    if lp == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    n0 * z[0] - mu * t_end + lp + z[0]
                };
                let mut z = vec![theta[0].ln()];
                mh_step(&mut mu_block, &mut z, target, &mut mu_rng, adapting, sweep);
                theta[0] = z[0].exp();
                if adapting && sweep % config.adaptation_window == 0 {
                    mu_block.refresh_covariance(config.initial_step[0]);
                }
            }
        }

        // (c) productivity block (K, alpha) ------------------------------
        if !ka_coords.is_empty() {
            let h_end: Vec<f64> =
                times.iter().map(|&t| omori_integral(t_end - t, theta[3], theta[4])).collect();
            let (k_fix, a_fix) = (theta[1], theta[2]);
            let target = |z: &[f64]| -> f64 {
                let mut k = k_fix;
                let mut alpha = a_fix;
                let mut jac = 0.0;
                for (slot, &(coord, map)) in ka_coords.iter().enumerate() {
                    let v = map.inverse(z[slot]);
                    if !v.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    jac += map.log_jacobian(z[slot]);
                    if coord == 1 {
                        k = v;
                    } else {
                        alpha = v;
                    }
                }
                if !subcritical_ok(k, alpha) {
                    return f64::NEG_INFINITY;
                }
                let lp = prior.k.logpdf(k) + prior.alpha.logpdf(alpha);
                if lp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                kalpha_loglik(k, alpha, &stats, &mag_excess, &h_end) + lp + jac
            };
            let mut z: Vec<f64> =
                ka_coords.iter().map(|&(coord, map)| map.forward(theta[coord])).collect();
            mh_step(&mut ka_block, &mut z, target, &mut ka_rng, adapting, sweep);
            for (slot, &(coord, map)) in ka_coords.iter().enumerate() {
                theta[coord] = map.inverse(z[slot]);
            }
            if adapting && sweep % config.adaptation_window == 0 {
                ka_block.refresh_covariance(config.initial_step[1]);
            }
        }

        // (d) kernel block (c, p) ----------------------------------------
        if !cp_coords.is_empty() {
            let kvals_now: Vec<f64> =
                mag_excess.iter().map(|&me| theta[1] * (theta[2] * me).exp()).collect();
            let (c_fix, p_fix) = (theta[3], theta[4]);
            let target = |z: &[f64]| -> f64 {
                let mut c = c_fix;
                let mut p = p_fix;
                let mut jac = 0.0;
                for (slot, &(coord, map)) in cp_coords.iter().enumerate() {
                    let v = map.inverse(z[slot]);
                    if !v.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    jac += map.log_jacobian(z[slot]);
                    if coord == 3 {
                        c = v;
                    } else {
                        p = v;
                    }
                }
                if c <= 0.0 || p <= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let lp = prior.c.logpdf(c) + prior.p.logpdf(p);
                if lp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                cp_loglik(c, p, &stats, &kvals_now, times, t_end) + lp + jac
            };
            let mut z: Vec<f64> =
                cp_coords.iter().map(|&(coord, map)| map.forward(theta[coord])).collect();
            mh_step(&mut cp_block, &mut z, target, &mut cp_rng, adapting, sweep);
            for (slot, &(coord, map)) in cp_coords.iter().enumerate() {
                theta[coord] = map.inverse(z[slot]);
            }
            if adapting && sweep % config.adaptation_window == 0 {
                cp_block.refresh_covariance(config.initial_step[2]);
            }
        }

        // (e) retention ---------------------------------------------------
        if sweep >= config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thinning) {
            rows.push(theta);
            bg_acc += stats.n0 as f64 / catalog.len() as f64;
        }
    }

    let accept_mu = match mu_update {
        MuUpdate::RandomWalk => mu_block.acceptance_rate(),
        _ => None,
    };
    let accept_k_alpha = if ka_coords.is_empty() { None } else { ka_block.acceptance_rate() };
    let accept_c_p = if cp_coords.is_empty() { None } else { cp_block.acceptance_rate() };
    for (name, rate) in [
        ("mu", accept_mu),
        ("(K, alpha)", accept_k_alpha),
        ("(c, p)", accept_c_p),
    ] {
        if let Some(r) = rate {
            if r < ACCEPT_BAND.0 || r > ACCEPT_BAND.1 {
                warnings.push(format!(
                    "{name} block acceptance rate {r:.3} outside [{}, {}]; treat the chain as \
                     suspect and consider longer adaptation",
                    ACCEPT_BAND.0, ACCEPT_BAND.1
                ));
            }
        }
    }

    let samples = PosteriorSamples::from_rows(&rows, "gibbs", config.seed)?;
    Ok(GibbsOutput {
        samples,
        accept_mu,
        accept_k_alpha,
        accept_c_p,
        background_fraction: bg_acc / rows.len() as f64,
        warnings,
    })
}

/// Run `n_chains` independent chains in parallel with derived seeds and pool
/// the draws (chains are concatenated in seed order).
pub fn gibbs_chains(
    catalog: &Catalog,
    prior: &PriorSpec,
    config: &McmcConfig,
    mask: &FixedParamMask,
    n_chains: usize,
) -> Result<Vec<GibbsOutput>> {
    (0..n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut cfg = *config;
            cfg.seed = derive_seed(config.seed, &[0xC4A1, chain as u64]);
            gibbs_sample(catalog, prior, &cfg, mask)
        })
        .collect()
}
