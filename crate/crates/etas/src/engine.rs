//! Shared interfaces for likelihood-free inference.
//!
//! The sequential neural posterior loop (`snpe`) and the ABC baselines
//! (`abc`) are written against two small traits:
//!
//! * [`ParamSpace`]: a prior over a d-dimensional parameter vector together
//!   with a fixed per-coordinate bijection to an unconstrained working space
//!   `z` (monotone increasing in each coordinate), its log-Jacobian, and
//!   truncated prior sampling over axis-aligned z-boxes.
//! * [`Simulator`]: the forward model, mapping a parameter vector and a seed
//!   to a summary-statistic vector, with failures (e.g. runaway cascades)
//!   reported as data rather than panics.
//!
//! [`EtasParamSpace`] and [`EtasSimulator`] wire these up for the temporal
//! ETAS model: parameters are the free components of `(mu, K, alpha, c, p)`
//! under a [`FixedParamMask`], the working space is the log-type transform
//! from [`crate::transform`], and the simulator runs the branching sampler
//! over a fixed window and summarises the catalog.

use crate::error::{EtasError, Result};
use crate::model::EtasParams;
use crate::prior::{FixedParamMask, PriorSpec};
use crate::rng::derive_rng;
use crate::samples::PosteriorSamples;
use crate::simulate::{simulate_branching, SimConfig};
use crate::summaries::{summarize, SummaryConfig};
use crate::transform::ParamTransform;
use ndarray::Array2;
use rand_chacha::ChaCha12Rng;

/// Attempt cap for constraint rejection inside truncated prior draws.
const TRUNCATED_REJECTION_CAP: usize = 100_000;
/// Domain tag for the simulator-internal RNG stream.
const TAG_ENGINE_SIM: u64 = 0x5E;

/// Prior + reparameterisation seen by the inference engines.
///
/// All vectors have length [`ParamSpace::dim`]; `theta` is in natural
/// (constrained) units and `z` in the unconstrained working space. The
/// `theta <-> z` map must be a fixed per-coordinate monotone increasing
/// bijection, so axis-aligned boxes map to axis-aligned boxes.
pub trait ParamSpace: Sync {
    fn dim(&self) -> usize;

    /// Draw from the prior, in natural units.
    fn sample_prior(&self, rng: &mut ChaCha12Rng) -> Result<Vec<f64>>;

    /// Log prior density at `theta` (natural units); `-inf` outside support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    fn to_z(&self, theta: &[f64]) -> Result<Vec<f64>>;

    // not a constructor; the space converts coordinates
    #[allow(clippy::wrong_self_convention)]
    fn from_z(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// `ln |d theta / d z|` at `z`; the prior density of `z` is
    /// `log_prior(from_z(z)) + log_jacobian(z)`.
    fn log_jacobian(&self, z: &[f64]) -> Result<f64>;

    /// Draw from the prior restricted to the axis-aligned box
    /// `[z_lo, z_hi]` in working space.
    fn sample_prior_truncated(
        &self,
        z_lo: &[f64],
        z_hi: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>>;
}

/// Why a forward simulation produced no usable summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimFailure {
    /// The event cap was hit (super- or near-critical parameter draw).
    Truncated,
    /// Any other numerical failure.
    Numerical(String),
}

impl std::fmt::Display for SimFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimFailure::Truncated => write!(f, "event cap exceeded"),
            SimFailure::Numerical(msg) => write!(f, "{msg}"),
        }
    }
}

/// Forward model: parameters in, summary vector out.
pub trait Simulator: Sync {
    fn summary_len(&self) -> usize;

    /// Run the model at `theta` (natural units) with an explicit seed. Two
    /// calls with equal arguments must return identical summaries.
    fn simulate(&self, theta: &[f64], seed: u64) -> std::result::Result<Vec<f64>, SimFailure>;
}

/// [`ParamSpace`] for the ETAS prior under a parameter mask.
#[derive(Debug, Clone)]
pub struct EtasParamSpace {
    prior: PriorSpec,
    transform: ParamTransform,
}

impl EtasParamSpace {
    /// The working space always uses `ln alpha` (not the logit variant);
    /// under a subcritical prior the constraint is enforced by rejection.
    pub fn new(prior: PriorSpec, beta: f64, mask: FixedParamMask) -> Result<Self> {
        prior.mu.validate()?;
        prior.k.validate()?;
        prior.alpha.validate()?;
        prior.c.validate()?;
        prior.p.validate()?;
        let transform = ParamTransform::new(beta, false, mask)?;
        Ok(EtasParamSpace { prior, transform })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn transform(&self) -> &ParamTransform {
        &self.transform
    }

    pub fn mask(&self) -> &FixedParamMask {
        self.transform.mask()
    }

    pub fn beta(&self) -> f64 {
        self.transform.beta()
    }

    fn assemble(&self, theta: &[f64]) -> Result<EtasParams> {
        let full = self.transform.mask().assemble(theta)?;
        Ok(EtasParams {
            mu: full[0],
            k: full[1],
            alpha: full[2],
            c: full[3],
            p: full[4],
            beta: self.transform.beta(),
        })
    }
}

impl ParamSpace for EtasParamSpace {
    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn sample_prior(&self, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        let params = self.prior.sample_masked(self.transform.beta(), self.transform.mask(), rng)?;
        Ok(self.transform.mask().extract(&params.theta()))
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        match self.assemble(theta) {
            Ok(params) => self.prior.logpdf_masked(&params, self.transform.mask()),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn to_z(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let params = self.assemble(theta)?;
        self.transform.to_unconstrained(&params)
    }

    fn from_z(&self, z: &[f64]) -> Result<Vec<f64>> {
        let params = self.transform.from_unconstrained(z)?;
        Ok(self.transform.mask().extract(&params.theta()))
    }

    fn log_jacobian(&self, z: &[f64]) -> Result<f64> {
        self.transform.log_jacobian(z)
    }

    fn sample_prior_truncated(
        &self,
        z_lo: &[f64],
        z_hi: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>> {
        if z_lo.len() != self.dim() || z_hi.len() != self.dim() {
            return Err(EtasError::DimensionMismatch("truncation box dimension".into()));
        }
        // per-coordinate monotone maps: box corners in z become box corners
        // in theta
        let t_lo = self.from_z(z_lo)?;
        let t_hi = self.from_z(z_hi)?;
        let marginals = self.prior.marginals();
        let free = self.transform.mask().free_indices();
        let mut theta = vec![0.0; self.dim()];
        // per-coordinate draws always land in the box; only the joint
        // subcriticality constraint can reject, so keep drawing until met
        for _ in 0..TRUNCATED_REJECTION_CAP {
            for (j, &i) in free.iter().enumerate() {
                theta[j] = marginals[i].sample_truncated(t_lo[j], t_hi[j], rng).ok_or_else(|| {
                    EtasError::RejectionExhausted(format!(
                        "truncation box [{:.4e}, {:.4e}] carries no prior mass in coordinate {i}",
                        t_lo[j], t_hi[j]
                    ))
                })?;
            }
            if self.log_prior(&theta) > f64::NEG_INFINITY {
                return Ok(theta);
            }
        }
        Err(EtasError::RejectionExhausted(format!(
            "no truncated prior draw satisfied the joint constraint in {TRUNCATED_REJECTION_CAP} attempts"
        )))
    }
}

/// [`Simulator`] running the ETAS branching sampler over `[0, T)` and
/// summarising the catalog.
#[derive(Debug, Clone)]
pub struct EtasSimulator {
    mask: FixedParamMask,
    beta: f64,
    m0: f64,
    window_end: f64,
    max_events: usize,
    summary: SummaryConfig,
}

impl EtasSimulator {
    pub fn new(
        mask: FixedParamMask,
        beta: f64,
        m0: f64,
        window_end: f64,
        max_events: usize,
        summary: SummaryConfig,
    ) -> Result<Self> {
        summary.validate()?;
        if !(window_end.is_finite() && window_end > 0.0) {
            return Err(EtasError::InvalidParams(format!(
                "window_end must be positive, got {window_end}"
            )));
        }
        Ok(EtasSimulator { mask, beta, m0, window_end, max_events, summary })
    }

    pub fn summary_config(&self) -> &SummaryConfig {
        &self.summary
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }
}

impl Simulator for EtasSimulator {
    fn summary_len(&self) -> usize {
        self.summary.len()
    }

    fn simulate(&self, theta: &[f64], seed: u64) -> std::result::Result<Vec<f64>, SimFailure> {
        let full = self
            .mask
            .assemble(theta)
            .map_err(|e| SimFailure::Numerical(e.to_string()))?;
        let params = EtasParams {
            mu: full[0],
            k: full[1],
            alpha: full[2],
            c: full[3],
            p: full[4],
            beta: self.beta,
        };
        let config = SimConfig {
            window_end: self.window_end,
            max_events: self.max_events,
            seed,
            record_branching: false,
        };
        let mut rng = derive_rng(seed, &[TAG_ENGINE_SIM]);
        let output = simulate_branching(&params, &config, self.m0, &mut rng).map_err(|e| match e {
            EtasError::Truncated { .. } => SimFailure::Truncated,
            other => SimFailure::Numerical(other.to_string()),
        })?;
        let summary = summarize(&output.catalog, &self.summary)
            .map_err(|e| SimFailure::Numerical(e.to_string()))?;
        Ok(summary.values)
    }
}

/// Expand free-coordinate posterior draws into full 5-column
/// [`PosteriorSamples`], filling masked components with their pinned values.
pub fn free_draws_to_posterior(
    draws: &Array2<f64>,
    mask: &FixedParamMask,
    method: &str,
    seed: u64,
) -> Result<PosteriorSamples> {
    let mut rows = Vec::with_capacity(draws.nrows());
    for row in draws.rows() {
        let free: Vec<f64> = row.to_vec();
        rows.push(mask.assemble(&free)?);
    }
    PosteriorSamples::from_rows(&rows, method, seed)
}
