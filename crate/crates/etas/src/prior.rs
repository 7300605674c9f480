//! Priors over the inferred ETAS vector `theta = (mu, K, alpha, c, p)`.
//!
//! Each component gets an independent 1-d marginal from a small family
//! (uniform, gamma, log-normal); an optional joint subcriticality constraint
//! `K beta < beta - alpha` zeroes the density outside the stable region.
//! The constrained density is deliberately left unnormalised — the truncation
//! constant is parameter-free and cancels everywhere it is used (MCMC ratios,
//! rejection sampling, support checks).

use crate::error::{EtasError, Result};
use crate::model::EtasParams;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

/// Attempt cap for rejection loops over the prior.
pub const PRIOR_REJECTION_CAP: usize = 1_000_000;

/// One-dimensional prior marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    /// Uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Gamma with shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
    /// Log-normal: `ln x ~ N(mu_log, sigma_log^2)`.
    LogNormal { mu_log: f64, sigma_log: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Marginal::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Marginal::LogNormal { mu_log, sigma_log } => mu_log.is_finite() && sigma_log > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(EtasError::InvalidParams(format!("invalid prior marginal {self:?}")))
        }
    }

    /// Support as a closed-open interval (upper bound may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform { lo, hi } => (lo, hi),
            Marginal::Gamma { .. } | Marginal::LogNormal { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if x >= lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::Gamma::new(shape, rate)
                    .expect("validated")
                    .ln_pdf(x)
            }
            Marginal::LogNormal { mu_log, sigma_log } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::LogNormal::new(mu_log, sigma_log)
                    .expect("validated")
                    .ln_pdf(x)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => rng.gen_range(lo..hi),
            Marginal::Gamma { shape, rate } => {
                rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            Marginal::LogNormal { mu_log, sigma_log } => {
                rand_distr::LogNormal::new(mu_log, sigma_log).expect("validated").sample(rng)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Gamma { shape, rate } => {
                statrs::distribution::Gamma::new(shape, rate).expect("validated").cdf(x)
            }
            Marginal::LogNormal { mu_log, sigma_log } => {
                statrs::distribution::LogNormal::new(mu_log, sigma_log)
                    .expect("validated")
                    .cdf(x)
            }
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match *self {
            Marginal::Uniform { lo, hi } => lo + u * (hi - lo),
            Marginal::Gamma { shape, rate } => {
                statrs::distribution::Gamma::new(shape, rate).expect("validated").inverse_cdf(u)
            }
            Marginal::LogNormal { mu_log, sigma_log } => {
                statrs::distribution::LogNormal::new(mu_log, sigma_log)
                    .expect("validated")
                    .inverse_cdf(u)
            }
        }
    }

    /// Exact inverse-CDF draw from the marginal truncated to `[lo, hi]`.
    ///
    /// Returns `None` when the truncation interval carries no numerically
    /// resolvable mass.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
        let (flo, fhi) = (self.cdf(lo), self.cdf(hi));
        if !(fhi > flo) || (fhi - flo) < 1e-300 {
            return None;
        }
        let u: f64 = rng.gen();
        let x = self.inverse_cdf(flo + u * (fhi - flo));
        // inverse_cdf can land a hair outside under rounding; clamp into the box
        Some(x.clamp(lo, hi))
    }
}

/// Independent-marginal prior over `theta` with an optional subcriticality
/// constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu: Marginal,
    pub k: Marginal,
    pub alpha: Marginal,
    pub c: Marginal,
    pub p: Marginal,
    /// Restrict the joint support to `{K beta < beta - alpha}` (implies `alpha < beta`).
    pub subcritical: bool,
}

impl PriorSpec {
    pub fn new(
        mu: Marginal,
        k: Marginal,
        alpha: Marginal,
        c: Marginal,
        p: Marginal,
        subcritical: bool,
    ) -> Result<Self> {
        for m in [&mu, &k, &alpha, &c, &p] {
            m.validate()?;
        }
        Ok(PriorSpec { mu, k, alpha, c, p, subcritical })
    }

    /// Subcritical uniform prior: `mu ~ U(0.05, 0.3)`, `K, alpha, c ~ U(0, 10)`,
    /// `p ~ U(1, 10)`, constrained to `K beta < beta - alpha`.
    pub fn default_subcritical() -> Self {
        PriorSpec {
            mu: Marginal::Uniform { lo: 0.05, hi: 0.3 },
            k: Marginal::Uniform { lo: 0.0, hi: 10.0 },
            alpha: Marginal::Uniform { lo: 0.0, hi: 10.0 },
            c: Marginal::Uniform { lo: 0.0, hi: 10.0 },
            p: Marginal::Uniform { lo: 1.0, hi: 10.0 },
            subcritical: true,
        }
    }

    /// Unconstrained reference prior with a vague gamma background rate:
    /// `mu ~ Gamma(0.1, 0.1)`, `K, alpha, c ~ U(0, 10)`, `p ~ U(1, 10)`.
    pub fn default_reference() -> Self {
        PriorSpec {
            mu: Marginal::Gamma { shape: 0.1, rate: 0.1 },
            subcritical: false,
            ..PriorSpec::default_subcritical()
        }
    }

    pub fn marginals(&self) -> [&Marginal; 5] {
        [&self.mu, &self.k, &self.alpha, &self.c, &self.p]
    }

    /// Whether `theta` lies in the (possibly constrained) support.
    pub fn in_support(&self, params: &EtasParams) -> bool {
        self.logpdf(params) > f64::NEG_INFINITY
    }

    /// Joint log density of `theta` (unnormalised under the subcritical
    /// constraint); `-inf` outside the support.
    pub fn logpdf(&self, params: &EtasParams) -> f64 {
        if self.subcritical && !(params.k * params.beta < params.beta - params.alpha) {
            return f64::NEG_INFINITY;
        }
        let theta = params.theta();
        let mut acc = 0.0;
        for (m, x) in self.marginals().iter().zip(theta) {
            acc += m.logpdf(x);
            if acc == f64::NEG_INFINITY {
                return acc;
            }
        }
        acc
    }

    /// Like [`PriorSpec::logpdf`] but summing only non-fixed components
    /// (the joint constraint still applies to the assembled vector).
    pub fn logpdf_masked(&self, params: &EtasParams, mask: &FixedParamMask) -> f64 {
        if self.subcritical && !(params.k * params.beta < params.beta - params.alpha) {
            return f64::NEG_INFINITY;
        }
        let theta = params.theta();
        let mut acc = 0.0;
        for (i, (m, x)) in self.marginals().iter().zip(theta).enumerate() {
            if mask.is_fixed(i) {
                continue;
            }
            acc += m.logpdf(x);
            if acc == f64::NEG_INFINITY {
                return acc;
            }
        }
        acc
    }

    /// Rejection-sample a draw satisfying the constraint (and basic parameter
    /// domain validity), with a hard attempt cap.
    pub fn sample<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> Result<EtasParams> {
        self.sample_masked(beta, &FixedParamMask::none(), rng)
    }

    /// As [`PriorSpec::sample`], with fixed components pinned to mask values.
    pub fn sample_masked<R: Rng + ?Sized>(
        &self,
        beta: f64,
        mask: &FixedParamMask,
        rng: &mut R,
    ) -> Result<EtasParams> {
        for _ in 0..PRIOR_REJECTION_CAP {
            let mut theta = [0.0; 5];
            for (i, m) in self.marginals().iter().enumerate() {
                theta[i] = match mask.value(i) {
                    Some(v) => v,
                    None => m.sample(rng),
                };
            }
            let params =
                EtasParams { mu: theta[0], k: theta[1], alpha: theta[2], c: theta[3], p: theta[4], beta };
            if params.validate().is_err() {
                continue;
            }
            if self.subcritical && !(params.k * beta < beta - params.alpha) {
                continue;
            }
            return Ok(params);
        }
        Err(EtasError::RejectionExhausted(format!(
            "no prior draw satisfied the constraints in {PRIOR_REJECTION_CAP} attempts"
        )))
    }
}

/// Pins a subset of `theta` components to fixed values, excluding them from
/// the inference dimension. Indices follow [`crate::model::PARAM_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedParamMask {
    fixed: [Option<f64>; 5],
}

impl FixedParamMask {
    pub fn none() -> Self {
        FixedParamMask::default()
    }

    pub fn fix(mut self, index: usize, value: f64) -> Self {
        self.fixed[index] = Some(value);
        self
    }

    pub fn release(mut self, index: usize) -> Self {
        self.fixed[index] = None;
        self
    }

    pub fn is_fixed(&self, index: usize) -> bool {
        self.fixed[index].is_some()
    }

    pub fn value(&self, index: usize) -> Option<f64> {
        self.fixed[index]
    }

    pub fn n_free(&self) -> usize {
        self.fixed.iter().filter(|v| v.is_none()).count()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..5).filter(|&i| self.fixed[i].is_none()).collect()
    }

    /// Assemble a full `theta` from the free subvector.
    pub fn assemble(&self, free: &[f64]) -> Result<[f64; 5]> {
        if free.len() != self.n_free() {
            return Err(EtasError::DimensionMismatch(format!(
                "{} free values supplied, mask has {} free slots",
                free.len(),
                self.n_free()
            )));
        }
        let mut theta = [0.0; 5];
        let mut it = free.iter();
        for i in 0..5 {
            theta[i] = match self.fixed[i] {
                Some(v) => v,
                None => *it.next().unwrap(),
            };
        }
        Ok(theta)
    }

    /// Extract the free subvector from a full `theta`.
    pub fn extract(&self, theta: &[f64; 5]) -> Vec<f64> {
        (0..5).filter(|&i| self.fixed[i].is_none()).map(|i| theta[i]).collect()
    }
}
