//! Exact temporal log-likelihood, compensator, and maximum likelihood.
//!
//! For a catalog (t_1..t_n, m_1..m_n) on [0, T) the ground-process
//! log-likelihood is
//!
//! ```text
//! l(theta) = sum_i log[ mu + sum_{j<i} k(m_j) h(t_i - t_j) ]
//!            - mu T - sum_i k(m_i) H(T - t_i)
//! ```
//!
//! The magnitude density factorises out of the temporal parameters, so the
//! Gutenberg-Richter `beta` is estimated separately by its closed-form MLE
//! and held fixed.
//!
//! The compensator `Lambda(t) = mu t + sum_{t_i < t} k(m_i) H(t - t_i)`
//! evaluated at the event times ([`transformed_times`]) rescales the process
//! to unit rate: under the generating parameters the increments
//! `tau_i - tau_{i-1}` are iid Exp(1), which is the basis of the residual
//! tests in the diagnostics module.

use crate::error::{EtasError, Result};
use crate::model::{
    gutenberg_richter_mle, omori_density, omori_integral, productivity, Catalog, EtasParams,
};
use crate::opt::{nelder_mead, NelderMeadOptions};
use crate::prior::FixedParamMask;
use crate::transform::ParamTransform;
use rayon::prelude::*;

/// Productivities `k(m_i)` for every event.
fn productivities(catalog: &Catalog, params: &EtasParams) -> Vec<f64> {
    catalog
        .mags()
        .iter()
        .map(|&m| productivity(m, catalog.m0(), params.k, params.alpha))
        .collect()
}

fn log_intensity_at_event(i: usize, times: &[f64], kvals: &[f64], params: &EtasParams) -> f64 {
    let ti = times[i];
    let mut lam = params.mu;
    for j in 0..i {
        lam += kvals[j] * omori_density(ti - times[j], params.c, params.p);
    }
    lam.ln()
}

fn integral_term(catalog: &Catalog, kvals: &[f64], params: &EtasParams) -> f64 {
    let t_end = catalog.window_end();
    let mut acc = params.mu * t_end;
    for (&t, &k) in catalog.times().iter().zip(kvals) {
        acc += k * omori_integral(t_end - t, params.c, params.p);
    }
    acc
}

/// Exact log-likelihood; `O(n^2)` with the event sum parallelised.
///
/// Returns `-inf` (not an error) when some event has zero intensity, e.g.
/// `mu = 0` with an orphan first event — that is a genuinely impossible
/// catalog under `theta`, which samplers must reject.
pub fn log_likelihood(params: &EtasParams, catalog: &Catalog) -> Result<f64> {
    params.validate()?;
    let kvals = productivities(catalog, params);
    let times = catalog.times();
    // Indexed collect + serial sum: bit-identical for any thread count.
    let terms: Vec<f64> = (0..times.len())
        .into_par_iter()
        .map(|i| log_intensity_at_event(i, times, &kvals, params))
        .collect();
    Ok(terms.iter().sum::<f64>() - integral_term(catalog, &kvals, params))
}

/// Single-threaded twin of [`log_likelihood`], used where timing must not be
/// confounded by the thread pool (and to pin down the parallel path in tests).
pub fn log_likelihood_serial(params: &EtasParams, catalog: &Catalog) -> Result<f64> {
    params.validate()?;
    let kvals = productivities(catalog, params);
    let times = catalog.times();
    let sum: f64 =
        (0..times.len()).map(|i| log_intensity_at_event(i, times, &kvals, params)).sum();
    Ok(sum - integral_term(catalog, &kvals, params))
}

/// Compensator `Lambda(t)` at a single time point (history strictly before `t`).
pub fn compensator_at(params: &EtasParams, catalog: &Catalog, t: f64) -> f64 {
    let times = catalog.times();
    let cut = times.partition_point(|&ti| ti < t);
    let mut acc = params.mu * t;
    for j in 0..cut {
        acc += productivity(catalog.mags()[j], catalog.m0(), params.k, params.alpha)
            * omori_integral(t - times[j], params.c, params.p);
    }
    acc
}

/// Compensator evaluated on an arbitrary grid, parallel over grid points.
pub fn compensator_grid(params: &EtasParams, catalog: &Catalog, grid: &[f64]) -> Vec<f64> {
    grid.par_iter().map(|&t| compensator_at(params, catalog, t)).collect()
}

/// Time-rescaled event times `tau_i = Lambda(t_i)`.
pub fn transformed_times(params: &EtasParams, catalog: &Catalog) -> Vec<f64> {
    let times = catalog.times();
    let kvals = productivities(catalog, params);
    (0..times.len())
        .into_par_iter()
        .map(|i| {
            let ti = times[i];
            let mut acc = params.mu * ti;
            for j in 0..i {
                acc += kvals[j] * omori_integral(ti - times[j], params.c, params.p);
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Starting point; a moment-style heuristic is used when `None`.
    pub init: Option<EtasParams>,
    /// Coordinates to hold fixed during the fit.
    pub mask: FixedParamMask,
    pub nm: NelderMeadOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            init: None,
            mask: FixedParamMask::none(),
            nm: NelderMeadOptions { initial_step: 0.25, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: EtasParams,
    pub loglik: f64,
    pub n_evals: usize,
    pub converged: bool,
}

fn default_init(catalog: &Catalog, beta: f64) -> EtasParams {
    let n = catalog.len() as f64;
    let t_end = catalog.window_end();
    let alpha0 = 0.5 * beta;
    // half the events background, branching ratio 0.4
    EtasParams {
        mu: 0.5 * n / t_end,
        k: 0.4 * (beta - alpha0) / beta,
        alpha: alpha0,
        c: 0.1,
        p: 1.5,
        beta,
    }
}

/// Maximum-likelihood fit of `(mu, K, alpha, c, p)` by Nelder-Mead in the
/// unconstrained parameterisation `(ln mu, ln K, ln alpha, ln c, ln(p-1))`.
/// `beta` is set to its closed-form estimate and not optimised; `alpha` is
/// not constrained below `beta`, so a supercritical MLE is reported as-is.
pub fn mle(catalog: &Catalog, opts: &MleOptions) -> Result<MleFit> {
    if catalog.len() < 5 {
        return Err(EtasError::InvalidCatalog(format!(
            "need at least 5 events for a likelihood fit, got {}",
            catalog.len()
        )));
    }
    let beta = gutenberg_richter_mle(catalog)?;
    let transform = ParamTransform::new(beta, false, opts.mask.clone())?;
    let init = opts.init.clone().unwrap_or_else(|| default_init(catalog, beta));
    let z0 = transform.to_unconstrained(&init)?;

    let objective = |z: &[f64]| -> f64 {
        match transform.from_unconstrained(z) {
            Ok(params) => match log_likelihood(&params, catalog) {
                Ok(ll) if ll.is_finite() => -ll,
                _ => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let res = nelder_mead(objective, &z0, &opts.nm);
    if !res.fx.is_finite() {
        return Err(EtasError::Numerical("likelihood not finite anywhere near the start".into()));
    }
    let params = transform.from_unconstrained(&res.x)?;
    Ok(MleFit { params, loglik: -res.fx, n_evals: res.n_evals, converged: res.converged })
}
