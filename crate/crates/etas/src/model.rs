//! Core temporal ETAS model: parameter and catalog types plus the scalar
//! kernels everything else is built from.
//!
//! The conditional intensity of the marked process is
//!
//! ```text
//! lambda(t, m | H_t) = [ mu + sum_{i: t_i < t} k(m_i) h(t - t_i) ] f(m)
//!
//! k(m) = K exp(alpha (m - M0))                    (productivity)
//! h(t) = c^(p-1) (p-1) (t + c)^(-p)               (normalised Omori-Utsu decay)
//! f(m) = beta exp(-beta (m - M0))                 (Gutenberg-Richter density)
//! ```
//!
//! `h` integrates to one, so `K` is the expected direct-offspring count of a
//! magnitude-`M0` event and the mean offspring count over magnitudes — the
//! branching ratio — is `n_b = K beta / (beta - alpha)`, finite only for
//! `alpha < beta` and subcritical when `n_b < 1`.
//!
//! The magnitude scale `beta` is treated as fixed within inference (estimated
//! once from the observed catalog by [`gutenberg_richter_mle`]); the inferred
//! vector is `theta = (mu, K, alpha, c, p)`.

use crate::error::{EtasError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// ETAS parameters: the inferred vector `(mu, K, alpha, c, p)` plus the fixed
/// magnitude scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtasParams {
    /// Background (immigrant) rate, events per unit time; `mu >= 0`.
    pub mu: f64,
    /// Productivity scale; `K >= 0`.
    pub k: f64,
    /// Productivity magnitude sensitivity; `alpha >= 0`.
    pub alpha: f64,
    /// Omori offset time; `c > 0`.
    pub c: f64,
    /// Omori decay exponent; `p > 1`.
    pub p: f64,
    /// Gutenberg-Richter scale (natural-log base); `beta > 0`.
    pub beta: f64,
}

impl EtasParams {
    pub fn new(mu: f64, k: f64, alpha: f64, c: f64, p: f64, beta: f64) -> Result<Self> {
        let params = EtasParams { mu, k, alpha, c, p, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.k, self.alpha, self.c, self.p, self.beta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(EtasError::InvalidParams(format!("non-finite entry in {self:?}")));
        }
        if self.mu < 0.0 || self.k < 0.0 || self.alpha < 0.0 {
            return Err(EtasError::InvalidParams(format!(
                "mu, K, alpha must be >= 0, got ({}, {}, {})",
                self.mu, self.k, self.alpha
            )));
        }
        if self.c <= 0.0 {
            return Err(EtasError::InvalidParams(format!("c must be > 0, got {}", self.c)));
        }
        if self.p <= 1.0 {
            return Err(EtasError::InvalidParams(format!("p must be > 1, got {}", self.p)));
        }
        if self.beta <= 0.0 {
            return Err(EtasError::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// The inferred parameter vector in its canonical order.
    pub fn theta(&self) -> [f64; 5] {
        [self.mu, self.k, self.alpha, self.c, self.p]
    }

    /// Replace the inferred vector, keeping `beta`.
    pub fn with_theta(&self, theta: &[f64; 5]) -> Self {
        EtasParams {
            mu: theta[0],
            k: theta[1],
            alpha: theta[2],
            c: theta[3],
            p: theta[4],
            beta: self.beta,
        }
    }
}

/// Canonical names of the inferred parameters, in `theta()` order.
pub const PARAM_NAMES: [&str; 5] = ["mu", "k", "alpha", "c", "p"];

/// Normalised Omori-Utsu decay density `h(t) = c^(p-1) (p-1) (t+c)^(-p)` for `t >= 0`.
pub fn omori_density(t: f64, c: f64, p: f64) -> f64 {
    debug_assert!(t >= 0.0 && c > 0.0 && p > 1.0);
    c.powf(p - 1.0) * (p - 1.0) * (t + c).powf(-p)
}

/// Antiderivative `H(t) = integral_0^t h = 1 - (c / (t+c))^(p-1)`, in `[0, 1)`.
pub fn omori_integral(t: f64, c: f64, p: f64) -> f64 {
    debug_assert!(t >= 0.0 && c > 0.0 && p > 1.0);
    if t == f64::INFINITY {
        return 1.0;
    }
    1.0 - (c / (t + c)).powf(p - 1.0)
}

/// Inverse of [`omori_integral`]: the delay `d` with `H(d) = q`, for `q` in `[0, 1)`.
///
/// `d = c ((1-q)^(-1/(p-1)) - 1)`; used for exact inverse-CDF sampling of
/// offspring delays.
pub fn omori_quantile(q: f64, c: f64, p: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&q));
    c * ((1.0 - q).powf(-1.0 / (p - 1.0)) - 1.0)
}

/// Utsu productivity `k(m) = K exp(alpha (m - m0))`.
pub fn productivity(m: f64, m0: f64, k: f64, alpha: f64) -> f64 {
    k * (alpha * (m - m0)).exp()
}

/// Branching ratio `n_b = K beta / (beta - alpha)`; requires `alpha < beta`.
pub fn branching_ratio(params: &EtasParams) -> Result<f64> {
    if params.alpha >= params.beta {
        return Err(EtasError::InvalidParams(format!(
            "branching ratio undefined: alpha = {} >= beta = {}",
            params.alpha, params.beta
        )));
    }
    Ok(params.k * params.beta / (params.beta - params.alpha))
}

/// Draw one Gutenberg-Richter magnitude `m0 + Exp(beta)`.
pub fn sample_magnitude<R: Rng + ?Sized>(rng: &mut R, beta: f64, m0: f64) -> f64 {
    debug_assert!(beta > 0.0);
    // Inverse CDF of Exp(beta); 1 - u in (0, 1] keeps the draw finite.
    let u: f64 = rng.gen();
    m0 - (1.0 - u).ln() / beta
}

/// Closed-form magnitude-scale MLE `beta_hat = n / sum_i (m_i - m0)`.
pub fn gutenberg_richter_mle(catalog: &Catalog) -> Result<f64> {
    if catalog.is_empty() {
        return Err(EtasError::InvalidCatalog(
            "cannot estimate beta from an empty catalog".into(),
        ));
    }
    let excess: f64 = catalog.mags().iter().map(|m| m - catalog.m0()).sum();
    if excess <= 0.0 {
        return Err(EtasError::Numerical(
            "all magnitudes equal m0; beta MLE diverges".into(),
        ));
    }
    Ok(catalog.len() as f64 / excess)
}

/// An observed or simulated marked point pattern on `[0, T]`.
///
/// Invariants enforced at construction: times strictly increasing and inside
/// `[0, window_end]`, magnitudes finite and `>= m0`, equal lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    times: Vec<f64>,
    mags: Vec<f64>,
    window_end: f64,
    m0: f64,
}

impl Catalog {
    pub fn new(times: Vec<f64>, mags: Vec<f64>, window_end: f64, m0: f64) -> Result<Self> {
        if !(window_end.is_finite() && window_end > 0.0) {
            return Err(EtasError::InvalidCatalog(format!(
                "window_end must be finite and > 0, got {window_end}"
            )));
        }
        if !m0.is_finite() {
            return Err(EtasError::InvalidCatalog(format!("m0 must be finite, got {m0}")));
        }
        if times.len() != mags.len() {
            return Err(EtasError::InvalidCatalog(format!(
                "{} times vs {} magnitudes",
                times.len(),
                mags.len()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || !(0.0..=window_end).contains(&t) {
                return Err(EtasError::InvalidCatalog(format!(
                    "time[{i}] = {t} outside [0, {window_end}]"
                )));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(EtasError::InvalidCatalog(format!(
                    "times must be strictly increasing: time[{}] = {} -> time[{i}] = {t}",
                    i - 1,
                    times[i - 1]
                )));
            }
        }
        for (i, &m) in mags.iter().enumerate() {
            if !m.is_finite() || m < m0 {
                return Err(EtasError::InvalidCatalog(format!(
                    "magnitude[{i}] = {m} below m0 = {m0} or non-finite"
                )));
            }
        }
        Ok(Catalog { times, mags, window_end, m0 })
    }

    pub fn empty(window_end: f64, m0: f64) -> Result<Self> {
        Catalog::new(Vec::new(), Vec::new(), window_end, m0)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mags(&self) -> &[f64] {
        &self.mags
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// Inter-event times `t_{i+1} - t_i` (length `len() - 1`).
    pub fn inter_event_times(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn omori_density_frozen_values() {
        // h(0) = (p-1)/c; h(1; c=0.5, p=2) = 0.5 * 1 * 1.5^-2 = 2/9.
        assert_relative_eq!(omori_density(0.0, 0.5, 2.0), 2.0, max_relative = 1e-14);
        assert_relative_eq!(omori_density(1.0, 0.5, 2.0), 2.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn omori_integral_frozen_values() {
        assert_eq!(omori_integral(0.0, 0.5, 2.0), 0.0);
        assert_relative_eq!(omori_integral(1.0, 0.5, 2.0), 2.0 / 3.0, max_relative = 1e-14);
        assert_eq!(omori_integral(f64::INFINITY, 0.5, 2.0), 1.0);
        // Large-but-finite horizon approaches 1 from below.
        let h = omori_integral(1e12, 0.5, 2.0);
        assert!(h < 1.0 && h > 1.0 - 1e-9);
    }

    /// Composite Simpson quadrature of the density on `[a, b]`.
    fn simpson_panel(a: f64, b: f64, c: f64, p: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = omori_density(a, c, p) + omori_density(b, c, p);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * omori_density(a + i as f64 * h, c, p);
        }
        acc * h / 3.0
    }

    /// Quadrature oracle for the closed form; the density has a spike of
    /// width ~`c` at zero, so resolve `[0, 20c]` separately.
    fn simpson_omori(t: f64, c: f64, p: f64, n: usize) -> f64 {
        let split = (20.0 * c).min(t);
        let mut acc = simpson_panel(0.0, split, c, p, n);
        if split < t {
            acc += simpson_panel(split, t, c, p, n);
        }
        acc
    }

    proptest! {
        #[test]
        fn omori_integral_matches_quadrature(
            t in 0.01f64..50.0,
            c in 0.05f64..5.0,
            p in 1.05f64..6.0,
        ) {
            let exact = omori_integral(t, c, p);
            let quad = simpson_omori(t, c, p, 8192);
            prop_assert!((exact - quad).abs() <= 1e-6 * exact.max(1e-3),
                "H({t};{c};{p}) = {exact} vs quadrature {quad}");
        }

        #[test]
        fn omori_integral_monotone_in_unit_interval(
            t1 in 0.0f64..100.0,
            dt in 0.001f64..100.0,
            c in 0.05f64..5.0,
            p in 1.05f64..6.0,
        ) {
            let a = omori_integral(t1, c, p);
            let b = omori_integral(t1 + dt, c, p);
            prop_assert!((0.0..1.0).contains(&a));
            prop_assert!(b > a);
        }

        #[test]
        fn omori_quantile_inverts_integral(
            q in 0.0f64..0.999,
            c in 0.05f64..5.0,
            p in 1.05f64..6.0,
        ) {
            let d = omori_quantile(q, c, p);
            prop_assert!(d >= 0.0);
            let back = omori_integral(d, c, p);
            prop_assert!((back - q).abs() < 1e-9, "H(H^-1({q})) = {back}");
        }
    }

    #[test]
    fn productivity_frozen_value() {
        // K exp(alpha * 1) = 0.2 e^1.5
        assert_relative_eq!(
            productivity(4.0, 3.0, 0.2, 1.5),
            0.896337814067613,
            epsilon = 1e-12
        );
        assert_eq!(productivity(3.0, 3.0, 0.2, 1.5), 0.2);
    }

    #[test]
    fn branching_ratio_examples() {
        let p = EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).unwrap();
        assert_relative_eq!(branching_ratio(&p).unwrap(), 0.48 / 0.9, max_relative = 1e-14);
        // K = 0.375 puts K beta exactly at beta - alpha: critical.
        let crit = EtasParams { k: 0.375, ..p };
        assert_relative_eq!(branching_ratio(&crit).unwrap(), 1.0, epsilon = 1e-14);
        let sup = EtasParams { alpha: 2.4, ..p };
        assert!(branching_ratio(&sup).is_err());
    }

    #[test]
    fn magnitude_sampling_moments() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(20_240_501);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_magnitude(&mut rng, 2.4, 3.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // E[m] = m0 + 1/beta = 3.41666..., MC s.e. ~ 0.0013
        assert_relative_eq!(mean, 3.0 + 1.0 / 2.4, epsilon = 5e-3);
        let tail = draws.iter().filter(|&&m| m >= 4.0).count() as f64 / n as f64;
        // P(m >= 4) = exp(-2.4) = 0.090718, MC s.e. ~ 0.0009
        assert_relative_eq!(tail, (-2.4f64).exp(), epsilon = 4e-3);
        assert!(draws.iter().all(|&m| m >= 3.0));
    }

    #[test]
    fn gutenberg_richter_mle_closed_form() {
        let cat = Catalog::new(vec![1.0, 2.0, 3.0], vec![3.5, 4.0, 3.1], 10.0, 3.0).unwrap();
        assert_relative_eq!(gutenberg_richter_mle(&cat).unwrap(), 3.0 / 1.6, max_relative = 1e-14);
        assert!(gutenberg_richter_mle(&Catalog::empty(10.0, 3.0).unwrap()).is_err());
    }

    #[test]
    fn gutenberg_richter_mle_recovers_generator() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let n = 50_000;
        let mut times = Vec::with_capacity(n);
        let mut mags = Vec::with_capacity(n);
        for i in 0..n {
            times.push((i as f64 + 0.5) * 1e-3);
            mags.push(sample_magnitude(&mut rng, 2.4, 3.0));
        }
        let cat = Catalog::new(times, mags, 60.0, 3.0).unwrap();
        // beta_hat is asymptotically normal with s.d. beta/sqrt(n) ~ 0.011.
        assert_relative_eq!(gutenberg_richter_mle(&cat).unwrap(), 2.4, epsilon = 0.04);
    }

    #[test]
    fn params_validation_rejects_bad_domains() {
        assert!(EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).is_ok());
        assert!(EtasParams::new(-0.1, 0.2, 1.5, 0.5, 2.0, 2.4).is_err());
        assert!(EtasParams::new(0.2, 0.2, 1.5, 0.0, 2.0, 2.4).is_err());
        assert!(EtasParams::new(0.2, 0.2, 1.5, 0.5, 1.0, 2.4).is_err());
        assert!(EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 0.0).is_err());
        assert!(EtasParams::new(f64::NAN, 0.2, 1.5, 0.5, 2.0, 2.4).is_err());
    }

    #[test]
    fn catalog_validation() {
        assert!(Catalog::new(vec![0.0, 1.0], vec![3.0, 3.5], 2.0, 3.0).is_ok());
        // unsorted
        assert!(Catalog::new(vec![1.0, 0.5], vec![3.0, 3.5], 2.0, 3.0).is_err());
        // tie
        assert!(Catalog::new(vec![1.0, 1.0], vec![3.0, 3.5], 2.0, 3.0).is_err());
        // outside window
        assert!(Catalog::new(vec![1.0, 2.5], vec![3.0, 3.5], 2.0, 3.0).is_err());
        // below m0
        assert!(Catalog::new(vec![1.0, 1.5], vec![3.0, 2.5], 2.0, 3.0).is_err());
        // length mismatch
        assert!(Catalog::new(vec![1.0], vec![3.0, 3.5], 2.0, 3.0).is_err());
        let c = Catalog::new(vec![0.5, 1.0, 2.0], vec![3.0, 3.5, 3.1], 2.0, 3.0).unwrap();
        assert_eq!(c.inter_event_times(), vec![0.5, 1.0]);
    }
}
