//! Small statistical utilities shared by the summaries, diagnostics and test
//! suites: linear-interpolation quantiles, MAD, Kolmogorov-Smirnov tests and
//! chi-square goodness-of-fit p-values.

use crate::error::{EtasError, Result};
use statrs::distribution::ContinuousCDF;

/// Linear-interpolation quantile (the "type 7" convention: `h = (n-1) q`).
/// Input need not be sorted; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(EtasError::DimensionMismatch("quantile of empty slice".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(EtasError::InvalidParams(format!("quantile level {q} outside [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    Ok(quantile_sorted(&sorted, q))
}

/// As [`quantile`] but assumes `sorted` is ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Raw median absolute deviation (no normal-consistency factor).
pub fn mad(values: &[f64]) -> Result<f64> {
    let med = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

/// Asymptotic Kolmogorov survival function
/// `Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let sqrt_n = n_eff.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// One-sample KS test of `sample` against a CDF. Returns `(D, p)`.
pub fn ks_test_cdf<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(EtasError::DimensionMismatch("KS test on empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS input"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok((d, ks_pvalue(d, n)))
}

/// Two-sample KS test. Returns `(D, p)`; ties are handled by walking the
/// pooled order statistics.
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(EtasError::DimensionMismatch("KS test on empty sample".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).expect("NaN in KS input"));
    xb.sort_by(|x, y| x.partial_cmp(y).expect("NaN in KS input"));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= t {
            i += 1;
        }
        while j < xb.len() && xb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok((d, ks_pvalue(d, n_eff)))
}

/// Chi-square goodness-of-fit p-value from observed and expected bin counts.
/// Degrees of freedom default to `bins - 1` minus `extra_constraints`.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], extra_constraints: usize) -> Result<(f64, f64)> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(EtasError::DimensionMismatch(format!(
            "chi-square bins: {} observed vs {} expected",
            observed.len(),
            expected.len()
        )));
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            return Err(EtasError::Numerical(format!("non-positive expected bin count {e}")));
        }
        stat += (o - e) * (o - e) / e;
    }
    let dof = observed.len().saturating_sub(1 + extra_constraints).max(1) as f64;
    let p = 1.0 - statrs::distribution::ChiSquared::new(dof)
        .map_err(|e| EtasError::Numerical(format!("chi-square dof {dof}: {e}")))?
        .cdf(stat);
    Ok((stat, p.clamp(0.0, 1.0)))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

/// Two-sided binomial normal-approximation bounds `p0 +/- z sqrt(p0(1-p0)/n)`,
/// clamped to `[0, 1]`.
pub fn binomial_bounds(p0: f64, n: usize, z: f64) -> (f64, f64) {
    let se = (p0 * (1.0 - p0) / n as f64).sqrt();
    ((p0 - z * se).max(0.0), (p0 + z * se).min(1.0))
}
