//! Summary statistics for simulation-based inference.
//!
//! A catalog on `[0, T)` is reduced to a 39-vector:
//!
//! * `s01` — `ln(1 + n)`;
//! * `s02`-`s04` — inter-event time quantiles at 0.2/0.5/0.9;
//! * `s05` — mean/median ratio of inter-event times;
//! * `s06`-`s23` — temporal Ripley statistics `K(w) = (T/n^2) #{(i,j):
//!   0 < t_j - t_i <= w}` on a geometric window grid over `[0.01, 1]`
//!   followed by a linear grid over `[2, 10]`;
//! * `s24`-`s39` — magnitude-anchored variants `K_T(M, w) = (T/nu^2)
//!   #{(i,j): m_i >= M, 0 < t_j - t_i <= w}` where `nu` counts anchors and
//!   trailing events `j` are unrestricted; thresholds 4.5/5/5.5/6 (outer)
//!   by windows 0.2/0.5/1/3 (inner). At `M = m0` this reduces exactly to
//!   `K(w)`.
//!
//! Degenerate catalogs use fixed sentinels (quantiles `T`, ratio 1, counts
//! 0) so the map stays total. Each vector carries an FNV-1a fingerprint of
//! the grid configuration; mixing vectors from different configurations is
//! detected instead of silently producing nonsense.

use crate::error::{EtasError, Result};
use crate::model::Catalog;
use crate::stats::{mean, median, quantile_sorted};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    /// Windows for the plain Ripley block (geometric then linear by default).
    pub ripley_windows: Vec<f64>,
    /// Magnitude thresholds for the anchored block (outer loop).
    pub mag_thresholds: Vec<f64>,
    /// Windows for the anchored block (inner loop).
    pub anchored_windows: Vec<f64>,
    /// Inter-event quantile levels.
    pub dt_quantiles: Vec<f64>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        let mut ripley: Vec<f64> = (0..9)
            .map(|k| 0.01 * 100.0f64.powf(k as f64 / 8.0))
            .collect();
        ripley.extend((2..=10).map(|w| w as f64));
        SummaryConfig {
            ripley_windows: ripley,
            mag_thresholds: vec![4.5, 5.0, 5.5, 6.0],
            anchored_windows: vec![0.2, 0.5, 1.0, 3.0],
            dt_quantiles: vec![0.2, 0.5, 0.9],
        }
    }
}

impl SummaryConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_increasing = |v: &[f64], what: &str| -> Result<()> {
            if v.is_empty() {
                return Err(EtasError::Config(format!("{what}: empty grid")));
            }
            for w in v.windows(2) {
                if w[0] >= w[1] {
                    return Err(EtasError::Config(format!("{what}: not strictly increasing")));
                }
            }
            if v[0] <= 0.0 || !v.iter().all(|x| x.is_finite()) {
                return Err(EtasError::Config(format!("{what}: values must be finite and > 0")));
            }
            Ok(())
        };
        positive_increasing(&self.ripley_windows, "ripley_windows")?;
        positive_increasing(&self.anchored_windows, "anchored_windows")?;
        if self.mag_thresholds.is_empty() {
            return Err(EtasError::Config("mag_thresholds: empty grid".into()));
        }
        for w in self.mag_thresholds.windows(2) {
            if w[0] >= w[1] {
                return Err(EtasError::Config("mag_thresholds: not strictly increasing".into()));
            }
        }
        if self.dt_quantiles.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(EtasError::Config("dt_quantiles: levels must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Total summary dimension for this configuration.
    pub fn len(&self) -> usize {
        2 + self.dt_quantiles.len()
            + self.ripley_windows.len()
            + self.mag_thresholds.len() * self.anchored_windows.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stable column names, `s01_...` onwards.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        names.push("logn".to_string());
        for &q in &self.dt_quantiles {
            names.push(format!("dt_q{:02}", (q * 100.0).round() as u32));
        }
        names.push("dt_mean_med".to_string());
        for &w in &self.ripley_windows {
            names.push(format!("k_w{}", fmt_short(w)));
        }
        for &m in &self.mag_thresholds {
            for &w in &self.anchored_windows {
                names.push(format!("kt_m{}_w{}", fmt_short(m), fmt_short(w)));
            }
        }
        names
            .into_iter()
            .enumerate()
            .map(|(i, n)| format!("s{:02}_{n}", i + 1))
            .collect()
    }

    /// FNV-1a hash of the canonical grid encoding; stored alongside every
    /// summary vector so configuration mismatches fail loudly.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::new();
        for (tag, grid) in [
            (1u8, &self.ripley_windows),
            (2u8, &self.mag_thresholds),
            (3u8, &self.anchored_windows),
            (4u8, &self.dt_quantiles),
        ] {
            bytes.push(tag);
            bytes.extend((grid.len() as u64).to_le_bytes());
            for &x in grid {
                bytes.extend(x.to_bits().to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Compact window/threshold formatting for column names: four decimals,
/// trailing zeros stripped (`0.0178`, `0.5`, `3`).
fn fmt_short(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub fingerprint: u64,
}

impl SummaryVector {
    /// Error unless `self` was computed under `config`.
    pub fn check_fingerprint(&self, config: &SummaryConfig) -> Result<()> {
        let expected = config.fingerprint();
        if self.fingerprint != expected {
            return Err(EtasError::FingerprintMismatch {
                expected,
                found: self.fingerprint,
            });
        }
        Ok(())
    }
}

/// Ordered-pair count `#{(i,j): 0 < t[j] - t[i] <= w}` for every window in
/// the (ascending) grid, one sliding pointer per window.
fn pair_counts_all(times: &[f64], windows: &[f64]) -> Vec<usize> {
    windows
        .iter()
        .map(|&w| {
            let mut count = 0usize;
            let mut hi = 0usize;
            for i in 0..times.len() {
                if hi < i + 1 {
                    hi = i + 1;
                }
                while hi < times.len() && times[hi] - times[i] <= w {
                    hi += 1;
                }
                count += hi - i - 1;
            }
            count
        })
        .collect()
}

/// Anchored ordered-pair count: anchors `i` with `m_i >= m_thr`, trailing
/// events unrestricted. Returns `(nu, count)`.
fn anchored_pair_count(times: &[f64], mags: &[f64], m_thr: f64, w: f64) -> (usize, usize) {
    let mut nu = 0usize;
    let mut count = 0usize;
    for i in 0..times.len() {
        if mags[i] < m_thr {
            continue;
        }
        nu += 1;
        // binary search for the last event within (t_i, t_i + w]
        let hi = times.partition_point(|&t| t <= times[i] + w);
        count += hi - i - 1;
    }
    (nu, count)
}

/// Reduce a catalog to its summary vector under `config`.
pub fn summarize(catalog: &Catalog, config: &SummaryConfig) -> Result<SummaryVector> {
    config.validate()?;
    let times = catalog.times();
    let mags = catalog.mags();
    let t_end = catalog.window_end();
    let n = times.len();
    let mut values = Vec::with_capacity(config.len());

    values.push((1.0 + n as f64).ln());

    if n < 2 {
        // No inter-event times: pin quantiles at the window length and the
        // mean/median ratio at 1 so the map stays total and finite.
        for _ in &config.dt_quantiles {
            values.push(t_end);
        }
        values.push(1.0);
    } else {
        let dts = catalog.inter_event_times();
        let mut sorted = dts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &q in &config.dt_quantiles {
            values.push(quantile_sorted(&sorted, q));
        }
        let med = median(&dts)?;
        values.push(if med > 0.0 { mean(&dts) / med } else { 1.0 });
    }

    if n == 0 {
        values.extend(std::iter::repeat(0.0).take(config.ripley_windows.len()));
    } else {
        let norm = t_end / (n as f64 * n as f64);
        for count in pair_counts_all(times, &config.ripley_windows) {
            values.push(norm * count as f64);
        }
    }

    for &m_thr in &config.mag_thresholds {
        for &w in &config.anchored_windows {
            let (nu, count) = anchored_pair_count(times, mags, m_thr, w);
            if nu == 0 {
                values.push(0.0);
            } else {
                values.push(t_end / (nu as f64 * nu as f64) * count as f64);
            }
        }
    }

    debug_assert_eq!(values.len(), config.len());
    Ok(SummaryVector { values, fingerprint: config.fingerprint() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EtasParams;
    use crate::simulate::{simulate_branching, SimConfig};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const M0: f64 = 3.0;

    fn disordered_catalog(rng: &mut ChaCha12Rng, n: usize, t_end: f64) -> Catalog {
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..t_end)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mags: Vec<f64> = (0..times.len()).map(|_| M0 - (rng.gen::<f64>()).ln() / 1.5).collect();
        Catalog::new(times, mags, t_end, M0).unwrap()
    }

    /// Fully naive double-loop recomputation of all 39 statistics.
    fn naive_summary(cat: &Catalog, cfg: &SummaryConfig) -> Vec<f64> {
        let (t, m, t_end) = (cat.times(), cat.mags(), cat.window_end());
        let n = t.len();
        let mut out = vec![(1.0 + n as f64).ln()];
        if n < 2 {
            for _ in &cfg.dt_quantiles {
                out.push(t_end);
            }
            out.push(1.0);
        } else {
            let mut dts: Vec<f64> = (1..n).map(|i| t[i] - t[i - 1]).collect();
            dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &q in &cfg.dt_quantiles {
                let h = (dts.len() - 1) as f64 * q;
                let lo = h.floor() as usize;
                let frac = h - lo as f64;
                let v = if lo + 1 < dts.len() {
                    dts[lo] * (1.0 - frac) + dts[lo + 1] * frac
                } else {
                    dts[lo]
                };
                out.push(v);
            }
            let mean0: f64 = dts.iter().sum::<f64>() / dts.len() as f64;
            let med = if dts.len() % 2 == 1 {
                dts[dts.len() / 2]
            } else {
                0.5 * (dts[dts.len() / 2 - 1] + dts[dts.len() / 2])
            };
            out.push(mean0 / med);
        }
        for &w in &cfg.ripley_windows {
            let mut count = 0usize;
            for i in 0..n {
                for j in 0..n {
                    let d = t[j] - t[i];
                    if d > 0.0 && d <= w {
                        count += 1;
                    }
                }
            }
            out.push(if n == 0 { 0.0 } else { t_end / (n as f64 * n as f64) * count as f64 });
        }
        for &mt in &cfg.mag_thresholds {
            for &w in &cfg.anchored_windows {
                let mut nu = 0usize;
                let mut count = 0usize;
                for i in 0..n {
                    if m[i] < mt {
                        continue;
                    }
                    nu += 1;
                    for j in 0..n {
                        let d = t[j] - t[i];
                        if d > 0.0 && d <= w {
                            count += 1;
                        }
                    }
                }
                out.push(if nu == 0 {
                    0.0
                } else {
                    t_end / (nu as f64 * nu as f64) * count as f64
                });
            }
        }
        out
    }

    #[test]
    fn default_config_has_39_columns_with_unique_names() {
        let cfg = SummaryConfig::default();
        assert_eq!(cfg.len(), 39);
        let names = cfg.names();
        assert_eq!(names.len(), 39);
        assert_eq!(names[0], "s01_logn");
        assert_eq!(names[1], "s02_dt_q20");
        assert_eq!(names[4], "s05_dt_mean_med");
        assert_eq!(names[5], "s06_k_w0.01");
        assert_eq!(names[14], "s15_k_w2");
        assert_eq!(names[23], "s24_kt_m4.5_w0.2");
        assert_eq!(names[38], "s39_kt_m6_w3");
        let mut uniq = names.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 39);
    }

    #[test]
    fn matches_naive_double_loop() {
        let cfg = SummaryConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        for _ in 0..5 {
            let n = rng.gen_range(2..400);
            let cat = disordered_catalog(&mut rng, n, 50.0);
            let fast = summarize(&cat, &cfg).unwrap();
            let slow = naive_summary(&cat, &cfg);
            for (a, b) in fast.values.iter().zip(&slow) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
            }
            assert_eq!(fast.values.len(), 39);
        }
    }

    #[test]
    fn clustered_catalog_also_matches_naive() {
        let cfg = SummaryConfig::default();
        let params = EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let cat = simulate_branching(&params, &SimConfig::new(1000.0), M0, &mut rng)
            .unwrap()
            .catalog;
        let fast = summarize(&cat, &cfg).unwrap();
        let slow = naive_summary(&cat, &cfg);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn anchored_at_cutoff_magnitude_reduces_to_plain_ripley() {
        let params = EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let cat = simulate_branching(&params, &SimConfig::new(500.0), M0, &mut rng)
            .unwrap()
            .catalog;
        let n = cat.len();
        for w in [0.3, 1.0, 4.0] {
            let plain = pair_counts_all(cat.times(), &[w])[0];
            let (nu, anchored) = anchored_pair_count(cat.times(), cat.mags(), M0, w);
            assert_eq!(nu, n);
            assert_eq!(plain, anchored);
        }
    }

    #[test]
    fn anchored_hand_example() {
        // anchors: only the m = 5 event at t = 2; one trailing event within
        // 1.5; nu = 1 => K_T = 10 * 1 / 1
        let cat = Catalog::new(vec![1.0, 2.0, 3.0], vec![3.0, 5.0, 3.0], 10.0, M0).unwrap();
        let (nu, count) = anchored_pair_count(cat.times(), cat.mags(), 4.5, 1.5);
        assert_eq!((nu, count), (1, 1));
    }

    #[test]
    fn ripley_hand_example() {
        // pairs within w = 1: (1,2) and (2,3) => K = 10/9 * 2
        let cat = Catalog::new(vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0], 10.0, M0).unwrap();
        let counts = pair_counts_all(cat.times(), &[1.0, 2.0]);
        assert_eq!(counts, vec![2, 3]);
    }

    #[test]
    fn poisson_ripley_is_approximately_linear() {
        // For a homogeneous Poisson process E[K(w)] ~ w (edge effects O(w/T)).
        let params = EtasParams::new(1.0, 0.0, 0.0, 0.5, 2.0, 2.4).unwrap();
        let cfg = SummaryConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let sim_cfg = SimConfig::new(1000.0);
        let n_reps = 200;
        let mut acc = vec![0.0f64; cfg.ripley_windows.len()];
        for _ in 0..n_reps {
            let cat = simulate_branching(&params, &sim_cfg, M0, &mut rng).unwrap().catalog;
            let s = summarize(&cat, &cfg).unwrap();
            for (a, &v) in acc.iter_mut().zip(&s.values[5..5 + cfg.ripley_windows.len()]) {
                *a += v;
            }
        }
        for (&w, &total) in cfg.ripley_windows.iter().zip(&acc) {
            let meank = total / n_reps as f64;
            assert_relative_eq!(meank, w, max_relative = 0.05);
        }
    }

    #[test]
    fn poisson_mean_median_ratio() {
        // Exponential inter-event times: mean/median = 1/ln 2.
        let params = EtasParams::new(1.0, 0.0, 0.0, 0.5, 2.0, 2.4).unwrap();
        let cfg = SummaryConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let mut acc = 0.0;
        let n_reps = 100;
        for _ in 0..n_reps {
            let cat = simulate_branching(&params, &SimConfig::new(2000.0), M0, &mut rng)
                .unwrap()
                .catalog;
            acc += summarize(&cat, &cfg).unwrap().values[4];
        }
        assert_relative_eq!(acc / n_reps as f64, 1.0 / 2f64.ln(), max_relative = 0.03);
    }

    #[test]
    fn sentinels_for_degenerate_catalogs() {
        let cfg = SummaryConfig::default();
        let empty = Catalog::empty(100.0, M0).unwrap();
        let s = summarize(&empty, &cfg).unwrap();
        assert_eq!(s.values[0], 0.0); // ln(1+0)
        assert_eq!(&s.values[1..4], &[100.0, 100.0, 100.0]);
        assert_eq!(s.values[4], 1.0);
        assert!(s.values[5..].iter().all(|&v| v == 0.0));

        let single = Catalog::new(vec![50.0], vec![5.0], 100.0, M0).unwrap();
        let s1 = summarize(&single, &cfg).unwrap();
        assert_relative_eq!(s1.values[0], 2f64.ln());
        assert_eq!(&s1.values[1..4], &[100.0, 100.0, 100.0]);
        // one anchor above 4.5 but nothing after it
        assert!(s1.values[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fingerprint_detects_config_drift() {
        let cfg = SummaryConfig::default();
        let cat = Catalog::new(vec![1.0, 2.0], vec![4.0, 4.0], 10.0, M0).unwrap();
        let s = summarize(&cat, &cfg).unwrap();
        assert!(s.check_fingerprint(&cfg).is_ok());
        let mut other = SummaryConfig::default();
        other.anchored_windows = vec![0.2, 0.5, 1.0, 4.0];
        assert_ne!(cfg.fingerprint(), other.fingerprint());
        match s.check_fingerprint(&other) {
            Err(EtasError::FingerprintMismatch { .. }) => {}
            other => panic!("expected fingerprint mismatch, got {other:?}"),
        }
    }

    #[test]
    fn short_format_is_compact() {
        assert_eq!(fmt_short(2.0), "2");
        assert_eq!(fmt_short(0.2), "0.2");
        assert_eq!(fmt_short(0.1), "0.1");
        assert_eq!(fmt_short(5.5), "5.5");
        assert_eq!(fmt_short(0.01 * 100f64.powf(0.125)), "0.0178");
    }
}
