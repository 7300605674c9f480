//! Distribution diagnostics: kernel MMD, classifier two-sample tests,
//! simulation-based coverage, and compensator-vs-count curves.
//!
//! * [`mmd`]: unbiased U-statistic estimate of the squared maximum mean
//!   discrepancy with a Gaussian kernel on jointly standardized draws,
//!
//!   MMD^2 = mean_{i != j} k(a_i, a_j) + mean_{i != j} k(b_i, b_j)
//!   - 2 mean_{i, j} k(a_i, b_j),
//!
//!   with the kernel bandwidth set to the median pairwise distance of the
//!   pooled sample (median heuristic).
//! * [`c2st`]: classifier two-sample test; a small two-layer perceptron is
//!   trained to tell the sets apart and the 5-fold cross-validated held-out
//!   accuracy is returned. 0.5 means indistinguishable, 1.0 fully separable.
//! * [`coverage`]: simulation-based calibration. Each replicate draws a
//!   ground truth from the prior, synthesizes data, runs inference, and
//!   ranks the truth within the posterior draws; empirical coverage of the
//!   central credible band is compared with the nominal level
//!   `gamma` (coverage > gamma is conservative, < gamma overconfident).
//! * [`compensator_check`]: pointwise mean and 95% band of the compensator
//!   `Lambda(t)` over posterior draws, next to the observed count `N(t)`;
//!   a calibrated fit keeps the observed staircase inside the band.
//!
//! Every diagnostic is a pure function of its inputs plus an explicit seed;
//! replicates and kernel sums parallelize without affecting the result.

use crate::error::{EtasError, Result};
use crate::likelihood::compensator_grid;
use crate::model::{Catalog, EtasParams};
use crate::nn::{Mlp, SgdMomentum, Standardizer};
use crate::rng::{derive_rng, derive_seed};
use crate::samples::PosteriorSamples;
use crate::stats::{median, quantile};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::io::Write;

const TAG_SUBSAMPLE: u64 = 0xA0;
const TAG_FOLD: u64 = 0xA1;
const TAG_INIT: u64 = 0xA2;
const TAG_EPOCH: u64 = 0xA3;
const TAG_REPLICATE: u64 = 0xA4;

/// Point cap for the median-heuristic bandwidth; above this the pooled
/// sample is thinned by a deterministic stride before taking pair distances.
const BANDWIDTH_POINT_CAP: usize = 2048;

/// A set of parameter draws under comparison: rows are draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    draws: Array2<f64>,
    pub label: String,
    pub seed: u64,
    /// Sequential-inference round that produced the draws, when applicable.
    pub round: Option<usize>,
}

impl SampleSet {
    pub fn new(draws: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        if draws.nrows() == 0 || draws.ncols() == 0 {
            return Err(EtasError::Data("a sample set must be a nonempty matrix".into()));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(EtasError::Numerical("non-finite entry in a sample set".into()));
        }
        Ok(SampleSet { draws, label: label.into(), seed: 0, round: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_round(mut self, round: usize) -> Self {
        self.round = Some(round);
        self
    }

    pub fn from_posterior(samples: &PosteriorSamples) -> Result<Self> {
        let mut set = SampleSet::new(samples.draws().clone(), samples.method.clone())?;
        set.seed = samples.seed;
        set.round = samples.round;
        Ok(set)
    }

    pub fn draws(&self) -> ArrayView2<'_, f64> {
        self.draws.view()
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }
}

fn check_same_dim(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(EtasError::DimensionMismatch(format!(
            "sample sets have {} and {} columns",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// maximum mean discrepancy
// ---------------------------------------------------------------------------

/// Result of an [`mmd`] comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdResult {
    /// Unbiased U-statistic estimate of MMD^2 (may be slightly negative).
    pub raw: f64,
    /// `raw` clamped at zero, for reporting.
    pub clamped: f64,
    /// Median-heuristic kernel bandwidth on the standardized scale.
    pub bandwidth: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Squared-distance Gaussian kernel sum between row blocks.
fn kernel_cross_sum(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, inv_two_h2: f64) -> f64 {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut acc = 0.0;
            for j in 0..y.nrows() {
                let yj = y.row(j);
                let d2: f64 =
                    xi.iter().zip(yj.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
                acc += (-d2 * inv_two_h2).exp();
            }
            acc
        })
        .sum()
}

/// Off-diagonal Gaussian kernel sum within one row block.
fn kernel_within_sum(x: ArrayView2<'_, f64>, inv_two_h2: f64) -> f64 {
    let n = x.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                let xj = x.row(j);
                let d2: f64 =
                    xi.iter().zip(xj.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
                acc += (-d2 * inv_two_h2).exp();
            }
            2.0 * acc
        })
        .sum()
}

/// Unbiased Gaussian-kernel MMD^2 between two sample sets.
///
/// Both sets are standardized jointly (pooled mean and SD per column), which
/// makes the estimate invariant under any affine map applied to both sets.
/// The two arguments are ordered canonically before any arithmetic, so the
/// statistic is exactly symmetric: `mmd(a, b)` and `mmd(b, a)` agree bit for
/// bit.
pub fn mmd(a: &SampleSet, b: &SampleSet) -> Result<MmdResult> {
    check_same_dim(a, b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(EtasError::Data("mmd needs at least 2 draws per set".into()));
    }

    // canonical argument order: shorter set first, ties broken by the first
    // differing entry; the formula is symmetric, so this only pins the
    // floating-point summation order
    let swap = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => a
            .draws
            .iter()
            .zip(b.draws.iter())
            .find_map(|(x, y)| match x.total_cmp(y) {
                std::cmp::Ordering::Equal => None,
                ord => Some(ord == std::cmp::Ordering::Greater),
            })
            .unwrap_or(false),
    };
    let (x, y) = if swap { (&b.draws, &a.draws) } else { (&a.draws, &b.draws) };
    let (m, n, d) = (x.nrows(), y.nrows(), x.ncols());

    // pooled standardization
    let mut pooled = Array2::zeros((m + n, d));
    pooled.slice_mut(ndarray::s![..m, ..]).assign(x);
    pooled.slice_mut(ndarray::s![m.., ..]).assign(y);
    let scaler = Standardizer::fit(pooled.view())?;
    scaler.transform(&mut pooled);
    let xs = pooled.slice(ndarray::s![..m, ..]);
    let ys = pooled.slice(ndarray::s![m.., ..]);

    // median-heuristic bandwidth over (possibly strided) pooled points
    let total = m + n;
    let stride = total.div_ceil(BANDWIDTH_POINT_CAP);
    let idx: Vec<usize> = (0..total).step_by(stride).collect();
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a_pos, &i) in idx.iter().enumerate() {
        let ri = pooled.row(i);
        for &j in &idx[(a_pos + 1)..] {
            let rj = pooled.row(j);
            let d2: f64 = ri.iter().zip(rj.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
            dists.push(d2.sqrt());
        }
    }
    let bandwidth = median(&dists)?;
    if bandwidth < 1e-12 {
        return Err(EtasError::Numerical(
            "pooled sample is degenerate: median pairwise distance is 0".into(),
        ));
    }
    let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);

    let term_xx = kernel_within_sum(xs, inv_two_h2) / (m * (m - 1)) as f64;
    let term_yy = kernel_within_sum(ys, inv_two_h2) / (n * (n - 1)) as f64;
    let term_xy = kernel_cross_sum(xs, ys, inv_two_h2) / (m * n) as f64;
    let raw = term_xx + term_yy - 2.0 * term_xy;
    Ok(MmdResult {
        raw,
        clamped: raw.max(0.0),
        bandwidth,
        n_a: a.len(),
        n_b: b.len(),
    })
}

// ---------------------------------------------------------------------------
// classifier two-sample test
// ---------------------------------------------------------------------------

/// Settings for [`c2st`]. The classifier is deliberately small and fixed so
/// scores stay comparable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct C2stConfig {
    pub hidden: usize,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for C2stConfig {
    fn default() -> Self {
        C2stConfig {
            hidden: 32,
            folds: 5,
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl C2stConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(EtasError::Config(
                "hidden, epochs, batch_size must be positive".into(),
            ));
        }
        if self.folds < 2 {
            return Err(EtasError::Config("folds must be at least 2".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EtasError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(EtasError::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of a [`c2st`] comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct C2stResult {
    /// Mean held-out accuracy across folds; 0.5 = indistinguishable.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Draws per class actually used (the larger set is subsampled).
    pub n_per_class: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Classifier two-sample test: 5-fold cross-validated held-out accuracy of a
/// two-layer perceptron trained to distinguish the sets (label a = 0, b = 1).
///
/// Sets of unequal size are balanced by subsampling the larger one with the
/// configured seed; a size ratio outside `[1/2, 2]` is rejected instead,
/// since balancing would discard most of the larger set.
pub fn c2st(a: &SampleSet, b: &SampleSet, config: &C2stConfig) -> Result<C2stResult> {
    config.validate()?;
    check_same_dim(a, b)?;
    if a.len() < 100 || b.len() < 100 {
        return Err(EtasError::Data(format!(
            "c2st needs at least 100 draws per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ratio = a.len() as f64 / b.len() as f64;
    if !(0.5..=2.0).contains(&ratio) {
        return Err(EtasError::Data(format!(
            "sample sets are too imbalanced for c2st (|a|/|b| = {ratio:.2}); \
             subsample to within a factor 2 first"
        )));
    }
    let n = a.len().min(b.len());
    let d = a.dim();

    // balance classes exactly by subsampling the larger set
    let pick = |set: &SampleSet, which: u64| -> Vec<usize> {
        if set.len() == n {
            (0..n).collect()
        } else {
            let mut rng = derive_rng(config.seed, &[TAG_SUBSAMPLE, which]);
            let mut idx: Vec<usize> = (0..set.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n);
            idx.sort_unstable();
            idx
        }
    };
    let idx_a = pick(a, 0);
    let idx_b = pick(b, 1);

    let mut x = Array2::zeros((2 * n, d));
    let mut labels = vec![0.0; 2 * n];
    for (row, &i) in idx_a.iter().enumerate() {
        x.row_mut(row).assign(&a.draws.row(i));
    }
    for (row, &i) in idx_b.iter().enumerate() {
        x.row_mut(n + row).assign(&b.draws.row(i));
        labels[n + row] = 1.0;
    }
    let scaler = Standardizer::fit(x.view())?;
    scaler.transform(&mut x);

    // fold assignment: one shuffle of the pooled rows, contiguous chunks
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.shuffle(&mut derive_rng(config.seed, &[TAG_FOLD]));
    let fold_size = (2 * n).div_ceil(config.folds);

    let net = Mlp::new(vec![d, config.hidden, 1])?;
    let mut fold_accuracies = Vec::with_capacity(config.folds);
    for fold in 0..config.folds {
        let lo = fold * fold_size;
        let hi = ((fold + 1) * fold_size).min(2 * n);
        if lo >= hi {
            return Err(EtasError::Config(format!(
                "fold {fold} is empty: too many folds for {} rows",
                2 * n
            )));
        }
        let test_idx = &order[lo..hi];
        let mut train_idx: Vec<usize> = Vec::with_capacity(2 * n - (hi - lo));
        train_idx.extend_from_slice(&order[..lo]);
        train_idx.extend_from_slice(&order[hi..]);

        let mut rng = derive_rng(config.seed, &[TAG_INIT, fold as u64]);
        let mut params = net.init_params(&mut rng);
        let mut opt = SgdMomentum::new(
            net.n_params(),
            config.learning_rate,
            config.momentum,
            config.weight_decay,
        );
        let mut grad = vec![0.0; net.n_params()];

        for epoch in 0..config.epochs {
            let mut epoch_rng = derive_rng(config.seed, &[TAG_EPOCH, fold as u64, epoch as u64]);
            train_idx.shuffle(&mut epoch_rng);
            for batch in train_idx.chunks(config.batch_size) {
                let mut xb = Array2::zeros((batch.len(), d));
                for (row, &i) in batch.iter().enumerate() {
                    xb.row_mut(row).assign(&x.row(i));
                }
                let cache = net.forward(&params, xb.view())?;
                let logits = cache.output();
                // mean binary cross-entropy: dL/dz = (sigmoid(z) - y) / batch
                let mut dout = Array2::zeros((batch.len(), 1));
                for (row, &i) in batch.iter().enumerate() {
                    dout[[row, 0]] =
                        (sigmoid(logits[[row, 0]]) - labels[i]) / batch.len() as f64;
                }
                grad.fill(0.0);
                net.backward(&params, &cache, &dout, &mut grad)?;
                opt.step(&mut params, &grad);
            }
        }

        let mut xt = Array2::zeros((test_idx.len(), d));
        for (row, &i) in test_idx.iter().enumerate() {
            xt.row_mut(row).assign(&x.row(i));
        }
        let cache = net.forward(&params, xt.view())?;
        let correct = test_idx
            .iter()
            .enumerate()
            .filter(|(row, &i)| {
                let predicted = if cache.output()[[*row, 0]] > 0.0 { 1.0 } else { 0.0 };
                predicted == labels[i]
            })
            .count();
        fold_accuracies.push(correct as f64 / test_idx.len() as f64);
    }

    let accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(C2stResult { accuracy, fold_accuracies, n_per_class: n })
}

// ---------------------------------------------------------------------------
// simulation-based coverage
// ---------------------------------------------------------------------------

/// One end-to-end calibration replicate: draw a ground truth from the prior,
/// synthesize data from it, run inference, and hand back both.
pub trait InferenceRunner: Sync {
    fn dim(&self) -> usize;

    /// Returns `(theta_star, posterior draws)` for the replicate seed.
    fn replicate(&self, seed: u64) -> Result<(Vec<f64>, Array2<f64>)>;
}

/// Settings for [`coverage`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub n_replicates: usize,
    /// Credibility levels, each in (0, 1); sorted internally.
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            n_replicates: 100,
            grid: (1..=19).map(|i| i as f64 * 0.05).collect(),
            seed: 0,
        }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates < 10 {
            return Err(EtasError::Config("n_replicates must be at least 10".into()));
        }
        if self.grid.is_empty() {
            return Err(EtasError::Config("credibility grid must be nonempty".into()));
        }
        if self.grid.iter().any(|g| !(g.is_finite() && *g > 0.0 && *g < 1.0)) {
            return Err(EtasError::Config("credibility levels must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Verdict for one credibility level, from a 95% binomial band around the
/// nominal level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    Conservative,
    Calibrated,
    Overconfident,
}

impl std::fmt::Display for Calibration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Calibration::Conservative => write!(f, "conservative"),
            Calibration::Calibrated => write!(f, "calibrated"),
            Calibration::Overconfident => write!(f, "overconfident"),
        }
    }
}

/// One row of a [`CoverageReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub gamma: f64,
    /// Empirical coverage of the central band, averaged across marginals.
    pub marginal: f64,
    /// Empirical coverage per marginal.
    pub per_marginal: Vec<f64>,
    /// Joint coverage under the min-rank rule (every marginal inside the
    /// central `gamma^(1/d)` band).
    pub joint: f64,
    pub classification: Calibration,
}

/// Result of a [`coverage`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// Replicates that completed.
    pub n_replicates: usize,
    pub n_failed: usize,
    pub warnings: Vec<String>,
}

impl CoverageReport {
    /// Plot-ready CSV: one row per credibility level.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.rows.first().map_or(0, |r| r.per_marginal.len());
        write!(w, "gamma,coverage_marginal,coverage_joint")?;
        for j in 0..d {
            write!(w, ",coverage_marginal_{j}")?;
        }
        writeln!(w, ",classification")?;
        for row in &self.rows {
            write!(w, "{},{},{}", row.gamma, row.marginal, row.joint)?;
            for v in &row.per_marginal {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", row.classification)?;
        }
        Ok(())
    }
}

/// Simulation-based calibration of an inference procedure.
///
/// For each replicate the ground truth's normalized rank within the
/// posterior draws is computed per marginal, `u = (r + 1/2) / (n + 1)`;
/// the truth is covered at level `gamma` when `|u - 1/2| <= gamma/2`
/// (central equal-tailed band). A calibrated procedure covers with
/// probability `gamma` at every level; the joint column applies the same
/// band at level `gamma^(1/d)` to every marginal at once.
pub fn coverage<R: InferenceRunner>(runner: &R, config: &CoverageConfig) -> Result<CoverageReport> {
    config.validate()?;
    let d = runner.dim();
    if d == 0 {
        return Err(EtasError::Config("runner dimension must be positive".into()));
    }
    let mut grid = config.grid.clone();
    grid.sort_by(f64::total_cmp);

    // normalized ranks per replicate (or the failure message)
    let outcomes: Vec<std::result::Result<Vec<f64>, String>> = (0..config.n_replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(config.seed, &[TAG_REPLICATE, rep as u64]);
            let (theta, draws) = runner.replicate(seed).map_err(|e| e.to_string())?;
            if theta.len() != d || draws.ncols() != d {
                return Err(format!(
                    "replicate {rep}: runner returned dimension {} / {}, expected {d}",
                    theta.len(),
                    draws.ncols()
                ));
            }
            if draws.nrows() < 10 {
                return Err(format!(
                    "replicate {rep}: needs at least 10 posterior draws, got {}",
                    draws.nrows()
                ));
            }
            let n = draws.nrows() as f64;
            let mut u = vec![0.0; d];
            for j in 0..d {
                let mut less = 0.0;
                let mut equal = 0.0;
                for &v in draws.column(j) {
                    if v < theta[j] {
                        less += 1.0;
                    } else if v == theta[j] {
                        equal += 1.0;
                    }
                }
                u[j] = (less + 0.5 * equal + 0.5) / (n + 1.0);
            }
            Ok(u)
        })
        .collect();

    let mut ranks: Vec<Vec<f64>> = Vec::with_capacity(config.n_replicates);
    let mut warnings = Vec::new();
    let mut n_failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(u) => ranks.push(u),
            Err(msg) => {
                n_failed += 1;
                if warnings.len() < 5 {
                    warnings.push(format!("skipped replicate: {msg}"));
                }
            }
        }
    }
    if ranks.is_empty() {
        return Err(EtasError::Numerical(format!(
            "all {} coverage replicates failed; first: {}",
            config.n_replicates,
            warnings.first().map_or("(no message)", |w| w.as_str())
        )));
    }
    if n_failed > 0 {
        warnings.push(format!(
            "{n_failed} of {} replicates failed and were skipped",
            config.n_replicates
        ));
    }
    let n_ok = ranks.len();

    let rows = grid
        .iter()
        .map(|&gamma| {
            let joint_band = 0.5 * gamma.powf(1.0 / d as f64);
            let mut per_marginal = vec![0.0; d];
            let mut joint = 0.0;
            for u in &ranks {
                let mut all_in = true;
                for j in 0..d {
                    if (u[j] - 0.5).abs() <= 0.5 * gamma {
                        per_marginal[j] += 1.0;
                    }
                    if (u[j] - 0.5).abs() > joint_band {
                        all_in = false;
                    }
                }
                if all_in {
                    joint += 1.0;
                }
            }
            for v in per_marginal.iter_mut() {
                *v /= n_ok as f64;
            }
            let marginal = per_marginal.iter().sum::<f64>() / d as f64;
            let half_width = 1.96 * (gamma * (1.0 - gamma) / n_ok as f64).sqrt();
            let classification = if marginal > gamma + half_width {
                Calibration::Conservative
            } else if marginal < gamma - half_width {
                Calibration::Overconfident
            } else {
                Calibration::Calibrated
            };
            CoverageRow {
                gamma,
                marginal,
                per_marginal,
                joint: joint / n_ok as f64,
                classification,
            }
        })
        .collect();

    Ok(CoverageReport { rows, n_replicates: n_ok, n_failed, warnings })
}

// ---------------------------------------------------------------------------
// compensator check
// ---------------------------------------------------------------------------

/// Result of a [`compensator_check`]: pointwise posterior band of
/// `Lambda(t)` next to the observed count.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorBands {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// 2.5% pointwise quantile.
    pub lo: Vec<f64>,
    /// 97.5% pointwise quantile.
    pub hi: Vec<f64>,
    /// Observed cumulative count `N(t)` at the grid times.
    pub observed: Vec<f64>,
}

impl CompensatorBands {
    /// Plot-ready CSV: one row per grid time.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mean,lo,hi,observed")?;
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.grid[i], self.mean[i], self.lo[i], self.hi[i], self.observed[i]
            )?;
        }
        Ok(())
    }
}

/// Evaluate the compensator over posterior draws on a time grid and compare
/// with the observed cumulative count.
///
/// Returns the pointwise mean and central 95% band of `Lambda(t)` together
/// with `N(t)`. Each draw's curve is nondecreasing in `t`, so the band edges
/// are as well.
pub fn compensator_check(
    catalog: &Catalog,
    samples: &PosteriorSamples,
    grid: &[f64],
) -> Result<CompensatorBands> {
    if samples.is_empty() {
        return Err(EtasError::Data("compensator check needs at least one draw".into()));
    }
    if grid.is_empty() {
        return Err(EtasError::Config("time grid must be nonempty".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(EtasError::Config("grid times must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EtasError::Config("grid times must be strictly increasing".into()));
    }

    // beta never enters the compensator; any valid placeholder works
    let base = EtasParams::new(1.0, 0.0, 0.0, 1.0, 2.0, 1.0)?;
    let draws = samples.draws();
    let curves: Vec<Vec<f64>> = (0..draws.nrows())
        .into_par_iter()
        .map(|i| {
            let row = draws.row(i);
            let theta = [row[0], row[1], row[2], row[3], row[4]];
            let params = base.with_theta(&theta);
            params.validate()?;
            Ok(compensator_grid(&params, catalog, grid))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_grid = grid.len();
    let mut mean = vec![0.0; n_grid];
    let mut lo = vec![0.0; n_grid];
    let mut hi = vec![0.0; n_grid];
    let mut column = vec![0.0; curves.len()];
    for i in 0..n_grid {
        for (k, curve) in curves.iter().enumerate() {
            column[k] = curve[i];
        }
        mean[i] = column.iter().sum::<f64>() / column.len() as f64;
        lo[i] = quantile(&column, 0.025)?;
        hi[i] = quantile(&column, 0.975)?;
    }

    // observed step function on the (sorted) grid
    let mut observed = vec![0.0; n_grid];
    let times = catalog.times();
    let mut k = 0;
    for (i, &t) in grid.iter().enumerate() {
        while k < times.len() && times[k] <= t {
            k += 1;
        }
        observed[i] = k as f64;
    }

    Ok(CompensatorBands { grid: grid.to_vec(), mean, lo, hi, observed })
}
