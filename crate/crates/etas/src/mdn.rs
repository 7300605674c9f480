//! Mixture density network: a conditional density estimator q(y | x) built
//! from a tanh trunk (see `nn`) whose final linear layer emits, per mixture
//! component k:
//!
//!   - a logit g_k (softmax over k gives the weight pi_k),
//!   - a mean mu_k in R^d,
//!   - an upper-triangular Cholesky factor U_k of the *precision* matrix,
//!     with softplus applied to the diagonal entries so U_kk > 0.
//!
//! The component log-density is then
//!
//!   ln N_k(y) = -d/2 ln(2 pi) + sum_j ln U_jj - |U_k (y - mu_k)|^2 / 2,
//!
//! and the training loss is the (optionally importance-weighted) mean of
//! -ln sum_k pi_k N_k(y). Gradients are assembled by hand:
//!
//!   dL/dg_k  = pi_k - gamma_k,
//!   dL/dmu_k = -gamma_k U_k' z_k,
//!   dL/dU_k  = gamma_k (z_k d_k' - diag(1/U_jj))   (upper triangle),
//!
//! with z_k = U_k (y - mu_k), d_k = y - mu_k, and responsibilities
//! gamma_k = pi_k N_k / sum_j pi_j N_j; the diagonal additionally chains
//! through the softplus. Inputs and targets are standardised on the training
//! split, and reported densities are converted back to raw target units.
//!
//! Training is plain SGD with momentum, early stopping on a validation
//! split, and a halve-the-learning-rate restart if the loss goes non-finite.
//! All randomness is derived from one seed and batch gradients are reduced
//! in a fixed chunk order, so results are independent of thread count.

use crate::error::{EtasError, Result};
use crate::nn::{Mlp, SgdMomentum, Standardizer};
use crate::rng::derive_rng;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Rows per parallel gradient chunk; chunk results are folded in index
/// order so the reduction is deterministic.
const GRAD_CHUNK: usize = 64;
/// Floor for the precision-Cholesky diagonal after the softplus, keeping
/// 1/U_jj finite in the gradient even for badly scaled components.
const DIAG_FLOOR: f64 = 1e-12;
/// A component whose mean weight falls below this is reported as collapsed.
const COLLAPSE_TOL: f64 = 1e-6;

const TAG_SPLIT: u64 = 0xD0;
const TAG_INIT: u64 = 0xD1;
const TAG_EPOCH: u64 = 0xD2;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Architecture of the mixture head and trunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdnConfig {
    pub n_components: usize,
    pub hidden: Vec<usize>,
}

impl Default for MdnConfig {
    fn default() -> Self {
        MdnConfig { n_components: 8, hidden: vec![64, 64] }
    }
}

impl MdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(EtasError::Config("n_components must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(EtasError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Optimisation settings for [`Mdn::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    /// Fraction of rows held out for validation (at least one row).
    pub val_fraction: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// How many halve-the-learning-rate restarts to allow after a
    /// non-finite loss before giving up.
    pub max_lr_restarts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 300,
            patience: 20,
            val_fraction: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            max_lr_restarts: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EtasError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(EtasError::Config(
                "batch_size, max_epochs, and patience must be positive".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(EtasError::Config("val_fraction must lie in (0, 0.5]".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(EtasError::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(EtasError::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// What happened during one [`Mdn::train`] call.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub final_train_nll: f64,
    pub lr_restarts: usize,
    pub train_nll: Vec<f64>,
    pub val_nll: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Serialisable snapshot; `serde_json` prints floats in shortest
/// round-trip form, so saving and loading reproduces the weights exactly.
#[derive(Serialize, Deserialize)]
struct MdnFile {
    input_dim: usize,
    target_dim: usize,
    config: MdnConfig,
    params: Vec<f64>,
    x_scaler: Standardizer,
    y_scaler: Standardizer,
}

/// A trained (or trainable) mixture density network q(y | x).
#[derive(Debug, Clone)]
pub struct Mdn {
    input_dim: usize,
    target_dim: usize,
    config: MdnConfig,
    trunk: Mlp,
    params: Vec<f64>,
    x_scaler: Standardizer,
    y_scaler: Standardizer,
}

/// Per-row workspace reused across the batch.
struct RowScratch {
    /// softplus-transformed Cholesky entries, all components (K * tri).
    u: Vec<f64>,
    /// z_k = U_k (y - mu_k), all components (K * d).
    z: Vec<f64>,
    /// y - mu_k, all components (K * d).
    delta: Vec<f64>,
    log_pi: Vec<f64>,
    log_n: Vec<f64>,
}

impl RowScratch {
    fn new(n_comp: usize, d: usize) -> Self {
        let tri = d * (d + 1) / 2;
        RowScratch {
            u: vec![0.0; n_comp * tri],
            z: vec![0.0; n_comp * d],
            delta: vec![0.0; n_comp * d],
            log_pi: vec![0.0; n_comp],
            log_n: vec![0.0; n_comp],
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Negative log mixture density of one target row, plus (optionally) its
/// gradient with respect to the head outputs, written into `dhead` with the
/// same layout as `head`.
fn mixture_row_loss(
    head: &[f64],
    y: &[f64],
    n_comp: usize,
    d: usize,
    scratch: &mut RowScratch,
    mut dhead: Option<&mut [f64]>,
) -> f64 {
    let tri = d * (d + 1) / 2;
    let (g, rest) = head.split_at(n_comp);
    let (mu_all, u_raw_all) = rest.split_at(n_comp * d);

    let g_lse = log_sum_exp(g);
    for k in 0..n_comp {
        scratch.log_pi[k] = g[k] - g_lse;
    }

    for k in 0..n_comp {
        let mu = &mu_all[k * d..(k + 1) * d];
        let raw = &u_raw_all[k * tri..(k + 1) * tri];
        let u = &mut scratch.u[k * tri..(k + 1) * tri];
        let delta = &mut scratch.delta[k * d..(k + 1) * d];
        let z = &mut scratch.z[k * d..(k + 1) * d];

        for j in 0..d {
            delta[j] = y[j] - mu[j];
        }
        let mut log_det = 0.0;
        let mut idx = 0;
        for a in 0..d {
            let diag = softplus(raw[idx]).max(DIAG_FLOOR);
            u[idx] = diag;
            log_det += diag.ln();
            idx += 1;
            for _ in (a + 1)..d {
                u[idx] = raw[idx];
                idx += 1;
            }
        }
        let mut quad = 0.0;
        let mut row_start = 0;
        for a in 0..d {
            let mut za = 0.0;
            for (off, &db) in delta.iter().enumerate().skip(a) {
                za += u[row_start + off - a] * db;
            }
            z[a] = za;
            quad += za * za;
            row_start += d - a;
        }
        scratch.log_n[k] = -0.5 * d as f64 * LN_2PI + log_det - 0.5 * quad;
    }

    let mut t = scratch.log_n.clone();
    for k in 0..n_comp {
        t[k] += scratch.log_pi[k];
    }
    let log_q = log_sum_exp(&t);
    let loss = -log_q;

    if let Some(dhead) = dhead.as_deref_mut() {
        let (dg, drest) = dhead.split_at_mut(n_comp);
        let (dmu_all, du_all) = drest.split_at_mut(n_comp * d);
        for k in 0..n_comp {
            let gamma = if log_q.is_finite() { (t[k] - log_q).exp() } else { 0.0 };
            let pi = scratch.log_pi[k].exp();
            dg[k] = pi - gamma;

            let u = &scratch.u[k * tri..(k + 1) * tri];
            let raw = &u_raw_all[k * tri..(k + 1) * tri];
            let delta = &scratch.delta[k * d..(k + 1) * d];
            let z = &scratch.z[k * d..(k + 1) * d];
            let dmu = &mut dmu_all[k * d..(k + 1) * d];
            let du = &mut du_all[k * tri..(k + 1) * tri];

            // dL/dmu_b = -gamma * (U' z)_b
            let mut row_start = 0;
            for a in 0..d {
                for b in a..d {
                    dmu[b] -= gamma * u[row_start + b - a] * z[a];
                }
                row_start += d - a;
            }
            // dL/dU_ab = gamma (z_a delta_b - [a==b]/U_aa), diagonal chained
            // through the softplus.
            let mut idx = 0;
            for a in 0..d {
                for b in a..d {
                    let mut grad = gamma * z[a] * delta[b];
                    if a == b {
                        grad -= gamma / u[idx];
                        grad *= sigmoid(raw[idx]);
                    }
                    du[idx] = grad;
                    idx += 1;
                }
            }
        }
    }
    loss
}

fn gather_rows(src: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&src.row(i));
    }
    out
}

impl Mdn {
    pub fn new(input_dim: usize, target_dim: usize, config: MdnConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || target_dim == 0 {
            return Err(EtasError::Config("MDN dimensions must be positive".into()));
        }
        let head = Self::head_dim_for(config.n_components, target_dim);
        let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&config.hidden);
        sizes.push(head);
        let trunk = Mlp::new(sizes)?;
        let params = vec![0.0; trunk.n_params()];
        Ok(Mdn {
            input_dim,
            target_dim,
            config,
            trunk,
            params,
            x_scaler: Standardizer::identity(input_dim),
            y_scaler: Standardizer::identity(target_dim),
        })
    }

    fn head_dim_for(n_comp: usize, d: usize) -> usize {
        n_comp + n_comp * d + n_comp * d * (d + 1) / 2
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn n_params(&self) -> usize {
        self.trunk.n_params()
    }

    #[cfg(test)]
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mean negative log-likelihood and its gradient over a standardized
    /// batch, with optional per-row importance weights (normalised within
    /// the batch, so scaling all weights by a constant changes nothing).
    fn nll_and_grad(
        &self,
        params: &[f64],
        x_std: ArrayView2<'_, f64>,
        y_std: ArrayView2<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<f64>)> {
        let n = x_std.nrows();
        if n == 0 {
            return Err(EtasError::InvalidParams("empty batch".into()));
        }
        let (k, d) = (self.config.n_components, self.target_dim);
        let ranges: Vec<(usize, usize)> =
            (0..n).step_by(GRAD_CHUNK).map(|s| (s, (s + GRAD_CHUNK).min(n))).collect();
        let chunks: Vec<(f64, f64, Vec<f64>)> = ranges
            .par_iter()
            .map(|&(lo, hi)| -> Result<(f64, f64, Vec<f64>)> {
                let xs = x_std.slice(ndarray::s![lo..hi, ..]);
                let ys = y_std.slice(ndarray::s![lo..hi, ..]);
                let cache = self.trunk.forward(params, xs)?;
                let head = cache.output();
                let mut dout = Array2::zeros(head.raw_dim());
                let mut scratch = RowScratch::new(k, d);
                let mut loss_sum = 0.0;
                let mut w_sum = 0.0;
                for r in 0..(hi - lo) {
                    let w = weights.map_or(1.0, |ws| ws[lo + r]);
                    let hrow = head.row(r);
                    let yrow = ys.row(r);
                    let loss = mixture_row_loss(
                        hrow.as_slice().expect("row-major head"),
                        yrow.as_slice().expect("row-major targets"),
                        k,
                        d,
                        &mut scratch,
                        Some(dout.row_mut(r).as_slice_mut().expect("row-major dout")),
                    );
                    loss_sum += w * loss;
                    w_sum += w;
                    if w != 1.0 {
                        dout.row_mut(r).mapv_inplace(|v| v * w);
                    }
                }
                let mut grad = vec![0.0; params.len()];
                self.trunk.backward(params, &cache, &dout, &mut grad)?;
                Ok((loss_sum, w_sum, grad))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut loss_sum = 0.0;
        let mut w_sum = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (ls, ws, g) in &chunks {
            loss_sum += ls;
            w_sum += ws;
            for (acc, &gi) in grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        let inv = 1.0 / w_sum;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss_sum * inv, grad))
    }

    /// Mean negative log-likelihood over a standardized batch (no gradient).
    fn nll(
        &self,
        params: &[f64],
        x_std: ArrayView2<'_, f64>,
        y_std: ArrayView2<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<f64> {
        let n = x_std.nrows();
        let (k, d) = (self.config.n_components, self.target_dim);
        let ranges: Vec<(usize, usize)> =
            (0..n).step_by(GRAD_CHUNK).map(|s| (s, (s + GRAD_CHUNK).min(n))).collect();
        let partials: Vec<(f64, f64)> = ranges
            .par_iter()
            .map(|&(lo, hi)| -> Result<(f64, f64)> {
                let cache = self.trunk.forward(params, x_std.slice(ndarray::s![lo..hi, ..]))?;
                let head = cache.output();
                let mut scratch = RowScratch::new(k, d);
                let mut loss_sum = 0.0;
                let mut w_sum = 0.0;
                for r in 0..(hi - lo) {
                    let w = weights.map_or(1.0, |ws| ws[lo + r]);
                    let loss = mixture_row_loss(
                        head.row(r).as_slice().expect("row-major head"),
                        y_std.row(lo + r).as_slice().expect("row-major targets"),
                        k,
                        d,
                        &mut scratch,
                        None,
                    );
                    loss_sum += w * loss;
                    w_sum += w;
                }
                Ok((loss_sum, w_sum))
            })
            .collect::<Result<Vec<_>>>()?;
        let (ls, ws) = partials.iter().fold((0.0, 0.0), |(a, b), &(l, w)| (a + l, b + w));
        Ok(ls / ws)
    }

    /// Fit the network to `(x, y)` pairs by maximum likelihood (optionally
    /// importance-weighted). Standardizers are refit on the training split
    /// each call and the parameters are freshly initialised from
    /// `config.seed`, so repeated calls do not depend on earlier state.
    pub fn train(
        &mut self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        weights: Option<&[f64]>,
        config: &TrainConfig,
    ) -> Result<TrainReport> {
        config.validate()?;
        let n = x.nrows();
        if y.nrows() != n {
            return Err(EtasError::DimensionMismatch(format!(
                "inputs have {n} rows but targets have {}",
                y.nrows()
            )));
        }
        if x.ncols() != self.input_dim || y.ncols() != self.target_dim {
            return Err(EtasError::DimensionMismatch(format!(
                "expected {}-dim inputs and {}-dim targets, got {} and {}",
                self.input_dim,
                self.target_dim,
                x.ncols(),
                y.ncols()
            )));
        }
        if n < 8 {
            return Err(EtasError::InvalidParams(format!(
                "need at least 8 training pairs, got {n}"
            )));
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(EtasError::DimensionMismatch("weights length".into()));
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(EtasError::InvalidParams(
                    "importance weights must be finite, non-negative, and not all zero".into(),
                ));
            }
        }

        // Shuffled split; validation gets at least one row, training keeps
        // enough to fit the standardizers.
        let mut order: Vec<usize> = (0..n).collect();
        let mut split_rng = derive_rng(config.seed, &[TAG_SPLIT]);
        for i in (1..n).rev() {
            let j = split_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 4);
        let (val_idx, train_idx) = order.split_at(n_val);

        let train_x_raw = gather_rows(x, train_idx);
        let train_y_raw = gather_rows(y, train_idx);
        let x_scaler = Standardizer::fit(train_x_raw.view())?;
        let y_scaler = Standardizer::fit(train_y_raw.view())?;
        let mut train_x = train_x_raw;
        let mut train_y = train_y_raw;
        x_scaler.transform(&mut train_x);
        y_scaler.transform(&mut train_y);
        let mut val_x = gather_rows(x, val_idx);
        let mut val_y = gather_rows(y, val_idx);
        x_scaler.transform(&mut val_x);
        y_scaler.transform(&mut val_y);
        let train_w: Option<Vec<f64>> =
            weights.map(|w| train_idx.iter().map(|&i| w[i]).collect());
        let val_w: Option<Vec<f64>> = weights.map(|w| val_idx.iter().map(|&i| w[i]).collect());

        let mut params = self.trunk.init_params(&mut derive_rng(config.seed, &[TAG_INIT, 0]));
        let mut opt = SgdMomentum::new(
            params.len(),
            config.learning_rate,
            config.momentum,
            config.weight_decay,
        );

        let n_train = train_idx.len();
        let mut best_params: Option<Vec<f64>> = None;
        let mut best_val = f64::INFINITY;
        let mut best_epoch = 0;
        let mut patience_left = config.patience;
        let mut restarts = 0;
        let mut warnings = Vec::new();
        let mut train_trace = Vec::new();
        let mut val_trace = Vec::new();

        let mut epoch = 0;
        while epoch < config.max_epochs {
            let mut batch_order: Vec<usize> = (0..n_train).collect();
            let mut epoch_rng = derive_rng(config.seed, &[TAG_EPOCH, epoch as u64]);
            for i in (1..n_train).rev() {
                let j = epoch_rng.gen_range(0..=i);
                batch_order.swap(i, j);
            }

            let mut blew_up = false;
            for batch in batch_order.chunks(config.batch_size) {
                let bx = gather_rows(train_x.view(), batch);
                let by = gather_rows(train_y.view(), batch);
                let bw: Option<Vec<f64>> =
                    train_w.as_ref().map(|w| batch.iter().map(|&i| w[i]).collect());
                let (loss, grad) = self.nll_and_grad(&params, bx.view(), by.view(), bw.as_deref())?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    blew_up = true;
                    break;
                }
                opt.step(&mut params, &grad);
            }

            if blew_up {
                restarts += 1;
                if restarts > config.max_lr_restarts {
                    return Err(EtasError::Numerical(format!(
                        "training loss stayed non-finite after {} learning-rate restarts",
                        config.max_lr_restarts
                    )));
                }
                opt.lr *= 0.5;
                opt.reset();
                params = match &best_params {
                    Some(p) => p.clone(),
                    None => self
                        .trunk
                        .init_params(&mut derive_rng(config.seed, &[TAG_INIT, restarts as u64])),
                };
                warnings.push(format!(
                    "non-finite training loss; restarted with learning rate {:.3e}",
                    opt.lr
                ));
                continue;
            }

            let train_nll = self.nll(&params, train_x.view(), train_y.view(), train_w.as_deref())?;
            let val_nll = self.nll(&params, val_x.view(), val_y.view(), val_w.as_deref())?;
            train_trace.push(train_nll);
            val_trace.push(val_nll);

            if val_nll.is_finite() && val_nll < best_val - 1e-12 {
                best_val = val_nll;
                best_epoch = epoch;
                best_params = Some(params.clone());
                patience_left = config.patience;
            } else {
                patience_left -= 1;
                if patience_left == 0 {
                    break;
                }
            }
            epoch += 1;
        }

        let best_params = best_params.ok_or_else(|| {
            EtasError::Numerical("training never reached a finite validation loss".into())
        })?;
        self.params = best_params;
        self.x_scaler = x_scaler;
        self.y_scaler = y_scaler;

        let mean_pi = self.mean_component_weights(val_x.view())?;
        if mean_pi.iter().cloned().fold(f64::INFINITY, f64::min) < COLLAPSE_TOL {
            warnings.push(format!(
                "mixture component collapsed: mean weights {:?}",
                mean_pi.iter().map(|p| format!("{p:.2e}")).collect::<Vec<_>>()
            ));
        }

        let final_train_nll = train_trace.last().copied().unwrap_or(f64::NAN);
        Ok(TrainReport {
            epochs_run: train_trace.len(),
            best_epoch,
            best_val_nll: best_val,
            final_train_nll,
            lr_restarts: restarts,
            train_nll: train_trace,
            val_nll: val_trace,
            warnings,
        })
    }

    /// Mean mixture weights over a standardized input batch.
    fn mean_component_weights(&self, x_std: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let k = self.config.n_components;
        let cache = self.trunk.forward(&self.params, x_std)?;
        let head = cache.output();
        let mut mean = vec![0.0; k];
        for row in head.rows() {
            let g = &row.as_slice().expect("row-major head")[..k];
            let lse = log_sum_exp(g);
            for (m, &gi) in mean.iter_mut().zip(g) {
                *m += (gi - lse).exp();
            }
        }
        let n = head.nrows() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(mean)
    }

    /// Log density ln q(y | x) in raw target units.
    pub fn log_prob(&self, x_raw: &[f64], y_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.input_dim || y_raw.len() != self.target_dim {
            return Err(EtasError::DimensionMismatch(format!(
                "expected {}-dim input and {}-dim target, got {} and {}",
                self.input_dim,
                self.target_dim,
                x_raw.len(),
                y_raw.len()
            )));
        }
        let xs = self.x_scaler.transform_row(x_raw);
        let ys = self.y_scaler.transform_row(y_raw);
        let x = Array2::from_shape_vec((1, self.input_dim), xs).expect("shape");
        let cache = self.trunk.forward(&self.params, x.view())?;
        let head = cache.output();
        let mut scratch = RowScratch::new(self.config.n_components, self.target_dim);
        let loss = mixture_row_loss(
            head.row(0).as_slice().expect("row-major head"),
            &ys,
            self.config.n_components,
            self.target_dim,
            &mut scratch,
            None,
        );
        Ok(-loss + self.y_scaler.log_det_jacobian())
    }

    /// Log densities for many (x, y) pairs, in raw target units.
    pub fn log_prob_batch(
        &self,
        x_raw: ArrayView2<'_, f64>,
        y_raw: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        if x_raw.nrows() != y_raw.nrows() {
            return Err(EtasError::DimensionMismatch("row counts differ".into()));
        }
        if x_raw.ncols() != self.input_dim || y_raw.ncols() != self.target_dim {
            return Err(EtasError::DimensionMismatch("column counts".into()));
        }
        let n = x_raw.nrows();
        let (k, d) = (self.config.n_components, self.target_dim);
        let jac = self.y_scaler.log_det_jacobian();
        let ranges: Vec<(usize, usize)> =
            (0..n).step_by(GRAD_CHUNK).map(|s| (s, (s + GRAD_CHUNK).min(n))).collect();
        let chunks: Vec<Vec<f64>> = ranges
            .par_iter()
            .map(|&(lo, hi)| -> Result<Vec<f64>> {
                let mut xs = x_raw.slice(ndarray::s![lo..hi, ..]).to_owned();
                self.x_scaler.transform(&mut xs);
                let cache = self.trunk.forward(&self.params, xs.view())?;
                let head = cache.output();
                let mut scratch = RowScratch::new(k, d);
                let mut out = Vec::with_capacity(hi - lo);
                for r in 0..(hi - lo) {
                    let ys = self
                        .y_scaler
                        .transform_row(y_raw.row(lo + r).as_slice().expect("row-major targets"));
                    let loss = mixture_row_loss(
                        head.row(r).as_slice().expect("row-major head"),
                        &ys,
                        k,
                        d,
                        &mut scratch,
                        None,
                    );
                    out.push(-loss + jac);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Draw `n` samples from q(. | x), in raw target units.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        x_raw: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if x_raw.len() != self.input_dim {
            return Err(EtasError::DimensionMismatch("input dimension".into()));
        }
        let (k, d) = (self.config.n_components, self.target_dim);
        let tri = d * (d + 1) / 2;
        let xs = self.x_scaler.transform_row(x_raw);
        let x = Array2::from_shape_vec((1, self.input_dim), xs).expect("shape");
        let cache = self.trunk.forward(&self.params, x.view())?;
        let head_row = cache.output().row(0);
        let head = head_row.as_slice().expect("row-major head");
        let (g, rest) = head.split_at(k);
        let (mu_all, u_raw_all) = rest.split_at(k * d);
        let lse = log_sum_exp(g);
        let pi: Vec<f64> = g.iter().map(|&gi| (gi - lse).exp()).collect();

        // softplus the diagonals once
        let mut u_all = u_raw_all.to_vec();
        for comp in 0..k {
            let u = &mut u_all[comp * tri..(comp + 1) * tri];
            let mut idx = 0;
            for a in 0..d {
                u[idx] = softplus(u[idx]).max(DIAG_FLOOR);
                idx += d - a;
            }
        }

        let mut out = Array2::zeros((n, d));
        let mut xi = vec![0.0; d];
        let mut v = vec![0.0; d];
        for mut row in out.rows_mut() {
            let uni: f64 = rng.gen();
            let mut cum = 0.0;
            let mut comp = k - 1;
            for (j, &p) in pi.iter().enumerate() {
                cum += p;
                if uni < cum {
                    comp = j;
                    break;
                }
            }
            let mu = &mu_all[comp * d..(comp + 1) * d];
            let u = &u_all[comp * tri..(comp + 1) * tri];
            for x in xi.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            // solve U v = xi by back-substitution; then y = mu + v has
            // covariance (U' U)^{-1}
            for a in (0..d).rev() {
                let row_start = a * d - a * (a + 1) / 2 + a;
                let mut s = xi[a];
                for b in (a + 1)..d {
                    s -= u[row_start + b - a] * v[b];
                }
                v[a] = s / u[row_start];
            }
            for j in 0..d {
                row[j] = mu[j] + v[j];
            }
            let raw = self.y_scaler.inverse_row(row.as_slice().expect("row-major out"));
            for (dst, src) in row.iter_mut().zip(raw) {
                *dst = src;
            }
        }
        Ok(out)
    }

    /// Mixture mean and covariance of q(. | x), in raw target units.
    pub fn conditional_moments(&self, x_raw: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
        if x_raw.len() != self.input_dim {
            return Err(EtasError::DimensionMismatch("input dimension".into()));
        }
        let (k, d) = (self.config.n_components, self.target_dim);
        let tri = d * (d + 1) / 2;
        let xs = self.x_scaler.transform_row(x_raw);
        let x = Array2::from_shape_vec((1, self.input_dim), xs).expect("shape");
        let cache = self.trunk.forward(&self.params, x.view())?;
        let head_row = cache.output().row(0);
        let head = head_row.as_slice().expect("row-major head");
        let (g, rest) = head.split_at(k);
        let (mu_all, u_raw_all) = rest.split_at(k * d);
        let lse = log_sum_exp(g);

        let mut mean = vec![0.0; d];
        let mut second = Array2::zeros((d, d));
        for comp in 0..k {
            let pi = (g[comp] - lse).exp();
            let mu = &mu_all[comp * d..(comp + 1) * d];
            let raw = &u_raw_all[comp * tri..(comp + 1) * tri];
            let mut u = raw.to_vec();
            let mut idx = 0;
            for a in 0..d {
                u[idx] = softplus(u[idx]).max(DIAG_FLOOR);
                idx += d - a;
            }
            // columns of U^{-1} by back-substitution on unit vectors
            let mut uinv = Array2::zeros((d, d));
            for col in 0..d {
                for a in (0..d).rev() {
                    let row_start = a * d - a * (a + 1) / 2 + a;
                    let mut s = if a == col { 1.0 } else { 0.0 };
                    for b in (a + 1)..d {
                        s -= u[row_start + b - a] * uinv[[b, col]];
                    }
                    uinv[[a, col]] = s / u[row_start];
                }
            }
            let sigma = uinv.dot(&uinv.t());
            for i in 0..d {
                mean[i] += pi * mu[i];
                for j in 0..d {
                    second[[i, j]] += pi * (sigma[[i, j]] + mu[i] * mu[j]);
                }
            }
        }
        let mut cov = second;
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] -= mean[i] * mean[j];
            }
        }
        // map back to raw units
        let sd = &self.y_scaler.sd;
        let mean_raw: Vec<f64> =
            mean.iter().zip(sd).zip(&self.y_scaler.mean).map(|((&m, &s), &c)| m * s + c).collect();
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] *= sd[i] * sd[j];
            }
        }
        Ok((mean_raw, cov))
    }

    /// Freshly initialised flat parameter vector of the right length for
    /// [`Mdn::nll_and_grad_check`]. External verification surface, not part
    /// of the stable API.
    #[doc(hidden)]
    pub fn init_params_check<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.trunk.init_params(rng)
    }

    /// Training objective (mean NLL over a standardized batch) and its flat
    /// parameter gradient. External verification surface for independent
    /// finite-difference checks, not part of the stable API.
    #[doc(hidden)]
    pub fn nll_and_grad_check(
        &self,
        params: &[f64],
        x_std: ArrayView2<'_, f64>,
        y_std: ArrayView2<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<f64>)> {
        self.nll_and_grad(params, x_std, y_std, weights)
    }

    pub fn to_json(&self) -> String {
        let file = MdnFile {
            input_dim: self.input_dim,
            target_dim: self.target_dim,
            config: self.config.clone(),
            params: self.params.clone(),
            x_scaler: self.x_scaler.clone(),
            y_scaler: self.y_scaler.clone(),
        };
        serde_json::to_string(&file).expect("MDN serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdnFile = serde_json::from_str(text)
            .map_err(|e| EtasError::Data(format!("bad MDN file: {e}")))?;
        let mut mdn = Mdn::new(file.input_dim, file.target_dim, file.config)?;
        if file.params.len() != mdn.trunk.n_params() {
            return Err(EtasError::Data(format!(
                "MDN file has {} parameters but the architecture needs {}",
                file.params.len(),
                mdn.trunk.n_params()
            )));
        }
        if file.x_scaler.dim() != file.input_dim || file.y_scaler.dim() != file.target_dim {
            return Err(EtasError::Data("MDN file scaler dimensions disagree".into()));
        }
        mdn.params = file.params;
        mdn.x_scaler = file.x_scaler;
        mdn.y_scaler = file.y_scaler;
        Ok(mdn)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn softplus_inverse(y: f64) -> f64 {
        (y.exp() - 1.0).ln()
    }

    /// A K=1 model whose head ignores the input: weights zero, biases set so
    /// mu = 0 and U = I.
    fn standard_normal_mdn(d: usize) -> Mdn {
        let mut mdn =
            Mdn::new(1, d, MdnConfig { n_components: 1, hidden: vec![4] }).unwrap();
        let n = mdn.n_params();
        let head_dim = 1 + d + d * (d + 1) / 2;
        let bias_off = n - head_dim;
        let params = mdn.params_mut();
        params.iter_mut().for_each(|p| *p = 0.0);
        // g = 0, mu = 0 already; set the diagonal raw entries to softplus^-1(1)
        let mut idx = bias_off + 1 + d;
        for a in 0..d {
            params[idx] = softplus_inverse(1.0);
            idx += d - a;
        }
        mdn
    }

    #[test]
    fn fixed_model_matches_standard_normal_density() {
        let mdn = standard_normal_mdn(2);
        let lp = mdn.log_prob(&[0.3], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(lp, -LN_2PI, epsilon = 1e-12);
        let lp1 = mdn.log_prob(&[-1.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(lp1, -LN_2PI - 0.5, epsilon = 1e-12);
        // batch evaluation agrees with the scalar path
        let x = Array2::from_shape_vec((2, 1), vec![0.3, -1.0]).unwrap();
        let y = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let batch = mdn.log_prob_batch(x.view(), y.view()).unwrap();
        assert_relative_eq!(batch[0], lp, epsilon = 1e-13);
        assert_relative_eq!(batch[1], lp1, epsilon = 1e-13);
    }

    #[test]
    fn logit_shift_leaves_density_unchanged() {
        let d = 2;
        let mut mdn =
            Mdn::new(1, d, MdnConfig { n_components: 3, hidden: vec![4] }).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        let fresh = mdn.trunk.init_params(&mut rng);
        mdn.params_mut().copy_from_slice(&fresh);
        let before = mdn.log_prob(&[0.4], &[0.2, -0.7]).unwrap();
        // shift all component logit biases by the same constant
        let head_dim = Mdn::head_dim_for(3, d);
        let n = mdn.n_params();
        let bias_off = n - head_dim;
        for k in 0..3 {
            mdn.params_mut()[bias_off + k] += 5.0;
        }
        let after = mdn.log_prob(&[0.4], &[0.2, -0.7]).unwrap();
        assert_relative_eq!(before, after, epsilon = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (n_in, d, k) = (3, 2, 3);
        let mdn = {
            let mut m =
                Mdn::new(n_in, d, MdnConfig { n_components: k, hidden: vec![8] }).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(61);
            let fresh = m.trunk.init_params(&mut rng);
            m.params_mut().copy_from_slice(&fresh);
            m
        };
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        let x = Array2::from_shape_fn((5, n_in), |_| rng.gen_range(-1.5..1.5));
        let y = Array2::from_shape_fn((5, d), |_| rng.gen_range(-1.5..1.5));
        let w = vec![1.0, 0.5, 2.0, 1.0, 0.25];
        let params = mdn.params.clone();
        let (_, grad) = mdn.nll_and_grad(&params, x.view(), y.view(), Some(&w)).unwrap();

        let h = 1e-5;
        let n_params = params.len();
        // stride chosen to hit trunk weights, head weights, and head biases
        for idx in (0..n_params).step_by(n_params / 23) {
            let mut plus = params.clone();
            plus[idx] += h;
            let mut minus = params.clone();
            minus[idx] -= h;
            let (lp, _) = mdn.nll_and_grad(&plus, x.view(), y.view(), Some(&w)).unwrap();
            let (lm, _) = mdn.nll_and_grad(&minus, x.view(), y.view(), Some(&w)).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn weight_scaling_leaves_loss_and_gradient_unchanged() {
        let mdn = {
            let mut m =
                Mdn::new(2, 1, MdnConfig { n_components: 2, hidden: vec![6] }).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(63);
            let fresh = m.trunk.init_params(&mut rng);
            m.params_mut().copy_from_slice(&fresh);
            m
        };
        let mut rng = ChaCha12Rng::seed_from_u64(64);
        let x = Array2::from_shape_fn((7, 2), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((7, 1), |_| rng.gen_range(-1.0..1.0));
        let w1 = vec![0.2, 1.0, 3.0, 0.5, 2.0, 1.5, 0.7];
        let w2: Vec<f64> = w1.iter().map(|v| v * 2.0).collect();
        let (l1, g1) = mdn.nll_and_grad(&mdn.params, x.view(), y.view(), Some(&w1)).unwrap();
        let (l2, g2) = mdn.nll_and_grad(&mdn.params, x.view(), y.view(), Some(&w2)).unwrap();
        assert_relative_eq!(l1, l2, epsilon = 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn conjugate_gaussian_toy_recovers_posterior_and_normalises() {
        // theta ~ N(0,1), x | theta ~ N(theta, 1): the posterior is
        // N(x/2, 1/2). Train on simulated pairs and check conditional
        // moments and normalisation of the learned density.
        let n = 3000;
        let mut rng = ChaCha12Rng::seed_from_u64(65);
        let mut x = Array2::zeros((n, 1));
        let mut y = Array2::zeros((n, 1));
        for i in 0..n {
            let theta: f64 = rng.sample::<f64, _>(StandardNormal);
            let obs = theta + rng.sample::<f64, _>(StandardNormal);
            x[[i, 0]] = obs;
            y[[i, 0]] = theta;
        }
        let mut mdn = Mdn::new(1, 1, MdnConfig::default()).unwrap();
        let cfg = TrainConfig { seed: 66, ..TrainConfig::default() };
        let report = mdn.train(x.view(), y.view(), None, &cfg).unwrap();
        assert!(report.epochs_run >= 1);
        assert!(report.best_val_nll.is_finite());

        for &x0 in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
            let (mean, cov) = mdn.conditional_moments(&[x0]).unwrap();
            assert!(
                (mean[0] - x0 / 2.0).abs() < 0.05,
                "posterior mean at x={x0}: got {:.4}, want {:.4}",
                mean[0],
                x0 / 2.0
            );
            assert!(
                (cov[[0, 0]] - 0.5).abs() < 0.1,
                "posterior variance at x={x0}: got {:.4}, want 0.5",
                cov[[0, 0]]
            );
        }

        // normalisation: E_phi[q(z|x0)/phi(z)] over z ~ N(0, 2^2) should be 1
        let x0 = 0.7;
        let m = 4000;
        let mut est = 0.0;
        for _ in 0..m {
            let z: f64 = 2.0 * rng.sample::<f64, _>(StandardNormal);
            let lq = mdn.log_prob(&[x0], &[z]).unwrap();
            let lphi = -0.5 * (z / 2.0) * (z / 2.0) - 0.5 * LN_2PI - (2.0f64).ln();
            est += (lq - lphi).exp();
        }
        est /= m as f64;
        assert!((est - 1.0).abs() < 0.03, "normalisation estimate {est:.4}");

        // sampling agrees with the analytic posterior too
        let draws = mdn.sample_conditional(&[1.0], 4000, &mut rng).unwrap();
        let s_mean = draws.column(0).sum() / 4000.0;
        let s_var =
            draws.column(0).iter().map(|v| (v - s_mean) * (v - s_mean)).sum::<f64>() / 3999.0;
        assert!((s_mean - 0.5).abs() < 0.06, "sample mean {s_mean:.4}");
        assert!((s_var - 0.5).abs() < 0.12, "sample variance {s_var:.4}");
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let n = 240;
        let mut rng = ChaCha12Rng::seed_from_u64(67);
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-1.0..1.0));
        let cfg = TrainConfig { max_epochs: 3, patience: 10, seed: 68, ..TrainConfig::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut mdn = Mdn::new(
                    2,
                    1,
                    MdnConfig { n_components: 3, hidden: vec![16] },
                )
                .unwrap();
                mdn.train(x.view(), y.view(), None, &cfg).unwrap();
                mdn.params
            })
        };
        let p1 = run(1);
        let p2 = run(2);
        assert_eq!(p1, p2, "training must not depend on the thread count");
    }

    #[test]
    fn returned_model_is_the_best_validation_snapshot() {
        let n = 200;
        let mut rng = ChaCha12Rng::seed_from_u64(69);
        let mut x = Array2::zeros((n, 1));
        let mut y = Array2::zeros((n, 1));
        for i in 0..n {
            let t: f64 = rng.sample::<f64, _>(StandardNormal);
            x[[i, 0]] = t;
            y[[i, 0]] = 0.5 * t + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let mut mdn =
            Mdn::new(1, 1, MdnConfig { n_components: 2, hidden: vec![8] }).unwrap();
        let cfg = TrainConfig { max_epochs: 40, patience: 5, seed: 70, ..TrainConfig::default() };
        let report = mdn.train(x.view(), y.view(), None, &cfg).unwrap();
        assert_eq!(report.train_nll.len(), report.epochs_run);
        assert_eq!(report.val_nll.len(), report.epochs_run);
        let min_val = report.val_nll.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(report.best_val_nll, min_val, epsilon = 1e-12);
        assert_relative_eq!(report.val_nll[report.best_epoch], min_val, epsilon = 1e-12);
    }

    #[test]
    fn serde_roundtrip_is_bit_exact() {
        let mut mdn = Mdn::new(3, 2, MdnConfig::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let fresh = mdn.trunk.init_params(&mut rng);
        mdn.params_mut().copy_from_slice(&fresh);
        mdn.x_scaler = Standardizer { mean: vec![0.1, -0.2, 0.3], sd: vec![1.5, 0.7, 2.0] };
        mdn.y_scaler = Standardizer { mean: vec![0.5, 0.25], sd: vec![0.3, 1.1] };
        let text = mdn.to_json();
        let back = Mdn::from_json(&text).unwrap();
        assert_eq!(mdn.params, back.params);
        assert_eq!(mdn.x_scaler, back.x_scaler);
        assert_eq!(mdn.y_scaler, back.y_scaler);
        let lp_a = mdn.log_prob(&[0.3, -0.1, 0.9], &[0.4, 0.2]).unwrap();
        let lp_b = back.log_prob(&[0.3, -0.1, 0.9], &[0.4, 0.2]).unwrap();
        assert_eq!(lp_a.to_bits(), lp_b.to_bits());
    }

    #[test]
    fn collapsed_component_is_reported() {
        let mut mdn =
            Mdn::new(1, 1, MdnConfig { n_components: 2, hidden: vec![4] }).unwrap();
        // zero weights; push one logit bias far down so pi_2 ~ e^-40
        let head_dim = Mdn::head_dim_for(2, 1);
        let n = mdn.n_params();
        let bias_off = n - head_dim;
        mdn.params_mut()[bias_off + 1] = -40.0;
        let x_std = Array2::zeros((5, 1));
        let pis = mdn.mean_component_weights(x_std.view()).unwrap();
        assert!(pis[1] < COLLAPSE_TOL);
        assert_relative_eq!(pis.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_validation_rejects_mismatches() {
        let mut mdn = Mdn::new(2, 1, MdnConfig::default()).unwrap();
        assert!(mdn.log_prob(&[0.0], &[0.0]).is_err());
        assert!(mdn.log_prob(&[0.0, 0.0], &[0.0, 0.0]).is_err());
        let x = Array2::zeros((10, 2));
        let y = Array2::zeros((9, 1));
        assert!(mdn.train(x.view(), y.view(), None, &TrainConfig::default()).is_err());
        let y10 = Array2::zeros((10, 1));
        let bad_w = vec![1.0; 9];
        assert!(mdn.train(x.view(), y10.view(), Some(&bad_w), &TrainConfig::default()).is_err());
        let bad_cfg = TrainConfig { val_fraction: 0.9, ..TrainConfig::default() };
        assert!(mdn.train(x.view(), y10.view(), None, &bad_cfg).is_err());
    }
}
