//! Minimal neural-network machinery: a tanh multilayer perceptron over a
//! flat `Vec<f64>` parameter vector, reverse-mode gradients, SGD with
//! momentum, and feature standardisation.
//!
//! Everything is deliberately self-contained and deterministic: parameters
//! live in one flat buffer (layer weights row-major, then biases), matrix
//! work goes through `ndarray`, and no global state is involved. The mixture
//! density head and the two-sample classifier both build on this.

use crate::error::{EtasError, Result};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network: `sizes = [in, h1, ..., out]`, tanh on every
/// layer except the last (linear output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Forward-pass intermediates: `activations[0]` is the input batch and
/// `activations[l]` the output of layer `l` (post-tanh for hidden layers,
/// linear for the last).
pub struct MlpCache {
    activations: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache always holds the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(EtasError::Config(format!("bad MLP shape {sizes:?}")));
        }
        Ok(Mlp { sizes })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight_offset, bias_offset)` of layer `l` in the flat buffer.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        (off, off + self.sizes[layer] * self.sizes[layer + 1])
    }

    fn weight<'a>(&self, params: &'a [f64], layer: usize) -> ArrayView2<'a, f64> {
        let (w_off, b_off) = self.offsets(layer);
        ArrayView2::from_shape((self.sizes[layer + 1], self.sizes[layer]), &params[w_off..b_off])
            .expect("layout mismatch")
    }

    fn bias<'a>(&self, params: &'a [f64], layer: usize) -> &'a [f64] {
        let (_, b_off) = self.offsets(layer);
        &params[b_off..b_off + self.sizes[layer + 1]]
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params()];
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w_off, b_off) = self.offsets(l);
            for w in &mut params[w_off..b_off] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], x: ArrayView2<'_, f64>) -> Result<MlpCache> {
        if x.ncols() != self.input_dim() {
            return Err(EtasError::DimensionMismatch(format!(
                "MLP expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if params.len() != self.n_params() {
            return Err(EtasError::DimensionMismatch(format!(
                "MLP expects {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(x.to_owned());
        for l in 0..self.n_layers() {
            let w = self.weight(params, l);
            let b = self.bias(params, l);
            // write into a C-order buffer so callers can take row slices
            let mut z = Array2::zeros((x.nrows(), self.sizes[l + 1]));
            general_mat_mul(1.0, &activations[l], &w.t(), 0.0, &mut z);
            z += &Array1::from_vec(b.to_vec());
            if l + 1 < self.n_layers() {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(MlpCache { activations })
    }

    /// Accumulate `d(sum of per-row losses)/d(params)` into `grad`, given the
    /// loss gradient w.r.t. the network output. Returns the gradient w.r.t.
    /// the input batch (rarely needed; cheap to produce).
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        dout: &Array2<f64>,
        grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        if grad.len() != self.n_params() {
            return Err(EtasError::DimensionMismatch("gradient buffer size".into()));
        }
        let mut delta = dout.clone();
        for l in (0..self.n_layers()).rev() {
            if l + 1 < self.n_layers() {
                // chain through tanh of this layer's output
                let act = &cache.activations[l + 1];
                delta.zip_mut_with(act, |d, &a| *d *= 1.0 - a * a);
            }
            let (w_off, b_off) = self.offsets(l);
            let dw = delta.t().dot(&cache.activations[l]);
            let grad_w = &mut grad[w_off..b_off];
            for (g, &d) in grad_w.iter_mut().zip(dw.iter()) {
                *g += d;
            }
            let db = delta.sum_axis(Axis(0));
            let grad_b = &mut grad[b_off..b_off + self.sizes[l + 1]];
            for (g, &d) in grad_b.iter_mut().zip(db.iter()) {
                *g += d;
            }
            delta = delta.dot(&self.weight(params, l));
        }
        Ok(delta)
    }
}

/// Plain SGD with classical momentum and optional L2 weight decay.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    velocity: Vec<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdMomentum {
    pub fn new(n_params: usize, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        SgdMomentum { velocity: vec![0.0; n_params], lr, momentum, weight_decay }
    }

    pub fn reset(&mut self) {
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.velocity.len());
        debug_assert_eq!(grad.len(), self.velocity.len());
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.velocity[i] = self.momentum * self.velocity[i] - self.lr * g;
            params[i] += self.velocity[i];
        }
    }
}

/// Per-column affine map to zero mean and unit spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    const SD_FLOOR: f64 = 1e-8;

    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], sd: vec![1.0; dim] }
    }

    /// Column means and (sample) standard deviations, floored away from zero
    /// so constant columns stay finite.
    pub fn fit(data: ArrayView2<'_, f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(EtasError::InvalidParams(
                "need at least 2 rows to fit a standardizer".into(),
            ));
        }
        let n = data.nrows() as f64;
        let mut mean = vec![0.0; data.ncols()];
        let mut sd = vec![0.0; data.ncols()];
        for (j, col) in data.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            mean[j] = m;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            sd[j] = var.sqrt().max(Self::SD_FLOOR);
        }
        Ok(Standardizer { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.sd).map(|((&v, &m), &s)| (v - m) / s).collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.sd).map(|((&v, &m), &s)| v * s + m).collect()
    }

    pub fn transform(&self, data: &mut Array2<f64>) {
        for mut row in data.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
    }

    /// `ln |det J|` of the standardisation map `y -> (y - m)/s`, i.e.
    /// `-sum ln s`; densities in standardized space convert to raw space by
    /// adding this value.
    pub fn log_det_jacobian(&self) -> f64 {
        -self.sd.iter().map(|s| s.ln()).sum::<f64>()
    }
}
