//! Bijections between the constrained ETAS parameter space and an
//! unconstrained working space.
//!
//! All samplers, optimizers and density estimators operate on the free
//! (non-pinned) components mapped by
//!
//! ```text
//! z_mu = ln mu        z_K = ln K        z_c = ln c        z_p = ln(p - 1)
//! z_alpha = logit(alpha / beta)   when the subcritical constraint is active
//! z_alpha = ln alpha              otherwise
//! ```
//!
//! so positivity and `p > 1` (and `alpha < beta` when constrained) hold by
//! construction. Densities moved between spaces pick up the log-Jacobian
//! `log |d theta / d z|` from [`ParamTransform::log_jacobian`].

use crate::error::{EtasError, Result};
use crate::model::EtasParams;
use crate::prior::FixedParamMask;
use serde::{Deserialize, Serialize};

fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow for large |x|
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Maps the free components of `theta` to a vector in `R^d` and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTransform {
    beta: f64,
    /// Use `logit(alpha/beta)` for alpha (subcritical inference) instead of `ln alpha`.
    constrain_alpha: bool,
    mask: FixedParamMask,
}

impl ParamTransform {
    pub fn new(beta: f64, constrain_alpha: bool, mask: FixedParamMask) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(EtasError::InvalidParams(format!("beta must be > 0, got {beta}")));
        }
        Ok(ParamTransform { beta, constrain_alpha, mask })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mask(&self) -> &FixedParamMask {
        &self.mask
    }

    /// Number of free (transformed) coordinates.
    pub fn dim(&self) -> usize {
        self.mask.n_free()
    }

    fn fwd_component(&self, index: usize, x: f64) -> Result<f64> {
        let z = match index {
            2 if self.constrain_alpha => {
                if !(x > 0.0 && x < self.beta) {
                    return Err(EtasError::InvalidParams(format!(
                        "alpha = {x} outside (0, beta = {}) for logit transform",
                        self.beta
                    )));
                }
                (x / self.beta).ln() - (1.0 - x / self.beta).ln()
            }
            4 => {
                if x <= 1.0 {
                    return Err(EtasError::InvalidParams(format!("p = {x} <= 1")));
                }
                (x - 1.0).ln()
            }
            _ => {
                if x <= 0.0 {
                    return Err(EtasError::InvalidParams(format!(
                        "component {index} = {x} not strictly positive"
                    )));
                }
                x.ln()
            }
        };
        if z.is_finite() {
            Ok(z)
        } else {
            Err(EtasError::Numerical(format!("transform of component {index} = {x} overflowed")))
        }
    }

    fn inv_component(&self, index: usize, z: f64) -> f64 {
        match index {
            2 if self.constrain_alpha => self.beta / (1.0 + (-z).exp()),
            4 => 1.0 + z.exp(),
            _ => z.exp(),
        }
    }

    /// Transform the free components of `params` into the working space.
    pub fn to_unconstrained(&self, params: &EtasParams) -> Result<Vec<f64>> {
        let theta = params.theta();
        self.mask
            .free_indices()
            .into_iter()
            .map(|i| self.fwd_component(i, theta[i]))
            .collect()
    }

    /// Map a working-space vector back to a full parameter set.
    pub fn from_unconstrained(&self, z: &[f64]) -> Result<EtasParams> {
        if z.len() != self.dim() {
            return Err(EtasError::DimensionMismatch(format!(
                "z has {} coordinates, transform expects {}",
                z.len(),
                self.dim()
            )));
        }
        let mut theta = [0.0; 5];
        let mut zi = z.iter();
        for i in 0..5 {
            theta[i] = match self.mask.value(i) {
                Some(v) => v,
                None => self.inv_component(i, *zi.next().unwrap()),
            };
        }
        Ok(EtasParams {
            mu: theta[0],
            k: theta[1],
            alpha: theta[2],
            c: theta[3],
            p: theta[4],
            beta: self.beta,
        })
    }

    /// `log |d theta / d z|` at `z`, summed over free coordinates.
    ///
    /// Log components contribute `z` (since `d e^z / dz = e^z`), the `p`
    /// component likewise `z_p`, and the logit component
    /// `ln beta - softplus(z) - softplus(-z)`.
    pub fn log_jacobian(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(EtasError::DimensionMismatch(format!(
                "z has {} coordinates, transform expects {}",
                z.len(),
                self.dim()
            )));
        }
        let mut acc = 0.0;
        for (&i, &zv) in self.mask.free_indices().iter().zip(z) {
            acc += match i {
                2 if self.constrain_alpha => self.beta.ln() - softplus(zv) - softplus(-zv),
                _ => zv,
            };
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn full(constrain: bool) -> ParamTransform {
        ParamTransform::new(2.4, constrain, FixedParamMask::none()).unwrap()
    }

    proptest! {
        #[test]
        fn roundtrip_constrained(
            mu in 1e-3f64..5.0,
            k in 1e-3f64..0.99,
            frac in 1e-3f64..0.999,
            c in 1e-3f64..8.0,
            p in 1.001f64..9.0,
        ) {
            let tr = full(true);
            let params = EtasParams { mu, k, alpha: 2.4 * frac, c, p, beta: 2.4 };
            let z = tr.to_unconstrained(&params).unwrap();
            prop_assert_eq!(z.len(), 5);
            let back = tr.from_unconstrained(&z).unwrap();
            for (a, b) in params.theta().iter().zip(back.theta()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "{a} vs {b}");
            }
        }

        #[test]
        fn roundtrip_unconstrained_alpha(alpha in 1e-3f64..9.0) {
            let tr = full(false);
            let params = EtasParams { mu: 0.2, k: 0.2, alpha, c: 0.5, p: 2.0, beta: 2.4 };
            let back = tr.from_unconstrained(&tr.to_unconstrained(&params).unwrap()).unwrap();
            prop_assert!((back.alpha - alpha).abs() <= 1e-12 * alpha.max(1.0));
        }

        #[test]
        fn jacobian_matches_finite_differences(
            z0 in -3.0f64..3.0,
            z1 in -3.0f64..1.0,
            z2 in -3.0f64..3.0,
            z3 in -3.0f64..3.0,
            z4 in -3.0f64..2.0,
        ) {
            // The map is coordinatewise, so |det| is the product of the
            // per-coordinate derivatives; compare against central differences.
            let tr = full(true);
            let z = [z0, z1, z2, z3, z4];
            let mut log_det_fd = 0.0;
            let h = 1e-6;
            for i in 0..5 {
                let mut zp = z;
                let mut zm = z;
                zp[i] += h;
                zm[i] -= h;
                let tp = tr.from_unconstrained(&zp).unwrap().theta()[i];
                let tm = tr.from_unconstrained(&zm).unwrap().theta()[i];
                log_det_fd += ((tp - tm) / (2.0 * h)).ln();
            }
            let log_det = tr.log_jacobian(&z).unwrap();
            prop_assert!((log_det - log_det_fd).abs() < 1e-6,
                "analytic {log_det} vs fd {log_det_fd}");
        }
    }

    #[test]
    fn masked_transform_drops_pinned_components() {
        let mask = FixedParamMask::none().fix(2, 2.4).fix(4, 2.0);
        let tr = ParamTransform::new(2.4, false, mask).unwrap();
        assert_eq!(tr.dim(), 3);
        let params = EtasParams { mu: 0.1, k: 0.3, alpha: 2.4, c: 0.5, p: 2.0, beta: 2.4 };
        let z = tr.to_unconstrained(&params).unwrap();
        assert_eq!(z.len(), 3);
        assert_relative_eq!(z[0], 0.1f64.ln());
        assert_relative_eq!(z[1], 0.3f64.ln());
        assert_relative_eq!(z[2], 0.5f64.ln());
        let back = tr.from_unconstrained(&z).unwrap();
        assert_eq!(back.alpha, 2.4);
        assert_eq!(back.p, 2.0);
        // log-jacobian of three log coordinates is their sum
        assert_relative_eq!(tr.log_jacobian(&z).unwrap(), z.iter().sum::<f64>(), epsilon = 1e-12);
    }

    #[test]
    fn boundary_points_are_rejected() {
        let tr = full(true);
        let bad_alpha = EtasParams { mu: 0.2, k: 0.2, alpha: 2.4, c: 0.5, p: 2.0, beta: 2.4 };
        assert!(tr.to_unconstrained(&bad_alpha).is_err());
        let bad_mu = EtasParams { mu: 0.0, alpha: 1.0, ..bad_alpha };
        assert!(tr.to_unconstrained(&bad_mu).is_err());
        assert!(tr.from_unconstrained(&[0.0; 3]).is_err());
    }
}
