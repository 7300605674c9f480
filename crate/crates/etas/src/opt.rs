//! Derivative-free minimisation: Nelder-Mead simplex with the standard
//! coefficients (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
//!
//! The objective may return non-finite values (`+inf` for infeasible points);
//! such vertices are simply ranked worst and the simplex moves away from them.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop when every vertex is within this L-inf distance of the best.
    pub tol_x: f64,
    /// Stop when the objective spread over the simplex falls below this.
    pub tol_f: f64,
    pub max_evals: usize,
    /// Initial simplex offset added to each coordinate in turn.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { tol_x: 1e-6, tol_f: 1e-10, max_evals: 20_000, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Minimise `f` starting from `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert!(dim > 0, "empty parameter vector");
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| -> f64 {
        *n_evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut n_evals)).collect();

    let mut converged = false;
    while n_evals < opts.max_evals {
        // Order vertices best-first.
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder_s: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let reorder_f: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = reorder_s;
        fvals = reorder_f;

        let spread_f = fvals[dim] - fvals[0];
        let spread_x = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if spread_x < opts.tol_x && (spread_f < opts.tol_f || !spread_f.is_finite()) {
            converged = spread_f.is_finite();
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0f64; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }

        let worst = simplex[dim].clone();
        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = lerp(1.0);
        let fr = eval(&xr, &mut n_evals);
        if fr < fvals[0] {
            let xe = lerp(2.0);
            let fe = eval(&xe, &mut n_evals);
            if fe < fr {
                simplex[dim] = xe;
                fvals[dim] = fe;
            } else {
                simplex[dim] = xr;
                fvals[dim] = fr;
            }
        } else if fr < fvals[dim - 1] {
            simplex[dim] = xr;
            fvals[dim] = fr;
        } else {
            let (xc, fc) = if fr < fvals[dim] {
                let x = lerp(0.5); // outside contraction
                let v = eval(&x, &mut n_evals);
                (x, v)
            } else {
                let x = lerp(-0.5); // inside contraction
                let v = eval(&x, &mut n_evals);
                (x, v)
            };
            if fc < fvals[dim].min(fr) {
                simplex[dim] = xc;
                fvals[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].clone();
                for i in 1..=dim {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    fvals[i] = eval(&simplex[i], &mut n_evals);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    NelderMeadResult { x: simplex[best].clone(), fx: fvals[best], n_evals, converged }
}
