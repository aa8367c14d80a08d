use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::group::SolverOptions;
use crate::error::{Error, Result};
use crate::pathmap::{axpy, dot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoResult {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl LassoResult {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coef.len()).filter(|&j| self.coef[j] != 0.0).collect()
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// max_j |X_jᵀ z|.
pub fn lasso_lambda_max(x: ArrayView2<'_, f64>, z: &[f64]) -> f64 {
    x.axis_iter(Axis(1))
        .map(|c| c.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Minimises ½‖z − Xβ‖² + λ‖β‖₁ by cyclic coordinate descent.
pub fn lasso_cd(z: &[f64], x: ArrayView2<'_, f64>, lambda: f64, opts: &SolverOptions) -> Result<LassoResult> {
    let (n, p) = x.dim();
    if z.len() != n {
        return Err(Error::Dimension(format!("response has {} rows, design {n}", z.len())));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let cols: Vec<Vec<f64>> = x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut beta = vec![0.0; p];
    let mut r = z.to_vec();
    let mut iterations = opts.max_outer;
    let mut converged = false;
    for sweep in 1..=opts.max_outer {
        if sweep > 1 && opts.refresh_every > 0 && (sweep - 1) % opts.refresh_every == 0 {
            r = z.to_vec();
            for (c, &b) in cols.iter().zip(&beta) {
                if b != 0.0 {
                    axpy(-b, c, &mut r);
                }
            }
        }
        let mut max_change = 0.0f64;
        for j in 0..p {
            if sq[j] == 0.0 {
                continue;
            }
            let rho = dot(&cols[j], &r) + sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                axpy(-delta, &cols[j], &mut r);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < opts.tol {
            iterations = sweep;
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso did not converge in {} sweeps", opts.max_outer);
    }
    let objective = lasso_objective(x, z, &beta, lambda);
    Ok(LassoResult {
        coef: beta,
        iterations,
        converged,
        objective,
    })
}

pub fn lasso_objective(x: ArrayView2<'_, f64>, z: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let xb = x.dot(&ndarray::ArrayView1::from(beta));
    let rss: f64 = z.iter().zip(xb.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Column-major copy of the listed columns of `x`.
pub fn select_columns(x: ArrayView2<'_, f64>, cols: &[usize]) -> Array2<f64> {
    x.select(Axis(1), cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn orthonormal_design_is_soft_threshold() {
        let h = 0.5;
        let x = array![[h, h, h], [h, -h, h], [h, h, -h], [h, -h, -h]];
        let z = [3.0, -1.0, 0.5, 2.0];
        let lam = 0.7;
        let opts = SolverOptions::default();
        let res = lasso_cd(&z, x.view(), lam, &opts).unwrap();
        for j in 0..3 {
            let c: f64 = (0..4).map(|i| x[[i, j]] * z[i]).sum();
            assert!((res.coef[j] - soft_threshold(c, lam)).abs() < 1e-15);
        }
        let lm = lasso_lambda_max(x.view(), &z);
        let zero = lasso_cd(&z, x.view(), lm, &opts).unwrap();
        assert!(zero.coef.iter().all(|&b| b == 0.0));
        assert!(zero.support().is_empty());
    }

    #[test]
    fn unnormalized_columns() {
        // single column of norm² 4: minimiser of ½‖z − xβ‖² + λ|β| is soft(xᵀz, λ)/4
        let x = array![[2.0], [0.0]];
        let res = lasso_cd(&[3.0, 1.0], x.view(), 1.0, &SolverOptions::default()).unwrap();
        assert!((res.coef[0] - 5.0 / 4.0).abs() < 1e-15);
    }
}
