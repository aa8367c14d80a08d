use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathmap::{dot, ExpandedDesign};
use crate::solver::{active_set_solve, lambda_max, norm, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// λ = γ·λ_max at every alternation.
    pub gamma: f64,
    /// Relative change of b and a below which the alternation stops.
    pub tol: f64,
    pub max_alt: usize,
    /// Initial active-set screening multiple.
    pub screen: f64,
    pub solver: SolverOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gamma: 0.8,
            tol: 1e-4,
            max_alt: 100,
            screen: 1.0,
            solver: SolverOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.tol > 0.0) || self.max_alt == 0 {
            return Err(Error::InvalidParameter("tol must be > 0 and max_alt >= 1".into()));
        }
        Ok(())
    }
}

/// Rank-1 loadings: b over the P* expanded columns and a over the Q traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrrrFit {
    pub pair: CoefficientPair,
    /// Ĉ: groups with a nonzero block of b.
    pub selected: Vec<usize>,
    /// ‖b_l‖₂ of the normalised b, per group.
    pub block_norms: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every inner group-lasso solve reached its tolerance.
    pub solver_converged: bool,
}

impl PsrrrFit {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Y a.
pub fn project(y: ArrayView2<'_, f64>, a: &[f64]) -> Vec<f64> {
    y.dot(&ArrayView1::from(a)).to_vec()
}

/// a = b′X′Y / b′X′Xb, normalised to unit length.
pub fn update_a(b: &[f64], design: &ExpandedDesign, y: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if y.nrows() != design.n_rows() || b.len() != design.n_cols() {
        return Err(Error::Dimension("b, design and Y do not conform".into()));
    }
    let xb = design.mul(b);
    let denom = dot(&xb, &xb);
    if denom == 0.0 {
        return Err(Error::DegenerateFactor);
    }
    let mut a: Vec<f64> = y.t().dot(&ArrayView1::from(&xb[..])).iter().map(|v| v / denom).collect();
    let an = norm(&a);
    if an == 0.0 {
        return Err(Error::DegenerateFactor);
    }
    a.iter_mut().for_each(|v| *v /= an);
    Ok(a)
}

/// Alternating estimation of (b, a).
///
/// A fit that selects nothing is returned as such rather than as an error.
pub fn fit_rank1(
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    weights: &[f64],
    opts: &FitOptions,
) -> Result<PsrrrFit> {
    opts.validate()?;
    if y.nrows() != design.n_rows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows, design {}",
            y.nrows(),
            design.n_rows()
        )));
    }
    let q = y.ncols();
    if q == 0 {
        return Err(Error::Dimension("Y has no columns".into()));
    }
    let mut a = vec![1.0 / (q as f64).sqrt(); q];
    let mut b = vec![0.0; design.n_cols()];
    let mut fit = PsrrrFit {
        pair: CoefficientPair { b: b.clone(), a: a.clone() },
        selected: Vec::new(),
        block_norms: vec![0.0; design.n_groups()],
        gamma: opts.gamma,
        lambda: 0.0,
        lambda_max: 0.0,
        iterations: 0,
        converged: false,
        solver_converged: true,
    };
    for it in 1..=opts.max_alt {
        let z = project(y, &a);
        let lm = lambda_max(design, &z, weights)?;
        fit.iterations = it;
        fit.lambda_max = lm;
        fit.lambda = opts.gamma * lm;
        if lm == 0.0 {
            break;
        }
        let res = active_set_solve(&z, design, opts.gamma * lm, weights, opts.screen, &opts.solver)?;
        fit.solver_converged &= res.converged;
        if res.selected.is_empty() {
            b = vec![0.0; design.n_cols()];
            fit.selected.clear();
            break;
        }
        let bn = norm(&res.coef);
        let mut b_new: Vec<f64> = res.coef.iter().map(|v| v / bn).collect();
        let mut a_new = update_a(&b_new, design, y)?;
        // (b, a) and (−b, −a) give the same fit
        if it > 1 && dot(&b_new, &b) < 0.0 {
            b_new.iter_mut().for_each(|v| *v = -*v);
            a_new.iter_mut().for_each(|v| *v = -*v);
        }
        let db = rel_change(&b_new, &b);
        let da = rel_change(&a_new, &a);
        b = b_new;
        a = a_new;
        fit.selected = res.selected;
        if it > 1 && db < opts.tol && da < opts.tol {
            fit.converged = true;
            break;
        }
    }
    if fit.selected.is_empty() {
        fit.converged = true;
    } else if !fit.converged {
        log::warn!("rank-1 alternation did not converge in {} iterations", opts.max_alt);
    }
    fit.block_norms = (0..design.n_groups()).map(|l| norm(&b[design.block(l)])).collect();
    fit.pair = CoefficientPair { b, a };
    Ok(fit)
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let on = norm(old);
    let diff = new.iter().zip(old).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    if on == 0.0 {
        f64::INFINITY
    } else {
        diff / on
    }
}
