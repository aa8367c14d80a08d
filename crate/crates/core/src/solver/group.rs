use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathmap::{axpy, dot, ExpandedDesign};
use crate::tsv::TsvWriter;

/// Blocks whose norm falls below this are set exactly to zero.
const ZERO_BLOCK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the largest coefficient change in a full sweep is below this.
    pub tol: f64,
    pub max_outer: usize,
    /// Cap on coordinate sweeps inside one block visit.
    pub max_inner: usize,
    /// Recompute the residual from scratch every this many sweeps.
    pub refresh_every: usize,
    /// Record the objective after each sweep.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_outer: 1000,
            max_inner: 1000,
            refresh_every: 50,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    /// Length P*.
    pub coef: Vec<f64>,
    /// Groups with a nonzero block, ascending.
    pub selected: Vec<usize>,
    pub iterations: usize,
    pub kkt: f64,
    pub objective: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl SolverResult {
    pub fn block_norms(&self, design: &ExpandedDesign) -> Vec<f64> {
        (0..design.n_groups())
            .map(|l| norm(&self.coef[design.block(l)]))
            .collect()
    }

    pub fn trace_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["sweep", "objective"]);
        for (i, v) in self.trace.iter().enumerate() {
            w.row([(i + 1).to_string(), format!("{v:.17e}")]);
        }
        w.into_string()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖X_lᵀ z‖₂ / w_l for every group.
pub fn group_scores(design: &ExpandedDesign, z: &[f64], weights: &[f64]) -> Vec<f64> {
    (0..design.n_groups())
        .map(|l| block_corr_norm(design, l, z) / weights[l])
        .collect()
}

fn block_corr_norm(design: &ExpandedDesign, l: usize, r: &[f64]) -> f64 {
    design
        .block(l)
        .map(|k| dot(design.col(k), r).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Smallest λ at which b = 0 is optimal: max_l ‖X_lᵀ z‖₂ / w_l.
/// Zero when `z` is orthogonal to every group (including z = 0).
pub fn lambda_max(design: &ExpandedDesign, z: &[f64], weights: &[f64]) -> Result<f64> {
    check_inputs(design, z, 0.0, weights)?;
    let lm = group_scores(design, z, weights).into_iter().fold(0.0, f64::max);
    if lm == 0.0 {
        log::warn!("lambda_max is zero: the working response is orthogonal to the design");
    }
    Ok(lm)
}

fn check_inputs(design: &ExpandedDesign, z: &[f64], lambda: f64, weights: &[f64]) -> Result<()> {
    if z.len() != design.n_rows() {
        return Err(Error::Dimension(format!(
            "response has {} rows, design {}",
            z.len(),
            design.n_rows()
        )));
    }
    if weights.len() != design.n_groups() {
        return Err(Error::Dimension(format!(
            "{} weights for {} groups",
            weights.len(),
            design.n_groups()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter("group weights must be positive".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// ½‖z − Xb‖² + λ Σ_l w_l ‖b_l‖₂.
pub fn objective(design: &ExpandedDesign, z: &[f64], b: &[f64], lambda: f64, weights: &[f64]) -> f64 {
    let xb = design.mul(b);
    let rss: f64 = z.iter().zip(&xb).map(|(a, c)| (a - c).powi(2)).sum();
    0.5 * rss + lambda * penalty(design, b, weights)
}

fn penalty(design: &ExpandedDesign, b: &[f64], weights: &[f64]) -> f64 {
    (0..design.n_groups())
        .map(|l| weights[l] * norm(&b[design.block(l)]))
        .sum()
}

/// Largest violation of the group-lasso optimality conditions at `b`.
pub fn kkt_check(b: &[f64], z: &[f64], design: &ExpandedDesign, lambda: f64, weights: &[f64]) -> f64 {
    let xb = design.mul(b);
    let r: Vec<f64> = z.iter().zip(&xb).map(|(a, c)| a - c).collect();
    kkt_with_residual(b, &r, design, lambda, weights)
}

fn kkt_with_residual(b: &[f64], r: &[f64], design: &ExpandedDesign, lambda: f64, weights: &[f64]) -> f64 {
    (0..design.n_groups())
        .map(|l| {
            let blk = design.block(l);
            let bn = norm(&b[blk.clone()]);
            if bn == 0.0 {
                (block_corr_norm(design, l, r) - lambda * weights[l]).max(0.0)
            } else {
                let scale = lambda * weights[l] / bn;
                blk.map(|k| (dot(design.col(k), r) - scale * b[k]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Group lasso by block coordinate descent, starting from b = 0.
pub fn group_lasso_bcd(
    z: &[f64],
    design: &ExpandedDesign,
    lambda: f64,
    weights: &[f64],
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let order: Vec<usize> = (0..design.n_groups()).collect();
    group_lasso_bcd_in_order(z, design, lambda, weights, &order, opts)
}

/// As [`group_lasso_bcd`] but visits only the listed groups, in that order.
/// Unlisted groups stay at zero.
pub fn group_lasso_bcd_in_order(
    z: &[f64],
    design: &ExpandedDesign,
    lambda: f64,
    weights: &[f64],
    order: &[usize],
    opts: &SolverOptions,
) -> Result<SolverResult> {
    check_inputs(design, z, lambda, weights)?;
    if let Some(&l) = order.iter().find(|&&l| l >= design.n_groups()) {
        return Err(Error::Dimension(format!("group {l} out of range")));
    }
    let mut b = vec![0.0; design.n_cols()];
    let run = bcd(z, design, lambda, weights, order, &mut b, opts);
    Ok(finish(z, design, lambda, weights, b, run))
}

pub(crate) struct Run {
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub(crate) fn finish(
    z: &[f64],
    design: &ExpandedDesign,
    lambda: f64,
    weights: &[f64],
    b: Vec<f64>,
    run: Run,
) -> SolverResult {
    let xb = design.mul(&b);
    let r: Vec<f64> = z.iter().zip(&xb).map(|(a, c)| a - c).collect();
    let kkt = kkt_with_residual(&b, &r, design, lambda, weights);
    let objective = 0.5 * dot(&r, &r) + lambda * penalty(design, &b, weights);
    let selected = (0..design.n_groups())
        .filter(|&l| b[design.block(l)].iter().any(|&v| v != 0.0))
        .collect();
    if !run.converged {
        log::warn!(
            "group lasso did not converge in {} sweeps (KKT residual {kkt:.3e})",
            run.iterations
        );
    }
    SolverResult {
        coef: b,
        selected,
        iterations: run.iterations,
        kkt,
        objective,
        converged: run.converged,
        trace: run.trace,
    }
}

/// Block coordinate descent over `order`, warm-started from `b`.
pub(crate) fn bcd(
    z: &[f64],
    design: &ExpandedDesign,
    lambda: f64,
    weights: &[f64],
    order: &[usize],
    b: &mut [f64],
    opts: &SolverOptions,
) -> Run {
    let mut r = residual(z, design, b);
    let mut trace = Vec::new();
    let mut old = Vec::new();
    for sweep in 1..=opts.max_outer {
        if sweep > 1 && opts.refresh_every > 0 && (sweep - 1) % opts.refresh_every == 0 {
            r = residual(z, design, b);
        }
        let mut max_change = 0.0f64;
        for &l in order {
            let blk = design.block(l);
            old.clear();
            old.extend_from_slice(&b[blk.clone()]);
            update_block(design, l, lambda * weights[l], &mut b[blk.clone()], &mut r, opts);
            for (new, prev) in b[blk].iter().zip(&old) {
                max_change = max_change.max((new - prev).abs());
            }
        }
        if opts.trace {
            trace.push(0.5 * dot(&r, &r) + lambda * penalty(design, b, weights));
        }
        if max_change < opts.tol {
            return Run {
                iterations: sweep,
                converged: true,
                trace,
            };
        }
    }
    Run {
        iterations: opts.max_outer,
        converged: false,
        trace,
    }
}

fn residual(z: &[f64], design: &ExpandedDesign, b: &[f64]) -> Vec<f64> {
    let xb = design.mul(b);
    z.iter().zip(xb).map(|(a, c)| a - c).collect()
}

/// One visit of block `l`: the zero test, then coordinate descent within
/// the block. `r` is the full residual and is kept in sync with `bl`.
fn update_block(
    design: &ExpandedDesign,
    l: usize,
    thresh: f64,
    bl: &mut [f64],
    r: &mut [f64],
    opts: &SolverOptions,
) {
    let blk = design.block(l);
    let was_zero = bl.iter().all(|&v| v == 0.0);
    // partial residual r_l
    if !was_zero {
        for (k, &v) in blk.clone().zip(bl.iter()) {
            axpy(v, design.col(k), r);
        }
    }
    let g: Vec<f64> = blk.clone().map(|k| dot(design.col(k), r)).collect();
    let gn = norm(&g);
    if gn <= thresh {
        bl.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    if was_zero {
        // Entering block: the shrinkage factor is undefined at b_l = 0, so
        // start from the exact minimiser along the gradient direction.
        let mut xu = vec![0.0; r.len()];
        for (k, gi) in blk.clone().zip(&g) {
            axpy(gi / gn, design.col(k), &mut xu);
        }
        let curv = dot(&xu, &xu);
        if curv <= 0.0 {
            return;
        }
        let step = (gn - thresh) / curv;
        for (v, gi) in bl.iter_mut().zip(&g) {
            *v = step * gi / gn;
        }
        axpy(-step, &xu, r);
    } else {
        for (k, &v) in blk.clone().zip(bl.iter()) {
            axpy(-v, design.col(k), r);
        }
    }

    let mut nsq: f64 = bl.iter().map(|v| v * v).sum();
    for _ in 0..opts.max_inner {
        let mut max_change = 0.0f64;
        for (k, bj) in blk.clone().zip(bl.iter_mut()) {
            let bn = nsq.max(0.0).sqrt();
            if bn < ZERO_BLOCK {
                break;
            }
            let col = design.col(k);
            let new = (dot(col, r) + *bj) / (1.0 + thresh / bn);
            let delta = new - *bj;
            if delta != 0.0 {
                axpy(-delta, col, r);
                nsq += new * new - *bj * *bj;
                *bj = new;
                max_change = max_change.max(delta.abs());
            }
        }
        nsq = bl.iter().map(|v| v * v).sum();
        if nsq.sqrt() < ZERO_BLOCK {
            for (k, v) in blk.clone().zip(bl.iter_mut()) {
                axpy(*v, design.col(k), r);
                *v = 0.0;
            }
            return;
        }
        // the update contracts with factor κ = t/(‖b_l‖ + t), so the distance
        // to the fixed point is at most step·κ/(1 − κ) = step·t/‖b_l‖
        if max_change * (thresh / nsq.sqrt()).max(1.0) < opts.tol {
            break;
        }
    }
}
