use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::project;
use crate::error::{Error, Result};
use crate::pathmap::{ExpandedDesign, PathwayAnnotation};
use crate::rng::{rng_for, stream};
use crate::solver::{active_set_solve, group_scores, SolverOptions};
use crate::tsv::{self, TsvWriter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Largest factor by which a never-selected weight shrinks per iteration.
    pub eta: f64,
    /// Stop once Σ|d_l| falls below this.
    pub epsilon: f64,
    /// Null fits per iteration; `None` means 50·L.
    pub fits_per_iter: Option<usize>,
    pub max_iter: usize,
    pub max_bisect: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            eta: 0.5,
            epsilon: 0.05,
            fits_per_iter: None,
            max_iter: 50,
            max_bisect: 20,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl TuneOptions {
    pub fn fits(&self, n_groups: usize) -> usize {
        self.fits_per_iter.unwrap_or(50 * n_groups)
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {}", self.eta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if self.fits(n_groups) == 0 {
            return Err(Error::InvalidParameter("fits_per_iter must be >= 1".into()));
        }
        if self.fits(n_groups) < n_groups {
            log::warn!(
                "fits_per_iter = {} is below L = {n_groups}; selection frequencies will be coarse",
                self.fits(n_groups)
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneIteration {
    pub tau: usize,
    pub sum_abs_d: f64,
    pub max_abs_d: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    /// Weights at which `pi_star` was estimated.
    pub weights: Vec<f64>,
    pub tau: usize,
    pub pi_star: Vec<f64>,
    pub d: Vec<f64>,
    pub eta: f64,
    pub epsilon: f64,
    pub fits_per_iter: usize,
    pub seed: u64,
    pub converged: bool,
    pub history: Vec<TuneIteration>,
}

impl WeightState {
    pub fn sum_abs_d(&self) -> f64 {
        self.d.iter().map(|d| d.abs()).sum()
    }

    pub fn to_tsv(&self, annotation: &PathwayAnnotation) -> String {
        let mut w = TsvWriter::new(&["pathway", "size", "weight", "pi_star", "d", "tau"]);
        for (l, p) in annotation.pathways().iter().enumerate() {
            w.row([
                p.name.clone(),
                p.snps.len().to_string(),
                format!("{:.17e}", self.weights[l]),
                self.pi_star[l].to_string(),
                self.d[l].to_string(),
                self.tau.to_string(),
            ]);
        }
        w.into_string()
    }

    /// Sidecar with the tuning parameters and the iteration history.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weight state serializes")
    }
}

/// Reads the `pathway` and `weight` columns of a weights table, in the
/// annotation's pathway order.
pub fn read_weights(path: &Path, annotation: &PathwayAnnotation) -> Result<Vec<f64>> {
    let table = tsv::read_table(path, "pathway")?;
    let mut w = vec![f64::NAN; annotation.n_pathways()];
    for (line, f) in &table.rows {
        if f.len() < 3 {
            return Err(table.err(*line, "expected pathway, size and weight columns"));
        }
        let l = annotation
            .pathway_index(&f[0])
            .ok_or_else(|| table.err(*line, format!("unknown pathway `{}`", f[0])))?;
        w[l] = tsv::parse_f64(&table, *line, &f[2], "weight")?;
    }
    if let Some(l) = w.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidParameter(format!(
            "weights table has no row for pathway `{}`",
            annotation.pathways()[l].name
        )));
    }
    Ok(w)
}

/// w_l ← w_l [1 − sign(d_l)(η − 1) L² d_l²].
pub fn update_weights(weights: &[f64], d: &[f64], eta: f64) -> Vec<f64> {
    let l2 = (weights.len() as f64).powi(2);
    weights
        .iter()
        .zip(d)
        .map(|(w, &d)| {
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            w * (1.0 - s * (eta - 1.0) * l2 * d * d)
        })
        .collect()
}

/// Rows of `y` permuted by `perm`.
pub fn permute_rows(y: ArrayView2<'_, f64>, perm: &[usize]) -> Array2<f64> {
    y.select(ndarray::Axis(0), perm)
}

/// One null fit: a single λ with uniform a, bisecting γ until exactly one
/// group is selected. On hitting the step cap a selection of one or two
/// groups is accepted; otherwise the fit counts as empty.
pub fn single_selection(
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    weights: &[f64],
    max_bisect: usize,
    solver: &SolverOptions,
) -> Result<Vec<usize>> {
    let q = y.ncols();
    let a = vec![1.0 / (q as f64).sqrt(); q];
    let z = project(y, &a);
    let scores = group_scores(design, &z, weights);
    let lm = scores.iter().copied().fold(0.0, f64::max);
    if lm == 0.0 {
        return Ok(Vec::new());
    }
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rho2 = sorted.get(1).copied().unwrap_or(0.0) / lm;

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut gamma = 0.5 * (1.0 + rho2);
    let mut fallback = None;
    for _ in 0..max_bisect.max(1) {
        let res = active_set_solve(&z, design, gamma * lm, weights, 1.0, solver)?;
        match res.selected.len() {
            1 => return Ok(res.selected),
            0 => hi = gamma,
            n => {
                if n == 2 {
                    fallback = Some(res.selected);
                }
                lo = gamma;
            }
        }
        gamma = 0.5 * (lo + hi);
    }
    Ok(fallback.unwrap_or_default())
}

/// Π*: per-group selection frequency over `fits` null fits on row-permuted Y.
/// Fit `i` uses a permutation seeded by (seed, tuning stream, offset + i).
pub fn selection_frequencies(
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    weights: &[f64],
    fits: usize,
    seed: u64,
    offset: u64,
    max_bisect: usize,
    solver: &SolverOptions,
) -> Result<Vec<f64>> {
    let n = y.nrows();
    let picks: Vec<Vec<usize>> = (0..fits)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, stream::TUNE, offset + i as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let yp = permute_rows(y, &perm);
            single_selection(yp.view(), design, weights, max_bisect, solver)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; design.n_groups()];
    for p in &picks {
        for &l in p {
            counts[l] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / fits as f64).collect())
}

/// Iterates the multiplicative weight update until the null selection
/// distribution is close to uniform. Returns the best state seen when the
/// iteration cap is reached.
pub fn tune_weights(
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    initial: &[f64],
    opts: &TuneOptions,
) -> Result<WeightState> {
    let l = design.n_groups();
    opts.validate(l)?;
    if initial.len() != l {
        return Err(Error::Dimension(format!("{} weights for {l} groups", initial.len())));
    }
    let fits = opts.fits(l);
    let uniform = 1.0 / l as f64;
    let mut w = initial.to_vec();
    let mut history = Vec::new();
    let mut best: Option<WeightState> = None;
    for tau in 0..=opts.max_iter {
        let offset = (tau * fits) as u64;
        let pi = selection_frequencies(y, design, &w, fits, opts.seed, offset, opts.max_bisect, &opts.solver)?;
        let d: Vec<f64> = pi.iter().map(|p| p - uniform).collect();
        let sum_abs: f64 = d.iter().map(|v| v.abs()).sum();
        let max_abs = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        log::info!("tuning iteration {tau}: sum|d| = {sum_abs:.4}, max|d| = {max_abs:.4}");
        history.push(TuneIteration {
            tau,
            sum_abs_d: sum_abs,
            max_abs_d: max_abs,
            weights: w.clone(),
        });
        let state = WeightState {
            weights: w.clone(),
            tau,
            pi_star: pi,
            d: d.clone(),
            eta: opts.eta,
            epsilon: opts.epsilon,
            fits_per_iter: fits,
            seed: opts.seed,
            converged: sum_abs < opts.epsilon,
            history: Vec::new(),
        };
        let better = best.as_ref().is_none_or(|b| sum_abs < b.sum_abs_d());
        if state.converged || better {
            best = Some(state);
        }
        if sum_abs < opts.epsilon {
            break;
        }
        if tau < opts.max_iter {
            w = update_weights(&w, &d, opts.eta);
        }
    }
    let mut best = best.expect("at least one tuning iteration");
    if !best.converged {
        log::warn!(
            "weight tuning did not reach sum|d| < {} in {} iterations; best {:.4} at tau = {}",
            opts.epsilon,
            opts.max_iter,
            best.sum_abs_d(),
            best.tau
        );
    }
    best.history = history;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_selected_weight_shrinks_by_eta() {
        let l = 10;
        let w = vec![2.0; l];
        let mut d = vec![-1.0 / l as f64; l];
        d[0] = 0.0;
        let out = update_weights(&w, &d, 0.5);
        assert!((out[1] - 1.0).abs() < 1e-15);
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn update_factor_bounds() {
        let l = 7usize;
        let eta = 0.3;
        for i in 0..=100 {
            let d = -1.0 / l as f64 + i as f64 / 100.0 * (1.0 - 1.0 / l as f64 + 1.0 / l as f64);
            let d = d.min(1.0 - 1.0 / l as f64);
            let f = update_weights(&vec![1.0; l], &vec![d; l], eta)[0];
            assert!(f >= eta - 1e-15);
            assert!(f <= 1.0 + (1.0 - eta) * (l * l) as f64 * d * d + 1e-12);
            assert!(f > 0.0);
        }
    }
}
