use super::group::{bcd, finish, group_scores, SolverOptions, SolverResult};
use crate::error::{Error, Result};
use crate::pathmap::{dot, ExpandedDesign};

/// Group lasso solved on a screened working set.
///
/// Groups with ‖X_lᵀz‖₂/w_l ≥ `screen`·λ start active. After each solve
/// every inactive group is checked against the zero-block condition and
/// violators are admitted, until none remain.
pub fn active_set_solve(
    z: &[f64],
    design: &ExpandedDesign,
    lambda: f64,
    weights: &[f64],
    screen: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(screen.is_finite() && screen >= 0.0) {
        return Err(Error::InvalidParameter(format!("screening multiple must be >= 0, got {screen}")));
    }
    let scores = group_scores(design, z, weights);
    super::group::lambda_max(design, z, weights)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut active: Vec<usize> = (0..design.n_groups())
        .filter(|&l| scores[l] >= screen * lambda)
        .collect();
    let mut in_active = vec![false; design.n_groups()];
    active.iter().for_each(|&l| in_active[l] = true);

    let mut b = vec![0.0; design.n_cols()];
    let mut iterations = 0;
    let mut trace = Vec::new();
    loop {
        let run = bcd(z, design, lambda, weights, &active, &mut b, opts);
        iterations += run.iterations;
        trace.extend(run.trace);
        let xb = design.mul(&b);
        let r: Vec<f64> = z.iter().zip(&xb).map(|(a, c)| a - c).collect();
        let violators: Vec<usize> = (0..design.n_groups())
            .filter(|&l| !in_active[l])
            .filter(|&l| {
                let s: f64 = design.block(l).map(|k| dot(design.col(k), &r).powi(2)).sum();
                s.sqrt() > lambda * weights[l]
            })
            .collect();
        if violators.is_empty() || !run.converged {
            let run = super::group::Run {
                iterations,
                converged: run.converged,
                trace,
            };
            return Ok(finish(z, design, lambda, weights, b, run));
        }
        log::debug!("active set: admitting {} groups after KKT scan", violators.len());
        for l in violators {
            in_active[l] = true;
        }
        active = (0..design.n_groups()).filter(|&l| in_active[l]).collect();
    }
}
