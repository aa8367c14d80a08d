use std::collections::{BTreeSet, HashMap, HashSet};

use ndarray::{Array2, ArrayView2, Axis, ShapeBuilder};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::table::RankingTable;
use crate::error::{Error, Result};
use crate::ingest::standardize_column;
use crate::pathmap::{dot, ExpandedDesign, PathwayAnnotation};
use crate::psrrr::{fit_rank1, project, FitOptions};
use crate::rng::{rng_for, stream};
use crate::simulate::center_columns;
use crate::solver::{lasso_cd, lasso_lambda_max, norm, SolverOptions};

/// ⌊fraction·N⌋ distinct rows drawn without replacement, ascending.
pub fn subsample_rows(n: usize, fraction: f64, seed: u64, b: usize) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("subsample fraction must lie in (0,1), got {fraction}")));
    }
    let m = (fraction * n as f64).floor() as usize;
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "subsample of {m} rows from N = {n} is too small"
        )));
    }
    let mut rng = rng_for(seed, stream::SUBSAMPLE, b as u64);
    let mut rows = sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

pub fn rows_hash(rows: &[usize]) -> String {
    let mut h = Sha256::new();
    for r in rows {
        h.update((*r as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Selected rows of `y`, column-centred on the subset.
pub fn restrict_response(y: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let mut sub = y.select(Axis(0), rows);
    center_columns(&mut sub);
    sub
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRecord {
    pub b: usize,
    #[serde(skip)]
    pub rows: Vec<usize>,
    pub rows_sha256: String,
    pub n_rows: usize,
    /// Ĉ^(b), pathway names.
    pub pathways: Vec<String>,
    #[serde(skip)]
    pub selected: Vec<usize>,
    /// ‖b_l‖₂ of the normalised loadings, for the selected pathways.
    pub block_norms: Vec<f64>,
    pub lambda: f64,
    pub lambda_max: f64,
    pub converged: bool,
    /// Z^(b): distinct SNPs entering the second level.
    pub n_candidate_snps: usize,
    /// S^(b), SNP ids.
    pub snps: Vec<String>,
    #[serde(skip)]
    pub snp_index: Vec<usize>,
    /// φ^(b).
    pub genes: Vec<String>,
    pub lambda_snp: f64,
}

impl SubsampleRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

pub fn records_to_jsonl(records: &[SubsampleRecord]) -> String {
    records.iter().map(|r| r.to_json() + "\n").collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub n_subsamples: usize,
    pub fraction: f64,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            n_subsamples: 1000,
            fraction: 0.5,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwayRanking {
    pub table: RankingTable,
    /// In subsample order.
    pub records: Vec<SubsampleRecord>,
    /// Every subsample selected nothing.
    pub all_empty: bool,
    pub all_converged: bool,
}

/// Selection frequencies of pathways over repeated fits on half-samples.
///
/// Each subsample re-centres Y and re-standardizes the design on its rows.
/// Subsample `b` depends only on (seed, b), so the worker count does not
/// affect the result.
pub fn rank_pathways(
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    annotation: &PathwayAnnotation,
    weights: &[f64],
    opts: &RankOptions,
) -> Result<PathwayRanking> {
    opts.fit.validate()?;
    if opts.n_subsamples == 0 {
        return Err(Error::InvalidParameter("number of subsamples must be >= 1".into()));
    }
    if annotation.n_pathways() != design.n_groups() {
        return Err(Error::Dimension("annotation and design disagree on L".into()));
    }
    let n = y.nrows();
    let records: Vec<SubsampleRecord> = (0..opts.n_subsamples)
        .into_par_iter()
        .map(|b| {
            let rows = subsample_rows(n, opts.fraction, opts.seed, b)?;
            let ys = restrict_response(y, &rows);
            let ds = design.restrict_rows(&rows);
            let fit = fit_rank1(ys.view(), &ds, weights, &opts.fit)?;
            Ok(SubsampleRecord {
                b,
                rows_sha256: rows_hash(&rows),
                n_rows: rows.len(),
                rows,
                pathways: fit.selected.iter().map(|&l| annotation.pathways()[l].name.clone()).collect(),
                block_norms: fit.selected.iter().map(|&l| fit.block_norms[l]).collect(),
                selected: fit.selected,
                lambda: fit.lambda,
                lambda_max: fit.lambda_max,
                converged: fit.converged && fit.solver_converged,
                n_candidate_snps: 0,
                snps: Vec::new(),
                snp_index: Vec::new(),
                genes: Vec::new(),
                lambda_snp: 0.0,
            })
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0usize; annotation.n_pathways()];
    for r in &records {
        for &l in &r.selected {
            counts[l] += 1;
        }
    }
    let all_empty = counts.iter().all(|&c| c == 0);
    if all_empty {
        log::warn!("no pathway was selected in any of the {} subsamples", opts.n_subsamples);
    }
    let items = annotation
        .pathways()
        .iter()
        .zip(&counts)
        .map(|(p, &c)| (p.name.clone(), c, p.snps.len(), format!("genes={}", p.genes.len())))
        .collect();
    Ok(PathwayRanking {
        table: RankingTable::from_counts("pathway", opts.n_subsamples, items),
        all_converged: records.iter().all(|r| r.converged),
        records,
        all_empty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnpRankOptions {
    /// λ = γ·max_j |X_jᵀ Y a| at every alternation.
    pub gamma: f64,
    pub tol: f64,
    pub max_alt: usize,
    pub solver: SolverOptions,
}

impl Default for SnpRankOptions {
    fn default() -> Self {
        SnpRankOptions {
            gamma: 0.8,
            tol: 1e-4,
            max_alt: 100,
            solver: SolverOptions::default(),
        }
    }
}

/// Rank-1 sparse RRR with a lasso penalty. Returns (β, a, λ), with β = 0
/// when nothing is selected.
pub fn lasso_rank1(
    y: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    opts: &SnpRankOptions,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {}", opts.gamma)));
    }
    let q = y.ncols();
    let mut a = vec![1.0 / (q as f64).sqrt(); q];
    let mut beta = vec![0.0; x.ncols()];
    let mut lambda = 0.0;
    for it in 1..=opts.max_alt {
        let z = project(y, &a);
        let lm = lasso_lambda_max(x, &z);
        lambda = opts.gamma * lm;
        if lm == 0.0 {
            return Ok((vec![0.0; x.ncols()], a, 0.0));
        }
        let res = lasso_cd(&z, x, lambda, &opts.solver)?;
        let bn = norm(&res.coef);
        if bn == 0.0 {
            return Ok((vec![0.0; x.ncols()], a, lambda));
        }
        let mut b_new: Vec<f64> = res.coef.iter().map(|v| v / bn).collect();
        let xb = x.dot(&ndarray::ArrayView1::from(&b_new[..])).to_vec();
        let denom = dot(&xb, &xb);
        if denom == 0.0 {
            return Err(Error::DegenerateFactor);
        }
        let mut a_new: Vec<f64> = y.t().dot(&ndarray::ArrayView1::from(&xb[..])).to_vec();
        let an = norm(&a_new);
        if an == 0.0 {
            return Err(Error::DegenerateFactor);
        }
        a_new.iter_mut().for_each(|v| *v /= an);
        if it > 1 && dot(&b_new, &beta) < 0.0 {
            b_new.iter_mut().for_each(|v| *v = -*v);
            a_new.iter_mut().for_each(|v| *v = -*v);
        }
        let db = diff_norm(&b_new, &beta);
        let da = diff_norm(&a_new, &a);
        beta = b_new;
        a = a_new;
        if it > 1 && db < opts.tol && da < opts.tol {
            break;
        }
    }
    Ok((beta, a, lambda))
}

fn diff_norm(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Compact design column for each annotated SNP (universe index).
fn compact_columns(design: &ExpandedDesign, annotation: &PathwayAnnotation) -> HashMap<usize, usize> {
    let mut out = HashMap::new();
    for (l, p) in annotation.pathways().iter().enumerate() {
        for (j, k) in p.snps.iter().zip(design.block(l)) {
            out.insert(*j, design.source()[k]);
        }
    }
    out
}

/// Genes credited to a selected SNP: those it maps to that also belong to a
/// selected pathway containing the SNP.
pub fn attribute_genes(annotation: &PathwayAnnotation, selected_pathways: &[usize], snps: &[usize]) -> Vec<String> {
    let members: Vec<(HashSet<usize>, HashSet<&str>)> = selected_pathways
        .iter()
        .map(|&l| {
            let p = &annotation.pathways()[l];
            (p.snps.iter().copied().collect(), p.genes.iter().map(String::as_str).collect())
        })
        .collect();
    let mut genes = BTreeSet::new();
    for &s in snps {
        for g in annotation.genes_of_snp(s) {
            if members.iter().any(|(ps, pg)| ps.contains(&s) && pg.contains(g.as_str())) {
                genes.insert(g.clone());
            }
        }
    }
    genes.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnpGeneRanking {
    pub snps: RankingTable,
    pub genes: RankingTable,
    pub records: Vec<SubsampleRecord>,
    pub all_empty: bool,
}

/// Second-level selection over the SNPs of each subsample's selected
/// pathways, with each SNP entering once regardless of how many pathways
/// contain it.
pub fn rank_snps_genes(
    records: &[SubsampleRecord],
    y: ArrayView2<'_, f64>,
    design: &ExpandedDesign,
    annotation: &PathwayAnnotation,
    opts: &SnpRankOptions,
) -> Result<SnpGeneRanking> {
    let compact = compact_columns(design, annotation);
    let updated: Vec<SubsampleRecord> = records
        .par_iter()
        .map(|rec| {
            let mut rec = rec.clone();
            if rec.selected.is_empty() {
                return Ok(rec);
            }
            let cand: Vec<usize> = rec
                .selected
                .iter()
                .flat_map(|&l| annotation.pathways()[l].snps.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let n = rec.rows.len();
            let mut data = Vec::with_capacity(n * cand.len());
            let mut buf = vec![0.0; n];
            for j in &cand {
                let col = design.compact_col(compact[j]);
                for (slot, &i) in buf.iter_mut().zip(&rec.rows) {
                    *slot = col[i];
                }
                match standardize_column(&buf) {
                    Some(s) => data.extend(s),
                    None => data.extend(std::iter::repeat(0.0).take(n)),
                }
            }
            let x = Array2::from_shape_vec((n, cand.len()).f(), data).expect("shape");
            let ys = restrict_response(y, &rec.rows);
            let (beta, _, lam) = lasso_rank1(ys.view(), x.view(), opts)?;
            let chosen: Vec<usize> = cand
                .iter()
                .zip(&beta)
                .filter(|(_, &b)| b != 0.0)
                .map(|(&j, _)| j)
                .collect();
            rec.n_candidate_snps = cand.len();
            rec.lambda_snp = lam;
            rec.genes = attribute_genes(annotation, &rec.selected, &chosen);
            rec.snps = chosen.iter().map(|&j| annotation.snps()[j].id.clone()).collect();
            rec.snp_index = chosen;
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let b = records.len();
    let mut snp_counts: HashMap<usize, usize> = HashMap::new();
    let mut gene_counts: HashMap<&str, usize> = HashMap::new();
    for r in &updated {
        for &j in &r.snp_index {
            *snp_counts.entry(j).or_insert(0) += 1;
        }
        for g in &r.genes {
            *gene_counts.entry(g.as_str()).or_insert(0) += 1;
        }
    }
    let all_empty = updated.iter().all(|r| r.selected.is_empty());
    if all_empty {
        log::warn!("every subsample has an empty pathway selection");
    }

    let mut in_pathways = vec![0usize; annotation.snps().len()];
    for p in annotation.pathways() {
        for &j in &p.snps {
            in_pathways[j] += 1;
        }
    }
    let mut gene_sizes: HashMap<&str, usize> = HashMap::new();
    let snp_items = (0..annotation.snps().len())
        .filter(|&j| in_pathways[j] > 0)
        .map(|j| {
            let s = &annotation.snps()[j];
            for g in annotation.genes_of_snp(j) {
                *gene_sizes.entry(g.as_str()).or_insert(0) += 1;
            }
            let genes = annotation.genes_of_snp(j).join(",");
            (
                s.id.clone(),
                snp_counts.get(&j).copied().unwrap_or(0),
                in_pathways[j],
                format!("{}:{}:{}", s.chromosome, s.position, if genes.is_empty() { "-" } else { &genes }),
            )
        })
        .collect();
    let gene_items = gene_sizes
        .iter()
        .map(|(g, &size)| (g.to_string(), gene_counts.get(g).copied().unwrap_or(0), size, String::new()))
        .collect();
    Ok(SnpGeneRanking {
        snps: RankingTable::from_counts("snp", b, snp_items),
        genes: RankingTable::from_counts("gene", b, gene_items),
        records: updated,
        all_empty,
    })
}
