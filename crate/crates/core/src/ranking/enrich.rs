use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::RankingTable;
use crate::error::{Error, Result};
use crate::pathmap::{gene_key, PathwayAnnotation};
use crate::rng::{rng_for, stream};

/// Permutations handled by one seeded work item.
const CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub score: f64,
    pub p_value: f64,
    pub n_perm: usize,
    pub targets_used: Vec<String>,
    /// Targets that belong to no ranked pathway.
    pub dropped: Vec<String>,
}

/// Sum over target genes of the mean rank of the pathways containing them,
/// against the same statistic under uniformly permuted pathway ranks.
/// The p-value counts permuted scores strictly below the observed one.
pub fn enrichment_test(
    pathways: &RankingTable,
    annotation: &PathwayAnnotation,
    targets: &[String],
    n_perm: usize,
    seed: u64,
) -> Result<EnrichmentResult> {
    if n_perm == 0 {
        return Err(Error::InvalidParameter("n_perm must be >= 1".into()));
    }
    let ranked: Vec<(usize, usize)> = pathways
        .entries
        .iter()
        .filter_map(|e| annotation.pathway_index(&e.id).map(|l| (l, e.rank)))
        .collect();
    let k = ranked.len();
    let mut targets_used = Vec::new();
    let mut dropped = Vec::new();
    // per target: positions into `ranked` of the pathways containing it
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for t in targets {
        let key = gene_key(t);
        if !seen.insert(key.clone()) {
            continue;
        }
        let m: Vec<usize> = ranked
            .iter()
            .enumerate()
            .filter(|(_, &(l, _))| annotation.pathways()[l].genes.contains(&key))
            .map(|(i, _)| i)
            .collect();
        if m.is_empty() {
            dropped.push(key);
        } else {
            targets_used.push(key);
            members.push(m);
        }
    }
    if !dropped.is_empty() {
        log::info!("{} target genes are in no ranked pathway and were dropped", dropped.len());
    }
    if members.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let score_of = |ranks: &[usize]| -> f64 {
        members
            .iter()
            .map(|m| m.iter().map(|&i| ranks[i] as f64).sum::<f64>() / m.len() as f64)
            .sum()
    };
    let observed_ranks: Vec<usize> = ranked.iter().map(|&(_, r)| r).collect();
    let score = score_of(&observed_ranks);

    let n_chunks = n_perm.div_ceil(CHUNK);
    let lower: usize = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, stream::ENRICH, c as u64);
            let mut ranks: Vec<usize> = (1..=k).collect();
            let todo = CHUNK.min(n_perm - c * CHUNK);
            (0..todo)
                .filter(|_| {
                    ranks.shuffle(&mut rng);
                    score_of(&ranks) < score
                })
                .count()
        })
        .sum();
    Ok(EnrichmentResult {
        score,
        p_value: lower as f64 / n_perm as f64,
        n_perm,
        targets_used,
        dropped,
    })
}
