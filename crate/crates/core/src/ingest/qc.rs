//! Per-SNP quality control: autosome filter, call rate, Hardy-Weinberg
//! equilibrium and minor allele frequency.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::genotype::GenotypeMatrix;
use crate::error::{Error, Result};
use crate::tsv::TsvWriter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcThresholds {
    pub call_rate_min: f64,
    pub hwe_p_min: f64,
    pub maf_min: f64,
    pub autosomes_only: bool,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            call_rate_min: 0.95,
            hwe_p_min: 5e-7,
            maf_min: 0.1,
            autosomes_only: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QcTag {
    NonAutosomal,
    CallRate,
    Hwe,
    Maf,
}

impl fmt::Display for QcTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QcTag::NonAutosomal => "non_autosomal",
            QcTag::CallRate => "call_rate",
            QcTag::Hwe => "hwe",
            QcTag::Maf => "maf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpQc {
    pub snp_id: String,
    pub call_rate: f64,
    pub maf: f64,
    pub hwe_p: f64,
    /// Genotype counts (0, 1, 2 copies of the counted allele).
    pub counts: [usize; 3],
    pub tags: Vec<QcTag>,
}

impl SnpQc {
    pub fn retained(&self) -> bool {
        self.tags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub thresholds: QcThresholds,
    pub snps: Vec<SnpQc>,
}

impl QcReport {
    pub fn n_input(&self) -> usize {
        self.snps.len()
    }

    pub fn n_retained(&self) -> usize {
        self.snps.iter().filter(|s| s.retained()).count()
    }

    pub fn removed_by(&self, tag: QcTag) -> Vec<&str> {
        self.snps
            .iter()
            .filter(|s| s.tags.contains(&tag))
            .map(|s| s.snp_id.as_str())
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut w = TsvWriter::new(&["snp_id", "call_rate", "maf", "hwe_p", "n0", "n1", "n2", "status", "tags"]);
        for s in &self.snps {
            let tags = if s.tags.is_empty() {
                "-".to_string()
            } else {
                s.tags.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
            };
            w.row([
                s.snp_id.clone(),
                s.call_rate.to_string(),
                s.maf.to_string(),
                s.hwe_p.to_string(),
                s.counts[0].to_string(),
                s.counts[1].to_string(),
                s.counts[2].to_string(),
                if s.retained() { "retained" } else { "removed" }.to_string(),
                tags,
            ]);
        }
        w.comment(&format!(
            "summary\tinput={}\tretained={}\tnon_autosomal={}\tcall_rate={}\thwe={}\tmaf={}",
            self.n_input(),
            self.n_retained(),
            self.removed_by(QcTag::NonAutosomal).len(),
            self.removed_by(QcTag::CallRate).len(),
            self.removed_by(QcTag::Hwe).len(),
            self.removed_by(QcTag::Maf).len(),
        ));
        w.into_string()
    }
}

/// One-degree-of-freedom χ² test of Hardy-Weinberg equilibrium.
///
/// Symmetric in the two homozygote counts. A monomorphic SNP returns 1.
pub fn hwe_chi2(n_hom_minor: usize, n_het: usize, n_hom_major: usize) -> f64 {
    let (n_hom_minor, n_hom_major) = (n_hom_minor.min(n_hom_major), n_hom_minor.max(n_hom_major));
    let n = (n_hom_minor + n_het + n_hom_major) as f64;
    let p = (2 * n_hom_minor + n_het) as f64 / (2.0 * n);
    let q = 1.0 - p;
    if n == 0.0 || p <= 0.0 || q <= 0.0 {
        return 0.0;
    }
    let expected = [n * p * p, 2.0 * n * p * q, n * q * q];
    let observed = [n_hom_minor as f64, n_het as f64, n_hom_major as f64];
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum()
}

pub fn hwe_pvalue(n_hom_minor: usize, n_het: usize, n_hom_major: usize) -> f64 {
    let chi2 = hwe_chi2(n_hom_minor, n_het, n_hom_major);
    // P(χ²₁ > x) = erfc(√(x/2))
    erfc((chi2 / 2.0).sqrt()).clamp(0.0, 1.0)
}

pub fn snp_qc(g: &GenotypeMatrix, j: usize, t: &QcThresholds) -> SnpQc {
    let col = g.column(j);
    let mut counts = [0usize; 3];
    for &v in col {
        if !v.is_nan() {
            counts[(v.round() as usize).min(2)] += 1;
        }
    }
    let observed: usize = counts.iter().sum();
    let call_rate = observed as f64 / col.len().max(1) as f64;
    let (maf, hwe_p) = if observed == 0 {
        (0.0, 1.0)
    } else {
        let freq = (counts[1] + 2 * counts[2]) as f64 / (2 * observed) as f64;
        (freq.min(1.0 - freq), hwe_pvalue(counts[2], counts[1], counts[0]))
    };

    let mut tags = Vec::new();
    if t.autosomes_only && !g.snps()[j].chromosome.is_autosome() {
        tags.push(QcTag::NonAutosomal);
    }
    if call_rate < t.call_rate_min {
        tags.push(QcTag::CallRate);
    }
    if hwe_p < t.hwe_p_min {
        tags.push(QcTag::Hwe);
    }
    if maf < t.maf_min {
        tags.push(QcTag::Maf);
    }
    SnpQc {
        snp_id: g.snps()[j].id.clone(),
        call_rate,
        maf,
        hwe_p,
        counts,
        tags,
    }
}

/// Applies every threshold to every SNP and keeps those that pass all of
/// them. MAF and HWE use observed calls only.
pub fn qc_filter(g: &GenotypeMatrix, t: &QcThresholds) -> Result<(GenotypeMatrix, QcReport)> {
    let snps: Vec<SnpQc> = (0..g.n_snps()).map(|j| snp_qc(g, j, t)).collect();
    let keep: Vec<usize> = snps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.retained())
        .map(|(j, _)| j)
        .collect();
    if keep.is_empty() {
        return Err(Error::AllFiltered);
    }
    let report = QcReport {
        thresholds: *t,
        snps,
    };
    Ok((g.select_snps(&keep), report))
}
