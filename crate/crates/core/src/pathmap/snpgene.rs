use std::collections::{BTreeMap, HashMap};

use super::genes::GeneLocation;
use crate::ingest::{Chromosome, SnpInfo};

/// Two-way SNP/gene incidence built from genomic windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SnpGeneMap {
    window_bp: u64,
    snp_genes: Vec<Vec<String>>,
    /// Every located gene, including those that capture no SNP.
    gene_snps: BTreeMap<String, Vec<usize>>,
}

impl SnpGeneMap {
    pub fn window_bp(&self) -> u64 {
        self.window_bp
    }

    pub fn n_snps(&self) -> usize {
        self.snp_genes.len()
    }

    /// Genes that SNP `j` maps to, sorted by symbol.
    pub fn genes_of(&self, j: usize) -> &[String] {
        &self.snp_genes[j]
    }

    /// SNP indices mapped to `gene`, ascending; `None` if the gene has no location.
    pub fn snps_of(&self, gene: &str) -> Option<&[usize]> {
        self.gene_snps.get(gene).map(Vec::as_slice)
    }

    pub fn genes(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.gene_snps.iter().map(|(g, s)| (g.as_str(), s.as_slice()))
    }

    pub fn unmapped_snps(&self) -> Vec<usize> {
        (0..self.n_snps())
            .filter(|&j| self.snp_genes[j].is_empty())
            .collect()
    }
}

/// Maps SNP `s` to gene `g` iff `start(g) - window <= pos(s) <= end(g) + window`
/// on the same chromosome. Genes listed at several loci take the union.
pub fn map_snps_to_genes(snps: &[SnpInfo], genes: &[GeneLocation], window_bp: u64) -> SnpGeneMap {
    let mut by_chrom: HashMap<Chromosome, Vec<(u64, usize)>> = HashMap::new();
    for (j, s) in snps.iter().enumerate() {
        by_chrom.entry(s.chromosome).or_default().push((s.position, j));
    }
    by_chrom.values_mut().for_each(|v| v.sort_unstable());

    let mut gene_snps: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for g in genes {
        let hits = gene_snps.entry(g.symbol.clone()).or_default();
        let Some(sorted) = by_chrom.get(&g.chromosome) else {
            continue;
        };
        let lo = g.start.saturating_sub(window_bp);
        let hi = g.end.saturating_add(window_bp);
        let first = sorted.partition_point(|&(p, _)| p < lo);
        hits.extend(sorted[first..].iter().take_while(|&&(p, _)| p <= hi).map(|&(_, j)| j));
    }

    let mut snp_genes = vec![Vec::new(); snps.len()];
    for (g, hits) in gene_snps.iter_mut() {
        hits.sort_unstable();
        hits.dedup();
        for &j in hits.iter() {
            snp_genes[j].push(g.clone());
        }
    }
    SnpGeneMap {
        window_bp,
        snp_genes,
        gene_snps,
    }
}
