use ndarray::{Array2, ShapeBuilder};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::ingest::{Chromosome, GenotypeMatrix, SnpInfo};
use crate::pathmap::{map_genes_to_pathways, map_snps_to_genes, GeneLocation, GeneSet, MappingReport, PathwayAnnotation};
use crate::rng::{rng_for, stream};

/// Base pairs between consecutive SNPs of a gene.
const SNP_SPACING: u64 = 1_000;
/// Base pairs between consecutive gene starts; far wider than any window.
const GENE_SPACING: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_subjects: usize,
    pub n_snps: usize,
    pub n_pathways: usize,
    /// Pathway sizes in SNPs are drawn uniformly from this range unless
    /// `pathway_sizes` lists them.
    pub pathway_size_min: usize,
    pub pathway_size_max: usize,
    pub pathway_sizes: Option<Vec<usize>>,
    /// Fraction of each pathway's SNPs borrowed from other pathways.
    pub overlap_rate: f64,
    pub snps_per_gene: usize,
    pub maf_min: f64,
    pub maf_max: f64,
    pub ld_block: usize,
    /// Lag-one correlation of the latent Gaussian within an LD block.
    pub ld_rho: f64,
    pub causal_pathways: Vec<usize>,
    pub causal_snps_per_pathway: usize,
    /// Standard deviation of the noise added to every trait.
    pub sigma: f64,
    pub n_traits: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_subjects: 200,
            n_snps: 2000,
            n_pathways: 20,
            pathway_size_min: 40,
            pathway_size_max: 120,
            pathway_sizes: None,
            overlap_rate: 0.1,
            snps_per_gene: 5,
            maf_min: 0.15,
            maf_max: 0.5,
            ld_block: 5,
            ld_rho: 0.5,
            causal_pathways: vec![0],
            causal_snps_per_pathway: 20,
            sigma: 0.3,
            n_traits: 50,
            seed: 1,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_subjects < 4 {
            errs.push("n_subjects must be >= 4".to_string());
        }
        if self.n_snps == 0 || self.snps_per_gene == 0 || self.ld_block == 0 {
            errs.push("n_snps, snps_per_gene and ld_block must be >= 1".to_string());
        }
        if self.n_pathways == 0 {
            errs.push("n_pathways must be >= 1".to_string());
        }
        if !(self.maf_min > 0.0 && self.maf_min <= self.maf_max && self.maf_max <= 0.5) {
            errs.push(format!("MAF range [{}, {}] must lie in (0, 0.5]", self.maf_min, self.maf_max));
        }
        if !(0.0..1.0).contains(&self.ld_rho) {
            errs.push(format!("ld_rho must lie in [0,1), got {}", self.ld_rho));
        }
        if !(0.0..1.0).contains(&self.overlap_rate) {
            errs.push(format!("overlap_rate must lie in [0,1), got {}", self.overlap_rate));
        }
        if self.pathway_size_min == 0 || self.pathway_size_min > self.pathway_size_max {
            errs.push("pathway size range is empty".to_string());
        }
        if let Some(s) = &self.pathway_sizes {
            if s.len() != self.n_pathways || s.contains(&0) {
                errs.push("pathway_sizes must list n_pathways positive sizes".to_string());
            }
        }
        if let Some(&l) = self.causal_pathways.iter().find(|&&l| l >= self.n_pathways) {
            errs.push(format!("causal pathway {l} is out of range"));
        }
        if !(self.sigma >= 0.0) || self.n_traits == 0 {
            errs.push("sigma must be >= 0 and n_traits >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(errs.join("; ")))
        }
    }

    fn n_genes(&self) -> usize {
        self.n_snps.div_ceil(self.snps_per_gene)
    }
}

/// Gene `k` owns SNPs `k·s .. (k+1)·s`; genes are spread in order over the 22 autosomes.
pub fn gen_snp_info(spec: &SimulationSpec) -> Vec<SnpInfo> {
    let n_genes = spec.n_genes();
    (0..spec.n_snps)
        .map(|j| {
            let k = j / spec.snps_per_gene;
            let (chrom, base) = gene_site(k, n_genes);
            SnpInfo {
                id: format!("rs{}", j + 1),
                chromosome: chrom,
                position: base + (j % spec.snps_per_gene) as u64 * SNP_SPACING,
            }
        })
        .collect()
}

fn gene_site(k: usize, n_genes: usize) -> (Chromosome, u64) {
    let per_chrom = n_genes.div_ceil(22).max(1);
    let c = (k / per_chrom) as u8 + 1;
    let base = GENE_SPACING * (1 + (k % per_chrom) as u64);
    (Chromosome::Autosome(c), base)
}

pub fn gen_gene_locations(spec: &SimulationSpec) -> Vec<GeneLocation> {
    let n_genes = spec.n_genes();
    (0..n_genes)
        .map(|k| {
            let (chrom, base) = gene_site(k, n_genes);
            let last = ((k + 1) * spec.snps_per_gene).min(spec.n_snps) - k * spec.snps_per_gene;
            GeneLocation::new(&gene_name(k), chrom, base, base + (last as u64 - 1) * SNP_SPACING)
                .expect("start <= end")
        })
        .collect()
}

fn gene_name(k: usize) -> String {
    format!("GENE{}", k + 1)
}

/// Pathways as gene sets. Each pathway owns a run of consecutive genes and
/// borrows a further `overlap_rate` share of its size from other pathways.
pub fn gen_gene_sets(spec: &SimulationSpec) -> Vec<GeneSet> {
    let mut rng = rng_for(spec.seed, stream::ANNOTATION, 0);
    let n_genes = spec.n_genes();
    let spg = spec.snps_per_gene;
    let mut sizes: Vec<usize> = match &spec.pathway_sizes {
        Some(s) => s.clone(),
        None => (0..spec.n_pathways)
            .map(|_| rng.gen_range(spec.pathway_size_min..=spec.pathway_size_max))
            .collect(),
    };
    let own: Vec<usize> = sizes
        .iter()
        .map(|&s| (((s as f64) * (1.0 - spec.overlap_rate) / spg as f64).round() as usize).max(1))
        .collect();
    let total: usize = own.iter().sum();
    let own: Vec<usize> = if total > n_genes {
        log::warn!("pathway sizes exceed the simulated genome; scaling down");
        let f = n_genes as f64 / total as f64;
        sizes.iter_mut().for_each(|s| *s = ((*s as f64) * f).max(1.0) as usize);
        own.iter().map(|&g| ((g as f64 * f) as usize).max(1)).collect()
    } else {
        own
    };

    let mut start = 0;
    let mut owned: Vec<Vec<usize>> = Vec::with_capacity(own.len());
    for &g in &own {
        let end = (start + g).min(n_genes);
        owned.push((start..end).collect());
        start = end;
    }
    let mut sets = Vec::with_capacity(own.len());
    for (l, genes) in owned.iter().enumerate() {
        let mut members = genes.clone();
        let borrow = ((sizes[l] as f64 * spec.overlap_rate) / spg as f64).round() as usize;
        let mut pool: Vec<usize> = owned
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != l)
            .flat_map(|(_, g)| g.iter().copied())
            .collect();
        pool.shuffle(&mut rng);
        members.extend(pool.into_iter().take(borrow));
        sets.push(GeneSet {
            name: format!("PATHWAY_{:02}", l + 1),
            description: format!("simulated pathway {}", l + 1),
            genes: members.into_iter().map(gene_name).collect(),
        });
    }
    sets
}

/// Minor-allele counts with AR(1) LD inside consecutive blocks.
///
/// Each haplotype is a latent Gaussian chain thresholded at its upper MAF
/// quantile; two independent haplotypes are summed. The attained LD is
/// somewhat below `ld_rho` because thresholding attenuates correlation.
pub fn gen_genotypes(spec: &SimulationSpec) -> Result<GenotypeMatrix> {
    spec.validate()?;
    let n = spec.n_subjects;
    let snps = gen_snp_info(spec);
    let n_blocks = spec.n_snps.div_ceil(spec.ld_block);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = rng_for(spec.seed, stream::GENOTYPE, blk as u64);
            let lo = blk * spec.ld_block;
            let hi = (lo + spec.ld_block).min(spec.n_snps);
            let width = hi - lo;
            let thresholds: Vec<f64> = (0..width)
                .map(|_| {
                    let maf = if spec.maf_min == spec.maf_max {
                        spec.maf_min
                    } else {
                        rng.gen_range(spec.maf_min..spec.maf_max)
                    };
                    upper_quantile(maf)
                })
                .collect();
            let rho = spec.ld_rho;
            let innov = (1.0 - rho * rho).sqrt();
            let mut out = vec![0.0; n * width];
            for _hap in 0..2 {
                for i in 0..n {
                    let mut u: f64 = rng.sample(StandardNormal);
                    for (j, t) in thresholds.iter().enumerate() {
                        if j > 0 {
                            let e: f64 = rng.sample(StandardNormal);
                            u = rho * u + innov * e;
                        }
                        if u > *t {
                            out[j * n + i] += 1.0;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let data: Vec<f64> = blocks.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n, spec.n_snps).f(), data).expect("shape");
    let subjects = (0..n).map(|i| format!("S{:05}", i + 1)).collect();
    GenotypeMatrix::new(values, snps, subjects)
}

/// z with P(Z > z) = p.
fn upper_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Raw genotypes together with the annotation files describing them.
#[derive(Debug, Clone)]
pub struct SimulatedGenome {
    pub genotypes: GenotypeMatrix,
    pub genes: Vec<GeneLocation>,
    pub gene_sets: Vec<GeneSet>,
}

impl SimulatedGenome {
    pub fn generate(spec: &SimulationSpec) -> Result<Self> {
        Ok(SimulatedGenome {
            genotypes: gen_genotypes(spec)?,
            genes: gen_gene_locations(spec),
            gene_sets: gen_gene_sets(spec),
        })
    }

    /// Runs the SNP → gene → pathway mapping over all simulated SNPs.
    pub fn annotate(&self, window_bp: u64) -> Result<(PathwayAnnotation, MappingReport)> {
        let snps = self.genotypes.snps();
        let map = map_snps_to_genes(snps, &self.genes, window_bp);
        map_genes_to_pathways(&self.gene_sets, &map, snps, &[])
    }
}
