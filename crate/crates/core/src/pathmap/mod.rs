//! SNP to gene to pathway mapping and the overlap-expanded design.

mod annotation;
mod design;
mod genes;
mod snpgene;

pub use annotation::{
    init_weights, map_genes_to_pathways, mapping_stats, Distribution, MappingReport, MappingStats, Pathway,
    PathwayAnnotation,
};
pub use design::{expand_design, ExpandedDesign};
pub(crate) use design::{axpy, dot};
pub use genes::{gene_key, gene_locations_to_tsv, gene_sets_to_gmt, parse_gene_locations, parse_gmt, parse_gmt_str, GeneLocation, GeneSet};
pub use snpgene::{map_snps_to_genes, SnpGeneMap};
