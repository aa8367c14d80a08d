//! Synthetic genotypes, annotations and phenotypes.

mod genome;
mod phenotype;

pub use genome::{gen_gene_locations, gen_gene_sets, gen_genotypes, gen_snp_info, SimulatedGenome, SimulationSpec};
pub use phenotype::{center_columns, null_phenotype, plant_rank1_phenotype, PlantedPhenotype};
