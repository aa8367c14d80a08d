//! Genotype, SNP-metadata and covariate input; quality control, imputation
//! and standardization.

mod covariates;
mod genotype;
mod qc;
mod transform;

pub use covariates::{parse_covariates, Covariate, CovariateTable};
pub use genotype::{
    genotypes_to_tsv, parse_genotypes, parse_snp_metadata, write_genotypes, write_snp_metadata,
    Chromosome, GenotypeMatrix, SnpInfo,
};
pub use qc::{hwe_chi2, hwe_pvalue, qc_filter, snp_qc, QcReport, QcTag, QcThresholds, SnpQc};
pub use transform::{impute_missing, standardize, standardize_column, Standardized};
