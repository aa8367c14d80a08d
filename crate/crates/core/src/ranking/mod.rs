//! Stability-selection rankings and the gene-set enrichment test.

mod enrich;
mod stability;
mod table;

pub use enrich::{enrichment_test, EnrichmentResult};
pub use stability::{
    attribute_genes, lasso_rank1, rank_pathways, rank_snps_genes, records_to_jsonl, restrict_response, rows_hash, subsample_rows,
    PathwayRanking, RankOptions, SnpGeneRanking, SnpRankOptions, SubsampleRecord,
};
pub use table::{RankingEntry, RankingTable};
