use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis pipeline.
///
/// Variants are grouped by the stage that raises them; [`Error::is_data_error`]
/// separates bad inputs from configuration mistakes for the CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("unknown chromosome token `{0}`")]
    UnknownChromosome(String),

    #[error("every SNP was removed by quality control")]
    AllFiltered,

    #[error("SNP `{0}` has no observed genotypes; cannot impute")]
    NoObservedValues(String),

    #[error("genotype matrix still contains {0} missing entries")]
    MissingValues(usize),

    #[error("genotype matrix must be standardized first")]
    NotStandardized,

    #[error("gene `{symbol}` has start {start} > end {end}")]
    InvalidGeneInterval { symbol: String, start: u64, end: u64 },

    #[error("gene-set file contains no pathways")]
    EmptyGeneSets,

    #[error("pathway `{0}`: none of its genes appear in the gene-location table")]
    PathwayGenesAbsent(String),

    #[error("annotation references SNP `{0}` which is not in the genotype matrix")]
    UnknownSnp(String),

    #[error("subject `{0}` not found")]
    UnknownSubject(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("group `{group}` has {n} subjects, need at least {min}")]
    GroupTooSmall { group: String, n: usize, min: usize },

    #[error("degenerate latent factor: Xb is identically zero")]
    DegenerateFactor,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no pathways were selected in any subsample")]
    NoSelections,

    #[error("no target genes belong to a ranked pathway")]
    EmptyTargets,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    /// `InvalidParameter` is a configuration problem; everything else stems
    /// from the data.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}
