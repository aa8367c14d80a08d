pub mod error;
pub mod ingest;
pub mod pathmap;
pub mod phenosig;
pub mod psrrr;
pub mod ranking;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod tsv;

pub use error::{Error, Result};
