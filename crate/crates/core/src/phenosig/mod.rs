//! Disease-signature phenotypes from longitudinal traits.

mod ancova;
mod classify;
mod traits;

pub use ancova::{ancova_filter, f1_sf, residualize, AncovaResult, PhenotypeMatrix};
pub use classify::{stratified_folds, validate_signature, Confusion, DiagonalGaussian, ValidationReport};
pub use traits::{fit_slopes, LongitudinalTable, TraitMatrix};
