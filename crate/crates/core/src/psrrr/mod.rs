//! Rank-1 pathways sparse reduced-rank regression and weight tuning.

mod fit;
mod tune;

pub use fit::{fit_rank1, project, update_a, CoefficientPair, FitOptions, PsrrrFit};
pub use tune::{
    permute_rows, read_weights, selection_frequencies, single_selection, tune_weights, update_weights,
    TuneIteration, TuneOptions, WeightState,
};
