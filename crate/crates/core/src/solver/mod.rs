//! Penalised least-squares engines.

mod active;
mod group;
mod lasso;

pub use active::active_set_solve;
pub use group::{
    group_lasso_bcd, group_lasso_bcd_in_order, group_scores, kkt_check, lambda_max, objective, SolverOptions,
    SolverResult,
};
pub(crate) use group::norm;
pub use lasso::{lasso_cd, lasso_lambda_max, lasso_objective, select_columns, soft_threshold, LassoResult};
