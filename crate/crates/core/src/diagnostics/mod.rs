//! Model selection, posterior predictive checks and convergence summaries.

mod convergence;
mod labels;
mod ppp;
mod selection;

pub use convergence::{convergence_report, effective_sample_size, scalar_traces, split_rhat, ConvergenceReport, ConvergenceRow};
pub use labels::{
    adjusted_rand_index, class_levels, modal_allocation, posterior_means, relabel_by_level, relabel_draw, relabeled_draws, PosteriorMeans,
};
pub use ppp::{ppp, ppp_suite, replicate_datasets, PppCount, PppReport, ReplicateMode, Replicates, Statistic, UnitCheck, UnitKind};
pub use selection::{bic, bic_value, free_parameters, lpml, BicReport, LpmlReport, CPO_RANGE_LIMIT};
