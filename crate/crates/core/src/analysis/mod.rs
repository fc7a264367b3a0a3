//! Analysis of multiply imputed datasets: outcome categories, a GEE event
//! model, Rubin's rules, and the complete-case comparison.

mod category;
mod gee;
mod pool;

pub use category::{categorize_a1c, A1cCategory};
pub use gee::{cca_analysis, event_data, fit_event_model, fit_gee, EventData, GeeFit, OutcomeSource, WorkingCorrelation, GEE_MAX_ITER, GEE_TOL};
pub use pool::{comparison_points, compare_report, pool, pool_scalar, ComparisonPoint, ComparisonRow, PooledEstimate, DF_CAP};
