//! ADE/FDE, best-of-K, baselines, reports, error-increment tables and
//! heatmaps.

mod heatmap;
mod increment;
mod metrics;
mod report;

pub use heatmap::{heatmap, HeatmapGeometry, HeatmapGrid};
pub use increment::{format_percent, increment_percent, increment_table, IncrementRow};
pub use metrics::{ade, best_of_k, best_of_k_points, displacement_errors, fde};
pub use report::{
    const_position, const_velocity, evaluate_method, pair, score_windows, Method, MethodScores, MetricsReport, Mode, SceneScore, AVERAGE,
};
