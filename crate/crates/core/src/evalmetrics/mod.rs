//! Prediction quality metrics, method comparison and gene ordering.

mod cluster;
mod metrics;
mod report;
#[cfg(test)]
mod tests;

pub use cluster::{cluster_order, condensed_distances, ClusterOrder};
pub use metrics::{js, pcc, rmse, ssim};
pub use report::{
    accuracy_score, comparison_text, robustness_score, Aggregates, GeneMetrics, MetricsReport, Summary,
};
