//! Read-side computations over journal records: dashboard snapshots, bucketed
//! series, responsibility traces and template reports. Everything here is a
//! pure function of the records passed in.

pub mod report;
pub mod snapshot;
pub mod timeseries;
pub mod trace;

use thiserror::Error;

pub use report::{generate_report, least_squares_slope, AnalysisReport, ChartId, Finding};
pub use snapshot::{nearest_rank, snapshot, Engagement, Latency, MetricsSnapshot};
pub use timeseries::{count_in_range, timeseries, SeriesMetric};
pub use trace::{
    find_dropped_constraints, trace_responsibility, DroppedConstraints, ResponsibilityTrace, TraceStep,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("malformed range: {0}")]
    MalformedRange(String),
    #[error("unknown artifact '{0}'")]
    UnknownArtifact(String),
    #[error("unknown chart '{0}'")]
    UnknownChart(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
}
