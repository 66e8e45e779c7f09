use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::AnalyticsError;
use crate::clock::Millis;
use crate::journal::payload::{AnomalyPayload, HitlPhase, ProgressStatus};
use crate::journal::JournalRecord;
use crate::lifecycle::LifecycleState;

/// Upper bound on buckets per request.
pub const MAX_BUCKETS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesMetric {
    InstancesCreated,
    ActionsReported,
    CheckpointsOpened,
    CheckpointsResolved,
    Rejections,
    Timeouts,
    Finished,
    Aborted,
    Anomalies,
}

impl SeriesMetric {
    pub const ALL: [SeriesMetric; 9] = [
        SeriesMetric::InstancesCreated,
        SeriesMetric::ActionsReported,
        SeriesMetric::CheckpointsOpened,
        SeriesMetric::CheckpointsResolved,
        SeriesMetric::Rejections,
        SeriesMetric::Timeouts,
        SeriesMetric::Finished,
        SeriesMetric::Aborted,
        SeriesMetric::Anomalies,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesMetric::InstancesCreated => "instances_created",
            SeriesMetric::ActionsReported => "actions_reported",
            SeriesMetric::CheckpointsOpened => "checkpoints_opened",
            SeriesMetric::CheckpointsResolved => "checkpoints_resolved",
            SeriesMetric::Rejections => "rejections",
            SeriesMetric::Timeouts => "timeouts",
            SeriesMetric::Finished => "finished",
            SeriesMetric::Aborted => "aborted",
            SeriesMetric::Anomalies => "anomalies",
        }
    }

    /// Whether `r` counts one unit of this metric.
    pub fn counts(self, r: &JournalRecord) -> bool {
        match self {
            SeriesMetric::InstancesCreated => {
                matches!(r.state_transition(), Some(st) if st.event.is_none())
            }
            SeriesMetric::ActionsReported => {
                matches!(r.work_progress(), Some(p) if p.status == ProgressStatus::Proposed)
            }
            SeriesMetric::CheckpointsOpened => {
                matches!(r.hitl(), Some(h) if h.phase == HitlPhase::Open)
            }
            SeriesMetric::CheckpointsResolved => {
                matches!(r.hitl(), Some(h) if h.phase == HitlPhase::Resolve)
            }
            SeriesMetric::Rejections => matches!(
                r.hitl().and_then(|h| h.resolution),
                Some(res) if res.directive.is_rejection()
            ),
            SeriesMetric::Timeouts => matches!(r.hitl(), Some(h) if h.phase == HitlPhase::Expire),
            SeriesMetric::Finished => matches!(
                r.state_transition(),
                Some(st) if st.event.is_some() && st.to == LifecycleState::Finished
            ),
            SeriesMetric::Aborted => matches!(
                r.state_transition(),
                Some(st) if st.event.is_some() && st.to == LifecycleState::Aborted
            ),
            SeriesMetric::Anomalies => matches!(r.anomaly(), Some(AnomalyPayload::Signal(_))),
        }
    }
}

impl fmt::Display for SeriesMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesMetric {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SeriesMetric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AnalyticsError::UnknownMetric(s.to_owned()))
    }
}

/// Number of records in `[start, end)` counting toward `metric`.
pub fn count_in_range(records: &[JournalRecord], metric: SeriesMetric, start: Millis, end: Millis) -> u64 {
    records
        .iter()
        .filter(|r| r.timestamp >= start && r.timestamp < end && metric.counts(r))
        .count() as u64
}

/// Counts per bucket over `[start, end)`. Buckets are `width` wide except
/// possibly the last, which is clipped at `end`. Each pair is (bucket start,
/// count).
pub fn timeseries(
    records: &[JournalRecord],
    metric: SeriesMetric,
    width: Millis,
    start: Millis,
    end: Millis,
) -> Result<Vec<(Millis, u64)>, AnalyticsError> {
    if width == 0 {
        return Err(AnalyticsError::MalformedRange("bucket width must be positive".into()));
    }
    if start > end {
        return Err(AnalyticsError::MalformedRange(format!("start {start} is after end {end}")));
    }
    let n = (end - start).div_ceil(width);
    if n > MAX_BUCKETS {
        return Err(AnalyticsError::MalformedRange(format!(
            "{n} buckets exceeds the limit of {MAX_BUCKETS}"
        )));
    }
    let mut out: Vec<(Millis, u64)> = (0..n).map(|i| (start + i * width, 0)).collect();
    for r in records {
        if r.timestamp < start || r.timestamp >= end || !metric.counts(r) {
            continue;
        }
        out[((r.timestamp - start) / width) as usize].1 += 1;
    }
    Ok(out)
}
