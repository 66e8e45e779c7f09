//! Template reports over snapshots. Same inputs, same bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::snapshot::MetricsSnapshot;
use crate::analytics::AnalyticsError;
use crate::journal::canonical_json;

pub const SLOPE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartId {
    StateDistribution,
    InterventionFrequency,
    Engagement,
    Adoption,
}

impl ChartId {
    pub const ALL: [ChartId; 4] = [
        ChartId::StateDistribution,
        ChartId::InterventionFrequency,
        ChartId::Engagement,
        ChartId::Adoption,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartId::StateDistribution => "state_distribution",
            ChartId::InterventionFrequency => "intervention_frequency",
            ChartId::Engagement => "engagement",
            ChartId::Adoption => "adoption",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ChartId::StateDistribution => "Lifecycle state distribution",
            ChartId::InterventionFrequency => "Intervention frequency",
            ChartId::Engagement => "Human engagement",
            ChartId::Adoption => "Adoption",
        }
    }

    /// Named values this chart shows, in display order.
    pub fn values(self, s: &MetricsSnapshot) -> Vec<(String, f64)> {
        match self {
            ChartId::StateDistribution => s
                .state_distribution
                .iter()
                .map(|(k, v)| (format!("state.{k}"), *v as f64))
                .collect(),
            ChartId::InterventionFrequency => s
                .intervention_frequency
                .iter()
                .map(|(k, v)| (format!("checkpoints_per_100_actions.{k}"), *v))
                .collect(),
            ChartId::Engagement => {
                let e = &s.engagement;
                vec![
                    ("approvals".into(), e.approvals as f64),
                    ("modifications".into(), e.modifications as f64),
                    ("denials".into(), e.denials as f64),
                    ("aborts".into(), e.aborts as f64),
                    ("timeouts".into(), e.timeouts as f64),
                    ("engagement_rate".into(), e.engagement_rate),
                    ("rejection_rate".into(), e.rejection_rate),
                    ("resolution_latency_median_s".into(), s.resolution_latency.median),
                    ("resolution_latency_p90_s".into(), s.resolution_latency.p90),
                ]
            }
            ChartId::Adoption => vec![
                ("instances".into(), s.instances as f64),
                (
                    "instances_created_last_day".into(),
                    s.adoption_series.values().last().copied().unwrap_or(0) as f64,
                ),
                ("anomalies".into(), s.anomaly_count as f64),
            ],
        }
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChartId {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| AnalyticsError::UnknownChart(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub metric: String,
    pub direction: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub chart_id: ChartId,
    pub narrative: String,
    pub findings: Vec<Finding>,
    pub trend: Finding,
    /// SHA-256 of the snapshot's canonical JSON.
    pub generated_from: String,
}

/// Least-squares slope of `ys` against `0..n`; 0 for fewer than two points.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

pub fn direction(delta: f64) -> &'static str {
    if delta > SLOPE_TOLERANCE {
        "increasing"
    } else if delta < -SLOPE_TOLERANCE {
        "decreasing"
    } else {
        "stable"
    }
}

pub fn snapshot_hash(s: &MetricsSnapshot) -> String {
    let value = serde_json::to_value(s).expect("snapshots serialize");
    hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
}

/// Builds the report for `chart_id`.
///
/// Deltas are taken against `prior` (or zero when absent) and the three
/// largest by magnitude are cited. The trend uses `series` when given, else
/// the snapshot's daily adoption counts for the adoption chart.
pub fn generate_report(
    chart_id: &str,
    current: &MetricsSnapshot,
    prior: Option<&MetricsSnapshot>,
    series: Option<&[f64]>,
    question: Option<&str>,
) -> Result<AnalysisReport, AnalyticsError> {
    let chart: ChartId = chart_id.parse()?;
    let now = chart.values(current);
    let before = prior.map(|p| chart.values(p)).unwrap_or_default();

    let mut deltas: Vec<Finding> = now
        .iter()
        .map(|(name, v)| {
            let old = before
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, x)| *x)
                .unwrap_or(0.0);
            let d = v - old;
            Finding {
                metric: name.clone(),
                direction: direction(d).to_owned(),
                magnitude: d.abs(),
            }
        })
        .collect();
    deltas.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then_with(|| a.metric.cmp(&b.metric))
    });
    deltas.truncate(3);

    let adoption: Vec<f64>;
    let ys: &[f64] = match (series, chart) {
        (Some(s), _) => s,
        (None, ChartId::Adoption) => {
            adoption = current.adoption_series.values().map(|v| *v as f64).collect();
            &adoption
        }
        (None, _) => &[],
    };
    let slope = least_squares_slope(ys);
    let trend = Finding {
        metric: format!("{chart}.trend"),
        direction: direction(slope).to_owned(),
        magnitude: slope.abs(),
    };

    let mut narrative = format!("{} as of {}.", chart.title(), current.as_of);
    let shown: Vec<String> = now.iter().map(|(n, v)| format!("{n}={}", fmt_num(*v))).collect();
    if shown.is_empty() {
        narrative.push_str(" No data yet.");
    } else {
        narrative.push_str(&format!(" Current values: {}.", shown.join(", ")));
    }
    let compared = if prior.is_some() { "the previous snapshot" } else { "an empty baseline" };
    let moved: Vec<&Finding> = deltas.iter().filter(|f| f.direction != "stable").collect();
    if moved.is_empty() {
        narrative.push_str(&format!(" No change against {compared}."));
    } else {
        let parts: Vec<String> = moved
            .iter()
            .map(|f| format!("{} {} by {}", f.metric, f.direction, fmt_num(f.magnitude)))
            .collect();
        narrative.push_str(&format!(" Largest changes against {compared}: {}.", parts.join("; ")));
    }
    narrative.push_str(&format!(
        " Trend over {} points is {} (slope {}).",
        ys.len(),
        trend.direction,
        fmt_num(slope)
    ));
    if let Some(q) = question.map(str::trim).filter(|q| !q.is_empty()) {
        narrative.push_str(&format!(" Question: {q:?}. This answer is limited to the figures above."));
    }

    Ok(AnalysisReport {
        chart_id: chart,
        narrative,
        findings: deltas,
        trend,
        generated_from: snapshot_hash(current),
    })
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::snapshot::snapshot;

    #[test]
    fn slope_signs() {
        assert_eq!(direction(least_squares_slope(&[3.0, 3.0, 3.0])), "stable");
        assert_eq!(direction(least_squares_slope(&[1.0, 2.0, 4.0])), "increasing");
        assert_eq!(direction(least_squares_slope(&[5.0, 1.0])), "decreasing");
        assert!((least_squares_slope(&[0.0, 2.0, 4.0, 6.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_chart() {
        let s = snapshot(&[], 0);
        assert_eq!(
            generate_report("pie", &s, None, None, None).unwrap_err(),
            AnalyticsError::UnknownChart("pie".into())
        );
    }

    #[test]
    fn same_snapshot_same_bytes() {
        let s = snapshot(&[], 0);
        for c in ChartId::ALL {
            let a = generate_report(c.as_str(), &s, None, None, Some("why?")).unwrap();
            let b = generate_report(c.as_str(), &s, None, None, Some("why?")).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}
