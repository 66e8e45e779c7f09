//! Journal-driven anomaly detection per agent kind.
//!
//! Every ingested record of a kind is one observation for each rate metric
//! (1 when the record is an error / abort / rejection, else 0). The most recent
//! `window` observations form the detection window and up to `baseline_size`
//! observations before it form the baseline. `actions_per_minute` observes one
//! value per closed minute bucket instead.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Millis, MINUTE_MS};
use crate::journal::payload::{HitlPhase, ProgressStatus};
use crate::journal::{JournalRecord, RecordRef};
use crate::lifecycle::LifecycleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ErrorRate,
    AbortRate,
    RejectionRate,
    ActionsPerMinute,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::ErrorRate,
        Metric::AbortRate,
        Metric::RejectionRate,
        Metric::ActionsPerMinute,
    ];

    pub fn is_rate(self) -> bool {
        !matches!(self, Metric::ActionsPerMinute)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ErrorRate => "error_rate",
            Metric::AbortRate => "abort_rate",
            Metric::RejectionRate => "rejection_rate",
            Metric::ActionsPerMinute => "actions_per_minute",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentinelConfig {
    /// B: baseline observations kept before the detection window.
    pub baseline_size: usize,
    /// W: most recent observations compared against the baseline.
    pub window: usize,
    pub min_baseline: usize,
    /// N: run detection every N ingests of a kind.
    pub cadence: u64,
    /// k: signal threshold on the test statistic.
    pub threshold: f64,
    /// Absolute difference rule used when the baseline has zero spread.
    pub abs_threshold: f64,
}

impl Default for SentinelConfig {
    fn default() -> Self {
        Self {
            baseline_size: 500,
            window: 50,
            min_baseline: 200,
            cadence: 25,
            threshold: 3.0,
            abs_threshold: 0.02,
        }
    }
}

impl SentinelConfig {
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.window == 0 {
            out.push("sentinel window must be at least 1".to_owned());
        }
        if self.min_baseline == 0 || self.min_baseline > self.baseline_size {
            out.push("sentinel min_baseline must be within [1, baseline_size]".to_owned());
        }
        if self.cadence == 0 {
            out.push("sentinel cadence must be at least 1".to_owned());
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            out.push("sentinel threshold must be positive".to_owned());
        }
        if self.abs_threshold.is_nan() || self.abs_threshold < 0.0 {
            out.push("sentinel abs_threshold must be non-negative".to_owned());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub agent_kind: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub sample_count: usize,
    pub recent_mean: f64,
    pub recent_count: usize,
    /// Human-readable window definition, e.g. "last 500 excluding most recent 50".
    pub window: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySignal {
    pub signal_id: String,
    pub agent_kind: String,
    pub metric: Metric,
    pub observed: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    /// `(observed - mean) / std`; absent when the baseline std is zero.
    pub z_score: Option<f64>,
    /// Standard error of the difference of means, used for the decision.
    pub standard_error: f64,
    pub statistic: Option<f64>,
    pub affected_instances: Vec<String>,
    pub detected_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackAction {
    pub signal_id: String,
    pub suspended_instances: Vec<String>,
    pub escalation_record: RecordRef,
    pub demotion_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentinelError {
    #[error("insufficient baseline for '{agent_kind}': {have} of {need} observations")]
    InsufficientBaseline {
        agent_kind: String,
        have: usize,
        need: usize,
    },
    #[error("signal {0} already handled")]
    AlreadyHandled(String),
}

/// Plain z-score, `None` when the spread is zero.
pub fn z_score(observed: f64, mean: f64, std: f64) -> Option<f64> {
    (std > 0.0).then(|| (observed - mean) / std)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub signal: bool,
    pub statistic: Option<f64>,
}

/// Decision rule shared by live detection and tests.
///
/// With a positive baseline std the statistic is `(observed - mean) / se` and
/// signals at `>= k`. With zero std, rate metrics signal when the absolute
/// difference exceeds `abs_threshold`; other metrics never signal.
pub fn judge(
    observed: f64,
    mean: f64,
    std: f64,
    standard_error: f64,
    is_rate: bool,
    cfg: &SentinelConfig,
) -> Verdict {
    if std > 0.0 && standard_error > 0.0 {
        let stat = (observed - mean) / standard_error;
        Verdict {
            signal: stat >= cfg.threshold,
            statistic: Some(stat),
        }
    } else {
        Verdict {
            signal: is_rate && (observed - mean).abs() > cfg.abs_threshold,
            statistic: None,
        }
    }
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var, n)
}

#[derive(Debug, Default)]
struct Series {
    obs: VecDeque<(f64, Option<String>)>,
    armed: bool,
    open_signal: Option<String>,
}

impl Series {
    fn new() -> Self {
        Series {
            armed: true,
            ..Series::default()
        }
    }

    fn push(&mut self, value: f64, instance: Option<String>, cap: usize) {
        self.obs.push_back((value, instance));
        while self.obs.len() > cap {
            self.obs.pop_front();
        }
    }

    fn split(&self, window: usize) -> (usize, usize) {
        let recent = window.min(self.obs.len());
        (self.obs.len() - recent, recent)
    }
}

#[derive(Debug)]
struct KindWindows {
    seen: HashSet<(String, u64)>,
    ingested: u64,
    series: HashMap<Metric, Series>,
    minute: Option<u64>,
    minute_count: u64,
}

impl KindWindows {
    fn new() -> Self {
        KindWindows {
            seen: HashSet::new(),
            ingested: 0,
            series: Metric::ALL.iter().map(|m| (*m, Series::new())).collect(),
            minute: None,
            minute_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOutcome {
    pub duplicate: bool,
    /// The cadence says detection should run now.
    pub check_due: bool,
}

/// Per-kind rolling windows. Each kind has its own lock, so ingest and
/// detection on one kind never wait on another.
pub struct Sentinel {
    cfg: SentinelConfig,
    kinds: RwLock<HashMap<String, Arc<Mutex<KindWindows>>>>,
    next_signal: AtomicU64,
}

impl fmt::Debug for Sentinel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sentinel")
            .field("cfg", &self.cfg)
            .field("kinds", &self.kinds.read().len())
            .finish()
    }
}

impl Sentinel {
    pub fn new(cfg: SentinelConfig) -> Self {
        Sentinel {
            cfg,
            kinds: RwLock::new(HashMap::new()),
            next_signal: AtomicU64::new(1),
        }
    }

    pub fn config(&self) -> &SentinelConfig {
        &self.cfg
    }

    fn windows(&self, agent_kind: &str) -> Arc<Mutex<KindWindows>> {
        if let Some(w) = self.kinds.read().get(agent_kind) {
            return w.clone();
        }
        self.kinds
            .write()
            .entry(agent_kind.to_owned())
            .or_insert_with(|| Arc::new(Mutex::new(KindWindows::new())))
            .clone()
    }

    /// Folds one instance record of `agent_kind` into the windows. Idempotent
    /// per `(instance_id, seq)`.
    pub fn ingest(&self, agent_kind: &str, record: &JournalRecord) -> IngestOutcome {
        let windows = self.windows(agent_kind);
        let mut w = windows.lock();
        if !w.seen.insert((record.instance_id.clone(), record.seq)) {
            return IngestOutcome {
                duplicate: true,
                check_due: false,
            };
        }
        w.ingested += 1;

        let (mut error, mut abort, mut rejection, mut proposed) = (false, false, false, false);
        if let Some(p) = record.work_progress() {
            error = p.status == ProgressStatus::Error;
            proposed = p.status == ProgressStatus::Proposed;
        } else if let Some(st) = record.state_transition() {
            abort = st.event.is_some() && st.to == LifecycleState::Aborted;
        } else if let Some(h) = record.hitl() {
            rejection = h.phase == HitlPhase::Resolve
                && h.resolution.map(|r| r.directive.is_rejection()).unwrap_or(false);
        }

        let cap = self.cfg.baseline_size + self.cfg.window;
        let id = &record.instance_id;
        for (metric, hit) in [
            (Metric::ErrorRate, error),
            (Metric::AbortRate, abort),
            (Metric::RejectionRate, rejection),
        ] {
            let series = w.series.get_mut(&metric).expect("all metrics present");
            series.push(f64::from(u8::from(hit)), hit.then(|| id.clone()), cap);
        }

        let minute = record.timestamp / MINUTE_MS;
        match w.minute {
            None => w.minute = Some(minute),
            Some(current) if minute > current => {
                let closed = w.minute_count as f64;
                let series = w
                    .series
                    .get_mut(&Metric::ActionsPerMinute)
                    .expect("all metrics present");
                series.push(closed, None, cap);
                let idle = (minute - current - 1).min(cap as u64);
                for _ in 0..idle {
                    series.push(0.0, None, cap);
                }
                w.minute = Some(minute);
                w.minute_count = 0;
            }
            // Late records count toward the open bucket.
            Some(_) => {}
        }
        if proposed {
            w.minute_count += 1;
        }

        IngestOutcome {
            duplicate: false,
            check_due: w.ingested.is_multiple_of(self.cfg.cadence),
        }
    }

    pub fn ingested(&self, agent_kind: &str) -> u64 {
        self.kinds
            .read()
            .get(agent_kind)
            .map(|w| w.lock().ingested)
            .unwrap_or(0)
    }

    pub fn kinds(&self) -> Vec<String> {
        let mut out: Vec<String> = self.kinds.read().keys().cloned().collect();
        out.sort();
        out
    }

    pub fn baselines(&self, agent_kind: &str) -> Vec<BaselineStats> {
        let windows = self.windows(agent_kind);
        let w = windows.lock();
        Metric::ALL
            .iter()
            .map(|m| self.stats(agent_kind, *m, &w.series[m]).0)
            .collect()
    }

    fn stats(&self, agent_kind: &str, metric: Metric, s: &Series) -> (BaselineStats, f64) {
        let (n_base, n_recent) = s.split(self.cfg.window);
        let base = s.obs.iter().take(n_base).map(|o| o.0);
        let recent = s.obs.iter().skip(n_base).map(|o| o.0);
        let (mean, var_b, nb) = mean_var(base);
        let (recent_mean, var_r, nr) = mean_var(recent);
        let se = if nb > 0 && nr > 0 {
            (var_b / nb as f64 + var_r / nr as f64).sqrt()
        } else {
            0.0
        };
        let stats = BaselineStats {
            agent_kind: agent_kind.to_owned(),
            metric,
            mean,
            std: var_b.sqrt(),
            sample_count: nb,
            recent_mean,
            recent_count: n_recent,
            window: format!(
                "last {} excluding most recent {}",
                self.cfg.baseline_size, self.cfg.window
            ),
        };
        (stats, se)
    }

    /// Compares the detection window against the baseline for every metric
    /// with enough history. Returns new signals; a (kind, metric) pair does
    /// not signal again until a check falls below threshold and any earlier
    /// signal has been acknowledged.
    pub fn detect(&self, agent_kind: &str, now: Millis) -> Result<Vec<AnomalySignal>, SentinelError> {
        let windows = self.windows(agent_kind);
        let mut w = windows.lock();
        let mut out = Vec::new();
        let mut evaluated = 0;
        let mut best_have = 0;
        for metric in Metric::ALL {
            let (stats, se) = self.stats(agent_kind, metric, &w.series[&metric]);
            best_have = best_have.max(stats.sample_count);
            if stats.sample_count < self.cfg.min_baseline || stats.recent_count < self.cfg.window {
                continue;
            }
            evaluated += 1;
            let verdict = judge(stats.recent_mean, stats.mean, stats.std, se, metric.is_rate(), &self.cfg);
            let series = w.series.get_mut(&metric).expect("all metrics present");
            if !verdict.signal {
                series.armed = true;
                continue;
            }
            if !series.armed || series.open_signal.is_some() {
                continue;
            }
            let mut affected: Vec<String> = if metric.is_rate() {
                let (n_base, _) = series.split(self.cfg.window);
                series
                    .obs
                    .iter()
                    .skip(n_base)
                    .filter_map(|o| o.1.clone())
                    .collect()
            } else {
                Vec::new()
            };
            affected.sort();
            affected.dedup();
            let signal_id = format!("sig-{:06}", self.next_signal.fetch_add(1, Ordering::Relaxed));
            series.armed = false;
            series.open_signal = Some(signal_id.clone());
            tracing::info!(%agent_kind, %metric, observed = stats.recent_mean, "anomaly signal");
            out.push(AnomalySignal {
                signal_id,
                agent_kind: agent_kind.to_owned(),
                metric,
                observed: stats.recent_mean,
                baseline_mean: stats.mean,
                baseline_std: stats.std,
                z_score: z_score(stats.recent_mean, stats.mean, stats.std),
                standard_error: se,
                statistic: verdict.statistic,
                affected_instances: affected,
                detected_at: now,
            });
        }
        if evaluated == 0 {
            return Err(SentinelError::InsufficientBaseline {
                agent_kind: agent_kind.to_owned(),
                have: best_have,
                need: self.cfg.min_baseline,
            });
        }
        Ok(out)
    }

    /// Clears the open signal so the pair can signal again once re-armed.
    pub fn acknowledge(&self, agent_kind: &str, signal_id: &str) -> bool {
        let windows = self.windows(agent_kind);
        let mut w = windows.lock();
        for s in w.series.values_mut() {
            if s.open_signal.as_deref() == Some(signal_id) {
                s.open_signal = None;
                return true;
            }
        }
        false
    }

    /// Marks a signal read back from a journal as open.
    pub fn restore_open(&self, signal: &AnomalySignal) {
        let windows = self.windows(&signal.agent_kind);
        let mut w = windows.lock();
        if let Some(s) = w.series.get_mut(&signal.metric) {
            s.open_signal = Some(signal.signal_id.clone());
            s.armed = false;
        }
        let n: u64 = signal
            .signal_id
            .strip_prefix("sig-")
            .and_then(|d| d.parse().ok())
            .unwrap_or(0);
        self.next_signal.fetch_max(n + 1, Ordering::Relaxed);
    }
}
