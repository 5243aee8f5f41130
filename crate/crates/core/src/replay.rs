//! Session replay: rebuilds notebooks from execution logs, counts unsafe executions and
//! scores every highlight family by predictive power.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::highlights::{compute_report, CellSet, HighlightReport, RefresherAlgo};
use crate::interp::NotebookState;
use crate::lang::parse_cell;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub counter: u64,
    pub source: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionLog {
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: counter {counter} does not increase")]
    NonIncreasing { line: usize, counter: u64 },
    #[error("line {line}: empty source")]
    EmptySource { line: usize },
}

impl SessionLog {
    /// One `{"counter": n, "source": "..."}` object per line. Blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<SessionLog, LogError> {
        let mut entries: Vec<LogEntry> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let e: LogEntry = serde_json::from_str(line).map_err(|source| LogError::Json { line: line_no, source })?;
            if entries.last().is_some_and(|p| p.counter >= e.counter) {
                return Err(LogError::NonIncreasing { line: line_no, counter: e.counter });
            }
            if e.source.trim().is_empty() {
                return Err(LogError::EmptySource { line: line_no });
            }
            entries.push(e);
        }
        Ok(SessionLog { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_sources<S: Into<String>>(sources: impl IntoIterator<Item = S>) -> SessionLog {
        SessionLog {
            entries: sources
                .into_iter()
                .enumerate()
                .map(|(i, s)| LogEntry { counter: i as u64 + 1, source: s.into() })
                .collect(),
        }
    }
}

/// Cells whose text is at least this similar are treated as the same cell.
pub const SIMILARITY_THRESHOLD: f64 = 0.8;

/// 1 − levenshtein / max(len), over chars.
pub fn similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(a, b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identity {
    pub id: String,
    pub is_new: bool,
}

/// Assigns cell ids to logged sources, which carry none.
#[derive(Clone, Debug, Default)]
pub struct CellIdentifier {
    /// id → (latest text, counter of latest execution)
    cells: IndexMap<String, (String, u64)>,
}

impl CellIdentifier {
    pub fn new() -> CellIdentifier {
        CellIdentifier::default()
    }

    /// Most similar known cell at or above the threshold, ties to the most recently
    /// executed; otherwise a new id.
    pub fn infer(&self, source: &str) -> Identity {
        let mut best: Option<(f64, u64, &str)> = None;
        let len = source.chars().count();
        for (id, (text, last)) in &self.cells {
            // Similarity cannot exceed the length ratio.
            let other = text.chars().count();
            if (len.min(other) as f64) < SIMILARITY_THRESHOLD * len.max(other) as f64 {
                continue;
            }
            let s = similarity(source, text);
            if s < SIMILARITY_THRESHOLD {
                continue;
            }
            if best.is_none_or(|(bs, bl, _)| s > bs || (s == bs && *last > bl)) {
                best = Some((s, *last, id));
            }
        }
        match best {
            Some((_, _, id)) => Identity { id: id.to_string(), is_new: false },
            None => Identity { id: format!("c{}", self.cells.len() + 1), is_new: true },
        }
    }

    pub fn record(&mut self, id: &str, source: &str, counter: u64) {
        self.cells.insert(id.to_string(), (source.to_string(), counter));
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "H_s")]
    Stale,
    #[serde(rename = "H_f")]
    Fresh,
    #[serde(rename = "dH_f")]
    NewFresh,
    #[serde(rename = "H_r")]
    Refresher,
    #[serde(rename = "dH_r")]
    NewRefresher,
    #[serde(rename = "H_n")]
    Next,
    #[serde(rename = "H_rnd")]
    Random,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Stale,
        Family::Fresh,
        Family::NewFresh,
        Family::Refresher,
        Family::NewRefresher,
        Family::Next,
        Family::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::Stale => "H_s",
            Family::Fresh => "H_f",
            Family::NewFresh => "dH_f",
            Family::Refresher => "H_r",
            Family::NewRefresher => "dH_r",
            Family::Next => "H_n",
            Family::Random => "H_rnd",
        }
    }
}

/// 1{executed ∈ H} · |N| / |H|.
pub fn predictive_power(h: &CellSet, executed: &str, n: usize) -> f64 {
    assert!(!h.is_empty() && n >= 1, "predictive power needs a non-empty highlight set and notebook");
    if h.contains(executed) {
        n as f64 / h.len() as f64
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOptions {
    pub algo: RefresherAlgo,
    pub tracing: bool,
    pub seed: u64,
}

impl Default for ReplayOptions {
    fn default() -> ReplayOptions {
        ReplayOptions { algo: RefresherAlgo::Fast, tracing: true, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub executions: usize,
    pub error_executions: usize,
    pub re_executions: usize,
    pub safety_error_count: usize,
    pub samples: BTreeMap<Family, Vec<f64>>,
}

impl SessionMetrics {
    pub fn averages(&self) -> BTreeMap<Family, f64> {
        self.samples
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(f, v)| (*f, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    pub fn error_rate(&self) -> f64 {
        if self.executions == 0 {
            0.0
        } else {
            self.error_executions as f64 / self.executions as f64
        }
    }
}

/// Replays one log. Predictive power is sampled before every re-execution of a known cell,
/// from the report computed after the previous execution.
pub fn replay_session(log: &SessionLog, opts: &ReplayOptions) -> SessionMetrics {
    let mut nb = NotebookState::with_tracing(opts.tracing);
    let mut ident = CellIdentifier::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report: Option<HighlightReport> = None;
    let mut last_executed: Option<String> = None;
    let mut m = SessionMetrics::default();

    for entry in &log.entries {
        let identity = ident.infer(&entry.source);
        let parses = parse_cell(&entry.source).is_ok();
        if !identity.is_new && parses && opts.tracing {
            m.re_executions += 1;
            let empty = HighlightReport::default();
            let rep = report.as_ref().unwrap_or(&empty);
            let n = nb.cell_count();
            let c = identity.id.as_str();
            if rep.stale.contains(c) {
                m.safety_error_count += 1;
            }
            let mut sample = |f: Family, h: &CellSet| {
                if !h.is_empty() {
                    m.samples.entry(f).or_default().push(predictive_power(h, c, n));
                }
            };
            sample(Family::Stale, &rep.stale);
            sample(Family::Fresh, &rep.fresh);
            sample(Family::NewFresh, &rep.new_fresh);
            sample(Family::Refresher, &rep.refresher);
            sample(Family::NewRefresher, &rep.new_refresher);
            let next: CellSet = last_executed
                .as_deref()
                .and_then(|p| nb.position(p))
                .and_then(|i| nb.cell_ids().nth(i + 1))
                .map(|s| s.to_string())
                .into_iter()
                .collect();
            sample(Family::Next, &next);
            let pick = rng.random_range(0..n);
            let rnd: CellSet = nb.cell_ids().nth(pick).map(|s| s.to_string()).into_iter().collect();
            sample(Family::Random, &rnd);
        }

        nb.upsert_cell(&identity.id, &entry.source, None);
        let result = nb.execute_cell(&identity.id).expect("cell was just upserted");
        m.executions += 1;
        if !result.is_ok() {
            m.error_executions += 1;
        }
        ident.record(&identity.id, &entry.source, result.counter);
        last_executed = Some(identity.id);
        if opts.tracing {
            report = Some(compute_report(&nb, report.as_ref(), opts.algo));
        }
    }
    m
}

/// Sessions with more than this share of failing executions are left out of aggregates.
pub const MAX_ERROR_RATE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionSummary {
    pub executions: usize,
    pub error_executions: usize,
    pub re_executions: usize,
    pub safety_error_count: usize,
    pub excluded: bool,
    pub averages: BTreeMap<Family, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub sessions: usize,
    pub sessions_included: usize,
    pub sessions_with_safety_errors: usize,
    pub safety_error_count: usize,
    pub sample_counts: BTreeMap<Family, usize>,
    /// Mean over sessions of each session's mean: AVG(P(H)).
    pub avg: BTreeMap<Family, f64>,
    /// Mean over all samples pooled together.
    pub pooled_mean: BTreeMap<Family, f64>,
    pub per_session: Vec<SessionSummary>,
}

pub fn aggregate(sessions: &[SessionMetrics]) -> MetricsRecord {
    let mut rec = MetricsRecord { sessions: sessions.len(), ..Default::default() };
    let mut session_means: BTreeMap<Family, Vec<f64>> = BTreeMap::new();
    let mut pooled: BTreeMap<Family, (f64, usize)> = BTreeMap::new();
    for s in sessions {
        let excluded = s.error_rate() > MAX_ERROR_RATE;
        let averages = s.averages();
        if !excluded {
            rec.sessions_included += 1;
            rec.safety_error_count += s.safety_error_count;
            if s.safety_error_count > 0 {
                rec.sessions_with_safety_errors += 1;
            }
            for (f, v) in &s.samples {
                let p = pooled.entry(*f).or_default();
                p.0 += v.iter().sum::<f64>();
                p.1 += v.len();
            }
            for (f, a) in &averages {
                session_means.entry(*f).or_default().push(*a);
            }
        }
        rec.per_session.push(SessionSummary {
            executions: s.executions,
            error_executions: s.error_executions,
            re_executions: s.re_executions,
            safety_error_count: s.safety_error_count,
            excluded,
            averages,
        });
    }
    for (f, means) in session_means {
        rec.avg.insert(f, means.iter().sum::<f64>() / means.len() as f64);
    }
    for (f, (sum, n)) in pooled {
        rec.sample_counts.insert(f, n);
        if n > 0 {
            rec.pooled_mean.insert(f, sum / n as f64);
        }
    }
    rec
}

/// Replays every log, seeding session `i` with `opts.seed + i`.
pub fn replay_corpus(logs: &[SessionLog], opts: &ReplayOptions) -> MetricsRecord {
    let metrics: Vec<SessionMetrics> = logs
        .iter()
        .enumerate()
        .map(|(i, log)| replay_session(log, &ReplayOptions { seed: opts.seed.wrapping_add(i as u64), ..*opts }))
        .collect();
    aggregate(&metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> CellSet {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn predictive_power_values() {
        assert_eq!(predictive_power(&set(&["c"]), "c", 10), 10.0);
        assert_eq!(predictive_power(&set(&["c"]), "d", 10), 0.0);
        let all = set(&["a", "b", "c"]);
        for c in ["a", "b", "c"] {
            assert_eq!(predictive_power(&all, c, 3), 1.0);
        }
    }

    #[test]
    fn identity_inference() {
        let mut ident = CellIdentifier::new();
        let text: String = "abcdefghij".repeat(10);
        let first = ident.infer(&text);
        assert_eq!(first, Identity { id: "c1".into(), is_new: true });
        ident.record("c1", &text, 1);
        assert_eq!(ident.infer(&text).id, "c1");
        let mut edited: Vec<char> = text.chars().collect();
        for i in [3, 20, 41, 60, 99] {
            edited[i] = 'Z';
        }
        let edited: String = edited.into_iter().collect();
        assert!((similarity(&text, &edited) - 0.95).abs() < 1e-12);
        assert_eq!(ident.infer(&edited), Identity { id: "c1".into(), is_new: false });
        assert_eq!(ident.infer("print(42)"), Identity { id: "c2".into(), is_new: true });
    }

    #[test]
    fn identity_ties_go_to_latest_execution() {
        let mut ident = CellIdentifier::new();
        ident.record("c1", "x = 1", 1);
        ident.record("c2", "x = 1", 2);
        assert_eq!(ident.infer("x = 1").id, "c2");
        ident.record("c1", "x = 1", 3);
        assert_eq!(ident.infer("x = 1").id, "c1");
    }

    #[test]
    fn jsonl_round_trip_and_validation() {
        let log = SessionLog::from_sources(["x = 1", "print(x)"]);
        let text = log.to_jsonl();
        assert_eq!(SessionLog::from_jsonl(&text).unwrap(), log);
        assert!(matches!(
            SessionLog::from_jsonl("{\"counter\":2,\"source\":\"a=1\"}\n{\"counter\":2,\"source\":\"b=1\"}"),
            Err(LogError::NonIncreasing { line: 2, .. })
        ));
        assert!(matches!(SessionLog::from_jsonl("{\"counter\":1,\"source\":\" \"}"), Err(LogError::EmptySource { line: 1 })));
        assert!(matches!(SessionLog::from_jsonl("nope"), Err(LogError::Json { line: 1, .. })));
    }

    #[test]
    fn in_order_log_has_no_samples() {
        let log = SessionLog::from_sources(["alpha = 1", "beta_value = alpha + 2", "print(beta_value * 10)"]);
        let m = replay_session(&log, &ReplayOptions::default());
        assert_eq!(m.safety_error_count, 0);
        assert_eq!(m.re_executions, 0);
        assert!(m.samples.is_empty());
    }

    #[test]
    fn error_heavy_sessions_are_excluded() {
        let bad = SessionMetrics { executions: 4, error_executions: 3, ..Default::default() };
        let good = SessionMetrics {
            executions: 4,
            samples: BTreeMap::from([(Family::Random, vec![2.0, 0.0])]),
            ..Default::default()
        };
        let rec = aggregate(&[bad, good]);
        assert_eq!(rec.sessions, 2);
        assert_eq!(rec.sessions_included, 1);
        assert_eq!(rec.avg[&Family::Random], 1.0);
    }

    #[test]
    fn two_level_mean() {
        let a = SessionMetrics {
            executions: 1,
            samples: BTreeMap::from([(Family::Fresh, vec![4.0, 0.0, 0.0, 0.0])]),
            ..Default::default()
        };
        let b = SessionMetrics {
            executions: 1,
            samples: BTreeMap::from([(Family::Fresh, vec![3.0])]),
            ..Default::default()
        };
        let rec = aggregate(&[a, b]);
        assert_eq!(rec.avg[&Family::Fresh], 2.0);
        assert_eq!(rec.pooled_mean[&Family::Fresh], 1.4);
    }
}
