//! Analysis latency against notebook size, for the fast and naive refresher algorithms.

use std::time::Instant;

use serde::Serialize;

use crate::highlights::{compute_report, AnalysisCounts, RefresherAlgo};
use crate::synth::stale_notebook;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub cells: usize,
    pub stale: usize,
    pub fast_ms: f64,
    pub naive_ms: f64,
    pub fast_counts: AnalysisCounts,
    pub naive_counts: AnalysisCounts,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "cells,stale,fast_ms,naive_ms,fast_liveness_runs,fast_dead_runs,naive_liveness_runs,naive_dead_runs";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{},{},{},{}",
            self.cells,
            self.stale,
            self.fast_ms,
            self.naive_ms,
            self.fast_counts.liveness_runs,
            self.fast_counts.dead_runs,
            self.naive_counts.liveness_runs,
            self.naive_counts.dead_runs
        )
    }
}

/// Best of `reps` timings of one full report computation.
fn time_report(nb: &crate::interp::NotebookState, algo: RefresherAlgo, reps: usize) -> (f64, AnalysisCounts, usize) {
    let mut best = f64::INFINITY;
    let mut counts = AnalysisCounts::default();
    let mut stale = 0;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        let r = compute_report(nb, None, algo);
        best = best.min(t.elapsed().as_secs_f64() * 1e3);
        counts = r.analysis_counts;
        stale = r.stale.len();
    }
    (best, counts, stale)
}

pub fn bench_point(cells: usize, seed: u64, reps: usize) -> BenchRow {
    let nb = stale_notebook(seed, cells);
    let (fast_ms, fast_counts, stale) = time_report(&nb, RefresherAlgo::Fast, reps);
    let (naive_ms, naive_counts, _) = time_report(&nb, RefresherAlgo::Naive, reps);
    BenchRow { cells, stale, fast_ms, naive_ms, fast_counts, naive_counts }
}

/// Sizes 10, 20, ... up to `max_cells`.
pub fn bench(max_cells: usize, seed: u64, reps: usize) -> Vec<BenchRow> {
    (1..=max_cells / 10).map(|k| bench_point(k * 10, seed, reps)).collect()
}
