//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on failure.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cellguard::checker::{dead, liveness};
use cellguard::highlights::{
    compute_refresher_fast, compute_refresher_naive, compute_stale_fresh, dead_of_cell, stale_of_concat, AnalysisCounts,
};
use cellguard::lang::{build_cfg, parse_cell, NodeKind};
use cellguard::replay::{replay_corpus, Family, ReplayOptions};
use cellguard::synth::{generate_corpus, random_notebook, NotebookConfig, ProgramConfig, ProgramGen, SizeParams};
use cellguard::{bench, NotebookState, Session, SessionError};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl FnOnce() -> String, fail: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(ok())
    } else {
        Err(fail())
    }
}

fn aggregation() -> Outcome {
    let t = Instant::now();
    let mut s = Session::new();
    for (id, src) in [("c1", AGG_C1), ("c2", AGG_C2), ("c3", AGG_C3)] {
        s.upsert_cell(Some(id), src, None);
        s.run_cell(id, false).map_err(|e| e.to_string())?;
    }
    s.upsert_cell(Some("c1"), &agg_c1_edited(), None);
    s.run_cell("c1", false).map_err(|e| e.to_string())?;
    let r = s.report().clone();
    let gate = s.run_cell("c3", false);
    let elapsed = t.elapsed();
    let gated = matches!(&gate, Err(SessionError::StaleWarning { stale_symbols, .. }) if stale_symbols == &["agg_by_col"]);
    check(
        r.counter == 4 && r.stale == cells(&["c3"]) && r.refresher == cells(&["c2"]) && gated && elapsed < Duration::from_secs(1),
        || format!("stale={{c3}} refresher={{c2}}, c3 gated on agg_by_col, {:.1} ms", elapsed.as_secs_f64() * 1e3),
        || format!("report {r:?}, gate {gate:?}, {elapsed:?}"),
    )
}

fn three_cell() -> Outcome {
    let mut s = Session::new();
    for (id, src) in [("c1", "a = 4"), ("c2", "b = a"), ("c3", "c = a + b")] {
        s.upsert_cell(Some(id), src, None);
        s.run_cell(id, false).map_err(|e| e.to_string())?;
    }
    s.upsert_cell(Some("c1"), "a = 5", None);
    let r = s.run_cell("c1", false).map_err(|e| e.to_string())?.report;
    let after = s.run_cell("c2", false).map_err(|e| e.to_string())?.report;
    check(
        r.stale == cells(&["c3"]) && r.fresh.contains("c2") && r.refresher.contains("c2") && after.stale.is_empty(),
        || "c3 stale, c2 fresh and refresher, stale=∅ after running c2".into(),
        || format!("after edit {r:?}; after c2 {after:?}"),
    )
}

fn prelude_config(seed: u64) -> NotebookConfig {
    // Half the notebooks bind every name up front, which makes stale cells far more common.
    NotebookConfig { max_cells: 10, prelude: seed % 2 == 0, program: ProgramConfig::default(), ..Default::default() }
}

fn fast_naive_agreement() -> Outcome {
    let t = Instant::now();
    let (mut pairs, mut failures, mut first) = (0usize, 0usize, None);
    for seed in 0..1000u64 {
        let nb = random_notebook(seed, &prelude_config(seed));
        let sf = compute_stale_fresh(&nb);
        for c_r in nb.cell_ids().filter(|c| !sf.stale.contains(*c)) {
            let d = dead_of_cell(&nb, c_r);
            for (c_s, st) in &sf.stale_syms {
                pairs += 1;
                let lhs: BTreeSet<_> = st.difference(&stale_of_concat(&nb, c_r, c_s)).cloned().collect();
                let rhs: BTreeSet<_> = d.intersection(st).cloned().collect();
                if lhs != rhs {
                    failures += 1;
                    first.get_or_insert(format!("seed {seed} ({c_r}, {c_s})"));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    check(
        failures == 0 && pairs > 0 && elapsed < Duration::from_secs(120),
        || format!("1000 notebooks, {pairs} pairs, 0 failures, {:.1} s", elapsed.as_secs_f64()),
        || format!("{failures} failures of {pairs} pairs (first: {first:?}), {elapsed:?}"),
    )
}

fn refresher_equivalence() -> Outcome {
    let (mut with_stale, mut mismatch) = (0, None);
    for seed in 0..1000u64 {
        let nb = random_notebook(seed, &prelude_config(seed));
        let sf = compute_stale_fresh(&nb);
        with_stale += usize::from(!sf.stale.is_empty());
        let fast = compute_refresher_fast(&nb, &sf, &mut AnalysisCounts::default());
        let naive = compute_refresher_naive(&nb, &sf, &mut AnalysisCounts::default());
        if fast != naive {
            mismatch.get_or_insert(format!("seed {seed}: fast {fast:?} naive {naive:?}"));
        }
    }
    check(
        mismatch.is_none(),
        || format!("1000 notebooks ({with_stale} with stale cells), fast == naive"),
        || mismatch.unwrap(),
    )
}

fn dataflow_oracle() -> Outcome {
    let (mut max_branches, mut max_paths) = (0, 0);
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = ProgramGen::new(&mut rng, ProgramConfig::loop_free()).cell();
        let ast = parse_cell(&src).map_err(|e| format!("seed {seed}: {e}"))?;
        let cfg = build_cfg(&ast);
        let branches = cfg.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Cond)).count();
        if branches > 8 {
            return Err(format!("seed {seed}: {branches} branch points"));
        }
        max_branches = max_branches.max(branches);
        let paths = enumerate_paths(&ast);
        max_paths = max_paths.max(paths.len());
        if liveness(&cfg).live_at_top != live_oracle(&paths) {
            return Err(format!("seed {seed}: liveness differs from path oracle\n{src}"));
        }
        if dead(&cfg).dead_at_bottom != dead_oracle(&paths) {
            return Err(format!("seed {seed}: dead differs from path oracle\n{src}"));
        }
    }
    Ok(format!("500 loop-free CFGs (up to {max_branches} branch points, {max_paths} paths) match"))
}

fn incremental_staleness() -> Outcome {
    let mut checks = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nb = NotebookState::new();
        nb.limits.max_steps = 20_000;
        for step in 0..50 {
            let id = format!("c{}", rng.random_range(1..=6));
            if nb.cell(&id).is_none() || rng.random_bool(0.4) {
                let src = ProgramGen::new(&mut rng, ProgramConfig::default()).cell();
                nb.upsert_cell(&id, &src, None);
            }
            nb.execute_cell(&id).expect("cell exists");
            let g = nb.lineage();
            if stale_fixed_point(g) != g.stale_names() {
                return Err(format!("sequence {seed}, step {step}: incremental flags differ from fixed point"));
            }
            checks += 1;
        }
    }
    Ok(format!("200 sequences × 50 steps, {checks} states match the fixed point"))
}

fn complexity() -> Outcome {
    let rows: Vec<_> = (1..=20).map(|k| bench::bench_point(k * 10, 1, 5)).collect();
    for r in &rows {
        if (r.stale as f64) < 0.2 * r.cells as f64 {
            return Err(format!("{} cells: only {} stale", r.cells, r.stale));
        }
        if r.fast_counts.liveness_runs != r.cells || r.fast_counts.dead_runs > r.cells {
            return Err(format!("{} cells: fast counts {:?}", r.cells, r.fast_counts));
        }
    }
    let at = |n: usize| rows.iter().find(|r| r.cells == n).unwrap();
    let (r20, r200) = (at(20), at(200));
    let pairs = r200.naive_counts.liveness_runs - r200.cells;
    let fast_ratio = r200.fast_ms / r20.fast_ms;
    let naive_ratio = r200.naive_ms / r20.naive_ms;
    check(
        pairs as f64 >= 0.1 * 200.0 * 200.0 && fast_ratio < 15.0 && naive_ratio > 50.0,
        || format!("naive pairs at 200 = {pairs}, fast(200)/fast(20) = {fast_ratio:.1}, naive(200)/naive(20) = {naive_ratio:.1}"),
        || format!("pairs {pairs}, fast ratio {fast_ratio:.2}, naive ratio {naive_ratio:.2}"),
    )
}

fn best_of(reps: usize, mut f: impl FnMut()) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn tracing_overhead() -> Outcome {
    let t = Instant::now();
    let logs = generate_corpus(7, 50, &SizeParams::default());
    let traced_opts = ReplayOptions::default();
    let plain_opts = ReplayOptions { tracing: false, ..ReplayOptions::default() };
    let traced = best_of(3, || {
        replay_corpus(&logs, &traced_opts);
    });
    let plain = best_of(3, || {
        replay_corpus(&logs, &plain_opts);
    });
    let ratio = traced / plain;
    let elapsed = t.elapsed();
    check(
        ratio <= 2.0 && elapsed < Duration::from_secs(300),
        || format!("traced {traced:.3} s vs untraced {plain:.3} s, ratio {ratio:.2}"),
        || format!("ratio {ratio:.2} (traced {traced:.3} s, untraced {plain:.3} s), total {elapsed:?}"),
    )
}

fn monte_carlo() -> Outcome {
    let logs = generate_corpus(2024, 500, &SizeParams::default());
    let rec = replay_corpus(&logs, &ReplayOptions { seed: 1, ..ReplayOptions::default() });
    let n = rec.sample_counts.get(&Family::Random).copied().unwrap_or(0);
    let rnd = rec.pooled_mean.get(&Family::Random).copied().unwrap_or(f64::NAN);
    let hr = rec.avg.get(&Family::Refresher).copied().unwrap_or(f64::NAN);
    let hs = rec.avg.get(&Family::Stale).copied().unwrap_or(f64::NAN);
    check(
        n >= 10_000 && (0.9..=1.1).contains(&rnd) && hr > 1.0 && hs < 1.0,
        || format!("P(H_rnd) = {rnd:.3} over {n} samples, AVG(P(H_r)) = {hr:.3}, AVG(P(H_s)) = {hs:.3}"),
        || format!("{n} samples, P(H_rnd) = {rnd:.3}, AVG(P(H_r)) = {hr:.3}, AVG(P(H_s)) = {hs:.3}"),
    )
}

fn semantics_preservation() -> Outcome {
    for seed in 0..500u64 {
        let script = cellguard::synth::random_script(seed, 6, ProgramConfig::default());
        let run = |tracing: bool| {
            let mut nb = NotebookState::with_tracing(tracing);
            nb.limits.max_steps = 20_000;
            for (i, src) in script.iter().enumerate() {
                nb.run_source(&format!("c{}", i + 1), src);
            }
            nb.globals_dump()
        };
        if run(true) != run(false) {
            return Err(format!("script {seed}: globals differ"));
        }
    }
    Ok("500 scripts, identical globals with tracing on and off".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("aggregation-golden", aggregation),
        ("three-cell-golden", three_cell),
        ("fast-naive-agreement", fast_naive_agreement),
        ("refresher-equivalence", refresher_equivalence),
        ("dataflow-oracle", dataflow_oracle),
        ("incremental-staleness", incremental_staleness),
        ("complexity-witness", complexity),
        ("tracing-overhead", tracing_overhead),
        ("monte-carlo", monte_carlo),
        ("semantics-preservation", semantics_preservation),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name:<24} {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<24} {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
