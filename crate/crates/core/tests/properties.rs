mod common;

use std::collections::BTreeSet;

use cellguard::checker::{dead, liveness};
use cellguard::highlights::{compute_report, compute_stale_fresh, dead_of_cell, RefresherAlgo};
use cellguard::lang::{build_cfg, parse_cell, pretty_print, use_def, Stmt, StmtKind};
use cellguard::replay::{predictive_power, replay_corpus, replay_session, Family, ReplayOptions};
use cellguard::synth::{generate_corpus, random_notebook, NotebookConfig, ProgramConfig, ProgramGen, SizeParams};
use cellguard::NotebookState;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gen_cell(seed: u64, cfg: ProgramConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ProgramGen::new(&mut rng, cfg).cell()
}

fn simple_stmts(stmts: &[Stmt], out: &mut Vec<Stmt>) {
    for s in stmts {
        match &s.kind {
            StmtKind::If { branches, orelse } => {
                for (_, body) in branches {
                    simple_stmts(body, out);
                }
                simple_stmts(orelse, out);
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => simple_stmts(body, out),
            StmtKind::FuncDef { body, .. } => simple_stmts(body, out),
            _ => out.push(s.clone()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parse_print_round_trip(seed in any::<u64>()) {
        let src = gen_cell(seed, ProgramConfig::default());
        let ast = parse_cell(&src).unwrap();
        let printed = pretty_print(&ast);
        prop_assert_eq!(parse_cell(&printed).unwrap(), ast);
    }

    #[test]
    fn use_def_is_pure(seed in any::<u64>()) {
        let ast = parse_cell(&gen_cell(seed, ProgramConfig::default())).unwrap();
        let mut flat = Vec::new();
        simple_stmts(&ast, &mut flat);
        for s in &flat {
            prop_assert_eq!(use_def(s), use_def(s));
        }
    }

    #[test]
    fn dataflow_matches_path_enumeration(seed in any::<u64>()) {
        let ast = parse_cell(&gen_cell(seed, ProgramConfig::loop_free())).unwrap();
        let cfg = build_cfg(&ast);
        let paths = enumerate_paths(&ast);
        prop_assert_eq!(cfg_path_count(&cfg), paths.len());
        prop_assert_eq!(liveness(&cfg).live_at_top, live_oracle(&paths));
        prop_assert_eq!(dead(&cfg).dead_at_bottom, dead_oracle(&paths));
    }

    #[test]
    fn worklists_converge_within_bound(seed in any::<u64>()) {
        let ast = parse_cell(&gen_cell(seed, ProgramConfig::default())).unwrap();
        let cfg = build_cfg(&ast);
        let universe: BTreeSet<_> = cfg.nodes.iter().flat_map(|n| n.uses.iter().chain(&n.defs).cloned()).collect();
        let bound = cfg.len() * (universe.len() + 1);
        prop_assert!(liveness(&cfg).iterations <= bound);
        prop_assert!(dead(&cfg).iterations <= bound);
    }

    #[test]
    fn straight_line_duality(seed in any::<u64>()) {
        let cfg = ProgramConfig { branch_density: 0.0, max_branch_points: 0, ..ProgramConfig::loop_free() };
        let ast = parse_cell(&gen_cell(seed, cfg)).unwrap();
        let mut written = BTreeSet::new();
        let mut read_first = BTreeSet::new();
        let mut killed = BTreeSet::new();
        for s in &ast {
            let ud = use_def(s);
            read_first.extend(ud.uses.difference(&written).cloned());
            written.extend(ud.defs.iter().cloned());
            killed.extend(ud.defs.difference(&ud.uses).cloned());
        }
        let d = dead(&build_cfg(&ast)).dead_at_bottom;
        prop_assert_eq!(&d, &killed);
        prop_assert!(d.is_subset(&written));
        let expected: BTreeSet<_> = written.difference(&read_first).cloned().collect();
        prop_assert!(expected.is_subset(&d));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn incremental_staleness_matches_fixed_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nb = NotebookState::new();
        nb.limits.max_steps = 20_000;
        let mut last_ts = std::collections::BTreeMap::new();
        for step in 0..30 {
            let id = format!("c{}", rand::Rng::random_range(&mut rng, 1..=5));
            let src = ProgramGen::new(&mut rng, ProgramConfig::default()).cell();
            if step < 5 || rand::Rng::random_bool(&mut rng, 0.5) {
                nb.upsert_cell(&id, &src, None);
            }
            if nb.cell(&id).is_some() {
                nb.execute_cell(&id).unwrap();
            }
            let g = nb.lineage();
            prop_assert_eq!(stale_fixed_point(g), g.stale_names());
            prop_assert!(g.check_invariants().is_ok(), "{:?}", g.check_invariants());
            for s in g.symbols() {
                if let Some(&prev) = last_ts.get(&s.name) {
                    prop_assert!(s.ts >= prev, "timestamp of {} went down", s.name);
                }
            }
            last_ts = g.symbols().map(|s| (s.name.clone(), s.ts)).collect();
        }
    }

    #[test]
    fn single_assignment_in_order_run_stays_fresh(deps in prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..3), 1..12)) {
        let mut nb = NotebookState::new();
        for (k, ds) in deps.iter().enumerate() {
            let rhs: Vec<String> = if k == 0 { Vec::new() } else { ds.iter().map(|i| format!("v{}", i.index(k))).collect() };
            let src = if rhs.is_empty() { format!("v{k} = {k}") } else { format!("v{k} = {} + 1", rhs.join(" + ")) };
            let r = nb.run_source(&format!("c{k}"), &src);
            prop_assert!(r.is_ok());
            prop_assert!(nb.lineage().stale_names().is_empty());
            prop_assert!(compute_stale_fresh(&nb).stale.is_empty());
        }
    }

    #[test]
    fn report_invariants(seed in any::<u64>()) {
        let nb = random_notebook(seed, &NotebookConfig { prelude: seed % 2 == 0, ..Default::default() });
        let prev = compute_report(&nb, None, RefresherAlgo::Fast);
        let r = compute_report(&nb, Some(&prev), RefresherAlgo::Fast);
        prop_assert!(r.stale.is_disjoint(&r.fresh));
        prop_assert!(r.refresher.is_disjoint(&r.stale));
        prop_assert!(r.new_fresh.is_empty() && r.new_refresher.is_empty());
        prop_assert!(prev.new_fresh == prev.fresh && prev.new_refresher == prev.refresher);
        prop_assert_eq!(r.analysis_counts.liveness_runs, nb.cell_count());
        prop_assert!(r.analysis_counts.dead_runs <= nb.cell_count());
        let naive = compute_report(&nb, None, RefresherAlgo::Naive);
        prop_assert_eq!(naive.analysis_counts.liveness_runs, nb.cell_count() + r.stale.len() * (nb.cell_count() - r.stale.len()));
        for id in nb.cell_ids() {
            let class = cellguard::classify_cell(nb.cell(id).unwrap().statements(), nb.cell_timestamp(id), &nb);
            prop_assert!(class.stale_syms.is_disjoint(&class.fresh_syms));
        }
    }

    #[test]
    fn execution_is_deterministic(seed in any::<u64>()) {
        let cfg = NotebookConfig::default();
        let a = random_notebook(seed, &cfg);
        let b = random_notebook(seed, &cfg);
        prop_assert_eq!(a.lineage().dump(), b.lineage().dump());
        prop_assert_eq!(a.globals_dump(), b.globals_dump());
        let mut a = a;
        let mut b = b;
        for id in ["c1", "c2"] {
            prop_assert_eq!(a.execute_cell(id).unwrap(), b.execute_cell(id).unwrap());
        }
    }
}

/// Running a suggested refresher clears the stale symbols it overwrites and shrinks the stale
/// cells' stale sets, provided the run does not itself invalidate anything (a refresher that
/// first rewrites `a` and then reads a child of `a` creates new staleness on its own).
#[test]
fn running_a_refresher_shrinks_stale_sets() {
    let (mut checked, mut self_invalidating) = (0, 0);
    for seed in 0..500 {
        let nb = random_notebook(seed, &NotebookConfig { prelude: true, ..Default::default() });
        let sf = compute_stale_fresh(&nb);
        let before = nb.lineage().stale_names();
        let union = |nb: &NotebookState| -> BTreeSet<_> {
            sf.stale.iter().flat_map(|c| cellguard::highlights::stale_of_cell(nb, c)).collect()
        };
        for c_r in compute_report(&nb, None, RefresherAlgo::Fast).refresher {
            let killed: BTreeSet<_> = sf.stale_syms.values().flat_map(|s| dead_of_cell(&nb, &c_r).intersection(s).cloned().collect::<Vec<_>>()).collect();
            assert!(!killed.is_empty());
            let mut after = nb.clone();
            if !after.execute_cell(&c_r).unwrap().is_ok() {
                continue;
            }
            let still = after.lineage().stale_names();
            if !still.is_subset(&before) {
                self_invalidating += 1;
                continue;
            }
            checked += 1;
            assert!(killed.is_disjoint(&still), "seed {seed}: {c_r}");
            let (u0, u1) = (union(&nb), union(&after));
            assert!(u1.is_subset(&u0) && u1.len() < u0.len(), "seed {seed}: {c_r}");
        }
    }
    assert!(checked >= 100, "only {checked} refreshers checked ({self_invalidating} self-invalidating)");
}

#[test]
fn lineage_events_do_not_grow_with_trip_count() {
    let events = |n: usize| {
        let mut nb = NotebookState::new();
        nb.run_source("c1", "lst = [1, 2, 3]\nacc = {\"t\": 0}");
        let src = format!("s = 0\nfor i in range({n}):\n    s = s + lst[i % 3]\n    acc.t = s\n    lst.append(i)");
        nb.run_source("c2", &src).lineage_events.len()
    };
    assert_eq!(events(3), events(300));
}

#[test]
fn replay_is_deterministic() {
    let logs = generate_corpus(3, 6, &SizeParams::default());
    let opts = ReplayOptions { seed: 11, ..Default::default() };
    assert_eq!(replay_corpus(&logs, &opts), replay_corpus(&logs, &opts));
}

#[test]
fn predictive_power_takes_two_values() {
    let logs = generate_corpus(5, 8, &SizeParams::default());
    for log in &logs {
        let m = replay_session(log, &ReplayOptions::default());
        if m.safety_error_count == 0 {
            assert!(m.samples.get(&Family::Stale).into_iter().flatten().all(|&p| p == 0.0));
        }
        for v in m.samples.values().flatten() {
            assert!(v.is_finite() && *v >= 0.0);
        }
    }
    let h = cells(&["c1", "c2", "c3"]);
    for n in 3..10 {
        for e in ["c1", "c4"] {
            let p = predictive_power(&h, e, n);
            assert!(p == 0.0 || p == n as f64 / 3.0);
        }
    }
}

#[test]
fn semantics_preserved_without_tracing() {
    for seed in 0..60 {
        let script = cellguard::synth::random_script(seed, 6, ProgramConfig::default());
        let run = |tracing: bool| {
            let mut nb = NotebookState::with_tracing(tracing);
            nb.limits.max_steps = 20_000;
            let out: Vec<String> =
                script.iter().enumerate().map(|(i, s)| nb.run_source(&format!("c{i}"), s).stdout).collect();
            (nb.globals_dump(), out)
        };
        assert_eq!(run(true), run(false), "seed {seed}");
    }
}
