//! Seeded generators: random CellScript programs, random notebook states, simulated user
//! sessions and stale-heavy notebooks for benchmarking.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interp::NotebookState;
use crate::replay::{CellIdentifier, LogEntry, SessionLog};

pub const SCALARS: [&str; 5] = ["a", "b", "c", "d", "e"];
const FUNCS: [&str; 2] = ["f", "g"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgramConfig {
    /// Top-level statements per cell, at least 1.
    pub max_stmts: usize,
    /// Probability that a generated statement is an `if` (outside the branch budget).
    pub branch_density: f64,
    /// Upper bound on condition nodes per cell.
    pub max_branch_points: usize,
    pub loops: bool,
    pub functions: bool,
    pub containers: bool,
    pub deletes: bool,
    pub max_depth: usize,
}

impl Default for ProgramConfig {
    fn default() -> ProgramConfig {
        ProgramConfig {
            max_stmts: 6,
            branch_density: 0.35,
            max_branch_points: 8,
            loops: true,
            functions: true,
            containers: true,
            deletes: true,
            max_depth: 2,
        }
    }
}

impl ProgramConfig {
    /// Straight-line and branching code only.
    pub fn loop_free() -> ProgramConfig {
        ProgramConfig { loops: false, ..ProgramConfig::default() }
    }
}

/// Random CellScript source generator.
pub struct ProgramGen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: ProgramConfig,
    branches_left: usize,
    lines: Vec<String>,
}

impl<'r, R: Rng> ProgramGen<'r, R> {
    pub fn new(rng: &'r mut R, cfg: ProgramConfig) -> Self {
        ProgramGen { rng, cfg, branches_left: 0, lines: Vec::new() }
    }

    pub fn cell(&mut self) -> String {
        self.branches_left = self.cfg.max_branch_points;
        self.lines.clear();
        let n = self.rng.random_range(1..=self.cfg.max_stmts.max(1));
        for _ in 0..n {
            self.stmt(0, true);
        }
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    fn push(&mut self, depth: usize, line: String) {
        self.lines.push(format!("{}{}", "    ".repeat(depth), line));
    }

    fn block(&mut self, depth: usize) {
        let n = self.rng.random_range(1..=2);
        for _ in 0..n {
            self.stmt(depth, false);
        }
    }

    fn scalar(&mut self) -> &'static str {
        SCALARS.choose(self.rng).copied().expect("non-empty")
    }

    fn stmt(&mut self, depth: usize, top: bool) {
        let can_nest = depth < self.cfg.max_depth;
        if can_nest && self.branches_left > 0 && self.rng.random_bool(self.cfg.branch_density) {
            return self.branch(depth);
        }
        if can_nest && self.cfg.loops && self.rng.random_bool(0.1) {
            let var = ["i", "j"][depth.min(1)];
            let n = self.rng.random_range(0..=3);
            self.push(depth, format!("for {var} in range({n}):"));
            return self.block(depth + 1);
        }
        if top && self.cfg.functions && self.rng.random_bool(0.1) {
            return self.funcdef(depth);
        }
        let roll = self.rng.random_range(0..100);
        let line = match roll {
            0..=39 => format!("{} = {}", self.scalar(), self.expr()),
            40..=54 => format!("{} += {}", self.scalar(), self.expr()),
            55..=62 if self.cfg.functions => {
                let f = FUNCS.choose(self.rng).expect("non-empty");
                format!("{} = {f}({})", self.scalar(), self.atom())
            }
            63..=68 if self.cfg.containers => format!("cfg = {{\"k\": {}, \"m\": {}}}", self.atom(), self.atom()),
            69..=73 if self.cfg.containers => format!("cfg.k = {}", self.expr()),
            74..=76 if self.cfg.containers => format!("cfg[\"m\"] = {}", self.expr()),
            77..=81 if self.cfg.containers => format!("lst = [{}, {}]", self.atom(), self.atom()),
            82..=85 if self.cfg.containers => format!("lst.append({})", self.atom()),
            86..=88 if self.cfg.containers => format!("lst[0] = {}", self.expr()),
            89..=90 if self.cfg.deletes => format!("del {}", self.scalar()),
            91..=94 => format!("print({})", self.expr()),
            _ => format!("{} = {}", self.scalar(), self.expr()),
        };
        self.push(depth, line);
    }

    fn branch(&mut self, depth: usize) {
        self.branches_left -= 1;
        let c = self.cond();
        self.push(depth, format!("if {c}:"));
        self.block(depth + 1);
        while self.branches_left > 0 && self.rng.random_bool(0.25) {
            self.branches_left -= 1;
            let c = self.cond();
            self.push(depth, format!("elif {c}:"));
            self.block(depth + 1);
        }
        if self.rng.random_bool(0.6) {
            self.push(depth, "else:".to_string());
            self.block(depth + 1);
        }
    }

    fn funcdef(&mut self, depth: usize) {
        let f = *FUNCS.choose(self.rng).expect("non-empty");
        self.push(depth, format!("def {f}(p):"));
        if self.rng.random_bool(0.3) {
            let g = self.scalar();
            self.push(depth + 1, format!("if p > {g}:"));
            self.push(depth + 2, format!("return p - {g}"));
        }
        let body = match self.rng.random_range(0..3) {
            0 => format!("p + {}", self.scalar()),
            1 => format!("p * 2 + {}", self.scalar()),
            _ => "p + 1".to_string(),
        };
        self.push(depth + 1, format!("return {body}"));
    }

    fn cond(&mut self) -> String {
        let op = ["<", ">", "==", "!="].choose(self.rng).expect("non-empty");
        let n = self.rng.random_range(-2..=6);
        format!("{} {op} {n}", self.scalar())
    }

    fn atom(&mut self) -> String {
        let roll = self.rng.random_range(0..100);
        match roll {
            0..=29 => self.rng.random_range(0..10).to_string(),
            30..=79 => self.scalar().to_string(),
            80..=87 if self.cfg.containers => "cfg.k".to_string(),
            88..=91 if self.cfg.containers => "lst[0]".to_string(),
            92..=95 if self.cfg.containers => "len(lst)".to_string(),
            _ => self.scalar().to_string(),
        }
    }

    fn expr(&mut self) -> String {
        if self.rng.random_bool(0.5) {
            self.atom()
        } else {
            let op = ["+", "-", "*"].choose(self.rng).expect("non-empty");
            format!("{} {op} {}", self.atom(), self.atom())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotebookConfig {
    pub max_cells: usize,
    /// Cell executions, as a multiple of the cell count.
    pub runs_per_cell: usize,
    /// Probability that an execution first replaces the cell's text.
    pub edit_prob: f64,
    /// Make the first cell bind every generated name, so fewer cells fail on unbound reads.
    pub prelude: bool,
    pub program: ProgramConfig,
}

impl Default for NotebookConfig {
    fn default() -> NotebookConfig {
        NotebookConfig {
            max_cells: 10,
            runs_per_cell: 3,
            edit_prob: 0.2,
            prelude: true,
            program: ProgramConfig::default(),
        }
    }
}

/// Random notebook after a random execution history. Runtime errors are left in place.
pub fn random_notebook(seed: u64, cfg: &NotebookConfig) -> NotebookState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=cfg.max_cells.max(2));
    let mut sources: Vec<String> = {
        let mut g = ProgramGen::new(&mut rng, cfg.program);
        (0..n).map(|_| g.cell()).collect()
    };
    if cfg.prelude {
        sources[0] = prelude(&mut rng, &cfg.program);
    }
    let mut nb = NotebookState::new();
    nb.limits.max_steps = 20_000;
    for (i, s) in sources.iter().enumerate() {
        nb.upsert_cell(&format!("c{}", i + 1), s, None);
    }
    for step in 0..n * cfg.runs_per_cell {
        // Run everything once in order first, so most names get bound.
        let k = if step < n { step } else { rng.random_range(0..n) };
        let id = format!("c{}", k + 1);
        if step >= n && rng.random_bool(cfg.edit_prob) {
            let src = ProgramGen::new(&mut rng, cfg.program).cell();
            nb.upsert_cell(&id, &src, None);
        }
        nb.execute_cell(&id).expect("cell exists");
    }
    nb
}

/// Binds every name the generator may read.
fn prelude(rng: &mut impl Rng, cfg: &ProgramConfig) -> String {
    let mut out = String::new();
    for s in SCALARS {
        out.push_str(&format!("{s} = {}\n", rng.random_range(0..10)));
    }
    if cfg.containers {
        out.push_str(&format!("cfg = {{\"k\": {}, \"m\": 1}}\nlst = [{}]\n", rng.random_range(0..10), rng.random_range(0..10)));
    }
    if cfg.functions {
        for f in FUNCS {
            out.push_str(&format!("def {f}(p):\n    return p + 1\n"));
        }
    }
    out
}

/// A sequence of random cells meant to be executed once each, in order.
pub fn random_script(seed: u64, cells: usize, program: ProgramConfig) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ProgramGen::new(&mut rng, program);
    (0..cells).map(|_| g.cell()).collect()
}

const WORDS: [&str; 24] = [
    "apple", "birch", "cobalt", "delta", "ember", "falcon", "granite", "harbor", "iris", "jasper", "kelp",
    "lumen", "maple", "nectar", "onyx", "pepper", "quartz", "raven", "saffron", "tundra", "umber", "violet",
    "willow", "zephyr",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    /// Distinct cells each session creates.
    pub cells: usize,
    /// Probability per step of an edit-and-rerun action instead of creating the next cell.
    /// Zero yields in-order sessions with no re-executions.
    pub edit_rate: f64,
    /// After an edit, probability the user next reruns a cell that reads the edited cell's
    /// output; otherwise a random cell is rerun.
    pub refresher_prob: f64,
    /// Probability each of the preceding few cells' outputs is read by a new cell.
    pub dependency_density: f64,
    /// Loop iterations per computing cell.
    pub work: usize,
}

use serde::{Deserialize, Serialize};

impl Default for SizeParams {
    fn default() -> SizeParams {
        SizeParams { cells: 12, edit_rate: 0.4, refresher_prob: 0.7, dependency_density: 0.3, work: 30 }
    }
}

const PARENT_WINDOW: usize = 8;
const MAX_PARENTS: usize = 3;

struct SimCell {
    var: String,
    parents: Vec<usize>,
    constant: i64,
    loop_len: usize,
    tag: String,
    /// Log counter of the latest execution.
    ran: u64,
}

impl SimCell {
    fn source(&self, cells: &[SimCell]) -> String {
        let reads: Vec<&str> = self.parents.iter().map(|&p| cells[p].var.as_str()).collect();
        let base = if reads.is_empty() { "1".to_string() } else { reads.join(" + ") };
        if self.loop_len == 0 {
            format!("{} = ({base} + {}) % 9973\n", self.var, self.constant)
        } else {
            let acc = format!("acc_{}", self.tag);
            format!(
                "{acc} = 0\nfor k in range({}):\n    {acc} += (k * ({base})) % 17\n{} = ({acc} + {}) % 9973\n",
                self.loop_len, self.var, self.constant
            )
        }
    }
}

struct Simulator<'a> {
    rng: ChaCha8Rng,
    params: &'a SizeParams,
    cells: Vec<SimCell>,
    ident: CellIdentifier,
    log: Vec<LogEntry>,
}

impl Simulator<'_> {
    /// Appends an execution of cell `k` if identity inference would map its text back to
    /// `k`; returns whether it did.
    fn emit(&mut self, k: usize) -> bool {
        let src = self.cells[k].source(&self.cells);
        let want = format!("c{}", k + 1);
        let got = self.ident.infer(&src);
        if got.id != want {
            return false;
        }
        let counter = self.log.len() as u64 + 1;
        self.ident.record(&want, &src, counter);
        self.log.push(LogEntry { counter, source: src });
        self.cells[k].ran = counter;
        true
    }

    fn create(&mut self) {
        let k = self.cells.len();
        for _attempt in 0..16 {
            let mut parents: Vec<usize> = (k.saturating_sub(PARENT_WINDOW)..k)
                .filter(|_| self.rng.random_bool(self.params.dependency_density))
                .collect();
            parents.truncate(MAX_PARENTS);
            let w1 = WORDS.choose(&mut self.rng).expect("non-empty");
            let w2 = WORDS.choose(&mut self.rng).expect("non-empty");
            let tag = format!("{w1}_{k}");
            let loop_len = if self.params.work > 0 && self.rng.random_bool(0.5) { self.params.work } else { 0 };
            self.cells.push(SimCell {
                var: format!("{w2}_{w1}_{k}"),
                parents,
                constant: self.rng.random_range(1..100),
                loop_len,
                tag,
                ran: 0,
            });
            if self.emit(k) {
                return;
            }
            self.cells.pop();
        }
        panic!("could not generate a cell distinguishable from its predecessors");
    }

    fn edit(&mut self, k: usize) -> bool {
        let old = self.cells[k].constant;
        for _attempt in 0..8 {
            self.cells[k].constant = self.rng.random_range(1..100);
            if self.cells[k].constant != old && self.emit(k) {
                return true;
            }
        }
        self.cells[k].constant = old;
        false
    }

    fn children(&self, k: usize) -> Vec<usize> {
        (0..self.cells.len()).filter(|&j| self.cells[j].parents.contains(&k)).collect()
    }

    /// The simulated user's own view of which cells read outdated outputs.
    fn stale_cells(&self) -> Vec<bool> {
        let mut var_stale = vec![false; self.cells.len()];
        let mut cell_stale = vec![false; self.cells.len()];
        for (j, c) in self.cells.iter().enumerate() {
            cell_stale[j] = c.parents.iter().any(|&p| var_stale[p]);
            var_stale[j] = cell_stale[j] || c.parents.iter().any(|&p| self.cells[p].ran > c.ran);
        }
        cell_stale
    }

    fn edit_action(&mut self) {
        let n = self.cells.len();
        // Users edit cells they consider up to date.
        let stale = self.stale_cells();
        let candidates: Vec<usize> = (0..n).filter(|&j| !stale[j]).collect();
        let k = match candidates.choose(&mut self.rng) {
            Some(&k) => k,
            None => self.rng.random_range(0..n),
        };
        if !self.edit(k) {
            return;
        }
        let children = self.children(k);
        if !children.is_empty() && self.rng.random_bool(self.params.refresher_prob) {
            // Prefer a dependent whose own output is read further on.
            let with_grandchildren: Vec<usize> =
                children.iter().copied().filter(|&j| !self.children(j).is_empty()).collect();
            let pool = if with_grandchildren.is_empty() { &children } else { &with_grandchildren };
            let j = *pool.choose(&mut self.rng).expect("non-empty");
            self.emit(j);
        } else {
            let j = self.rng.random_range(0..n);
            self.emit(j);
        }
    }
}

/// Simulated sessions: cells are created in order and edited in place; edits are followed by
/// reruns of dependents with probability `refresher_prob`. Same seed, same corpus.
pub fn generate_corpus(seed: u64, n_sessions: usize, params: &SizeParams) -> Vec<SessionLog> {
    (0..n_sessions)
        .map(|i| {
            let mut sim = Simulator {
                rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)),
                params,
                cells: Vec::new(),
                ident: CellIdentifier::new(),
                log: Vec::new(),
            };
            while sim.cells.len() < params.cells {
                if !sim.cells.is_empty() && params.edit_rate > 0.0 && sim.rng.random_bool(params.edit_rate.min(1.0)) {
                    sim.edit_action();
                } else {
                    sim.create();
                }
            }
            let tail = (params.cells as f64 * params.edit_rate).ceil() as usize;
            for _ in 0..tail {
                sim.edit_action();
            }
            SessionLog { entries: sim.log }
        })
        .collect()
}

/// A notebook of `n` cells of which at least a quarter are stale: every cell runs in order,
/// then randomly chosen up-to-date cells are edited and rerun until enough cells read
/// outdated values.
pub fn stale_notebook(seed: u64, n: usize) -> NotebookState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots = (n / 10).max(1);
    let mut nb = NotebookState::new();
    let src = |i: usize, parent: Option<usize>, c: i64| match parent {
        None => format!("v{i} = {c}\n"),
        Some(p) => format!(
            "v{i} = v{p} + {c}\nif v{i} > 50:\n    w{i} = v{i} - 50\nelse:\n    w{i} = v{i}\nprint(w{i})\n"
        ),
    };
    let mut parents = Vec::with_capacity(n);
    for i in 0..n {
        let parent = if i < roots { None } else { Some(rng.random_range(i.saturating_sub(8)..i)) };
        parents.push(parent);
        nb.upsert_cell(&format!("c{i}"), &src(i, parent, rng.random_range(1..10)), None);
    }
    for i in 0..n {
        nb.execute_cell(&format!("c{i}")).expect("cell exists");
    }
    // Parents precede children, so one forward pass settles staleness.
    let stale_cells = |nb: &NotebookState| -> Vec<bool> {
        let ts: Vec<u64> = (0..n).map(|i| nb.cell_timestamp(&format!("c{i}"))).collect();
        let mut var_stale = vec![false; n];
        let mut cell_stale = vec![false; n];
        for i in 0..n {
            if let Some(p) = parents[i] {
                cell_stale[i] = var_stale[p];
                var_stale[i] = var_stale[p] || ts[p] > ts[i];
            }
        }
        cell_stale
    };
    let target = n.div_ceil(4);
    for _ in 0..20 * n {
        let stale = stale_cells(&nb);
        if stale.iter().filter(|s| **s).count() >= target {
            break;
        }
        let fresh: Vec<usize> = (0..n).filter(|&i| !stale[i]).collect();
        let i = *fresh.choose(&mut rng).expect("some cell is up to date");
        let id = format!("c{i}");
        nb.upsert_cell(&id, &src(i, parents[i], rng.random_range(10..20)), None);
        nb.execute_cell(&id).expect("cell exists");
    }
    nb
}
