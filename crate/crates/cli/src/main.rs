use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use cellguard::bench::{bench, BenchRow};
use cellguard::highlights::RefresherAlgo;
use cellguard::replay::{replay_corpus, Family, MetricsRecord, ReplayOptions, SessionLog};
use cellguard::synth::{generate_corpus, SizeParams};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellguard", version, about = "Staleness checking for any-order notebooks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay execution logs and report predictive power per highlight family.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Write the full metrics record as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value = "fast")]
        refresher: RefresherAlgo,
        /// Execute only: no lineage, no highlights, no metrics.
        #[arg(long)]
        no_trace: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a seeded synthetic corpus of JSONL session logs.
    GenCorpus {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        sessions: usize,
        #[arg(long)]
        cells: usize,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = SizeParams::default().edit_rate)]
        edit_rate: f64,
        #[arg(long, default_value_t = SizeParams::default().refresher_prob)]
        refresher_prob: f64,
        #[arg(long, default_value_t = SizeParams::default().dependency_density)]
        density: f64,
        #[arg(long, default_value_t = SizeParams::default().work)]
        work: usize,
    },
    /// Analysis latency against cell count, as CSV.
    Bench {
        #[arg(long, default_value_t = 200)]
        max_cells: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Serve the HTTP/WebSocket kernel.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: String,
        #[arg(long, default_value = "fast")]
        refresher: RefresherAlgo,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Replay { logs, metrics, refresher, no_trace, seed } => {
            let mut sessions = Vec::with_capacity(logs.len());
            for p in &logs {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                sessions.push(SessionLog::from_jsonl(&text).with_context(|| format!("parsing {}", p.display()))?);
            }
            let opts = ReplayOptions { algo: refresher, tracing: !no_trace, seed };
            let t = Instant::now();
            let rec = replay_corpus(&sessions, &opts);
            let elapsed = t.elapsed();
            print_summary(&rec, elapsed.as_secs_f64());
            if let Some(path) = metrics {
                std::fs::write(&path, serde_json::to_string_pretty(&rec)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Cmd::GenCorpus { seed, sessions, cells, out, edit_rate, refresher_prob, density, work } => {
            let params = SizeParams { cells, edit_rate, refresher_prob, dependency_density: density, work };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, log) in generate_corpus(seed, sessions, &params).iter().enumerate() {
                let path = out.join(format!("session_{:04}.jsonl", i + 1));
                std::fs::write(&path, log.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
            }
            eprintln!("wrote {sessions} sessions to {}", out.display());
        }
        Cmd::Bench { max_cells, seed, reps } => {
            println!("{}", BenchRow::CSV_HEADER);
            for row in bench(max_cells, seed, reps) {
                println!("{}", row.csv());
            }
        }
        Cmd::Serve { addr, refresher } => {
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(cellguard_kernel::serve(&addr, refresher))?;
        }
    }
    Ok(())
}

fn print_summary(rec: &MetricsRecord, secs: f64) {
    println!(
        "sessions: {} ({} included), safety errors: {} in {} sessions, replay time: {:.3}s",
        rec.sessions, rec.sessions_included, rec.safety_error_count, rec.sessions_with_safety_errors, secs
    );
    println!("{:<6} {:>10} {:>10} {:>10}", "family", "AVG(P)", "pooled", "samples");
    for f in Family::ALL {
        let fmt = |v: Option<&f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".to_string());
        println!(
            "{:<6} {:>10} {:>10} {:>10}",
            f.label(),
            fmt(rec.avg.get(&f)),
            fmt(rec.pooled_mean.get(&f)),
            rec.sample_counts.get(&f).copied().unwrap_or(0)
        );
    }
}
