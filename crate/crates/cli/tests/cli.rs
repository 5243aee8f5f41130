use std::path::Path;
use std::process::Command;

fn cellguard(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cellguard")).args(args).output().expect("binary runs");
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn logs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path().display().to_string()).collect();
    v.sort();
    v
}

#[test]
fn gen_corpus_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (ok, _, err) = cellguard(&["gen-corpus", "--seed", "7", "--sessions", "3", "--cells", "6", "-o", d.path().to_str().unwrap()]);
        assert!(ok, "{err}");
    }
    let (la, lb) = (logs(a.path()), logs(b.path()));
    assert_eq!(la.len(), 3);
    assert!(la[0].ends_with("session_0001.jsonl"));
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn replay_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let (ok, _, err) = cellguard(&["gen-corpus", "--seed", "3", "--sessions", "4", "--cells", "8", "-o", corpus.to_str().unwrap()]);
    assert!(ok, "{err}");
    let metrics = dir.path().join("metrics.json");
    let mut args = vec!["replay".to_string(), "--metrics".into(), metrics.display().to_string(), "--refresher".into(), "naive".into()];
    args.extend(logs(&corpus));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let (ok, stdout, err) = cellguard(&args);
    assert!(ok, "{err}");
    for family in ["H_s", "H_f", "dH_f", "H_r", "dH_r", "H_n", "H_rnd"] {
        assert!(stdout.lines().any(|l| l.starts_with(family)), "missing {family} row:\n{stdout}");
    }
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(rec["sessions"], 4);
    assert!(rec["per_session"].as_array().unwrap().len() == 4);
}

#[test]
fn replay_rejects_bad_logs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"counter\": 2, \"source\": \"x = 1\"}\n{\"counter\": 1, \"source\": \"y = 2\"}\n").unwrap();
    let (ok, _, err) = cellguard(&["replay", bad.to_str().unwrap()]);
    assert!(!ok);
    assert!(err.contains("bad.jsonl"), "{err}");
}

#[test]
fn bench_emits_csv() {
    let (ok, stdout, err) = cellguard(&["bench", "--max-cells", "20", "--reps", "1"]);
    assert!(ok, "{err}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("cells,stale,fast_ms,naive_ms"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("20,"));
}
