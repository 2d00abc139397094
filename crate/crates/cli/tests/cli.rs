use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_decay-ledger"));
    c.env_remove("DECAY_LEDGER_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_records(path: &Path, n: usize) {
    let words = ["the", "cat", "sat", "on", "mat", "dog", "ran", "over", "a", "fence", "slowly", "home"];
    let mut lines = String::new();
    for i in 0..n {
        let prompt: Vec<&str> = (0..8).map(|k| words[(i * 7 + k * (i % 5 + 1)) % words.len()]).collect();
        let bench = ["piqa", "arc", "hellaswag"][i % 3];
        lines.push_str(&format!(
            "{{\"id\":\"q{i}\",\"benchmark\":\"{bench}\",\"prompt\":\"{} {i}\",\"choices\":[\"yes\",\"no\"],\"gold_index\":0}}\n",
            prompt.join(" ")
        ));
    }
    fs::write(path, lines).unwrap();
}

/// `(final gap, sigma)` per weight decay, parsed from forget-demo output.
fn final_gaps(out: &str) -> Vec<(f64, f64)> {
    out.lines()
        .filter(|l| l.starts_with("wd "))
        .map(|l| {
            let tail = l.split("final gap ").nth(1).unwrap();
            let gap: f64 = tail.split_whitespace().next().unwrap().parse().unwrap();
            let sigma: f64 = tail.split("sigma ").nth(1).unwrap().split(')').next().unwrap().parse().unwrap();
            (gap.abs(), sigma)
        })
        .collect()
}

#[test]
fn help_documents_every_command() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let cases: [(&str, &[&str]); 6] = [
        ("analyze", &["--epsilon", "--origin", "--deciles", "--csv", "--svg"]),
        ("simulate", &["--problem", "--optimizer", "--wd", "--seed"]),
        ("forget-demo", &["--mode", "--wd", "--steps", "--seed"]),
        ("dedup", &["--threshold", "--seed", "--out", "--report"]),
        ("contaminate", &["--subset-sizes", "--repetitions", "--holdout", "--window", "--plan"]),
        ("gap-stats", &["--level", "--resamples", "--seed", "--csv"]),
    ];
    for (cmd, flags) in cases {
        assert!(stdout(&o).contains(cmd));
        let h = run(&[cmd, "--help"]);
        assert_eq!(code(&h), 0, "{cmd} --help");
        for f in flags {
            assert!(stdout(&h).contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_are_validation_errors() {
    assert_eq!(code(&run(&["nope"])), 1);
    assert_eq!(code(&run(&["analyze", "olmo-1b", "--epsilon", "x"])), 1);
    assert_eq!(code(&run(&["analyze", "olmo-1b", "--epsilon", "2"])), 1);
    assert_eq!(code(&run(&["analyze", "/no/such/run.toml"])), 2);
}

#[test]
fn analyze_without_decay_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flat.toml");
    fs::write(&cfg, "name = \"flat\"\ntotal_steps = 1000\nweight_decay = 0.0\n\n[schedule]\nkind = \"cosine-with-warmup\"\nwarmup_steps = 10\npeak_lr = 1e-3\nfinal_lr = 0.0\n").unwrap();
    let prefix = dir.path().join("flat");
    let o = run(&["analyze", cfg.to_str().unwrap(), "--csv", prefix.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("never forgotten"));
    let csv = fs::read_to_string(dir.path().join("flat.curves.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let w: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(w, 1.0, "{line}");
        rows += 1;
    }
    assert!(rows > 100);
}

#[test]
fn analyze_final_step_is_never_forgotten() {
    let head = stdout(&run(&["analyze", "gpt3-124m-like"]));
    let total = head.split_whitespace().nth(2).unwrap();
    let o = run(&["analyze", "gpt3-124m-like", "--origin", total, "--epsilon", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("never forgotten: no steps follow it"));
}

#[test]
fn early_olmo_deciles_are_forgotten() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("olmo");
    let o = run(&["analyze", "olmo-7b", "--epsilon", "1e-3", "--svg", prefix.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let table: Vec<&str> = out.lines().skip_while(|l| !l.contains("origin")).skip(1).take(10).collect();
    assert_eq!(table.len(), 10);
    for row in &table[..4] {
        assert!(row.contains("at step"), "{row}");
    }
    assert!(table[9].trim_end().ends_with("no"));
    for f in ["olmo.curves.svg", "olmo.composition.svg"] {
        let svg = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(svg.starts_with("<svg") && !svg.contains("href"));
    }
}

#[test]
fn simulate_reconstructs_final_weights() {
    for opt in ["adamw", "sgd-wd", "sgd-momentum-wd"] {
        let o = run(&["simulate", "--optimizer", opt, "--steps", "400", "--lr", "0.02", "--seed", "5"]);
        assert_eq!(code(&o), 0, "{opt}: {}", String::from_utf8_lossy(&o.stderr));
        let err: f64 = stdout(&o).split("max reconstruction error ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
        assert!(err <= 1e-9, "{opt}: {err}");
    }
    let o = run(&["simulate", "--problem", "zero", "--wd", "0", "--steps", "50", "--seed", "1"]);
    assert!(stdout(&o).contains("max reconstruction error 0.000e0"));
}

#[test]
fn divergence_exits_three_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&[
        "simulate", "--optimizer", "sgd-wd", "--schedule", "constant", "--lr", "50", "--wd", "0", "--seed", "1", "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(!trace.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let o = run(&["simulate", "--steps", "20"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("(generated; pass --seed"));
    let o = bin().args(["simulate", "--steps", "20"]).env("DECAY_LEDGER_SEED", "9").output().unwrap();
    assert!(!stdout(&o).contains("generated"));
    assert_eq!(stdout(&o), stdout(&run(&["simulate", "--steps", "20", "--seed", "9"])));
}

#[test]
fn forget_demo_orderings() {
    let demo = |mode: &str, wd: &str| {
        let o = run(&["forget-demo", "--mode", mode, "--steps", "8000", "--lr", "2e-3", "--wd", wd, "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        final_gaps(&stdout(&o))
    };
    let sweep = demo("fresh", "0.05,0.1,0.2");
    assert_eq!(sweep.len(), 3);
    assert!(sweep[0].0 > sweep[1].0 && sweep[1].0 > sweep[2].0, "{sweep:?}");
    let repeated = demo("repeated", "0.1");
    assert!(repeated[0].0 > sweep[1].0, "{repeated:?} vs {sweep:?}");
    let null = demo("null", "0.1");
    assert!(null[0].0 < 3.0 * null[0].1, "{null:?}");
}

#[test]
fn dedup_then_contaminate_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    write_records(Path::new(&p("records.jsonl")), 240);

    let o = run(&["dedup", &p("records.jsonl"), "--seed", "1", "--out", &p("kept.jsonl"), "--report", &p("report.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("Cross-Filtered"));
    let again = run(&["dedup", &p("kept.jsonl"), "--seed", "2", "--out", &p("kept2.jsonl")]);
    assert_eq!(fs::read(p("kept.jsonl")).unwrap(), fs::read(p("kept2.jsonl")).unwrap());
    assert_eq!(code(&again), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert!(report["per_benchmark"].is_object());

    let contaminate = |out: &str| {
        run(&[
            "contaminate", &p("kept.jsonl"), "--subset-sizes", "10,10", "--repetitions", "4,12", "--holdout", "20",
            "--synth-tokens", "50000", "--seed", "3", "--out", &p(out), "--plan-out", &p("plan.json"), "--profile",
            &p("profile.csv"),
        ])
    };
    let o = contaminate("a.toks");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("160 insertions of 20 questions"));
    assert_eq!(code(&contaminate("b.toks")), 0);
    assert_eq!(fs::read(p("a.toks")).unwrap(), fs::read(p("b.toks")).unwrap());
    let prov = fs::read_to_string(p("a.toks.prov")).unwrap();
    assert_eq!(prov.lines().filter(|l| !l.ends_with(",clean")).count(), 160);
    assert_eq!(fs::read_to_string(p("profile.csv")).unwrap().lines().count(), 21);

    let o = run(&["contaminate", &p("kept.jsonl"), "--plan", &p("plan.json"), "--stream", &p("a.toks"), "--out", &p("c.toks")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut csv = String::from("question_id,label,correct\n");
    for i in 0..400 {
        csv.push_str(&format!("h{i},holdout,{}\n", u8::from(i % 5 < 2)));
        csv.push_str(&format!("c{i},12x,{}\n", u8::from(i % 2 == 0)));
    }
    fs::write(p("outcomes.csv"), csv).unwrap();
    let score = |out: &str| run(&["gap-stats", &p("outcomes.csv"), "--resamples", "500", "--seed", "4", "--csv", &p(out)]);
    assert_eq!(code(&score("g1.csv")), 0);
    assert_eq!(code(&score("g2.csv")), 0);
    let g1 = fs::read_to_string(p("g1.csv")).unwrap();
    assert_eq!(g1, fs::read_to_string(p("g2.csv")).unwrap());
    assert!(g1.starts_with("label,accuracy,ci_low,ci_high,gap_pp,gap_ci_low,gap_ci_high"));
    let gap: f64 = g1.lines().find(|l| l.starts_with("12x")).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((gap - 10.0).abs() < 1e-9);
}

#[test]
fn failed_commands_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    write_records(Path::new(&p("records.jsonl")), 30);
    let o = run(&[
        "contaminate", &p("records.jsonl"), "--subset-sizes", "100", "--repetitions", "4", "--seed", "1", "--out", &p("s.toks"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!Path::new(&p("s.toks")).exists());

    // second artifact cannot be written; the first must be rolled back
    let o = run(&[
        "dedup", &p("records.jsonl"), "--seed", "1", "--out", &p("kept.jsonl"), "--report", &p("missing/report.json"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!Path::new(&p("kept.jsonl")).exists());
    let left: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("records.jsonl")]);
}
