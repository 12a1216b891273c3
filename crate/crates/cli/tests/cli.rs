use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reinforce-ada"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, algorithm: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(
            "algorithm={algorithm}\nnum_steps=12\nbatch_prompts=8\nnum_prompts=16\nnum_candidates=8\npass_rate=grid:0.1:0.9\nlearning_rate=2\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bal.txt", "ada_balance");
    let out = dir.path().join("run");
    run(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));

    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("step,mean_train_reward,expected_reward,"));
    assert_eq!(steps.lines().count(), 13);
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("step,round,active_count,samples_this_round\n0,1,8,32\n"));
    let policy = fs::read_to_string(out.join("final_policy.txt")).unwrap();
    assert_eq!(policy.lines().count(), 16);
    assert_eq!(policy.lines().next().unwrap().split('\t').count(), 8);
    assert!(fs::read_to_string(out.join("config.txt"))
        .unwrap()
        .contains("exit_condition=balance"));
    assert_eq!(
        fs::read_to_string(out.join("prompts.txt"))
            .unwrap()
            .lines()
            .count(),
        16
    );

    // Same config, same bytes.
    let again = dir.path().join("run2");
    run(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&again));
    for f in ["steps.csv", "final_policy.txt", "ledger.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn train_reads_prompt_file() {
    let dir = tempfile::tempdir().unwrap();
    run(bin()
        .args([
            "prompts",
            "--num-prompts",
            "8",
            "--num-candidates",
            "4",
            "--pass-rate",
            "const:0.5",
            "--out",
        ])
        .arg(dir.path().join("p.txt")));
    fs::write(
        dir.path().join("c.txt"),
        "algorithm=grpo_uniform\nprompts_file=p.txt\nnum_steps=3\nbatch_prompts=4\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    run(bin()
        .args(["train", "--config"])
        .arg(dir.path().join("c.txt"))
        .arg("--out")
        .arg(&out));
    assert_eq!(
        fs::read_to_string(out.join("prompts.txt")).unwrap(),
        fs::read_to_string(dir.path().join("p.txt")).unwrap()
    );
}

#[test]
fn compare_emits_summary() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "grpo.txt", "grpo_uniform");
    let b = write_config(dir.path(), "bal.txt", "ada_balance");
    let out = dir.path().join("cmp");
    let configs = format!("{},{}", a.display(), b.display());
    run(bin()
        .args(["compare", "--configs", &configs, "--seeds", "1,2", "--out"])
        .arg(&out));
    let summary = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("grpo,2,"));
    assert!(lines[2].starts_with("bal,2,"));
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 12);
}

#[test]
fn analyze_collapse_and_passk() {
    let csv = run(bin().args(["analyze", "collapse", "--p", "0.5", "--n-list", "1,4"]));
    assert_eq!(
        csv,
        "p,n,all_correct,all_incorrect,collapse\n0.5,1,0.5,0.5,1\n0.5,4,0.0625,0.0625,0.125\n"
    );

    let csv = run(bin().args([
        "analyze", "passk", "--n", "4", "--c", "4", "--k-list", "1,2",
    ]));
    assert_eq!(csv, "n,c,k,pass_at_k\n4,4,1,1\n4,4,2,1\n");

    let bad = bin()
        .args(["analyze", "passk", "--n", "4", "--c", "1", "--k-list", "5"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn analyze_pool_size_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pos.txt");
    fs::write(
        &cfg,
        "algorithm=ada_pos\ngroup_size=4\nsamples_per_round=4\nnum_rounds=8\n",
    )
    .unwrap();
    let out = dir.path().join("pool.csv");
    run(bin()
        .args(["analyze", "pool-size", "--config"])
        .arg(&cfg)
        .args(["--p-list", "0.2", "--out"])
        .arg(&out));
    let text = fs::read_to_string(out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "pos");
    let size: f64 = row[2].parse().unwrap();
    assert!((size - 4.0 * (1.0 - 0.8f64.powi(32)) / (1.0 - 0.4096)).abs() < 1e-12);
}
