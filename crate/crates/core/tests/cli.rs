use std::path::Path;
use std::process::{Command, Output};

fn fluid_mec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluid-mec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fluid_mec(&["run", "--seed", "3", "--outer", "2", "--inner", "5"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ippso"));

    let trace = rows(&out.join("trace.csv"));
    assert_eq!(trace[0][..6], ["scheme", "seed", "outer_iter", "inner_iter", "global_best_fitness", "total_latency"]);
    // Starting row plus 6 swarm states per outer iteration.
    assert_eq!(trace.len(), 1 + 1 + 2 * 6);
    assert!(trace[1..].iter().all(|r| r[0] == "ippso" && r[1] == "3"));

    let summary = rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[1][..4], ["ippso", "3", "4", "3"]);
    let total: f64 = summary[1][4].parse().unwrap();
    let last_trace_latency: f64 = trace.last().unwrap()[5].parse().unwrap();
    assert_eq!(total, last_trace_latency);
}

#[test]
fn baselines_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    for scheme in ["local", "fixed"] {
        let out = dir.path().join(scheme);
        let o = fluid_mec(&["baseline", "--scheme", scheme, "--seed", "1"], &out);
        assert!(o.status.success());
        let summary = rows(&out.join("summary.csv"));
        assert_eq!(summary[1][0], format!("baseline_{scheme}"));
    }
    let local: f64 = rows(&dir.path().join("local/summary.csv"))[1][4].parse().unwrap();
    let fixed: f64 = rows(&dir.path().join("fixed/summary.csv"))[1][4].parse().unwrap();
    assert!(fixed <= local);

    let out = dir.path().join("sweep");
    let o = fluid_mec(
        &["sweep", "--antennas", "4,6", "--seeds", "2", "--inner", "3", "--outer", "1", "--reproducible"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 1 + 2 * 2 * 3);
    assert!(summary[1..].iter().all(|r| r[6] == "0"));
    let schemes: Vec<&str> = summary[1..].iter().map(|r| r[0].as_str()).collect();
    let mut sorted = schemes.clone();
    sorted.sort();
    assert_eq!(schemes, sorted);
    let trace = rows(&out.join("trace.csv"));
    assert_eq!(trace[0].len(), 6 + 3 + 2 * 6);
    assert!(trace.iter().all(|r| r.len() == trace[0].len()));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "# two users, six antennas\nuser_count = 2\nantenna_count = 6\npso_iterations = 4\nouter_iterations = 1\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = fluid_mec(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success());
    let summary = rows(&out.join("summary.csv"));
    assert_eq!(summary[1][2..4], ["6", "2"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "user_count = 5\n").unwrap();
    let o = fluid_mec(&["run", "--config", bad.to_str().unwrap()], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N <= M"));

    let typo = dir.path().join("typo.cfg");
    std::fs::write(&typo, "antena_count = 5\n").unwrap();
    let o = fluid_mec(&["run", "--config", typo.to_str().unwrap()], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let o = fluid_mec(&["run", "--seed", "minus-one"], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_fluid-mec")).arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
