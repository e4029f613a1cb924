use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_markov-memory");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MARKOV_MEMORY_SEED")
        .output()
        .expect("binary runs")
}

fn run_threads(args: &[&str], threads: usize) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MARKOV_MEMORY_SEED")
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let args = [
        "simulate", "--p", "0.7", "--q", "0.6", "--n", "500", "--seed", "11",
    ];
    let a = stdout(&run(&args));
    assert_eq!(a, stdout(&run(&args)));
    assert_eq!(a.trim_end().len(), 500);
    assert!(a.trim_end().chars().all(|c| c == '0' || c == '1'));
    let b = stdout(&run(&[
        "simulate", "--p", "0.7", "--q", "0.6", "--n", "500", "--seed", "12",
    ]));
    assert_ne!(a, b);
}

#[test]
fn seed_is_read_from_environment() {
    let flag = stdout(&run(&[
        "simulate", "--p", "0.7", "--q", "0.6", "--n", "200", "--seed", "5",
    ]));
    let env = Command::new(BIN)
        .args(["simulate", "--p", "0.7", "--q", "0.6", "--n", "200"])
        .env("MARKOV_MEMORY_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(flag, stdout(&env));
}

#[test]
fn simulate_count_writes_numbered_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("seq.txt");
    let out = run(&[
        "simulate",
        "--p",
        "0.8",
        "--q",
        "0.8",
        "--n",
        "100",
        "--count",
        "3",
        "--seed",
        "1",
        "--out",
        base.to_str().unwrap(),
    ]);
    stdout(&out);
    let files: Vec<String> = (0..3)
        .map(|i| std::fs::read_to_string(dir.path().join(format!("seq.txt.{i}"))).unwrap())
        .collect();
    assert!(files.iter().all(|f| f.trim_end().len() == 100));
    assert_ne!(files[0], files[1]);
}

#[test]
fn outputs_identical_across_thread_counts() {
    let studies = fixture("handedness_synthetic.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "ensemble", "--p", "0.88", "--q", "0.5", "--count", "300", "--seed", "9",
        ],
        vec![
            "runs",
            "--p",
            "0.88",
            "--q",
            "0.88",
            "--n",
            "5000",
            "--seeds",
            "6",
            "--seed",
            "4",
            "--reference",
        ],
        vec!["fit-scatter", "--studies", studies.to_str().unwrap()],
    ];
    for args in &cases {
        let one = stdout(&run_threads(args, 1));
        let four = stdout(&run_threads(args, 4));
        let again = stdout(&run_threads(args, 4));
        assert_eq!(one, four, "{args:?}");
        assert_eq!(four, again, "{args:?}");
    }
}

#[test]
fn funnel_matches_bound_formula() {
    let out = stdout(&run(&[
        "funnel", "--pinf", "0.58", "--nu", "1.15", "--points", "50",
    ]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,lower,upper"));
    let rows: Vec<(f64, f64, f64)> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect();
    assert_eq!(rows.len(), 50);
    assert_eq!(rows[0].0, 10.0);
    assert_eq!(rows[49].0, 1e5);
    for &(n, lo, hi) in &rows {
        // n (p - 0.58)^2 along the upper curve is the constant 1.96^2 0.58 0.42 1.15^2
        let k = n * (hi - 0.58).powi(2);
        assert!((k - 1.2376).abs() < 1e-3, "n={n} k={k}");
        if lo > 0.0 {
            assert!((0.58 - lo - (hi - 0.58)).abs() < 1e-7);
        }
        assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}

#[test]
fn funnel_level_matches_z() {
    let by_level = stdout(&run(&[
        "funnel", "--pinf", "0.4", "--nu", "2", "--level", "0.95", "--points", "5",
    ]));
    let by_z = stdout(&run(&[
        "funnel",
        "--pinf",
        "0.4",
        "--nu",
        "2",
        "--z",
        "1.959963984540054",
        "--points",
        "5",
    ]));
    assert_eq!(by_level, by_z);
}

#[test]
fn fit_scatter_recovers_synthetic_handedness() {
    let path = fixture("handedness_synthetic.csv");
    let v = json(&run(&[
        "fit-scatter",
        "--studies",
        path.to_str().unwrap(),
        "--group",
        "captive",
    ]));
    let fit = &v["scatter_fit"];
    assert!((fit["pinf_hat"].as_f64().unwrap() - 0.58).abs() < 0.01);
    assert!((fit["nu_hat"].as_f64().unwrap() - 1.15).abs() < 0.05);
    assert!((fit["p_hat"].as_f64().unwrap() - 0.64).abs() < 0.02);
    assert!((fit["q_hat"].as_f64().unwrap() - 0.50).abs() < 0.02);
    assert_eq!(v["tool"], "markov-memory");
    assert_eq!(v["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn analyze_reports_memoryless_undercoverage() {
    let path = fixture("handedness_synthetic.csv");
    let v = json(&run(&[
        "analyze",
        "--studies",
        path.to_str().unwrap(),
        "--points",
        "20",
    ]));
    let memoryless = v["memoryless_coverage"].as_f64().unwrap();
    assert!(memoryless < 0.94, "{memoryless}");
    assert_eq!(v["funnel"].as_array().unwrap().len(), 20);
}

#[test]
fn runs_then_fit_runs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let on = dir.path().join("on.csv");
    let off = dir.path().join("off.csv");
    stdout(&run(&[
        "runs",
        "--p",
        "0.25",
        "--q",
        "0.65",
        "--n",
        "10000",
        "--seeds",
        "10",
        "--seed",
        "3",
        "--a-out",
        on.to_str().unwrap(),
        "--b-out",
        off.to_str().unwrap(),
    ]));
    let v = json(&run(&[
        "fit-runs",
        "--on",
        on.to_str().unwrap(),
        "--off",
        off.to_str().unwrap(),
    ]));
    let fit = &v["run_fit"];
    assert!(
        (fit["p11_hat"].as_f64().unwrap() - 0.25).abs() < 0.02,
        "{fit}"
    );
    assert!(
        (fit["p22_hat"].as_f64().unwrap() - 0.65).abs() < 0.02,
        "{fit}"
    );
    let mle = &v["mle_fit"];
    assert!((mle["p11_hat"].as_f64().unwrap() - fit["p11_hat"].as_f64().unwrap()).abs() < 0.02);
    assert!((mle["p22_hat"].as_f64().unwrap() - fit["p22_hat"].as_f64().unwrap()).abs() < 0.02);
}

#[test]
fn runs_accepts_custom_alphabet_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    std::fs::write(&a, "on on off off off on\n").unwrap();
    let out = stdout(&run(&[
        "runs",
        "--input",
        a.to_str().unwrap(),
        "--alphabet",
        "on,off",
        "--reference",
    ]));
    assert!(out.starts_with("state,m,frequency\n"));
    assert!(out.contains("pooled,3,0.333333333"), "{out}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "--p", "1.5", "--q", "0.5", "--n", "10"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["funnel", "--pinf", "0.5", "--nu", "1", "--z", "2", "--level", "0.9"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["runs", "--input", "x", "--p", "0.5", "--q", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["fit-scatter", "--studies", "/definitely/missing.csv"])
            .status
            .code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "study_id,n,p_bar\ns1,100,0.5\ns2,abc,0.4\n").unwrap();
    let out = run(&["fit-scatter", "--studies", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // all studies at the same frequency: no dispersion to fit
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("study_id,n,p_bar\n");
    for i in 0..30 {
        text.push_str(&format!("s{i},100,0.5\n"));
    }
    std::fs::write(&flat, text).unwrap();
    let code = run(&["fit-scatter", "--studies", flat.to_str().unwrap()])
        .status
        .code();
    assert!(matches!(code, Some(2) | Some(3)), "{code:?}");
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let args = ["funnel", "--pinf", "0.3", "--nu", "0.8", "--points", "7"];
    let printed = stdout(&run(&args));
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert!(stdout(&run(&with_out)).is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), printed);
}
