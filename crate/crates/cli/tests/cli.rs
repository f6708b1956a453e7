use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SYMMETRIC: &str =
    r#"{"num_states":1,"num_actions":2,"gamma":0.5,"rewards":[[0,0]],"transitions":[[[1.0],[1.0]]]}"#;
const ONE_ACTION: &str =
    r#"{"num_states":2,"num_actions":1,"gamma":0.5,"rewards":[[1],[1]],"transitions":[[[0.5,0.5]],[[0.25,0.75]]]}"#;
const SHORT_ROW: &str =
    r#"{"num_states":1,"num_actions":2,"gamma":0.5,"rewards":[[0,0]],"transitions":[[[0.9],[1.0]]]}"#;

fn softmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softmdp"))
        .args(args)
        .env_remove("SOFTMDP_DEFAULT_TOL")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn v0(summary: &str) -> f64 {
    summary.lines().find_map(|l| l.strip_prefix("V[0] = ")).expect("summary prints V[0]").trim().parse().unwrap()
}

#[test]
fn check_valid_file_is_silent() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let out = softmdp(&["check", p(&f)]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
}

#[test]
fn check_reports_one_line_per_violation() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "bad.json", SHORT_ROW);
    let out = softmdp(&["check", p(&f)]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.contains("[0][0]"));
}

#[test]
fn check_parse_and_io_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "mal.json", "{\"num_states\": ");
    let out = softmdp(&["check", p(&f)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse"));
    assert_eq!(code(&softmdp(&["check", p(&dir.path().join("missing.json"))])), 1);
    let unknown = fixture(&dir, "extra.json", &SYMMETRIC.replace("\"gamma\"", "\"colour\":1,\"gamma\""));
    assert_eq!(code(&softmdp(&["check", p(&unknown)])), 1);
}

#[test]
fn unknown_subcommand_exits_1_and_help_exits_0() {
    assert_eq!(code(&softmdp(&["frobnicate"])), 1);
    assert_eq!(code(&softmdp(&["--help"])), 0);
}

#[test]
fn generate_is_deterministic_and_valid() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = softmdp(&[
            "--deterministic",
            "generate",
            "--seed",
            "42",
            "--states",
            "3",
            "--actions",
            "2",
            "--gamma",
            "0.9",
            "--reward-range",
            "-1,1",
            "--out",
            p(path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(code(&softmdp(&["check", p(&a)])), 0);

    let to_stdout = softmdp(&["generate", "--seed", "42", "--states", "3", "--actions", "2"]);
    assert_eq!(to_stdout.stdout, bytes);
}

#[test]
fn generate_rejects_bad_parameters() {
    assert_eq!(code(&softmdp(&["generate", "--seed", "1", "--states", "0", "--actions", "2"])), 5);
    assert_eq!(code(&softmdp(&["generate", "--seed", "1", "--states", "2", "--actions", "2", "--gamma", "1"])), 5);
    assert_eq!(
        code(&softmdp(&["generate", "--seed", "1", "--states", "2", "--actions", "2", "--reward-range", "1"])),
        5
    );
}

#[test]
fn solve_symmetric_entropy_vi_and_spi() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let vi = softmdp(&["solve", p(&f), "--method", "vi", "--reg", "entropy", "--eta", "1"]);
    let spi = softmdp(&["solve", p(&f), "--method", "spi", "--reg", "entropy", "--eta", "1"]);
    assert_eq!(code(&vi), 0);
    assert_eq!(code(&spi), 0);
    let two_ln2 = 1.3862943611198906;
    assert!((v0(&stdout(&vi)) - two_ln2).abs() < 1e-9);
    assert!((v0(&stdout(&spi)) - two_ln2).abs() < 1e-9);
    assert!((v0(&stdout(&vi)) - v0(&stdout(&spi))).abs() < 1e-9);
}

#[test]
fn solve_none_with_eta_warns() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let out = softmdp(&["solve", p(&f), "--reg", "none", "--eta", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    assert_eq!(v0(&stdout(&out)), 0.0);
}

#[test]
fn solve_guards_exit_5() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let path = p(&f);
    assert_eq!(code(&softmdp(&["solve", path, "--reg", "kl"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--reg", "entropy", "--eta", "0"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--reg", "entropy", "--eta", "-1"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--method", "vi", "--eval-mode", "exact"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--reg", "entropy", "--uniform-prior"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--tol", "0"])), 5);
    assert_eq!(code(&softmdp(&["solve", path, "--reg", "kl", "--uniform-prior"])), 0);
}

#[test]
fn solve_non_convergence_exits_4_and_still_writes_report() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let report = dir.path().join("r.json");
    let out = softmdp(&["solve", p(&f), "--reg", "entropy", "--max-iter", "2", "--out", p(&report)]);
    assert_eq!(code(&out), 4);
    assert!(std::fs::read_to_string(&report).unwrap().contains("\"converged\": false"));
}

#[test]
fn tolerance_flag_beats_environment() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_softmdp"));
        cmd.args(["solve", p(&f), "--reg", "entropy"]);
        if let Some(t) = flag {
            cmd.args(["--tol", t]);
        }
        match env {
            Some(v) => cmd.env("SOFTMDP_DEFAULT_TOL", v),
            None => cmd.env_remove("SOFTMDP_DEFAULT_TOL"),
        };
        cmd.output().unwrap()
    };
    let iterations = |o: &Output| -> usize {
        stdout(o).lines().find_map(|l| l.strip_prefix("iterations:")).unwrap().trim().parse().unwrap()
    };
    let default = iterations(&run(None, None));
    let loose_env = iterations(&run(Some("1e-3"), None));
    let flag_wins = iterations(&run(Some("1e-3"), Some("1e-10")));
    assert!(loose_env < default);
    assert_eq!(flag_wins, default);
    assert_eq!(code(&run(Some("nonsense"), None)), 5);
}

#[test]
fn report_is_deterministic_apart_from_timestamp() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        assert_eq!(code(&softmdp(&["--deterministic", "solve", p(&f), "--method", "spi", "--out", p(path)])), 0);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(!text.contains("generated_at_unix"));
    assert!(text.contains("input_digest"));

    let stamped = dir.path().join("c.json");
    assert_eq!(code(&softmdp(&["solve", p(&f), "--out", p(&stamped)])), 0);
    assert!(std::fs::read_to_string(&stamped).unwrap().contains("generated_at_unix"));
}

#[test]
fn compare_single_action_has_no_policy_gap() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "one.json", ONE_ACTION);
    let out = softmdp(&["compare", p(&f)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance_id,S,A,gamma,eta,reg,q_gap,v_gap,policy_gap,vi_iters,spi_iters,verdict"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[8], "0.0");
        assert!(cols[6].parse::<f64>().unwrap() < 1e-9);
        assert_eq!(cols[11], "pass");
    }
}

#[test]
fn compare_threshold_zero_fails_with_3() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let out = softmdp(&["compare", p(&f), "--threshold", "0"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn compare_input_guards() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    assert_eq!(code(&softmdp(&["compare"])), 5);
    assert_eq!(code(&softmdp(&["compare", p(&f), "--random-suite", "2"])), 5);
    assert_eq!(code(&softmdp(&["compare", p(&f), "--reg", "none"])), 5);
    assert_eq!(code(&softmdp(&["compare", p(&f), "--reg", "kl"])), 5);
    assert_eq!(code(&softmdp(&["compare", p(&f), "--eta-list", "0"])), 5);
}

#[test]
fn compare_non_convergence_exits_4() {
    let out = softmdp(&["compare", "--random-suite", "2", "--seed", "3", "--max-iter", "3"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn compare_output_does_not_depend_on_jobs() {
    let dir = TempDir::new().unwrap();
    let run = |jobs: &str, tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let json = dir.path().join(format!("{tag}.json"));
        let out = softmdp(&[
            "--deterministic",
            "compare",
            "--random-suite",
            "6",
            "--seed",
            "9",
            "--jobs",
            jobs,
            "--csv",
            p(&csv),
            "--out",
            p(&json),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        (std::fs::read(csv).unwrap(), std::fs::read(json).unwrap())
    };
    assert_eq!(run("1", "serial"), run("4", "parallel"));
}

#[test]
fn verify_symmetric_all_checks_pass() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "sym.json", SYMMETRIC);
    let out = softmdp(&["verify", p(&f), "--reg", "entropy", "--eta", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for name in ["kkt", "prop1", "exhaustive"] {
        let line = text.lines().find(|l| l.starts_with(name)).expect(name);
        assert!(line.ends_with("pass"), "{line}");
    }
    let residual: f64 = text.split_whitespace().find_map(|w| w.strip_prefix("max_residual=")).unwrap().parse().unwrap();
    assert!(residual <= 1e-9);
}

#[test]
fn verify_random_two_by_two_passes() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("r.json");
    assert_eq!(code(&softmdp(&["generate", "--seed", "5", "--states", "2", "--actions", "2", "--out", p(&f)])), 0);
    for reg in ["entropy", "none"] {
        let out = softmdp(&["verify", p(&f), "--reg", reg, "--eta", "0.5"]);
        assert_eq!(code(&out), 0, "{reg}: {}{}", stdout(&out), stderr(&out));
    }
}

#[test]
fn verify_guards() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("four.json");
    assert_eq!(code(&softmdp(&["generate", "--seed", "1", "--states", "4", "--actions", "2", "--out", p(&f)])), 0);
    let out = softmdp(&["verify", p(&f), "--reg", "entropy", "--checks", "exhaustive"]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("exhaustive"));
    assert_eq!(code(&softmdp(&["verify", p(&f), "--reg", "entropy", "--checks", "kkt"])), 0);
    assert_eq!(code(&softmdp(&["verify", p(&f), "--reg", "none", "--checks", "kkt"])), 5);
}
