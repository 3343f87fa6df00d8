//! End-to-end CLI contracts: golden CSV headers, row counts, config-file
//! precedence, exit codes, and SVG well-formedness.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_klapi"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "klapi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn tmp() -> (tempfile::TempDir, PathBuf) {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().to_path_buf();
    (d, p)
}

#[test]
fn bandit_header_and_row_count() {
    let (_d, out) = tmp();
    run_ok(&[
        "bandit", "--out", out.to_str().unwrap(), "--seeds", "3", "--phases", "7",
        "--delta", "1.0", "--eta", "0.5,1.0",
    ]);
    let csv = read(&out, "bandit.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algo,delta,eta,seed,phase,theta,phase_regret"
    );
    // 2 algorithms × 1 delta × 2 etas × 3 seeds × 7 phases
    assert_eq!(lines.count(), 2 * 2 * 3 * 7);
}

#[test]
fn bandit_summary_header() {
    let (_d, out) = tmp();
    run_ok(&[
        "bandit", "--out", out.to_str().unwrap(), "--seeds", "5", "--phases", "5",
        "--delta", "1.0", "--eta", "0.5", "--certify-lemma2",
    ]);
    let csv = read(&out, "bandit_summary.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "delta,eta,tau,horizon,seeds,mean_regret,ci95,bound,pass"
    );
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn contextual_header_and_row_count() {
    let (_d, out) = tmp();
    run_ok(&[
        "contextual", "--out", out.to_str().unwrap(), "--classes", "3", "--dim", "4",
        "--tau", "50", "--phases", "4", "--seeds", "2", "--eval", "oracle",
        "--algos", "vmpo,cpo",
    ]);
    let csv = read(&out, "contextual.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algo,eta,seed,phase,avg_reward,kl_forward,kl_reverse"
    );
    assert_eq!(lines.count(), 2 * 2 * 4);
}

#[test]
fn mdp_header_and_constant_j_star() {
    let (_d, out) = tmp();
    run_ok(&[
        "mdp", "--out", out.to_str().unwrap(), "--fixture", "gridworld", "--tau", "200",
        "--phases", "3", "--seeds", "2", "--algos", "exact-md,mdpo,surrogate,vmpo",
        "--policy-steps", "20",
    ]);
    let csv = read(&out, "mdp.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algo,fixture,eta,seed,phase,avg_reward,j_star"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4 * 2 * 3);
    let j_star: Vec<&str> = rows
        .iter()
        .map(|r| r.rsplit(',').next().unwrap())
        .collect();
    assert!(j_star.iter().all(|&j| j == j_star[0]));
    assert!(rows.iter().all(|r| r.contains(",gridworld,")));
}

#[test]
fn mdp_accepts_log_linear_fourier_policy() {
    let (_d, out) = tmp();
    run_ok(&[
        "mdp", "--out", out.to_str().unwrap(), "--tau", "200", "--phases", "2",
        "--seeds", "1", "--algos", "mdpo", "--policy", "log-linear", "--features",
        "fourier", "--order", "3", "--eval", "least-squares", "--policy-steps", "20",
    ]);
    assert!(out.join("mdp.csv").exists());
}

#[test]
fn gradcheck_header_and_exit_codes() {
    let (_d, out) = tmp();
    run_ok(&["gradcheck", "--out", out.to_str().unwrap(), "--instances", "2"]);
    let csv = read(&out, "gradcheck.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "check,loss,policy,instances,value,threshold,pass"
    );
    // 12 finite-difference rows + bound + 2 convexity + witness + identity
    assert_eq!(csv.lines().count(), 18);

    // the self-test hook corrupts a gradient, so the run must fail
    let status = bin()
        .args(["gradcheck", "--out", out.to_str().unwrap(), "--instances", "2", "--corrupt-gradient"])
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn lemma_header_and_wide_ci_with_few_trials() {
    let (_d, out) = tmp();
    // 10 trials: the CI is wide and certification may legitimately fail, but
    // the CSV must still be well-formed
    let output = bin()
        .args(["lemma", "--out", out.to_str().unwrap(), "--trials", "2000",
               "--regret-seeds", "50"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = read(&out, "lemma.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "check,delta,sigma,eta,theta,tau,trials,value,ci95,bound,pass"
    );
    assert_eq!(csv.lines().count(), 3);

    let (_d2, out2) = tmp();
    let few = bin()
        .args(["lemma", "--out", out2.to_str().unwrap(), "--trials", "10",
               "--regret-seeds", "50"])
        .output()
        .unwrap();
    // well-formed output regardless of the verdict
    let csv = read(&out2, "lemma.csv");
    assert_eq!(csv.lines().count(), 3);
    drop(few);
}

#[test]
fn svg_outputs_are_wellformed_with_one_polyline_per_run() {
    let (_d, out) = tmp();
    run_ok(&[
        "bandit", "--out", out.to_str().unwrap(), "--seeds", "3", "--phases", "5",
        "--delta", "1.0", "--eta", "0.5",
    ]);
    let svg = read(&out, "bandit_theta_d1_eta0.5.svg");
    assert!(svg.starts_with("<svg "));
    assert!(svg.trim_end().ends_with("</svg>"));
    // 2 algorithms × 3 seeds
    assert_eq!(svg.matches("<polyline").count(), 6);
    // every opened tag closes (crude well-formedness: balanced angle brackets)
    assert_eq!(svg.matches('<').count(), svg.matches('>').count());
}

#[test]
fn config_file_fills_defaults_and_flags_win() {
    let (_d, out) = tmp();
    let cfg = out.join("run.cfg");
    std::fs::write(&cfg, "phases = 4\nseeds = 2\ndelta = 1.0\neta = 0.5 # single point\n").unwrap();
    run_ok(&[
        "bandit", "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--phases", "3",
    ]);
    let csv = read(&out, "bandit.csv");
    // --phases 3 beats the file's 4; seeds/delta/eta come from the file
    assert_eq!(csv.lines().count() - 1, 2 * 2 * 3);
}

#[test]
fn usage_and_input_errors_exit_nonzero() {
    let (_d, out) = tmp();
    let unknown_flag = bin().args(["bandit", "--no-such-flag"]).output().unwrap();
    assert!(!unknown_flag.status.success());

    let bad_fixture = bin()
        .args(["mdp", "--out", out.to_str().unwrap(), "--fixture", "cartpole"])
        .output()
        .unwrap();
    assert!(!bad_fixture.status.success());
    assert!(String::from_utf8_lossy(&bad_fixture.stderr).contains("cartpole"));

    let missing_idx = bin()
        .args([
            "contextual", "--out", out.to_str().unwrap(), "--idx-images", "/no/such/file",
            "--idx-labels", "/no/such/labels",
        ])
        .output()
        .unwrap();
    assert!(!missing_idx.status.success());
}
