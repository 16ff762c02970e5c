use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rachsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rachsim"))
        .args(args)
        .env("RACHSIM_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(String::from).collect()
}

#[test]
fn analyze_writes_slot_one_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["analyze", "--config", "fig3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("fig3/analyze");
    let h = header(&dir.join("analysis.csv"));
    for col in ["gamma_th_db", "scheme", "m", "P", "P_det", "P_det_closed_form", "T"] {
        assert!(h.iter().any(|c| c == col), "missing {col} in {h:?}");
    }
    let rows = fs::read_to_string(dir.join("analysis.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 41);
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn out_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let explicit = tmp.path().join("explicit");
    let o = rachsim(&tmp.path().join("env"), &["analyze", "-c", "fig3", "-o", explicit.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(explicit.join("fig3/analyze/analysis.csv").exists());
    assert!(!tmp.path().join("env").exists());
}

#[test]
fn missing_config_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["analyze", "--config", "no/such/file.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no/such/file.toml"), "{}", stderr(&o));
}

#[test]
fn invalid_parameter_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["analyze", "-c", "fig3", "--set", "network.alpha=2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = rachsim(tmp.path(), &["analyze", "-c", "fig3", "--set", "network.lambda_b_per_km2=-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!tmp.path().join("fig3").exists());
}

#[test]
fn unknown_flag_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["analyze", "-c", "fig3", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_every_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--config", "--set", "--out", "--print-normalized", "--verbose"];
    let sim = ["--slots", "--seed", "--realizations", "--side", "--jobs"];
    let cases: [(&str, &[&str]); 6] = [
        ("analyze", &[]),
        ("evolve", &["--slots"]),
        ("simulate", &sim),
        ("compare", &sim),
        ("pmf", &[]),
        ("optimal-density", &[]),
    ];
    for (cmd, extra) in cases {
        let o = rachsim(tmp.path(), &[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8_lossy(&o.stdout);
        for flag in common.iter().chain(extra.iter()) {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn print_normalized_applies_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["evolve", "-c", "fig7", "--set", "network.gamma_th_db=-3", "--print-normalized"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("gamma_th_db = -3"), "{text}");
    assert!(!tmp.path().join("fig7").exists());
}

#[test]
fn pmf_and_optimal_density_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rachsim(tmp.path(), &["pmf", "-c", "fig4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = header(&tmp.path().join("fig4/pmf/cdf.csv"));
    assert!(h.iter().any(|c| c == "m"), "{h:?}");

    let o = rachsim(tmp.path(), &["pmf", "-c", "fig3"]);
    assert_eq!(o.status.code(), Some(1));

    let o = rachsim(tmp.path(), &["optimal-density", "-c", "fig6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = header(&tmp.path().join("fig6/optimal-density/optimal_density.csv"));
    for col in ["lambda_b_star_per_km2", "load_at_star", "C_at_star", "C_at_configured"] {
        assert!(h.iter().any(|c| c == col), "missing {col} in {h:?}");
    }
}

#[test]
fn simulate_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let root = tmp.path().join(out);
        let o = rachsim(&root, &["simulate", "-c", "fig8", "--slots", "3", "--realizations", "2", "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(root.join("fig8/simulate/simulation.csv")).unwrap()
    };
    let a = run("5", "a");
    assert_eq!(a, run("5", "b"));
    assert_ne!(a, run("6", "c"));
}
