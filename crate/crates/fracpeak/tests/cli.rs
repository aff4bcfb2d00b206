use fracpeak::cli::{PeakSpec, RunConfig};
use fracpeak::verify::ScenarioId;
use fracpeak::Error;
use std::path::Path;
use std::process::Command;

const CACHE: &str = concat!(env!("CARGO_TARGET_TMPDIR"), "/gs-cache");
const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs");

const MINIMAL: &str = r#"
scenarios = ["thm1"]

[problem]
n = 1
s = 0.5
p = 3.0
eps = [0.05]

[domain]
kind = "box"
lo = [-1.0]
hi = [1.0]

[potential]
id = "quadratic"
v0 = 1.0
a = 0.5
"#;

fn field_of(text: &str) -> String {
    match RunConfig::from_toml(text) {
        Err(Error::ConfigInvalid { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn fracpeak(args: &[&str], cache: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fracpeak"))
        .args(args)
        .env("FRACPEAK_CACHE", cache)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = RunConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(cfg.domain.h, 0.1);
    assert_eq!(cfg.peaks.k, 1);
    assert_eq!(cfg.peaks.xi, PeakSpec::Auto("auto".into()));
    assert_eq!(cfg.tolerances.scale, 1.0);
    let plan = cfg.plan(ScenarioId::Thm1).unwrap();
    assert_eq!(plan.xi, None);
    assert_eq!(plan.eps, vec![0.05]);
}

#[test]
fn shipped_configs_parse() {
    let mut valid = 0;
    for e in std::fs::read_dir(CONFIGS).unwrap() {
        let path = e.unwrap().path();
        let r = RunConfig::load(&path);
        if path.file_name().unwrap().to_string_lossy().starts_with("invalid") {
            assert!(r.is_err(), "{path:?}");
        } else {
            r.unwrap_or_else(|e| panic!("{path:?}: {e}"));
            valid += 1;
        }
    }
    assert!(valid >= 3);
}

#[test]
fn errors_name_the_field() {
    assert_eq!(field_of(&MINIMAL.replace("s = 0.5", "s = 1.2")), "problem.s");
    assert_eq!(field_of(&MINIMAL.replace("eps = [0.05]", "eps = [0.5]")), "problem.eps");
    assert_eq!(field_of(&MINIMAL.replace("v0 = 1.0", "v0 = -1.0")), "potential");
    assert_eq!(field_of(&format!("{MINIMAL}\n[norms]\nmu = 2.0\n")), "norms.mu");
    assert_eq!(field_of(&format!("{MINIMAL}\n[norms]\ndelta_star = 1.5\n")), "norms.delta_star");
    assert_eq!(field_of(&format!("{MINIMAL}\n[peaks]\nk = 2\nxi = [[0.1]]\n")), "peaks.xi");
    assert_eq!(field_of(&format!("{MINIMAL}\n[peaks]\nxi = \"somewhere\"\n")), "peaks.xi");
    assert_eq!(field_of(&format!("{MINIMAL}\n[tolerances]\nscale = 0.0\n")), "tolerances.scale");
    // unknown keys and scenarios are rejected by the parser
    assert_eq!(field_of(&MINIMAL.replace("[problem]", "[problem]\nq = 1")), "config");
    assert_eq!(field_of(&MINIMAL.replace("\"thm1\"", "\"thm2\"")), "config");
}

#[test]
fn given_peaks_are_points_of_omega() {
    let cfg = RunConfig::from_toml(&format!("{MINIMAL}\n[peaks]\nk = 2\nxi = [[-0.4], [0.4]]\n")).unwrap();
    assert_eq!(cfg.xi().unwrap(), Some(vec![[-0.4, 0.0], [0.4, 0.0]]));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{CONFIGS}/invalid_s.toml");
    let (code, _, err) = fracpeak(&["run", &cfg], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("problem.s") && err.contains("(0, 1)"), "{err}");
    let (code, _, _) = fracpeak(&["verify", "--scenario", "thm9"], dir.path());
    assert_eq!(code, 1);
}

#[test]
fn cache_inspect_and_clear() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = fracpeak(&["cache", "inspect"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("(0 entries)"), "{out}");
    let (code, out, _) = fracpeak(&["ground-state", "--n", "1", "--s", "0.5", "--p", "3", "--lattice", "0.25"], dir.path());
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("c0") && out.contains("residual"));
    let (_, out, _) = fracpeak(&["cache", "inspect"], dir.path());
    assert!(out.contains("(1 entries)") && out.contains("n=1 s=0.5 p=3"), "{out}");
    let (code, _, _) = fracpeak(&["cache", "clear"], dir.path());
    assert_eq!(code, 0);
    let (_, out, _) = fracpeak(&["cache", "inspect"], dir.path());
    assert!(out.contains("(0 entries)"), "{out}");
}

#[test]
fn run_writes_verdicts_and_a_manifest() {
    let out = tempfile::tempdir().unwrap();
    let cfg = format!("{CONFIGS}/thm1_1d.toml");
    let o = out.path().to_str().unwrap();
    let (code, stdout, err) = fracpeak(&["--out", o, "run", &cfg], Path::new(CACHE));
    assert_eq!(code, 0, "{stdout}{err}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["files"]["thm1/verdict.json"].is_string());
    // impossible tolerances fail the verdict, not the run
    let (code, stdout, _) = fracpeak(&["--out", o, "--tol-scale", "1e-6", "run", &cfg], Path::new(CACHE));
    assert_eq!(code, 2);
    assert!(stdout.contains("FAIL"));
}

#[test]
fn solve_and_reduce() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let cfg = format!("{CONFIGS}/thm1_1d.toml");
    let (code, stdout, err) = fracpeak(&["--out", o, "solve", &cfg], Path::new(CACHE));
    assert_eq!(code, 0, "{stdout}{err}");
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("solve.json")).unwrap()).unwrap();
    assert!(s["residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(s["peaks"].as_array().unwrap().len(), 2);
    assert!(out.path().join("u.bin").exists());
    let cfg = format!("{CONFIGS}/cluster_1d.toml");
    let (code, stdout, _) = fracpeak(&["--out", o, "reduce", &cfg], Path::new(CACHE));
    assert_eq!(code, 0);
    assert!(stdout.contains("Interior"));
    let csv = std::fs::read_to_string(out.path().join("balance.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "config,gradient,balance");
    assert_eq!(csv.lines().count(), 3);
}
