//! Runs `fracpeak verify` twice with a fixed seed and grades criteria 1-11
//! from the first report and the two manifests.

use fracpeak::verify::{Check, Report, ScenarioId, Verdict};
use std::path::Path;
use std::process::{Command, ExitCode};

const CACHE: &str = concat!(env!("CARGO_TARGET_TMPDIR"), "/gs-cache");

struct Criterion {
    id: usize,
    what: &'static str,
    scenario: ScenarioId,
    /// Check-name prefixes; empty selects every check of the scenario.
    prefixes: &'static [&'static str],
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        what: "ground-state residual, tail slope, refinement, c0",
        scenario: ScenarioId::Decay,
        prefixes: &["residual", "tail_", "refinement_", "c0"],
    },
    Criterion {
        id: 2,
        what: "scaling law of w_lambda",
        scenario: ScenarioId::Decay,
        prefixes: &["rescaled_residual_", "mp1_power_law_"],
    },
    Criterion {
        id: 3,
        what: "interaction law",
        scenario: ScenarioId::Interaction,
        prefixes: &[],
    },
    Criterion {
        id: 4,
        what: "boundary-correction scaling",
        scenario: ScenarioId::CorrectionScaling,
        prefixes: &[],
    },
    Criterion {
        id: 5,
        what: "projected solver",
        scenario: ScenarioId::Contraction,
        prefixes: &[],
    },
    Criterion {
        id: 6,
        what: "multiplier law",
        scenario: ScenarioId::Multipliers,
        prefixes: &[],
    },
    Criterion {
        id: 7,
        what: "energy expansion",
        scenario: ScenarioId::EnergyExpansion,
        prefixes: &[],
    },
    Criterion {
        id: 8,
        what: "double-well two-peak solution",
        scenario: ScenarioId::Thm1,
        prefixes: &[],
    },
    Criterion {
        id: 9,
        what: "clustered maximizer at a strict maximum",
        scenario: ScenarioId::Thm3Cluster,
        prefixes: &[],
    },
    Criterion {
        id: 10,
        what: "no cluster at a nondegenerate minimum",
        scenario: ScenarioId::Thm4Nonexist,
        prefixes: &[],
    },
];

fn verify(out: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fracpeak"))
        .args(["--seed", "7", "--out"])
        .arg(out)
        .arg("verify")
        .env("FRACPEAK_CACHE", CACHE)
        .output()
        .map_err(|e| e.to_string())?;
    match o.status.code() {
        Some(0) | Some(2) => Ok(String::from_utf8_lossy(&o.stdout).into_owned()),
        code => Err(format!("exit {code:?}: {}", String::from_utf8_lossy(&o.stderr))),
    }
}

fn manifest_hash(dir: &Path) -> Option<String> {
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).ok()?).ok()?;
    m["hash"].as_str().map(String::from)
}

fn selected<'a>(v: &'a Verdict, prefixes: &[&str]) -> Vec<&'a Check> {
    v.checks
        .iter()
        .filter(|c| prefixes.is_empty() || prefixes.iter().any(|p| c.name.starts_with(p)))
        .collect()
}

fn grade(c: &Criterion, report: &Report) -> (bool, String) {
    let Some(v) = report.verdicts.iter().find(|v| v.scenario == c.scenario) else {
        return (false, format!("no verdict for {}", c.scenario.name()));
    };
    let checks = selected(v, c.prefixes);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}={:.4e} not in [{:.4e}, {:.4e}]", c.name, c.measured, c.lo, c.hi))
        .collect();
    let pass = !checks.is_empty() && failed.is_empty();
    let detail = if checks.is_empty() {
        format!("{}: no checks ran: {}", c.scenario.name(), v.notes.join("; "))
    } else if pass {
        format!("{}: {} checks", c.scenario.name(), checks.len())
    } else {
        format!("{}: {}", c.scenario.name(), failed.join(", "))
    };
    (pass, detail)
}

fn line(id: usize, pass: bool, what: &str, detail: &str) {
    println!("criterion {id:>2} {} {what} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = verify(a.path());
    let second = verify(b.path());
    let mut all = true;
    let report: Option<Report> = std::fs::read_to_string(a.path().join("report.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    match (&first, &report) {
        (Ok(table), Some(report)) => {
            print!("{table}");
            for c in &CRITERIA {
                let (pass, detail) = grade(c, report);
                all &= pass;
                line(c.id, pass, c.what, &detail);
            }
        }
        (Err(e), _) => {
            all = false;
            for c in &CRITERIA {
                line(c.id, false, c.what, &format!("verify did not run: {e}"));
            }
        }
        (Ok(_), None) => {
            all = false;
            for c in &CRITERIA {
                line(c.id, false, c.what, "report.json unreadable");
            }
        }
    }
    let (ha, hb) = (manifest_hash(a.path()), manifest_hash(b.path()));
    let same = second.is_ok() && ha.is_some() && ha == hb;
    let detail = match (&ha, &hb) {
        (Some(x), Some(y)) if x == y => format!("hash {x}"),
        (Some(x), Some(y)) => format!("{x} vs {y}"),
        _ => "manifest missing".into(),
    };
    all &= same;
    line(11, same, "end-to-end determinism", &detail);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
