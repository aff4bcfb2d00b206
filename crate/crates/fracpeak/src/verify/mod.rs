//! Desk-scale reproductions of the existence, clustering and
//! non-existence results and of the quantitative estimates behind them.
//! Each scenario yields a [`Verdict`] built from pass/fail [`Check`]s.

mod measure;
mod scenarios;

pub use measure::{assign_nearest, detect_peaks, fit_exponent, ExponentFit};
pub use scenarios::mirrored;

use crate::energy::Potential;
use crate::error::{Error, Result};
use crate::gridcore::Shape;
use crate::groundstate::{check_exponents, GsCache};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Thm1,
    Thm3Cluster,
    Thm4Nonexist,
    Decay,
    Interaction,
    CorrectionScaling,
    Multipliers,
    Contraction,
    EnergyExpansion,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 9] = [
        ScenarioId::Decay,
        ScenarioId::Interaction,
        ScenarioId::CorrectionScaling,
        ScenarioId::Contraction,
        ScenarioId::Multipliers,
        ScenarioId::EnergyExpansion,
        ScenarioId::Thm1,
        ScenarioId::Thm3Cluster,
        ScenarioId::Thm4Nonexist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Thm1 => "thm1",
            ScenarioId::Thm3Cluster => "thm3_cluster",
            ScenarioId::Thm4Nonexist => "thm4_nonexist",
            ScenarioId::Decay => "decay",
            ScenarioId::Interaction => "interaction",
            ScenarioId::CorrectionScaling => "correction_scaling",
            ScenarioId::Multipliers => "multipliers",
            ScenarioId::Contraction => "contraction",
            ScenarioId::EnergyExpansion => "energy_expansion",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::ConfigInvalid {
                field: "scenario".into(),
                message: format!("unknown scenario `{s}`"),
            })
    }
}

/// One scenario with its parameters. Defaults are the 1D desk setting
/// `s = 1/2`, `p = 3` on `Ω = (−1, 1)` with lattice spacing 0.1 in Ω_ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub scenario: ScenarioId,
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub eps: Vec<f64>,
    pub k: usize,
    /// Grid spacing in Ω_ε.
    pub h: f64,
    /// Exterior layers around Ω_ε.
    pub margin: usize,
    pub domain: Shape,
    pub potential: Potential,
    /// Peak locations in Ω where a scenario needs them given.
    pub xi: Option<Vec<[f64; 2]>>,
    /// Clustering exponent of the set `A`.
    pub alpha: f64,
    /// Radius of the ball `K` around the maximum.
    pub cluster_radius: f64,
    /// Smallest admissible mutual distance in Ω_ε for `Ξ_η`.
    pub eta_min: f64,
    /// Weight exponent of the ∗-norm; the midpoint when absent.
    pub mu: Option<f64>,
    /// Distance of admissible peaks from ∂Ω; a quarter of the inradius
    /// when absent.
    pub delta_star: Option<f64>,
    /// Largest spacing (in Ω) of the balance scan.
    pub spacing_max: f64,
    /// Every ε must lie below this.
    pub eps_threshold: f64,
    pub seed: u64,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            scenario: ScenarioId::Thm1,
            n: 1,
            s: 0.5,
            p: 3.0,
            eps: vec![0.1, 0.05, 0.025],
            k: 1,
            h: 0.1,
            margin: 8,
            domain: Shape::Box {
                lo: vec![-1.0],
                hi: vec![1.0],
            },
            potential: Potential::Constant { v0: 1.0 },
            xi: None,
            alpha: 0.5,
            cluster_radius: 0.5,
            eta_min: 1.0,
            mu: None,
            delta_star: None,
            spacing_max: 0.8,
            eps_threshold: 0.2,
            seed: 0,
            tol_scale: 1.0,
        }
    }
}

impl ExperimentPlan {
    /// The desk defaults of a scenario.
    pub fn desk(scenario: ScenarioId) -> Self {
        let base = ExperimentPlan {
            scenario,
            ..Default::default()
        };
        let quad = Potential::Quadratic {
            v0: 1.0,
            a: 0.5,
            center: [0.0, 0.0],
        };
        match scenario {
            ScenarioId::Thm1 => ExperimentPlan {
                eps: vec![0.05, 0.025],
                k: 2,
                potential: Potential::DoubleWell { v0: 1.0, a: 1.0, r0: 0.5 },
                ..base
            },
            ScenarioId::Thm3Cluster => ExperimentPlan {
                eps: vec![0.1, 0.05],
                k: 2,
                potential: Potential::Bump {
                    v0: 1.0,
                    amp: 1.0,
                    width: 0.5,
                    center: [0.0, 0.0],
                },
                ..base
            },
            ScenarioId::Thm4Nonexist => ExperimentPlan {
                eps: vec![0.05],
                k: 2,
                potential: quad,
                ..base
            },
            ScenarioId::Multipliers => ExperimentPlan {
                eps: vec![0.05, 0.025],
                potential: quad,
                xi: Some(vec![[0.3, 0.0]]),
                ..base
            },
            ScenarioId::Contraction | ScenarioId::EnergyExpansion => ExperimentPlan {
                potential: quad,
                xi: Some(vec![[0.3, 0.0]]),
                ..base
            },
            ScenarioId::Decay | ScenarioId::Interaction | ScenarioId::CorrectionScaling => base,
        }
    }

    /// Every scenario at its desk defaults.
    pub fn suite() -> Vec<Self> {
        ScenarioId::ALL.into_iter().map(ExperimentPlan::desk).collect()
    }

    /// `δ_*` in Ω units.
    pub fn delta_star(&self) -> f64 {
        self.delta_star.unwrap_or(0.25 * self.domain.inradius())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::ConfigInvalid {
            field: field.into(),
            message,
        };
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(bad("s", format!("s = {} must lie in (0, 1)", self.s)));
        }
        check_exponents(self.n, self.s, self.p).map_err(|e| bad("p", e.to_string()))?;
        if self.domain.dim() != self.n {
            return Err(bad("domain", format!("domain is {}D but n = {}", self.domain.dim(), self.n)));
        }
        if self.eps.is_empty() {
            return Err(bad("eps", "empty ε list".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e <= self.eps_threshold)) {
            return Err(bad(
                "eps",
                format!("ε = {e} is outside (0, {}] where the asymptotics are tested", self.eps_threshold),
            ));
        }
        if let Some(mu) = self.mu {
            let nf = self.n as f64;
            if !(mu > nf / 2.0 && mu < (nf + 2.0 * self.s) / 2.0) {
                return Err(bad(
                    "mu",
                    format!("μ = {mu} must lie in ({}, {})", nf / 2.0, (nf + 2.0 * self.s) / 2.0),
                ));
            }
        }
        if self.k == 0 {
            return Err(bad("k", "at least one peak".into()));
        }
        if !(self.h > 0.0) {
            return Err(bad("h", format!("grid spacing {} must be positive", self.h)));
        }
        if !(self.tol_scale > 0.0) {
            return Err(bad("tol_scale", format!("tolerance scale {} must be positive", self.tol_scale)));
        }
        if let Some(d) = self.delta_star {
            let r = self.domain.inradius();
            if !(d > 0.0 && d < r) {
                return Err(bad("delta_star", format!("δ_* = {d} must lie in (0, {r})")));
            }
        }
        self.potential
            .validate(&self.domain)
            .map_err(|e| bad("potential", e.to_string()))
    }
}

/// What an expected value rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// A stated estimate or theorem (exponents, limits, signs).
    Estimate,
    /// An independent numerical computation.
    Oracle,
    /// Exact arithmetic or symmetry.
    Identity,
}

// JSON writes non-finite floats as null; an open bound is the only infinity.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn lower_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

fn upper_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn series_nan_if_null<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<BTreeMap<String, Vec<f64>>, D::Error> {
    let raw = BTreeMap::<String, Vec<Option<f64>>>::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()))
        .collect())
}

/// One measured quantity against its admissible interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(deserialize_with = "nan_if_null")]
    pub measured: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub expected: f64,
    #[serde(deserialize_with = "lower_if_null")]
    pub lo: f64,
    #[serde(deserialize_with = "upper_if_null")]
    pub hi: f64,
    pub basis: Basis,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, expected: f64, lo: f64, hi: f64, basis: Basis) -> Self {
        Check {
            name: name.into(),
            measured,
            expected,
            lo,
            hi,
            basis,
            pass: measured >= lo && measured <= hi,
        }
    }

    /// `|measured/expected − 1| ≤ tol`.
    pub fn relative(name: impl Into<String>, measured: f64, expected: f64, tol: f64, basis: Basis) -> Self {
        let (a, b) = (expected * (1.0 - tol), expected * (1.0 + tol));
        Check::new(name, measured, expected, a.min(b), a.max(b), basis)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64, basis: Basis) -> Self {
        Check::new(name, measured, bound, f64::NEG_INFINITY, bound, basis)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64, basis: Basis) -> Self {
        Check::new(name, measured, bound, bound, f64::INFINITY, basis)
    }

    /// A yes/no property recorded as 1/0.
    pub fn holds(name: impl Into<String>, ok: bool, basis: Basis) -> Self {
        Check::new(name, if ok { 1.0 } else { 0.0 }, 1.0, 1.0, 1.0, basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: ScenarioId,
    pub plan: ExperimentPlan,
    pub checks: Vec<Check>,
    /// Named series behind the checks (fits, traces, scans).
    #[serde(deserialize_with = "series_nan_if_null")]
    pub series: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
    /// Files written, relative to the report directory.
    pub artifacts: Vec<String>,
    pub pass: bool,
}

impl Verdict {
    fn new(plan: &ExperimentPlan) -> Self {
        Verdict {
            scenario: plan.scenario,
            plan: plan.clone(),
            checks: Vec::new(),
            series: BTreeMap::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
            pass: false,
        }
    }

    fn finish(mut self) -> Self {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }

    /// A failed run: the error is the only note.
    fn failed(plan: &ExperimentPlan, err: &Error) -> Self {
        let mut v = Verdict::new(plan);
        v.notes.push(format!("error: {err}"));
        v
    }
}

/// Shared resources of a run.
#[derive(Debug, Clone, Default)]
pub struct Runner {
    pub cache: Option<GsCache>,
    /// Report directory; scenarios write below `out/<scenario>/`.
    pub out: Option<PathBuf>,
}

impl Runner {
    fn dir(&self, plan: &ExperimentPlan) -> Result<Option<PathBuf>> {
        let Some(out) = &self.out else { return Ok(None) };
        let d = out.join(plan.scenario.name());
        fs::create_dir_all(&d)?;
        Ok(Some(d))
    }
}

/// Runs one scenario. Solver failures inside a scenario become failed
/// verdicts; invalid plans are errors.
pub fn run_plan(plan: &ExperimentPlan, runner: &Runner) -> Result<Verdict> {
    plan.validate()?;
    let dir = runner.dir(plan)?;
    let mut v = Verdict::new(plan);
    let res = match plan.scenario {
        ScenarioId::Thm1 => scenarios::thm1(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Thm3Cluster => scenarios::thm3(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Thm4Nonexist => scenarios::thm4(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Decay => scenarios::decay(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Interaction => scenarios::interaction(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::CorrectionScaling => scenarios::correction_scaling(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Multipliers => scenarios::multipliers(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::Contraction => scenarios::contraction(plan, runner, dir.as_deref(), &mut v),
        ScenarioId::EnergyExpansion => scenarios::energy_expansion(plan, runner, dir.as_deref(), &mut v),
    };
    let v = match res {
        Ok(()) => v.finish(),
        Err(e @ (Error::ConfigInvalid { .. } | Error::InvalidArgument(_) | Error::Io(_))) => return Err(e),
        Err(e) => {
            log::warn!("{} failed: {e}", plan.scenario.name());
            Verdict::failed(plan, &e)
        }
    };
    let mut v = v;
    if let Some(d) = &dir {
        v.artifacts.push(format!("{}/verdict.json", plan.scenario.name()));
        let path = d.join("verdict.json");
        fs::write(&path, serde_json::to_string_pretty(&v)?)?;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

/// Runs the plans on `jobs` threads; verdicts keep the plan order.
pub fn run_suite(plans: &[ExperimentPlan], runner: &Runner, jobs: usize) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let verdicts: Vec<Verdict> = pool.install(|| {
        plans
            .par_iter()
            .map(|p| run_plan(p, runner))
            .collect::<Result<Vec<_>>>()
    })?;
    let pass = verdicts.iter().all(|v| v.pass);
    Ok(Report { verdicts, pass })
}

/// One line per check.
pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:<44} {:>13} {:>13} {:>27}  {:<8} result",
        "scenario", "check", "measured", "expected", "admissible", "basis"
    );
    for v in &report.verdicts {
        for c in &v.checks {
            let _ = writeln!(
                s,
                "{:<20} {:<44} {:>13.6e} {:>13.6e} [{:>11.4e}, {:>11.4e}]  {:<8} {}",
                v.scenario.name(),
                c.name,
                c.measured,
                c.expected,
                c.lo,
                c.hi,
                format!("{:?}", c.basis).to_lowercase(),
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        if v.checks.is_empty() {
            let _ = writeln!(s, "{:<20} {:<44} {}", v.scenario.name(), "(no checks)", "FAIL");
        }
        for n in &v.notes {
            let _ = writeln!(s, "{:<20} note: {n}", v.scenario.name());
        }
    }
    let _ = writeln!(s, "overall: {}", if report.pass { "PASS" } else { "FAIL" });
    s
}

/// `sha256` of every file below `dir` (relative paths, sorted) and a hash
/// over the whole listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
    pub hash: String,
}

impl Manifest {
    pub fn of_dir(dir: &Path) -> Result<Self> {
        let mut files = BTreeMap::new();
        collect(dir, dir, &mut files)?;
        let mut h = Sha256::new();
        for (k, v) in &files {
            h.update(k.as_bytes());
            h.update(b":");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        Ok(Manifest {
            files,
            hash: hex::encode(h.finalize()),
        })
    }
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    for e in fs::read_dir(dir)? {
        let path = e?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            if rel == "manifest.json" {
                continue;
            }
            out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
        }
    }
    Ok(())
}

/// Writes `report.json`, `report.txt` and `manifest.json` into `out`.
pub fn write_report(out: &Path, report: &Report) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    fs::write(out.join("report.txt"), render_table(report))?;
    let m = Manifest::of_dir(out)?;
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(m)
}
