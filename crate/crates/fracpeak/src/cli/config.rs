//! TOML run configuration.

use crate::energy::Potential;
use crate::error::{Error, Result};
use crate::gridcore::Shape;
use crate::verify::{ExperimentPlan, ScenarioId};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBlock {
    #[serde(flatten)]
    pub shape: Shape,
    /// Grid spacing in Ω_ε.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_margin")]
    pub margin: usize,
}

fn default_h() -> f64 {
    0.1
}

fn default_margin() -> usize {
    8
}

/// Peak locations in Ω, or `"auto"` for a critical configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeakSpec {
    Auto(String),
    Given(Vec<Vec<f64>>),
}

impl Default for PeakSpec {
    fn default() -> Self {
        PeakSpec::Auto("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeaksBlock {
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub xi: PeakSpec,
    /// Smallest mutual distance in Ω_ε.
    #[serde(default = "one_f")]
    pub eta_min: f64,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl Default for PeaksBlock {
    fn default() -> Self {
        PeaksBlock {
            k: 1,
            xi: PeakSpec::default(),
            eta_min: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsBlock {
    pub mu: Option<f64>,
    /// Distance of admissible peaks from ∂Ω (in Ω units).
    pub delta_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub radius: f64,
    #[serde(default = "spacing_max")]
    pub spacing_max: f64,
}

fn half() -> f64 {
    0.5
}

fn spacing_max() -> f64 {
    0.8
}

impl Default for ClusterBlock {
    fn default() -> Self {
        ClusterBlock {
            alpha: 0.5,
            radius: 0.5,
            spacing_max: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesBlock {
    #[serde(default = "one_f")]
    pub scale: f64,
    #[serde(default = "threshold")]
    pub eps_threshold: f64,
}

fn threshold() -> f64 {
    0.2
}

impl Default for TolerancesBlock {
    fn default() -> Self {
        TolerancesBlock {
            scale: 1.0,
            eps_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scenarios: Vec<ScenarioId>,
    pub problem: ProblemBlock,
    pub domain: DomainBlock,
    pub potential: Potential,
    #[serde(default)]
    pub peaks: PeaksBlock,
    #[serde(default)]
    pub norms: NormsBlock,
    /// Present for clustered configurations: peaks near one point.
    pub cluster: Option<ClusterBlock>,
    #[serde(default)]
    pub tolerances: TolerancesBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text)
    }

    /// Peak locations as fixed-size points, `None` for `"auto"`.
    pub fn xi(&self) -> Result<Option<Vec<[f64; 2]>>> {
        match &self.peaks.xi {
            PeakSpec::Auto(s) if s == "auto" => Ok(None),
            PeakSpec::Auto(s) => Err(invalid("peaks.xi", format!("expected \"auto\" or a list of points, got `{s}`"))),
            PeakSpec::Given(pts) => {
                let n = self.problem.n;
                if pts.len() != self.peaks.k {
                    return Err(invalid(
                        "peaks.xi",
                        format!("{} points given for k = {}", pts.len(), self.peaks.k),
                    ));
                }
                pts.iter()
                    .map(|p| {
                        if p.len() != n {
                            return Err(invalid("peaks.xi", format!("point {p:?} is not {n}-dimensional")));
                        }
                        Ok([p[0], p.get(1).copied().unwrap_or(0.0)])
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some)
            }
        }
    }

    /// The configured parameters applied to one scenario.
    pub fn plan(&self, scenario: ScenarioId) -> Result<ExperimentPlan> {
        Ok(ExperimentPlan {
            scenario,
            n: self.problem.n,
            s: self.problem.s,
            p: self.problem.p,
            eps: self.problem.eps.clone(),
            k: self.peaks.k,
            h: self.domain.h,
            margin: self.domain.margin,
            domain: self.domain.shape.clone(),
            potential: self.potential.clone(),
            xi: self.xi()?,
            alpha: self.cluster().alpha,
            cluster_radius: self.cluster().radius,
            eta_min: self.peaks.eta_min,
            mu: self.norms.mu,
            delta_star: self.norms.delta_star,
            spacing_max: self.cluster().spacing_max,
            eps_threshold: self.tolerances.eps_threshold,
            seed: self.seed,
            tol_scale: self.tolerances.scale,
        })
    }

    pub fn cluster(&self) -> ClusterBlock {
        self.cluster.clone().unwrap_or_default()
    }

    pub fn plans(&self) -> Result<Vec<ExperimentPlan>> {
        self.scenarios.iter().map(|s| self.plan(*s)).collect()
    }

    /// Checks every block; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.xi()?;
        let plan = self.plan(self.scenarios.first().copied().unwrap_or(ScenarioId::Thm1))?;
        plan.validate().map_err(|e| match e {
            Error::ConfigInvalid { field, message } => {
                let path = match field.as_str() {
                    "n" | "s" | "p" | "eps" => format!("problem.{field}"),
                    "k" | "xi" => format!("peaks.{field}"),
                    "mu" | "delta_star" => format!("norms.{field}"),
                    "h" => "domain.h".into(),
                    "tol_scale" => "tolerances.scale".into(),
                    _ => field,
                };
                invalid(&path, message)
            }
            other => other,
        })
    }
}
