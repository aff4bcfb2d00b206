//! The `fracpeak` command line.
//!
//! Exit codes: 0 when every verdict passes, 2 when one fails, 1 on error.

mod config;

pub use config::{ClusterBlock, DomainBlock, NormsBlock, OutputBlock, PeakSpec, PeaksBlock, ProblemBlock, RunConfig, TolerancesBlock};

use crate::corrections::{build_ansatz, CorrectionOptions, PeakConfig};
use crate::energy::{
    asymptotic_energy, asymptotic_gradient, balance_residual, find_critical_config, write_csv, BalanceRow, Mode,
    Region, SearchOptions,
};
use crate::error::{Error, Result};
use crate::gridcore::{write_field, Domain};
use crate::groundstate::{solve_cached, GsCache, GsFamily, GsOptions, CACHE_ENV};
use crate::reduction::{NormSpec, ProjectedProblem, ReductionOptions};
use crate::verify::{
    assign_nearest, detect_peaks, render_table, run_suite, write_report, ExperimentPlan, Report, Runner, ScenarioId,
};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "fracpeak", version, about = "Multi-peak solutions of fractional Schrödinger Dirichlet problems")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads for scenario-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every stochastic step (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Multiplies every tolerance (overrides the config).
    #[arg(long = "tol-scale", global = true)]
    pub tol_scale: Option<f64>,
    /// Ground-state cache root.
    #[arg(long, global = true, env = CACHE_ENV, default_value = ".fracpeak-cache")]
    pub cache: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenarios selected in a config file.
    Run { config: PathBuf },
    /// Solve, certify and cache a ground state; print its constants.
    GroundState {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        /// Solve the lattice equation at this spacing instead of the continuum one.
        #[arg(long)]
        lattice: Option<f64>,
    },
    /// Critical configurations of the asymptotic reduced energy.
    Reduce { config: PathBuf },
    /// One configuration end to end: ansatz, projected problem, Newton.
    Solve {
        config: PathBuf,
        /// Which ε of the config (default: the first).
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Scenario suites at their desk defaults.
    Verify {
        /// Restrict to these scenarios (repeatable).
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Inspect or clear the ground-state cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    Inspect,
    Clear,
}

/// Parses the process arguments and runs.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Runs a parsed command; `Ok(false)` means a verdict failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    let cache = GsCache::new(&g.cache);
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, g)?;
            if cfg.scenarios.is_empty() {
                return Err(Error::ConfigInvalid {
                    field: "scenarios".into(),
                    message: "select at least one scenario".into(),
                });
            }
            let out = out_dir(g, &cfg, "fracpeak-out");
            let report = suite(&cfg.plans()?, &cache, &out, g.jobs)?;
            Ok(report.pass)
        }
        Command::GroundState { n, s, p, lattice } => ground_state(*n, *s, *p, *lattice, &cache, g.out.as_deref()),
        Command::Reduce { config } => {
            let cfg = load(config, g)?;
            reduce(&cfg, &cache, &out_dir(g, &cfg, "fracpeak-reduce"))
        }
        Command::Solve { config, eps } => {
            let cfg = load(config, g)?;
            solve(&cfg, *eps, &cache, &out_dir(g, &cfg, "fracpeak-solve"))
        }
        Command::Verify { scenarios } => {
            let ids = if scenarios.is_empty() {
                ScenarioId::ALL.to_vec()
            } else {
                scenarios.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?
            };
            let plans: Vec<ExperimentPlan> = ids
                .into_iter()
                .map(|id| {
                    let mut p = ExperimentPlan::desk(id);
                    p.seed = g.seed.unwrap_or(p.seed);
                    p.tol_scale = g.tol_scale.unwrap_or(p.tol_scale);
                    p
                })
                .collect();
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("fracpeak-verify"));
            Ok(suite(&plans, &cache, &out, g.jobs)?.pass)
        }
        Command::Cache { action } => {
            match action {
                CacheAction::Inspect => {
                    let entries = cache.list()?;
                    println!("cache {} ({} entries)", cache.root().display(), entries.len());
                    for e in entries {
                        println!(
                            "{}  n={} s={} p={} h={} r_max={} residual={:.3e}",
                            e.hash, e.n, e.s, e.p, e.h, e.r_max, e.residual
                        );
                    }
                }
                CacheAction::Clear => {
                    let removed = cache.clear()?;
                    println!("removed {removed} entries from {}", cache.root().display());
                }
            }
            Ok(true)
        }
    }
}

fn load(path: &Path, g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(t) = g.tol_scale {
        cfg.tolerances.scale = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: &RunConfig, fallback: &str) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn suite(plans: &[ExperimentPlan], cache: &GsCache, out: &Path, jobs: usize) -> Result<Report> {
    let runner = Runner {
        cache: Some(cache.clone()),
        out: Some(out.to_path_buf()),
    };
    let report = run_suite(plans, &runner, jobs)?;
    let manifest = write_report(out, &report)?;
    print!("{}", render_table(&report));
    println!("manifest {} ({})", manifest.hash, out.join("manifest.json").display());
    Ok(report)
}

fn ground_state(n: usize, s: f64, p: f64, lattice: Option<f64>, cache: &GsCache, out: Option<&Path>) -> Result<bool> {
    let opts = match lattice {
        Some(h) => GsOptions::lattice(n, h),
        None => GsOptions::continuum(n),
    };
    let gs = solve_cached(n, s, p, &opts, Some(cache))?;
    let c = gs.constants;
    println!("ground state n={n} s={s} p={p} ({})", lattice.map_or("continuum".into(), |h| format!("lattice h={h}")));
    for (name, v) in [
        ("w(0)", gs.value(0.0)),
        ("residual", gs.residual),
        ("tail slope", gs.tail.slope),
        ("A_tail", gs.tail.a_tail),
        ("c_*", c.c_star),
        ("int w^2", c.m2),
        ("int w^(p+1)", c.mp1),
        ("int w^p", c.ip),
        ("alpha_Z", c.alpha_z),
        ("c0", c.c0),
        ("theta", gs.theta()),
    ] {
        println!("  {name:<12} {v:>16.9e}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let summary = serde_json::json!({
            "n": n, "s": s, "p": p, "residual": gs.residual,
            "tail": gs.tail, "constants": c, "constant_changes": gs.constant_changes,
        });
        fs::write(dir.join("ground_state.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(gs.residual <= 1e-6)
}

fn family(cfg: &RunConfig, cache: &GsCache) -> Result<GsFamily> {
    let pr = &cfg.problem;
    if pr.n == 1 {
        GsFamily::lattice(pr.n, pr.s, pr.p, cfg.domain.h, Some(cache.clone()))
    } else {
        let gs = solve_cached(pr.n, pr.s, pr.p, &GsOptions::continuum(pr.n), Some(cache))?;
        Ok(GsFamily::continuum(Arc::new(gs)))
    }
}

fn region(cfg: &RunConfig) -> Region {
    match &cfg.cluster {
        Some(c) => Region::Cluster {
            center: cfg.xi().ok().flatten().map_or([0.0, 0.0], |x| x[0]),
            radius: c.radius,
            alpha: c.alpha,
        },
        None => Region::Xi {
            shape: cfg.domain.shape.clone(),
            eta_min: cfg.peaks.eta_min,
        },
    }
}

fn reduce(cfg: &RunConfig, cache: &GsCache, out: &Path) -> Result<bool> {
    fs::create_dir_all(out)?;
    let fam = family(cfg, cache)?;
    let gs = fam.base();
    let n = cfg.problem.n;
    let opts = SearchOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut ok = true;
    let mut rows = Vec::new();
    for &eps in &cfg.problem.eps {
        match find_critical_config(&cfg.potential, gs, eps, cfg.peaks.k, &region(cfg), Mode::Asymptotic, &opts) {
            Ok(r) => {
                println!(
                    "ε = {eps}: ξ = {:?}  I = {:.9e}  |∇I| = {:.2e}  {:?}",
                    r.xi.iter().map(|x| x[..n].to_vec()).collect::<Vec<_>>(),
                    r.value,
                    r.grad_norm,
                    r.placement
                );
                let grad = asymptotic_gradient(&r.config.q, n, eps, &cfg.potential, gs);
                rows.push(BalanceRow::new(
                    &r.config.q,
                    n,
                    &grad,
                    &balance_residual(&r.config, &cfg.potential, gs),
                ));
                fs::write(out.join(format!("critical_{eps}.json")), serde_json::to_string_pretty(&r)?)?;
            }
            Err(Error::HitBoundary) => {
                println!("ε = {eps}: the maximizer reaches the boundary of the admissible set");
                ok = false;
            }
            Err(e) => return Err(e),
        }
        // one-peak landscape along the first axis
        if cfg.peaks.k == 1 && n == 1 {
            let (lo, hi) = cfg.domain.shape.bounds();
            let mut w = csv::Writer::from_path(out.join(format!("landscape_{eps}.csv")))?;
            w.write_record(["xi", "energy"])?;
            for i in 0..=200 {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / 200.0;
                let e = asymptotic_energy(&[[x / eps, 0.0]], n, eps, &cfg.potential, gs);
                w.write_record([format!("{x:e}"), format!("{e:e}")])?;
            }
            w.flush()?;
        }
    }
    write_csv(&out.join("balance.csv"), &rows)?;
    Ok(ok)
}

fn solve(cfg: &RunConfig, eps: Option<f64>, cache: &GsCache, out: &Path) -> Result<bool> {
    fs::create_dir_all(out)?;
    let eps = eps.unwrap_or(cfg.problem.eps[0]);
    let n = cfg.problem.n;
    let fam = family(cfg, cache)?;
    let pot = &cfg.potential;
    let config = match cfg.xi()? {
        Some(xi) => PeakConfig::from_xi(n, eps, &xi, pot)?,
        None => {
            let opts = SearchOptions {
                seed: cfg.seed,
                ..Default::default()
            };
            find_critical_config(pot, fam.base(), eps, cfg.peaks.k, &region(cfg), Mode::Asymptotic, &opts)?.config
        }
    }
    .snapped(cfg.domain.h);
    let dom = Domain::new(cfg.domain.shape.clone(), eps, cfg.domain.h, cfg.domain.margin)?;
    let bundle = build_ansatz(&config, &fam, &dom, &CorrectionOptions::default())?;
    let norm = match cfg.norms.mu {
        Some(mu) => NormSpec::with_mu(n, cfg.problem.s, mu, config.q.clone())?,
        None => NormSpec::midpoint(n, cfg.problem.s, config.q.clone()),
    };
    let pr = ProjectedProblem::new(&bundle, pot, norm)?;
    let sol = pr.solve_nonlinear(&ReductionOptions::default())?;
    println!(
        "projected problem: ‖φ‖_* = {:.3e} in {} iterations, c = {:?}",
        sol.star_norm, sol.iterations, sol.c
    );
    let tol = 1e-9 * cfg.tolerances.scale;
    let pol = pr.polish(&bundle.u_sum.axpy(1.0, sol.phi()), tol, 40)?;
    let found: Vec<[f64; 2]> = detect_peaks(&pol.u).into_iter().map(|x| [eps * x[0], eps * x[1]]).collect();
    let start: Vec<[f64; 2]> = (0..config.k()).map(|i| config.xi(i)).collect();
    let pairs = assign_nearest(&found, &start);
    println!("newton: residual {:.3e} after {} steps", pol.residual, pol.iterations);
    for (i, a) in pairs.iter().enumerate() {
        match a {
            Some(j) => println!("  peak {i}: ξ = {:?} (ansatz {:?})", &found[*j][..n], &start[i][..n]),
            None => println!("  peak {i}: not found (ansatz {:?})", &start[i][..n]),
        }
    }
    let extra = serde_json::json!({ "eps": eps, "q": pol.q, "residual": pol.residual });
    write_field(&out.join("u.bin"), &pol.u, "u", extra)?;
    let summary = serde_json::json!({
        "eps": eps,
        "config": config,
        "multipliers": sol.c,
        "phi_star_norm": sol.star_norm,
        "residual": pol.residual,
        "newton_trace": pol.trace,
        "peaks": found,
    });
    fs::write(out.join("solve.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(pol.residual <= tol && found.len() == config.k())
}
