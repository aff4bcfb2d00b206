use super::measure::{assign_nearest, detect_peaks, fit_exponent};
use super::{Basis, Check, ExperimentPlan, Runner, Verdict};
use crate::corrections::{build_ansatz, dist, interaction_model, interaction_quadrature, CorrectionOptions, PeakConfig};
use crate::energy::{
    asymptotic_gradient, balance_residual, find_critical_config, reduced_energy, reduced_gradient, write_csv, BalanceRow, ExactContext,
    GapRow, InteractionRow, Mode, Placement, Potential, Region, SearchOptions,
};
use crate::error::{Error, Result};
use crate::gridcore::{write_field, Domain, Field, Shape};
use crate::groundstate::{residual_rescaled, solve_cached, GroundState, GsFamily, GsOptions, Peak};
use crate::reduction::{multipliers_leading, solve_nonlinear_projected, NormSpec, ProjectedProblem, ReductionOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;

type Out<'a> = Option<&'a Path>;

fn ground_state(plan: &ExperimentPlan, runner: &Runner) -> Result<GroundState> {
    solve_cached(plan.n, plan.s, plan.p, &GsOptions::continuum(plan.n), runner.cache.as_ref())
}

/// Lattice profiles in 1D; the continuum radial profile otherwise.
fn family(plan: &ExperimentPlan, runner: &Runner) -> Result<GsFamily> {
    if plan.n == 1 {
        GsFamily::lattice(plan.n, plan.s, plan.p, plan.h, runner.cache.clone())
    } else {
        Ok(GsFamily::continuum(Arc::new(ground_state(plan, runner)?)))
    }
}

fn domain(plan: &ExperimentPlan, eps: f64) -> Result<Domain> {
    Domain::new(plan.domain.clone(), eps, plan.h, plan.margin)
}

fn norm(plan: &ExperimentPlan, q: Vec<[f64; 2]>) -> Result<NormSpec> {
    match plan.mu {
        Some(mu) => NormSpec::with_mu(plan.n, plan.s, mu, q),
        None => Ok(NormSpec::midpoint(plan.n, plan.s, q)),
    }
}

fn mu_of(plan: &ExperimentPlan) -> f64 {
    let n = plan.n as f64;
    plan.mu.unwrap_or(0.5 * (n / 2.0 + (n + 2.0 * plan.s) / 2.0))
}

fn sigma(plan: &ExperimentPlan) -> f64 {
    plan.n as f64 + 2.0 * plan.s
}

fn peak_xi(plan: &ExperimentPlan) -> Vec<[f64; 2]> {
    plan.xi.clone().unwrap_or_else(|| vec![[0.0, 0.0]])
}

/// `‖measured/expected − 1‖ ≤ tol·scale` around an exponent.
fn exponent_check(plan: &ExperimentPlan, name: &str, slope: f64, expected: f64, tol: f64) -> Check {
    Check::relative(name, slope, expected, tol * plan.tol_scale, Basis::Estimate)
}

fn write_columns(dir: Out, v: &mut Verdict, file: &str, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    let Some(d) = dir else { return Ok(()) };
    let mut w = csv::Writer::from_path(d.join(file))?;
    w.write_record(header)?;
    for i in 0..cols[0].len() {
        w.write_record(cols.iter().map(|c| format!("{:e}", c[i])))?;
    }
    w.flush()?;
    v.artifacts.push(format!("{}/{file}", v.scenario.name()));
    Ok(())
}

fn write_rows<T: serde::Serialize>(dir: Out, v: &mut Verdict, file: &str, rows: &[T]) -> Result<()> {
    let Some(d) = dir else { return Ok(()) };
    write_csv(&d.join(file), rows)?;
    v.artifacts.push(format!("{}/{file}", v.scenario.name()));
    Ok(())
}

fn sphere_area(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        2.0 * std::f64::consts::PI
    }
}

/// Ground-state certificate and the `w_λ` scaling laws.
pub(super) fn decay(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let gs = ground_state(plan, runner)?;
    let ts = plan.tol_scale;
    let sig = sigma(plan);
    v.checks.push(Check::at_most("residual", gs.residual, 1e-6 * ts, Basis::Oracle));
    v.checks.push(exponent_check(plan, "tail_slope", gs.tail.slope, -sig, 0.05));
    v.checks.push(Check::relative(
        "tail_prefactor_vs_equation",
        gs.tail.a_tail,
        gs.tail.a_predicted,
        1e-3 * ts,
        Basis::Identity,
    ));
    let c = gs.constants;
    let dc = gs.constant_changes;
    for (name, val, d) in [
        ("m2", c.m2, dc.m2),
        ("mp1", c.mp1, dc.mp1),
        ("ip", c.ip, dc.ip),
        ("alpha_z", c.alpha_z, dc.alpha_z),
        ("c0", c.c0, dc.c0),
    ] {
        v.checks.push(Check::at_most(
            format!("refinement_change_{name}"),
            d / val.abs(),
            1e-3 * ts,
            Basis::Oracle,
        ));
    }
    v.checks.push(Check::at_most("c0", c.c0, 0.0, Basis::Estimate));
    for lambda in [0.5, 2.0] {
        let r = residual_rescaled(&gs, lambda)?;
        v.checks.push(Check::at_most(
            format!("rescaled_residual_lambda_{lambda}"),
            r,
            2.0 * gs.residual * ts,
            Basis::Estimate,
        ));
        // radial trapezoid of ∫w_λ^{p+1} plus the tail law beyond r_cut
        let wl = gs.rescaled(lambda);
        let n = plan.n;
        let (h, r_cut) = (0.01, 400.0);
        let m = (r_cut / h) as usize;
        let f = |r: f64| wl.eval(r).powf(gs.p + 1.0) * r.powi(n as i32 - 1);
        let mut sum = 0.5 * f(0.0) + 0.5 * f(r_cut);
        for i in 1..m {
            sum += f(i as f64 * h);
        }
        let e = sig * (gs.p + 1.0) - n as f64;
        let tail = gs.a_tail_at(lambda).powf(gs.p + 1.0) * r_cut.powf(-e) / e;
        let quad = sphere_area(n) * (sum * h + tail);
        v.checks.push(Check::relative(
            format!("mp1_power_law_lambda_{lambda}"),
            quad,
            lambda.powf(gs.theta()) * c.mp1,
            5e-3 * ts,
            Basis::Estimate,
        ));
    }
    let r: Vec<f64> = (0..=200).map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / 200.0)).collect();
    let w: Vec<f64> = r.iter().map(|&x| gs.value(x)).collect();
    write_columns(dir, v, "profile.csv", &["r", "w"], &[&r, &w])?;
    v.series.insert("constants".into(), vec![c.m2, c.mp1, c.ip, c.alpha_z, c.c0, c.c_star]);
    Ok(())
}

/// `∫w_i^p w_ℓ` against the tail law.
pub(super) fn interaction(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let base = fam.base().clone();
    let spacing = [20.0, 40.0, 80.0];
    let mut rows = Vec::new();
    for &sp in &spacing {
        let a = Peak::new(base.clone(), [0.0, 0.0], 1.0)?;
        let b = Peak::new(base.clone(), [sp, 0.0], 1.0)?;
        let val = interaction_quadrature(&a, &b, plan.h, 300.0)?;
        let model = interaction_model(&base, 1.0, 1.0, sp);
        v.checks.push(Check::relative(
            format!("model_ratio_spacing_{sp}"),
            val,
            model,
            0.1 * plan.tol_scale,
            Basis::Estimate,
        ));
        rows.push(InteractionRow {
            spacing: sp,
            interaction: val,
            model,
        });
    }
    let vals: Vec<f64> = rows.iter().map(|r| r.interaction).collect();
    let fit = fit_exponent(&spacing, &vals);
    v.checks.push(exponent_check(plan, "decay_exponent", fit.slope, -sigma(plan), 0.05));
    v.series.insert("two_point_slopes".into(), fit.two_point);
    write_rows(dir, v, "interaction.csv", &rows)?;
    Ok(())
}

/// Boundary-correction sizes of one peak at the center against `ε` and
/// the boundary gap `d`.
pub(super) fn correction_scaling(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let pot = &plan.potential;
    let xi = peak_xi(plan);
    let (mut d, mut gap, mut lam, mut pi) = (vec![], vec![], vec![], vec![]);
    for &eps in &plan.eps {
        let dom = domain(plan, eps)?;
        let cfg = PeakConfig::from_xi(plan.n, eps, &xi[..1], pot)?.snapped(plan.h);
        let b = build_ansatz(&cfg, &fam, &dom, &CorrectionOptions::default())?;
        let c = &b.peaks[0].corr;
        let dd = cfg.boundary_gap(&dom);
        let q = cfg.q[0];
        let interior = dom.interior();
        let sup = |f: &dyn Fn(usize) -> f64| interior.iter().map(|&k| f(k)).fold(f64::NEG_INFINITY, f64::max);
        d.push(dd);
        gap.push(b.sup_gap());
        lam.push(sup(&|k| c.lam.values[k]));
        pi.push(sup(&|k| {
            if dist(dom.grid.coord(k), q) <= dd / 8.0 {
                c.pi.values[k]
            } else {
                0.0
            }
        }));
    }
    let sig = sigma(plan);
    let fg = fit_exponent(&plan.eps, &gap);
    v.checks.push(exponent_check(plan, "sup_gap_exponent_in_eps", fg.slope, sig, 0.15));
    let fl = fit_exponent(&d, &lam);
    v.checks.push(exponent_check(plan, "lambda_exponent_in_d", -fl.slope, sig * plan.p, 0.2));
    let fp = fit_exponent(&d, &pi);
    v.checks.push(exponent_check(
        plan,
        "pi_exponent_in_d",
        -fp.slope,
        plan.n as f64 + 4.0 * plan.s,
        0.2,
    ));
    v.series.insert("gap_two_point".into(), fg.two_point);
    v.series.insert("lambda_two_point".into(), fl.two_point.iter().map(|x| -x).collect());
    v.series.insert("pi_two_point".into(), fp.two_point.iter().map(|x| -x).collect());
    write_columns(
        dir,
        v,
        "corrections.csv",
        &["eps", "d", "sup_gap", "sup_lambda", "sup_pi_near_peak"],
        &[&plan.eps, &d, &gap, &lam, &pi],
    )?;
    Ok(())
}

/// Smooth exterior-zero field decaying like `ρ_q`.
fn random_field(dom: &Domain, q: &[[f64; 2]], mu: f64, rng: &mut ChaCha8Rng) -> Field {
    let (f1, f2, ph, c) = (
        rng.random_range(0.05..0.5),
        rng.random_range(0.05..0.5),
        rng.random_range(0.0..6.3),
        rng.random_range(-0.5..0.5),
    );
    let mut g = Field::from_fn(dom.grid, |x| {
        let y = x[0] - q[0][0];
        let rho: f64 = q.iter().map(|c| (1.0 + dist(x, *c)).powf(-mu)).sum();
        ((f1 * y + ph).sin() + 0.5 * (f2 * x[1]).cos() + c) * rho
    });
    dom.zero_exterior(&mut g);
    g
}

/// The projected linear and nonlinear problems.
pub(super) fn contraction(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let pot = &plan.potential;
    let xi = peak_xi(plan);
    let ts = plan.tol_scale;
    let mu = mu_of(plan);
    let mut ratios = Vec::new();
    let mut stability = Vec::new();
    let mut worst_orth = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    for (i, &eps) in plan.eps.iter().enumerate() {
        let dom = domain(plan, eps)?;
        let cfg = PeakConfig::from_xi(plan.n, eps, &xi, pot)?.snapped(plan.h);
        let b = build_ansatz(&cfg, &fam, &dom, &CorrectionOptions::default())?;
        let pr = ProjectedProblem::new(&b, pot, norm(plan, cfg.q.clone())?)?;
        let sol = pr.solve_nonlinear(&ReductionOptions::default())?;
        worst_orth = sol.orthogonality.iter().fold(worst_orth, |m, x| m.max(*x));
        ratios.push(sol.bound_ratio);
        // ‖T_q g‖_*/‖g‖_* over seeded forcings
        let mut c = 0.0f64;
        for _ in 0..5 {
            let g = random_field(&dom, &cfg.q, mu, &mut rng);
            let lin = pr.solve_linear(&g)?;
            worst_orth = lin.orthogonality.iter().fold(worst_orth, |m, x| m.max(*x));
            c = c.max(lin.star_norm / pr.star(&g));
        }
        stability.push(c);
        if i == plan.eps.len() / 2 {
            let radius = 2.0 * pr.tau();
            let mut worst = 0.0f64;
            for _ in 0..4 {
                let a = random_field(&dom, &cfg.q, mu, &mut rng);
                let e = random_field(&dom, &cfg.q, mu, &mut rng);
                let a = a.map(|t| t * radius / pr.star(&a));
                let e = e.map(|t| t * 0.5 * radius / pr.star(&e));
                worst = worst.max(pr.contraction_ratio(&a, &e)?);
            }
            v.checks.push(Check::at_most(
                format!("contraction_ratio_eps_{eps}"),
                worst,
                1.0,
                Basis::Estimate,
            ));
        }
    }
    v.checks.push(Check::at_most("orthogonality_defect", worst_orth, 1e-10 * ts, Basis::Identity));
    for (i, w) in stability.windows(2).enumerate() {
        v.checks.push(Check::relative(
            format!("linear_stability_eps_{}_vs_{}", plan.eps[i + 1], plan.eps[i]),
            w[1],
            w[0],
            0.5 * ts,
            Basis::Estimate,
        ));
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    v.checks.push(Check::at_most("phi_bound_ratio_spread", hi / lo, 1.0 + 0.5 * ts, Basis::Estimate));
    v.series.insert("phi_bound_ratio".into(), ratios.clone());
    v.series.insert("linear_stability".into(), stability.clone());
    write_columns(
        dir,
        v,
        "projected.csv",
        &["eps", "phi_bound_ratio", "linear_stability"],
        &[&plan.eps, &ratios, &stability],
    )?;
    Ok(())
}

/// `c_ij` against `−εγ_i∂_jV(ξ_i)`, and their size for constant `V`.
pub(super) fn multipliers(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let pot = &plan.potential;
    let xi = peak_xi(plan);
    let ts = plan.tol_scale;
    let mut computed = Vec::new();
    let mut predicted = Vec::new();
    for &eps in &plan.eps {
        let dom = domain(plan, eps)?;
        let cfg = PeakConfig::from_xi(plan.n, eps, &xi[..1], pot)?.snapped(plan.h);
        let b = build_ansatz(&cfg, &fam, &dom, &CorrectionOptions::default())?;
        let sol = solve_nonlinear_projected(&b, pot, &ReductionOptions::default())?;
        let t = multipliers_leading(&b, pot, &sol);
        v.checks.push(Check::at_least(format!("gamma_eps_{eps}"), t.gamma[0], 0.0, Basis::Estimate));
        let (c, p) = (sol.c[0][0], t.predicted[0][0]);
        if p != 0.0 {
            v.checks.push(Check::holds(
                format!("sign_matches_eps_{eps}"),
                c.signum() == p.signum(),
                Basis::Estimate,
            ));
            v.checks.push(Check::relative(format!("leading_order_eps_{eps}"), c, p, 0.2 * ts, Basis::Estimate));
        }
        computed.push(c);
        predicted.push(p);
    }
    if predicted.iter().all(|p| *p != 0.0) {
        for (i, w) in computed.windows(2).enumerate() {
            v.checks.push(Check::relative(
                format!("linear_in_eps_{}_vs_{}", plan.eps[i], plan.eps[i + 1]),
                w[0] / w[1],
                plan.eps[i] / plan.eps[i + 1],
                0.2 * ts,
                Basis::Estimate,
            ));
        }
    }
    // constant V at the same λ
    let flat = Potential::Constant {
        v0: pot.value(&xi[0][..plan.n]),
    };
    let mut flat_c = Vec::new();
    for &eps in &plan.eps {
        let dom = domain(plan, eps)?;
        let cfg = PeakConfig::from_xi(plan.n, eps, &xi[..1], &flat)?.snapped(plan.h);
        let b = build_ansatz(&cfg, &fam, &dom, &CorrectionOptions::default())?;
        let sol = solve_nonlinear_projected(&b, &flat, &ReductionOptions::default())?;
        let m = sol.max_multiplier();
        v.checks.push(Check::at_most(
            format!("constant_v_envelope_eps_{eps}"),
            m,
            eps.powf(1.4) * ts,
            Basis::Estimate,
        ));
        flat_c.push(m);
    }
    write_columns(
        dir,
        v,
        "multipliers.csv",
        &["eps", "computed", "predicted", "constant_v"],
        &[&plan.eps, &computed, &predicted, &flat_c],
    )?;
    Ok(())
}

/// Exact against asymptotic reduced energy, and the asymptotic gradient.
pub(super) fn energy_expansion(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let gs = fam.base().clone();
    let pot = &plan.potential;
    let xi = peak_xi(plan);
    let mut rows = Vec::new();
    for &eps in &plan.eps {
        let dom = domain(plan, eps)?;
        let ctx = ExactContext::new(&fam, &dom);
        let cfg = PeakConfig::from_xi(plan.n, eps, &xi, pot)?.snapped(plan.h);
        let r = reduced_energy(&cfg, pot, &gs, Mode::Exact(&ctx))?;
        let (exact, matched) = (r.exact.unwrap_or(f64::NAN), r.asymptotic_matched.unwrap_or(f64::NAN));
        rows.push(GapRow {
            eps,
            i_exact: exact,
            i_asym: matched,
            gap: r.gap.unwrap_or(f64::NAN),
        });
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    v.checks.push(Check::holds(
        "gap_decreases_with_eps",
        gaps.windows(2).all(|w| w[1] < w[0]),
        Basis::Estimate,
    ));
    if gaps.len() >= 2 && gaps.iter().all(|g| *g > 0.0) {
        let f = fit_exponent(&plan.eps, &gaps);
        v.series.insert("gap_exponent".into(), vec![f.slope]);
        v.series.insert("gap_two_point".into(), f.two_point);
    }
    v.series.insert("gap".into(), gaps);
    write_rows(dir, v, "gap.csv", &rows)?;
    // closed-form gradient against a five-point stencil
    let eps = *plan.eps.last().expect("validated");
    let q0 = xi[0][0] / eps;
    let cases = [vec![[q0, 0.0]], vec![[q0 - 3.0, 0.0], [q0 + 4.0, 0.0]], vec![
        [q0 - 6.0, 0.0],
        [q0, 0.0],
        [q0 + 6.0, 0.0],
    ]];
    let mut worst = 0.0f64;
    for q in cases {
        let cfg = PeakConfig::new(plan.n, eps, q, pot)?;
        let g = reduced_gradient(&cfg, pot, &gs, Mode::Asymptotic, plan.h, None)?;
        let cf = g.closed_form.unwrap_or_default();
        let scale = cf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale > 0.0 {
            for (a, b) in cf.iter().zip(&g.finite_difference) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    v.checks.push(Check::at_most(
        "gradient_vs_differences",
        worst,
        1e-6 * plan.tol_scale,
        Basis::Oracle,
    ));
    Ok(())
}

/// Nearest closed-form critical point of `V` to each found location.
fn nearest_critical(pot: &Potential, n: usize, xi: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let crit = pot.critical_points(n);
    xi.iter()
        .map(|x| {
            crit.iter()
                .copied()
                .min_by(|a, b| dist(*a, *x).total_cmp(&dist(*b, *x)))
                .unwrap_or(*x)
        })
        .collect()
}

/// Evenly spaced points along the first axis of the bounding box.
fn spread(shape: &Shape, k: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = shape.bounds();
    let mid = if lo.len() > 1 { 0.5 * (lo[1] + hi[1]) } else { 0.0 };
    (0..k)
        .map(|i| [lo[0] + (hi[0] - lo[0]) * (i + 1) as f64 / (k + 1) as f64, mid])
        .collect()
}

/// Existence: critical configuration, projected solve, Newton on the
/// full problem, and the peaks of the result.
pub(super) fn thm1(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let gs = fam.base().clone();
    let pot = &plan.potential;
    let n = plan.n;
    let positional = !pot.critical_points(n).is_empty();
    if !positional {
        v.notes.push("constant potential: no preferred location, only the drift from the ansatz is recorded".into());
    }
    let mut distances = Vec::new();
    let mut residuals = Vec::new();
    for (idx, &eps) in plan.eps.iter().enumerate() {
        let dom = domain(plan, eps)?;
        let (cfg, target) = if positional {
            let region = Region::Xi {
                shape: plan.domain.clone(),
                eta_min: plan.eta_min,
            };
            let opts = SearchOptions {
                seed: plan.seed,
                ..Default::default()
            };
            let r = find_critical_config(pot, &gs, eps, plan.k, &region, Mode::Asymptotic, &opts)?;
            let target = nearest_critical(pot, n, &r.xi);
            (r.config, target)
        } else {
            let xi = plan.xi.clone().unwrap_or_else(|| spread(&plan.domain, plan.k));
            (PeakConfig::from_xi(n, eps, &xi, pot)?, xi)
        };
        let cfg = cfg.snapped(plan.h);
        let b = build_ansatz(&cfg, &fam, &dom, &CorrectionOptions::default())?;
        let pr = ProjectedProblem::new(&b, pot, norm(plan, cfg.q.clone())?)?;
        let sol = pr.solve_nonlinear(&ReductionOptions::default())?;
        v.series.insert(format!("c_eps_{eps}"), sol.c.iter().flatten().copied().collect());
        let tol = 1e-9 * plan.tol_scale;
        let pol = match pr.polish(&b.u_sum.axpy(1.0, sol.phi()), tol, 40) {
            Ok(p) => p,
            Err(e @ (Error::NewtonDiverged { .. } | Error::NoConvergence { .. })) => {
                v.notes.push(format!("ε = {eps}: {e}"));
                v.checks.push(Check::holds(format!("newton_converges_eps_{eps}"), false, Basis::Oracle));
                continue;
            }
            Err(e) => return Err(e),
        };
        residuals.push(pol.residual);
        v.checks.push(Check::at_most(format!("residual_eps_{eps}"), pol.residual, tol, Basis::Oracle));
        v.series.insert(format!("newton_trace_eps_{eps}"), pol.trace.clone());
        let found: Vec<[f64; 2]> = detect_peaks(&pol.u)
            .into_iter()
            .map(|x| [eps * x[0], eps * x[1]])
            .collect();
        v.series.insert(format!("peaks_eps_{eps}"), found.iter().flat_map(|x| x[..n].to_vec()).collect());
        if let Some(d) = dir {
            let name = format!("u_{idx}.bin");
            let extra = serde_json::json!({ "eps": eps, "q": pol.q, "residual": pol.residual });
            write_field(&d.join(&name), &pol.u, "u", extra)?;
            v.artifacts.push(format!("{}/{name}", v.scenario.name()));
            v.artifacts.push(format!("{}/u_{idx}.json", v.scenario.name()));
        }
        let assigned = assign_nearest(&found, &target);
        let worst = assigned
            .iter()
            .zip(&target)
            .map(|(a, t)| a.map_or(f64::INFINITY, |j| dist(found[j], *t)))
            .fold(0.0f64, f64::max);
        if positional {
            v.checks.push(Check::new(
                format!("peak_count_eps_{eps}"),
                found.len() as f64,
                plan.k as f64,
                plan.k as f64,
                plan.k as f64,
                Basis::Estimate,
            ));
            let margin = found
                .iter()
                .map(|x| plan.domain.boundary_distance(&x[..n]))
                .fold(f64::INFINITY, f64::min);
            v.checks.push(Check::at_least(
                format!("boundary_margin_eps_{eps}"),
                margin,
                plan.delta_star(),
                Basis::Estimate,
            ));
            v.checks.push(Check::at_most(
                format!("distance_to_critical_point_eps_{eps}"),
                worst,
                2.0 * eps * plan.tol_scale,
                Basis::Estimate,
            ));
        } else {
            v.notes.push(format!("ε = {eps}: drift from the ansatz centers {worst:.4e}"));
        }
        distances.push(worst);
    }
    if positional && distances.len() == plan.eps.len() {
        v.checks.push(Check::holds(
            "distance_decreases_with_eps",
            distances.windows(2).all(|w| w[1] < w[0]),
            Basis::Estimate,
        ));
    }
    v.series.insert("distance".into(), distances);
    v.series.insert("residual".into(), residuals);
    Ok(())
}

/// The center and `sup` of `V` over the ball `K` and over its boundary.
fn ball_extremes(pot: &Potential, n: usize, center: [f64; 2], radius: f64) -> ([f64; 2], f64, f64) {
    let m = 400;
    let mut best = (center, pot.value(&center[..n]));
    let mut on_boundary = f64::NEG_INFINITY;
    if n == 1 {
        for i in 0..=m {
            let x = [center[0] - radius + 2.0 * radius * i as f64 / m as f64, 0.0];
            let val = pot.value(&x[..1]);
            if val > best.1 {
                best = (x, val);
            }
        }
        for x in [center[0] - radius, center[0] + radius] {
            on_boundary = on_boundary.max(pot.value(&[x]));
        }
    } else {
        for i in 0..=m {
            for j in 0..=m {
                let x = [
                    center[0] - radius + 2.0 * radius * i as f64 / m as f64,
                    center[1] - radius + 2.0 * radius * j as f64 / m as f64,
                ];
                if dist(x, center) <= radius {
                    let val = pot.value(&x);
                    if val > best.1 {
                        best = (x, val);
                    }
                }
            }
            let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            on_boundary = on_boundary.max(pot.value(&[center[0] + radius * t.cos(), center[1] + radius * t.sin()]));
        }
    }
    for c in pot.critical_points(n) {
        if dist(c, center) <= radius && pot.value(&c[..n]) > best.1 {
            best = (c, pot.value(&c[..n]));
        }
    }
    (best.0, best.1, on_boundary)
}

/// Clustering at a strict local maximum.
pub(super) fn thm3(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let gs = fam.base().clone();
    let pot = &plan.potential;
    let n = plan.n;
    let sig = sigma(plan);
    let center = plan.xi.as_ref().map_or([0.0, 0.0], |x| x[0]);
    let (top, sup_k, sup_dk) = ball_extremes(pot, n, center, plan.cluster_radius);
    v.series.insert("sup_k_sup_boundary".into(), vec![sup_k, sup_dk]);
    let hypothesis = sup_k > sup_dk;
    if !hypothesis {
        v.notes.push(format!(
            "hypothesis violated: sup_K V = {sup_k} is not above sup_∂K V = {sup_dk}; positions are recorded only"
        ));
    }
    let alpha = plan.alpha;
    let mu = mu_of(plan);
    let beta = alpha * (1.0 + plan.p.min(2.0).min(2.0 * (sig - mu) / sig)) / 2.0;
    v.series.insert("alpha_beta".into(), vec![alpha, beta]);
    let region = Region::Cluster {
        center,
        radius: plan.cluster_radius,
        alpha,
    };
    let opts = SearchOptions {
        seed: plan.seed,
        ..Default::default()
    };
    let mut spacings = Vec::new();
    let mut rows = Vec::new();
    for &eps in &plan.eps {
        let r = match find_critical_config(pot, &gs, eps, plan.k, &region, Mode::Asymptotic, &opts) {
            Ok(r) => r,
            Err(Error::HitBoundary) => {
                v.notes.push(format!("ε = {eps}: the maximizer lies on the boundary of A"));
                if hypothesis {
                    v.checks.push(Check::holds(format!("interior_eps_{eps}"), false, Basis::Estimate));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut spacing = f64::INFINITY;
        for i in 0..r.xi.len() {
            for l in i + 1..r.xi.len() {
                spacing = spacing.min(dist(r.xi[i], r.xi[l]));
            }
        }
        let spread = r.xi.iter().map(|x| dist(*x, top)).fold(0.0f64, f64::max);
        v.series.insert(format!("xi_eps_{eps}"), r.xi.iter().flat_map(|x| x[..n].to_vec()).collect());
        spacings.push(spacing);
        let grad = asymptotic_gradient(&r.config.q, n, eps, pot, &gs);
        rows.push(BalanceRow::new(&r.config.q, n, &grad, &balance_residual(&r.config, pot, &gs)));
        if !hypothesis {
            continue;
        }
        v.checks.push(Check::holds(
            format!("interior_eps_{eps}"),
            r.placement == Placement::Interior,
            Basis::Estimate,
        ));
        v.checks.push(Check::at_least(
            format!("spacing_above_floor_eps_{eps}"),
            spacing,
            eps.powf(1.0 - alpha / sig),
            Basis::Estimate,
        ));
        v.checks.push(Check::at_most(
            format!("inside_beta_ball_eps_{eps}"),
            spread,
            2.0 * eps.powf(1.0 - beta / sig) * plan.tol_scale,
            Basis::Estimate,
        ));
    }
    if hypothesis && spacings.len() >= 2 {
        v.checks.push(Check::holds(
            "spacing_shrinks_with_eps",
            spacings.windows(2).all(|w| w[1] < w[0]),
            Basis::Estimate,
        ));
    }
    if !hypothesis {
        v.checks.push(Check::holds("hypothesis_gate_recorded", true, Basis::Identity));
    }
    v.series.insert("spacing".into(), spacings);
    write_rows(dir, v, "maximizers.csv", &rows)?;
    Ok(())
}

/// The maximum obtained by reflecting a quadratic minimum (or the
/// potential itself when it has no extremum).
pub fn mirrored(pot: &Potential, shape: &Shape) -> Option<Potential> {
    match *pot {
        Potential::Quadratic { v0, a, center } if a > 0.0 => {
            let (lo, hi) = shape.bounds();
            let r2: f64 = (0..lo.len())
                .map(|j| (lo[j] - center[j]).abs().max((hi[j] - center[j]).abs()).powi(2))
                .sum();
            Some(Potential::Quadratic {
                v0: v0 + a * r2,
                a: -a,
                center,
            })
        }
        _ => None,
    }
}

/// Radial component of the balance residual of the outer peak over
/// spacings `lo·(hi/lo)^{t}`, `t ∈ [0, 1]`.
fn radial_scan(
    plan: &ExperimentPlan,
    pot: &Potential,
    gs: &GroundState,
    eps: f64,
    center: [f64; 2],
    spacing: &[f64],
) -> Result<(Vec<f64>, Vec<BalanceRow>)> {
    let n = plan.n;
    let mut vals = Vec::new();
    let mut rows = Vec::new();
    for &d in spacing {
        let xi = [[center[0] - d / 2.0, center[1]], [center[0] + d / 2.0, center[1]]];
        let cfg = PeakConfig::from_xi(n, eps, &xi, pot)?;
        let b = balance_residual(&cfg, pot, gs);
        vals.push(b[n]);
        let grad = asymptotic_gradient(&cfg.q, n, eps, pot, gs);
        rows.push(BalanceRow::new(&cfg.q, n, &grad, &b));
    }
    Ok((vals, rows))
}

fn sign_changes(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

/// Non-existence of a symmetric pair at a nondegenerate minimum.
pub(super) fn thm4(plan: &ExperimentPlan, runner: &Runner, dir: Out, v: &mut Verdict) -> Result<()> {
    let fam = family(plan, runner)?;
    let gs = fam.base().clone();
    let pot = &plan.potential;
    let n = plan.n;
    if plan.k != 2 {
        return Err(Error::ConfigInvalid {
            field: "k".into(),
            message: "the balance scan uses symmetric pairs (k = 2)".into(),
        });
    }
    let center = pot.critical_points(n).first().copied().unwrap_or([0.0, 0.0]);
    for &eps in &plan.eps {
        let lo = eps * (1.0 / eps).ln();
        let hi = plan.spacing_max;
        if !(hi > lo) {
            return Err(Error::ConfigInvalid {
                field: "spacing_max".into(),
                message: format!("scan range [{lo}, {hi}] is empty"),
            });
        }
        let spacing: Vec<f64> = (0..40).map(|i| lo * (hi / lo).powf(i as f64 / 39.0)).collect();
        v.notes.push(format!("ε = {eps}: spacings in Ω scanned over [{lo:.4}, {hi:.4}], 40 log points"));
        let (vals, rows) = radial_scan(plan, pot, &gs, eps, center, &spacing)?;
        let one_signed = vals.iter().all(|x| *x < 0.0) || vals.iter().all(|x| *x > 0.0);
        v.checks.push(Check::holds(format!("one_signed_eps_{eps}"), one_signed, Basis::Estimate));
        v.checks.push(Check::new(
            format!("sign_changes_eps_{eps}"),
            sign_changes(&vals) as f64,
            0.0,
            0.0,
            0.0,
            Basis::Estimate,
        ));
        v.series.insert(format!("spacing_eps_{eps}"), spacing.clone());
        v.series.insert(format!("radial_balance_eps_{eps}"), vals);
        write_rows(dir, v, &format!("balance_min_{eps}.csv"), &rows)?;
        let Some(mirror) = mirrored(pot, &plan.domain) else {
            v.notes.push("no mirrored maximum for this potential".into());
            continue;
        };
        let (mv, mrows) = radial_scan(plan, &mirror, &gs, eps, center, &spacing)?;
        let crossings = sign_changes(&mv);
        v.checks.push(Check::new(
            format!("mirrored_sign_changes_eps_{eps}"),
            crossings as f64,
            1.0,
            1.0,
            1.0,
            Basis::Estimate,
        ));
        if let Some(i) = mv.windows(2).position(|w| w[0].signum() != w[1].signum()) {
            // bisection for the equilibrium spacing
            let f = |d: f64| radial_scan(plan, &mirror, &gs, eps, center, &[d]).map(|r| r.0[0]);
            let (mut a, mut b) = (spacing[i], spacing[i + 1]);
            let fa = f(a)?;
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if f(m)?.signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let root = 0.5 * (a + b);
            v.series.insert(format!("mirrored_equilibrium_spacing_eps_{eps}"), vec![root]);
            v.checks.push(Check::new(
                format!("mirrored_root_in_bracket_eps_{eps}"),
                root,
                root,
                spacing[i],
                spacing[i + 1],
                Basis::Oracle,
            ));
        }
        v.series.insert(format!("mirrored_radial_balance_eps_{eps}"), mv);
        write_rows(dir, v, &format!("balance_max_{eps}.csv"), &mrows)?;
    }
    Ok(())
}
