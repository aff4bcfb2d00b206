//! Solves the projected problem for a non-critical single peak, compares the
//! multipliers with their leading-order law, then removes them by Newton.
//!
//! cargo run --release --example projected_solve

use fracpeak::corrections::{build_ansatz, CorrectionOptions, PeakConfig};
use fracpeak::energy::Potential;
use fracpeak::gridcore::{Domain, Shape};
use fracpeak::groundstate::{GsCache, GsFamily};
use fracpeak::reduction::{multipliers_leading, NormSpec, ProjectedProblem, ReductionOptions};

fn main() -> fracpeak::Result<()> {
    let (n, s, p, h, eps) = (1, 0.5, 3.0, 0.1, 0.05);
    let shape = Shape::Box { lo: vec![-1.0], hi: vec![1.0] };
    let v = Potential::Quadratic { v0: 1.0, a: 0.5, center: [0.0, 0.0] };
    let family = GsFamily::lattice(n, s, p, h, GsCache::from_env())?;
    let domain = Domain::new(shape, eps, h, 8)?;
    let cfg = PeakConfig::from_xi(n, eps, &[[0.3, 0.0]], &v)?.snapped(h);
    let b = build_ansatz(&cfg, &family, &domain, &CorrectionOptions::default())?;

    let pr = ProjectedProblem::new(&b, &v, NormSpec::midpoint(n, s, cfg.q.clone()))?;
    let sol = pr.solve_nonlinear(&ReductionOptions::default())?;
    println!("fixed point: {} iterations, ‖φ‖_* = {:.3e}", sol.iterations, sol.star_norm);
    println!("orthogonality defects {:?}", sol.orthogonality);
    let m = multipliers_leading(&b, &v, &sol);
    println!("c computed  {:?}", m.computed[0]);
    println!("c predicted {:?}", m.predicted[0]);

    let pol = pr.polish(&b.u_sum.axpy(1.0, sol.phi()), 1e-9, 40)?;
    println!(
        "Newton: {} steps, residual {:.2e}, peak moved to ξ = {:.4}",
        pol.iterations,
        pol.residual,
        eps * pol.q[0][0]
    );
    Ok(())
}
