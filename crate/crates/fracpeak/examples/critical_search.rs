//! Finds a two-peak critical configuration of the reduced energy for a
//! double-well potential and compares exact and asymptotic energies there.
//!
//! cargo run --release --example critical_search

use fracpeak::energy::{
    balance_residual, find_critical_config, reduced_energy, ExactContext, Mode, Potential, Region, SearchOptions,
};
use fracpeak::gridcore::{Domain, Shape};
use fracpeak::groundstate::{GsCache, GsFamily};

fn main() -> fracpeak::Result<()> {
    let (n, s, p, h) = (1, 0.5, 3.0, 0.1);
    let shape = Shape::Box { lo: vec![-1.0], hi: vec![1.0] };
    let v = Potential::DoubleWell { v0: 1.0, a: 1.0, r0: 0.5 };
    let family = GsFamily::lattice(n, s, p, h, GsCache::from_env())?;
    let gs = family.base().clone();
    let region = Region::Xi { shape: shape.clone(), eta_min: 1.0 };

    for eps in [0.05, 0.025] {
        let r = find_critical_config(&v, &gs, eps, 2, &region, Mode::Asymptotic, &SearchOptions::default())?;
        let xi: Vec<f64> = r.xi.iter().map(|x| x[0]).collect();
        println!("eps = {eps}: ξ = {xi:.4?}, projected gradient {:.1e}", r.grad_norm);
        let cfg = r.config.snapped(h);
        let domain = Domain::new(shape.clone(), eps, h, 8)?;
        let ctx = ExactContext::new(&family, &domain);
        let e = reduced_energy(&cfg, &v, &gs, Mode::Exact(&ctx))?;
        println!(
            "  I exact {:.6}  asymptotic {:.6}  gap {:.2e}",
            e.exact.unwrap_or(f64::NAN),
            e.asymptotic_matched.unwrap_or(e.asymptotic),
            e.gap.unwrap_or(f64::NAN)
        );
        let bal = balance_residual(&cfg, &v, &gs);
        println!("  balance residual {:.2e}", bal.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    Ok(())
}
