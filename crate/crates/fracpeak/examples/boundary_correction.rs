//! Builds the Dirichlet-corrected ansatz for one peak at a fixed point of
//! Ω = (−1, 1) and shows how far the correction moves it as ε shrinks.
//!
//! cargo run --release --example boundary_correction

use fracpeak::corrections::{build_ansatz, CorrectionOptions, PeakConfig};
use fracpeak::energy::Potential;
use fracpeak::gridcore::{Domain, Shape};
use fracpeak::groundstate::{GsCache, GsFamily};

fn main() -> fracpeak::Result<()> {
    let (n, s, p, h) = (1, 0.5, 3.0, 0.1);
    let shape = Shape::Box { lo: vec![-1.0], hi: vec![1.0] };
    let v = Potential::Quadratic { v0: 1.0, a: 0.5, center: [0.0, 0.0] };
    let family = GsFamily::lattice(n, s, p, h, GsCache::from_env())?;

    println!("{:>7} {:>12} {:>14} {:>12}", "eps", "sup|u-w|", "decomposition", "dropped");
    for eps in [0.1, 0.05, 0.025] {
        let domain = Domain::new(shape.clone(), eps, h, 8)?;
        let cfg = PeakConfig::from_xi(n, eps, &[[0.3, 0.0]], &v)?.snapped(h);
        let b = build_ansatz(&cfg, &family, &domain, &CorrectionOptions::default())?;
        let dropped = b.peaks.iter().map(|pp| pp.corr.tail_dropped).fold(0.0, f64::max);
        println!(
            "{eps:>7} {:>12.4e} {:>14.2e} {:>12.2e}",
            b.sup_gap(),
            b.decomposition_defect(),
            dropped
        );
    }
    Ok(())
}
