//! Computes the ground state of (−Δ)^s w + w = w^p and prints its
//! certificate and integral constants.
//!
//! cargo run --release --example ground_state -- [n] [s] [p]

use fracpeak::groundstate::{solve_cached, GsCache, GsOptions};

fn main() -> fracpeak::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).map_or(d, String::as_str).to_string();
    let n: usize = arg(0, "1").parse().expect("n");
    let s: f64 = arg(1, "0.5").parse().expect("s");
    let p: f64 = arg(2, "3").parse().expect("p");

    let cache = GsCache::from_env();
    let gs = solve_cached(n, s, p, &GsOptions::continuum(n), cache.as_ref())?;
    println!("n={n} s={s} p={p}");
    println!("residual        {:.3e}", gs.residual);
    println!("tail slope      {:.5} (expected {})", gs.tail.slope, -(n as f64 + 2.0 * s));
    println!("tail prefactor  {:.6} (from the equation {:.6})", gs.tail.a_tail, gs.tail.a_predicted);
    let c = &gs.constants;
    for (name, v, dv) in [
        ("int w^2", c.m2, gs.constant_changes.m2),
        ("int w^(p+1)", c.mp1, gs.constant_changes.mp1),
        ("int w^p", c.ip, gs.constant_changes.ip),
        ("alpha_z", c.alpha_z, gs.constant_changes.alpha_z),
        ("c0", c.c0, gs.constant_changes.c0),
        ("c*", c.c_star, gs.constant_changes.c_star),
    ] {
        println!("{name:<15} {v:>12.6}   refinement change {dv:.1e}");
    }
    Ok(())
}
