use fracpeak::gridcore::{Grid, Symbol};
use fracpeak::groundstate::{
    check_exponents, residual_rescaled, sample_peak, solve_cached, solve_ground_state, z_kernel, GroundState, GsCache,
    GsFamily, GsOptions, Peak,
};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock};

static CUBIC: LazyLock<Arc<GroundState>> =
    LazyLock::new(|| Arc::new(solve_ground_state(1, 0.5, 3.0, &GsOptions::continuum(1)).unwrap()));

static QUADRATIC: LazyLock<GroundState> =
    LazyLock::new(|| solve_ground_state(1, 0.5, 2.0, &GsOptions::continuum(1)).unwrap());

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// For s = 1/2, p = 2 in 1D the ground state is 2/(1+x²).
#[test]
fn quadratic_1d_matches_closed_form() {
    let gs = &*QUADRATIC;
    let worst = (0..=5000)
        .map(|i| {
            let r = i as f64 * 0.04;
            (gs.value(r) - 2.0 / (1.0 + r * r)).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "sup error {worst:e}");
    let c = gs.constants;
    assert!(rel(c.m2, 2.0 * PI) < 1e-6);
    assert!(rel(c.ip, 2.0 * PI) < 1e-6);
    assert!(rel(c.mp1, 3.0 * PI) < 1e-6);
    assert!(rel(c.alpha_z, PI) < 1e-6);
    assert!(rel(c.c0, -PI) < 1e-6);
    assert!(rel(c.c_star, PI / 2.0) < 1e-6);
    assert!(rel(gs.tail.a_tail, 2.0) < 1e-4, "A = {}", gs.tail.a_tail);
}

#[test]
fn cubic_1d_is_certified() {
    let gs = &*CUBIC;
    assert!(gs.residual <= 1e-6, "residual {:e}", gs.residual);
    assert!((gs.tail.slope + 2.0).abs() <= 0.1, "slope {}", gs.tail.slope);
    let c = gs.constants;
    assert!(c.c0 < 0.0);
    assert!(c.alpha_z > 0.0);
    // Nehari identity and the Pohozaev-type relation c0 = −m2/2
    assert!(rel(c.kinetic + c.m2, c.mp1) < 1e-6);
    assert!(rel(c.c0, -0.5 * c.m2) < 1e-8);
    // tail prefactor agrees with c_{1,1/2}·∫w^p = ∫w^p/π
    assert!(rel(gs.tail.a_tail, c.ip / PI) < 1e-4);
    for (v, dv) in [
        (c.m2, gs.constant_changes.m2),
        (c.mp1, gs.constant_changes.mp1),
        (c.ip, gs.constant_changes.ip),
        (c.alpha_z, gs.constant_changes.alpha_z),
        (c.c0, gs.constant_changes.c0),
    ] {
        assert!(dv / v.abs() < 1e-3);
    }
    // positive and radially non-increasing
    let mut prev = f64::INFINITY;
    for i in 0..4000 {
        let w = gs.value(i as f64 * 0.07);
        assert!(w > 0.0 && w <= prev);
        prev = w;
    }
}

#[test]
fn cubic_1d_refinement_keeps_constants() {
    let mut o = GsOptions::continuum(1);
    o.h /= 2.0;
    o.n_box *= 2;
    o.n_flow *= 2;
    let fine = solve_ground_state(1, 0.5, 3.0, &o).unwrap();
    let (a, b) = (CUBIC.constants, fine.constants);
    for (x, y) in [(a.m2, b.m2), (a.mp1, b.mp1), (a.ip, b.ip), (a.alpha_z, b.alpha_z), (a.c0, b.c0)] {
        assert!(rel(x, y) < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn random_starts_reach_the_same_profile() {
    let mut o = GsOptions::lattice(1, 0.25);
    o.probes = 3;
    o.seed = 11;
    let gs = solve_ground_state(1, 0.5, 3.0, &o).unwrap();
    assert!(gs.uniqueness_spread.unwrap() < 1e-6);
}

#[test]
fn exponent_checks() {
    assert!(check_exponents(1, 0.5, 3.0).is_ok());
    assert!(check_exponents(2, 0.5, 2.0).is_ok());
    assert!(check_exponents(2, 0.5, 3.0).is_err());
    assert!(check_exponents(1, 1.2, 3.0).is_err());
    assert!(check_exponents(1, 0.5, 1.0).is_err());
    let mut o = GsOptions::continuum(1);
    o.r_max = 0.5 * o.box_length();
    assert!(solve_ground_state(1, 0.5, 3.0, &o).is_err());
    assert!(solve_ground_state(2, 0.5, 2.0, &GsOptions::lattice(2, 0.25)).is_err());
}

#[test]
fn rescaling_identities() {
    let gs = &*CUBIC;
    let w1 = gs.rescaled(1.0);
    for r in [0.0, 0.3, 2.0, 50.0, 400.0] {
        assert_eq!(w1.eval(r), gs.value(r));
    }
    let w2 = gs.rescaled(2.0);
    assert!(rel(w2.eval(0.0), 2f64.sqrt() * gs.value(0.0)) < 1e-15);
    let base = gs.residual;
    for lambda in [0.5, 2.0] {
        let r = residual_rescaled(gs, lambda).unwrap();
        assert!(r <= 2.0 * base, "λ = {lambda}: {r:e} vs {base:e}");
    }
}

#[test]
fn rescaled_constants_follow_power_laws() {
    let gs = &*CUBIC;
    for lambda in [0.5, 2.0] {
        let wl = gs.rescaled(lambda);
        // trapezoid sum on a fine uniform grid plus the tail law beyond 400
        let h = 0.01;
        let r_cut = 400.0;
        let m = (r_cut / h) as usize;
        let mut sum = 0.5 * wl.eval(0.0).powi(4);
        for i in 1..m {
            sum += wl.eval(i as f64 * h).powi(4);
        }
        let tail_amp = gs.a_tail_at(lambda);
        let quad = 2.0 * (sum * h + tail_amp.powi(4) * r_cut.powi(-7) / 7.0);
        let c = gs.constants_at(lambda);
        assert!(rel(quad, c.mp1) < 5e-3, "λ = {lambda}: {quad} vs {}", c.mp1);
        assert!(rel(c.mp1, lambda.powf(gs.theta()) * gs.constants.mp1) < 1e-14);
    }
}

#[test]
fn peak_sampling() {
    let gs = CUBIC.clone();
    let lambda = 1.7;
    let peak = Peak::new(gs.clone(), [3.0, 0.0], lambda).unwrap();
    let grid = Grid::new(1, [4001, 1], [-1000, 0], 0.5);
    let f = sample_peak(&peak, &grid).unwrap();
    let center = grid.locate([6, 0]).unwrap();
    assert!(rel(f.values[center], lambda.sqrt() * gs.value(0.0)) < 1e-14);
    let amp = gs.a_tail_at(lambda);
    for d in [100.0, 300.0] {
        let x = 3.0 + d;
        let k = grid.locate([(x / 0.5) as i64, 0]).unwrap();
        assert!(rel(f.values[k] * d * d, amp) < 0.05);
    }
    let fine = Grid::new(1, [8001, 1], [-2000, 0], 0.25);
    let g = sample_peak(&peak, &fine).unwrap();
    for i in (0..4001).step_by(37) {
        let m = grid.lattice(i);
        let j = fine.locate([2 * m[0], 0]).unwrap();
        assert!((f.values[i] - g.values[j]).abs() <= 1e-8);
    }
    assert!(Peak::new(gs, [0.0, 0.0], 0.0).is_err());
}

#[test]
fn z_kernel_in_1d() {
    let gs = CUBIC.clone();
    let lambda = 1.3;
    let peak = Peak::new(gs.clone(), [0.0, 0.0], lambda).unwrap();
    let h = 0.02;
    let grid = Grid::new(1, [40001, 1], [-20000, 0], h);
    let z = z_kernel(&peak, 0, &grid).unwrap();
    assert_eq!(z.values[grid.locate([0, 0]).unwrap()], 0.0);
    // ∫Z² against the scaled constant; the tail beyond 400 is negligible
    let alpha = gs.constants_at(lambda).alpha_z;
    let quad = z.values.iter().map(|v| v * v).sum::<f64>() * h;
    assert!(rel(quad, alpha) < 1e-2, "{quad} vs {alpha}");
    // odd symmetry
    for i in [1, 17, 500, 15000] {
        let a = z.values[grid.locate([i, 0]).unwrap()];
        let b = z.values[grid.locate([-i, 0]).unwrap()];
        assert!((a + b).abs() <= 1e-15 * a.abs().max(1.0));
    }
}

#[test]
fn z_gram_off_diagonal_decay() {
    // ∫Z_1 Z_2 for two unit peaks at distance η decays at least like
    // η^{-(n+2s+1)}; the odd symmetry of Z cancels one more power.
    let gs = CUBIC.clone();
    let h = 0.05;
    let grid = Grid::new(1, [80001, 1], [-40000, 0], h);
    let mut pts = Vec::new();
    for eta in [20.0, 40.0, 80.0] {
        let z1 = z_kernel(&Peak::new(gs.clone(), [-eta / 2.0, 0.0], 1.0).unwrap(), 0, &grid).unwrap();
        let z2 = z_kernel(&Peak::new(gs.clone(), [eta / 2.0, 0.0], 1.0).unwrap(), 0, &grid).unwrap();
        let g: f64 = z1.values.iter().zip(&z2.values).map(|(a, b)| a * b).sum::<f64>() * h;
        pts.push((eta, g.abs()));
    }
    let slope = fracpeak::groundstate::loglog_slope(&pts);
    assert!(-slope >= 0.9 * 3.0, "decay exponent {}", -slope);
}

#[test]
fn cache_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = GsCache::new(dir.path());
    assert!(cache.list().unwrap().is_empty());
    let o = GsOptions::lattice(1, 0.25);
    let a = solve_cached(1, 0.5, 3.0, &o, Some(&cache)).unwrap();
    let entries = cache.list().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!((entries[0].n, entries[0].s, entries[0].p), (1, 0.5, 3.0));
    assert_eq!(entries[0].symbol, Symbol::Lattice);
    let b = cache.load(1, 0.5, 3.0, &o).unwrap().unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.profile, b.profile);
    assert_eq!(cache.clear().unwrap(), 1);
    assert!(cache.list().unwrap().is_empty());
}

#[test]
fn lattice_family_memoizes_per_lambda() {
    let fam = GsFamily::lattice(1, 0.5, 3.0, 0.25, None).unwrap();
    let a = fam.for_lambda(1.5).unwrap();
    let b = fam.for_lambda(1.5).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert!(Arc::ptr_eq(&fam.for_lambda(1.0).unwrap(), fam.base()));
    assert!(rel(a.options.h, 0.25 * 1.5) < 1e-15);
    // on its own lattice the rescaled member solves the shifted equation
    assert!(residual_rescaled(&a, 1.5).unwrap() < 1e-6);
}

#[test]
fn planar_ground_state() {
    let gs = solve_ground_state(2, 0.5, 2.0, &GsOptions::continuum(2)).unwrap();
    assert!((gs.tail.slope + 3.0).abs() <= 0.15, "slope {}", gs.tail.slope);
    assert!(gs.residual < 1e-4, "residual {:e}", gs.residual);
    assert!(gs.constants.c0 < 0.0);
    assert!(rel(gs.constants.c0, -0.5 * gs.constants.m2) < 1e-6);
    let gs = Arc::new(gs);
    let peak = Peak::new(gs.clone(), [0.0, 0.0], 1.0).unwrap();
    let h = 0.05;
    let grid = Grid::new(2, [801, 801], [-400, -400], h);
    let z1 = z_kernel(&peak, 0, &grid).unwrap();
    let z2 = z_kernel(&peak, 1, &grid).unwrap();
    let cross: f64 = z1.values.iter().zip(&z2.values).map(|(a, b)| a * b).sum::<f64>() * h * h;
    assert!(cross.abs() <= 1e-8 * gs.constants.alpha_z);
    let diag: f64 = z1.values.iter().map(|a| a * a).sum::<f64>() * h * h;
    assert!(rel(diag, gs.constants.alpha_z) < 1e-2, "{diag} vs {}", gs.constants.alpha_z);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescaled_profile_is_the_scaled_base(lambda in 0.2f64..5.0, r in 0.0f64..300.0) {
        let gs = &*CUBIC;
        let got = gs.rescaled(lambda).eval(r);
        let want = lambda.sqrt() * gs.value(lambda * r);
        prop_assert!((got - want).abs() <= 1e-14 * want.abs());
    }

    #[test]
    fn peaks_are_radial(cx in -5.0f64..5.0, d in 0.0f64..50.0, lambda in 0.5f64..2.0) {
        let peak = Peak::new(CUBIC.clone(), [cx, 0.0], lambda).unwrap();
        let a = peak.value([cx + d, 0.0]);
        let b = peak.value([cx - d, 0.0]);
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
