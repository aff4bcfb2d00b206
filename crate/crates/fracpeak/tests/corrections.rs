use fracpeak::corrections::{
    build_ansatz, corrected_peak, exterior_response, interaction_integral, interaction_model, interaction_quadrature,
    pi_weighted_integrals, AnsatzBundle, CorrectionOptions, GreenTable, PeakConfig,
};
use fracpeak::energy::Potential;
use fracpeak::gridcore::{Domain, LatticeKernel, Shape, Symbol};
use fracpeak::groundstate::{solve_cached, GsCache, GsFamily, GsOptions, Peak};
use proptest::prelude::*;
use std::sync::{Arc, LazyLock};

const H: f64 = 0.1;

static FAMILY: LazyLock<GsFamily> = LazyLock::new(|| GsFamily::lattice(1, 0.5, 3.0, H, None).unwrap());

fn interval(eps: f64) -> Domain {
    Domain::new(Shape::Box { lo: vec![-1.0], hi: vec![1.0] }, eps, H, 8).unwrap()
}

fn single(eps: f64) -> AnsatzBundle {
    let v = Potential::Constant { v0: 1.0 };
    let cfg = PeakConfig::new(1, eps, vec![[0.0, 0.0]], &v).unwrap();
    build_ansatz(&cfg, &FAMILY, &interval(eps), &CorrectionOptions::default()).unwrap()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn interior_max(b: &AnsatzBundle, f: impl Fn(usize) -> f64) -> f64 {
    b.domain.interior().iter().map(|&k| f(k)).fold(f64::NEG_INFINITY, f64::max)
}

fn interior_min(b: &AnsatzBundle, f: impl Fn(usize) -> f64) -> f64 {
    b.domain.interior().iter().map(|&k| f(k)).fold(f64::INFINITY, f64::min)
}

#[test]
fn green_table_inverts_the_lattice_operator() {
    for lambda in [1.0, 2.5] {
        let g = GreenTable::new(1, 0.5, H, lambda, [4096, 0], Symbol::Lattice);
        let ker = LatticeKernel::new(1, 0.5, H, [8192, 0]);
        for a in -20i64..=20 {
            let mut acc = lambda * g.weight([a, 0]);
            for b in -4000i64..=4000 {
                acc += ker.coefficient([a - b, 0]) * g.weight([b, 0]);
            }
            let target = if a == 0 { 1.0 } else { 0.0 };
            assert!((acc - target).abs() < 1e-9, "λ={lambda} a={a}: {acc}");
        }
        // positive and decaying like λ^{-2} K(m)
        let far = g.weight([2000, 0]);
        let k = ker.weight([2000, 0]);
        assert!(far > 0.0);
        assert!((far * lambda * lambda / k - 1.0).abs() < 1e-2);
    }
}

#[test]
fn exterior_response_matches_direct_sum() {
    let eps = 0.25;
    let dom = interval(eps);
    let peak = FAMILY.peak([1.3, 0.0], 1.0).unwrap();
    let opts = CorrectionOptions::default();
    let (lam, _) = exterior_response(&peak, &dom, Symbol::Lattice, &opts).unwrap();
    let g = GreenTable::new(1, 0.5, H, 1.0, [6000, 0], Symbol::Lattice);
    let g0 = dom.grid.first[0];
    let hi = g0 + dom.grid.dims[0] as i64 - 1;
    for &k in dom.interior().iter().step_by(7) {
        let a = dom.grid.lattice(k)[0];
        let mut acc = 0.0;
        for b in -2500i64..=2500 {
            let inside = b >= g0 && b <= hi && dom.is_interior((b - g0) as usize);
            if !inside {
                acc += g.weight([a - b, 0]) * peak.value([b as f64 * H, 0.0]).powi(3);
            }
        }
        assert!((lam.values[k] - acc).abs() <= 1e-9 * acc, "node {a}: {} vs {acc}", lam.values[k]);
    }
}

#[test]
fn single_peak_bundle_invariants() {
    let b = single(0.1);
    let c = &b.peaks[0].corr;
    assert_eq!(b.k(), 1);
    assert_eq!(b.u_sum.values, c.ubar.values);
    assert_eq!(b.w_sum.values, c.w.values);
    assert!(b.u_sum.exterior_is_zero(&b.domain));
    assert!(c.ubar.exterior_is_zero(&b.domain));
    assert!(b.decomposition_defect() <= 1e-12);
    assert!(c.lam.values.iter().all(|&v| v >= 0.0));
    assert!(interior_min(&b, |k| c.pi.values[k]) >= 0.0);
    assert!(interior_max(&b, |k| c.pi.values[k] - c.w.values[k]) <= 0.0);
    assert_eq!(b.peaks[0].z.len(), 1);
}

#[test]
fn boundary_correction_scaling() {
    let eps = [0.1, 0.05, 0.025];
    let mut d = vec![];
    let (mut gap, mut lam_sup, mut lam_center, mut pi_ball) = (vec![], vec![], vec![], vec![]);
    for &e in &eps {
        let b = single(e);
        let c = &b.peaks[0].corr;
        let dd = b.config.boundary_gap(&b.domain);
        d.push(dd);
        gap.push(b.sup_gap());
        lam_sup.push(interior_max(&b, |k| c.lam.values[k]));
        lam_center.push(c.lam.values[b.domain.grid.locate([0, 0]).unwrap()]);
        pi_ball.push(interior_max(&b, |k| {
            if b.domain.grid.coord(k)[0].abs() <= dd / 8.0 {
                c.pi.values[k]
            } else {
                0.0
            }
        }));
    }
    let sg = slope(&eps, &gap);
    assert!((sg - 2.0).abs() <= 0.15 * 2.0, "sup|ū−w| exponent {sg}");
    assert!(gap.windows(2).all(|w| w[1] < w[0]));
    let sl = -slope(&d, &lam_sup);
    assert!((sl - 6.0).abs() <= 0.2 * 6.0, "sup Λ exponent {sl}");
    // at the center Λ decays one power faster than at the boundary
    let sc = -slope(&d, &lam_center);
    assert!(sc >= sl && (sc - 7.0).abs() <= 0.2 * 7.0, "Λ(q) exponent {sc}");
    let sp = -slope(&d, &pi_ball);
    assert!((sp - 3.0).abs() <= 0.2 * 3.0, "Π exponent {sp}");
}

#[test]
fn pi_weighted_integrals_decay() {
    let eps = [0.1, 0.05, 0.025];
    let bundles: Vec<AnsatzBundle> = eps.iter().map(|&e| single(e)).collect();
    let d: Vec<f64> = bundles.iter().map(|b| b.config.boundary_gap(&b.domain)).collect();
    for t in [1.0, 2.0] {
        let vals: Vec<f64> = bundles.iter().map(|b| pi_weighted_integrals(b, 0, 0, 1.0, t)).collect();
        assert!(vals.iter().all(|v| *v > 0.0));
        // the bound C/d^{t(n+2s)} is one-sided; the measured decay is n+4s per power of Π
        let e = -slope(&d, &vals);
        assert!(e >= 0.8 * 2.0 * t, "t={t}: exponent {e}");
        assert!((e - 3.0 * t).abs() <= 0.2 * 3.0 * t, "t={t}: exponent {e}");
    }
}

#[test]
fn pi_vanishes_on_a_huge_domain() {
    let small = pi_weighted_integrals(&single(0.1), 0, 0, 1.0, 1.0);
    let big = single(0.001);
    assert!(big.domain.n_interior() > 4096, "exercise the iterative solve");
    let c = &big.peaks[0].corr;
    assert!(interior_min(&big, |k| c.pi.values[k]) >= -1e-10);
    let huge = pi_weighted_integrals(&big, 0, 0, 1.0, 1.0);
    assert!(huge < 1e-6 * small, "{huge} vs {small}");
}

#[test]
fn symmetric_pair_gives_symmetric_ansatz() {
    let eps = 0.1;
    let v = Potential::Quadratic {
        v0: 1.2,
        a: 0.5,
        center: [0.0, 0.0],
    };
    let cfg = PeakConfig::new(1, eps, vec![[-3.0, 0.0], [3.0, 0.0]], &v).unwrap();
    assert_eq!(cfg.lambdas[0], cfg.lambdas[1]);
    let b = build_ansatz(&cfg, &FAMILY, &interval(eps), &CorrectionOptions::default()).unwrap();
    let n = b.u_sum.values.len();
    let sup = b.u_sum.max_abs();
    for k in 0..n {
        assert_eq!(b.domain.grid.coord(k)[0], -b.domain.grid.coord(n - 1 - k)[0]);
        assert!((b.u_sum.values[k] - b.u_sum.values[n - 1 - k]).abs() <= 1e-10 * sup);
        assert!((b.w_sum.values[k] - b.w_sum.values[n - 1 - k]).abs() <= 1e-10 * sup);
    }
    assert!(b.decomposition_defect() <= 1e-12);
    // i = ℓ carries the peak itself, i ≠ ℓ only the other peak's tail
    let same = pi_weighted_integrals(&b, 0, 0, 1.0, 1.0);
    let cross = pi_weighted_integrals(&b, 0, 1, 1.0, 1.0);
    assert!(same.is_finite() && cross.is_finite() && same > cross && cross > 0.0);
}

#[test]
fn interaction_follows_the_tail_law() {
    let base = FAMILY.base().clone();
    let spacing = [20.0, 40.0, 80.0];
    let mut vals = vec![];
    for &sp in &spacing {
        let a = Peak::new(base.clone(), [0.0, 0.0], 1.0).unwrap();
        let b = Peak::new(base.clone(), [sp, 0.0], 1.0).unwrap();
        let v = interaction_quadrature(&a, &b, H, 300.0).unwrap();
        let model = interaction_model(&base, 1.0, 1.0, sp);
        assert!((v / model - 1.0).abs() < 0.1, "spacing {sp}: {v} vs {model}");
        // resolution oracle
        let fine = interaction_quadrature(&a, &b, 0.5 * H, 300.0).unwrap();
        assert!((v / fine - 1.0).abs() < 0.02);
        // reflection symmetry with equal λ
        let swapped = interaction_quadrature(&b, &a, H, 300.0).unwrap();
        assert!((v - swapped).abs() <= 1e-12 * v);
        vals.push(v);
    }
    for w in vals.windows(2) {
        let ratio = w[1] / w[0];
        assert!((ratio / 0.25 - 1.0).abs() < 0.05, "ratio {ratio}");
    }
    let e = -slope(&spacing, &vals);
    assert!((e - 2.0).abs() <= 0.05 * 2.0);
}

#[test]
fn interaction_from_a_bundle() {
    let eps = 0.02;
    let v = Potential::Constant { v0: 1.0 };
    let cfg = PeakConfig::new(1, eps, vec![[-10.0, 0.0], [10.0, 0.0]], &v).unwrap();
    let b = build_ansatz(&cfg, &FAMILY, &interval(eps), &CorrectionOptions::default()).unwrap();
    let it = interaction_integral(&b, 0, 1).unwrap();
    assert_eq!(it.spacing, 20.0);
    assert!((it.value / it.model - 1.0).abs() < 0.05);
    assert!(interaction_integral(&b, 1, 1).is_err());
}

#[test]
fn configuration_space_membership() {
    let eps = 0.1;
    let dom = interval(eps);
    let v = Potential::Constant { v0: 1.0 };
    let ok = PeakConfig::new(1, eps, vec![[-4.0, 0.0], [4.0, 0.0]], &v).unwrap();
    assert_eq!(ok.eta(), 8.0);
    assert!((ok.boundary_gap(&dom) - 6.0).abs() < 1e-12);
    assert!(ok.check(&dom, 5.0).is_ok());
    assert!(ok.check(&dom, 9.0).is_err());
    // δ_*/ε = 2.5 here
    let near = PeakConfig::new(1, eps, vec![[8.0, 0.0]], &v).unwrap();
    assert!(near.check(&dom, 0.0).is_err());
    assert!(PeakConfig::with_lambdas(1, eps, vec![[0.0, 0.0]], vec![-1.0]).is_err());
    let off = PeakConfig::new(1, eps, vec![[0.23, 0.0]], &v).unwrap();
    assert!(!off.on_lattice(H));
    assert!(build_ansatz(&off, &FAMILY, &dom, &CorrectionOptions::default()).is_err());
    let snapped = off.snapped(H);
    assert!(snapped.on_lattice(H) && (snapped.q[0][0] - 0.2).abs() < 1e-12);
    assert_eq!(PeakConfig::new(1, eps, vec![[0.0, 0.0]], &v).unwrap().eta(), f64::INFINITY);
}

#[test]
fn planar_single_peak() {
    let cache = GsCache::new(concat!(env!("CARGO_TARGET_TMPDIR"), "/gs-cache"));
    let gs = Arc::new(solve_cached(2, 0.5, 2.0, &GsOptions::continuum(2), Some(&cache)).unwrap());
    let fam = GsFamily::continuum(gs);
    let eps = 0.5;
    let dom = Domain::new(
        Shape::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        },
        eps,
        1.0 / 16.0,
        4,
    )
    .unwrap();
    let peak = fam.peak([0.0, 0.0], 1.0).unwrap();
    let c = corrected_peak(&peak, &dom, &CorrectionOptions::default()).unwrap();
    let idx = dom.interior();
    assert!(idx.iter().all(|&k| c.pi.values[k] >= 0.0 && c.pi.values[k] <= c.w.values[k]));
    assert!(c.lam.values.iter().all(|&v| v >= -1e-15));
    assert!(c.ubar.exterior_is_zero(&dom));
    // symmetric under x ↔ −x and the axis swap
    let g = dom.grid;
    let sup = c.ubar.max_abs();
    for &k in idx.iter().step_by(13) {
        let m = g.lattice(k);
        for mm in [[-m[0], m[1]], [m[1], m[0]]] {
            let j = g.locate(mm).unwrap();
            assert!((c.ubar.values[k] - c.ubar.values[j]).abs() <= 1e-9 * sup);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn corrections_are_ordered(m in -40i64..40, li in 0usize..3) {
        let lambda = [0.5, 1.0, 2.0][li];
        let q = m as f64 * H;
        let dom = interval(0.1);
        let peak = FAMILY.peak([q, 0.0], lambda).unwrap();
        let c = corrected_peak(&peak, &dom, &CorrectionOptions::default()).unwrap();
        prop_assert!(c.ubar.exterior_is_zero(&dom));
        prop_assert!(c.lam.values.iter().all(|&v| v >= 0.0));
        for &k in dom.interior() {
            prop_assert!(c.pi.values[k] >= 0.0);
            prop_assert!(c.pi.values[k] <= c.w.values[k]);
            prop_assert!(c.ubar.values[k] > 0.0);
        }
    }
}
