use fracpeak::energy::Potential;
use fracpeak::gridcore::{Field, Grid, Shape};
use fracpeak::groundstate::GsCache;
use fracpeak::verify::{
    assign_nearest, detect_peaks, fit_exponent, mirrored, render_table, run_plan, run_suite, write_report, Basis,
    Check, ExperimentPlan, Manifest, Runner, ScenarioId,
};
use fracpeak::Error;
use proptest::prelude::*;

const CACHE: &str = concat!(env!("CARGO_TARGET_TMPDIR"), "/gs-cache");

fn runner(out: Option<&std::path::Path>) -> Runner {
    Runner {
        cache: Some(GsCache::new(CACHE)),
        out: out.map(|p| p.to_path_buf()),
    }
}

fn bumps(grid: Grid, centers: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(grid, |x| {
        centers
            .iter()
            .map(|&(c, amp, w)| amp / (1.0 + ((x[0] - c) / w).powi(2)))
            .sum()
    })
}

#[test]
fn peaks_are_refined_between_nodes() {
    let g = Grid::centered(1, 200, 0.1);
    let u = bumps(g, &[(-5.03, 1.0, 1.5), (7.26, 0.9, 1.5)]);
    let p = detect_peaks(&u);
    assert_eq!(p.len(), 2, "{p:?}");
    assert!((p[0][0] + 5.03).abs() < 5e-3, "{p:?}");
    assert!((p[1][0] - 7.26).abs() < 5e-3, "{p:?}");
}

#[test]
fn small_bumps_are_ignored() {
    let g = Grid::centered(1, 200, 0.1);
    let u = bumps(g, &[(0.0, 1.0, 1.0), (10.0, 0.4, 1.0)]);
    assert_eq!(detect_peaks(&u).len(), 1);
    assert!(detect_peaks(&Field::zeros(g)).is_empty());
}

#[test]
fn planar_peaks() {
    let g = Grid::centered(2, 40, 0.25);
    let u = Field::from_fn(g, |x| 1.0 / (1.0 + (x[0] - 1.1).powi(2) + (x[1] + 2.3).powi(2)));
    let p = detect_peaks(&u);
    assert_eq!(p.len(), 1);
    assert!((p[0][0] - 1.1).abs() < 0.02 && (p[0][1] + 2.3).abs() < 0.02, "{p:?}");
}

#[test]
fn nearest_assignment_prefers_closest_pairs() {
    let detected = [[0.9, 0.0], [-1.1, 0.0], [5.0, 0.0]];
    let predicted = [[-1.0, 0.0], [1.0, 0.0]];
    assert_eq!(assign_nearest(&detected, &predicted), vec![Some(1), Some(0)]);
    assert_eq!(assign_nearest(&[[0.0, 0.0]], &predicted), vec![Some(0), None]);
}

#[test]
fn exponent_fit_reports_two_point_slopes() {
    let x = [0.1, 0.05, 0.025];
    let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powi(2) * (1.0 + e)).collect();
    let f = fit_exponent(&x, &y);
    assert_eq!(f.two_point.len(), 2);
    // pre-asymptotic contamination fades toward small ε
    assert!(f.two_point[1] < f.two_point[0], "{:?}", f.two_point);
    assert!((f.slope - 2.0).abs() < 0.1);
}

#[test]
fn checks_are_pure_functions_of_their_interval() {
    let c = Check::relative("x", 0.95, -1.0, 0.1, Basis::Estimate);
    assert!(!c.pass && c.lo < c.hi);
    assert!(Check::relative("x", -0.95, -1.0, 0.1, Basis::Estimate).pass);
    assert!(Check::at_most("x", 1.0, 1.0, Basis::Oracle).pass);
    assert!(!Check::at_least("x", f64::NAN, 0.0, Basis::Oracle).pass);
    assert!(Check::holds("x", true, Basis::Identity).pass);
    assert!(!Check::holds("x", false, Basis::Identity).pass);
}

#[test]
fn scenario_names_roundtrip() {
    for id in ScenarioId::ALL {
        assert_eq!(id.name().parse::<ScenarioId>().unwrap(), id);
        assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.name()));
    }
    assert!("thm2".parse::<ScenarioId>().is_err());
    assert_eq!(ExperimentPlan::suite().len(), ScenarioId::ALL.len());
}

#[test]
fn plans_are_validated() {
    for p in ExperimentPlan::suite() {
        p.validate().unwrap();
    }
    let field = |p: ExperimentPlan| match p.validate() {
        Err(Error::ConfigInvalid { field, .. }) => field,
        other => panic!("{other:?}"),
    };
    let base = ExperimentPlan::desk(ScenarioId::Thm1);
    assert_eq!(field(ExperimentPlan { eps: vec![0.5], ..base.clone() }), "eps");
    assert_eq!(field(ExperimentPlan { eps: vec![], ..base.clone() }), "eps");
    assert_eq!(field(ExperimentPlan { s: 1.0, ..base.clone() }), "s");
    // for n = 1, s = 1/4 the critical exponent is 3
    assert_eq!(field(ExperimentPlan { s: 0.25, p: 3.0, ..base.clone() }), "p");
    assert_eq!(field(ExperimentPlan { mu: Some(1.0), ..base.clone() }), "mu");
    assert_eq!(field(ExperimentPlan { n: 2, p: 2.0, ..base.clone() }), "domain");
    assert_eq!(field(ExperimentPlan { delta_star: Some(2.0), ..base.clone() }), "delta_star");
    assert_eq!(field(ExperimentPlan { tol_scale: 0.0, ..base.clone() }), "tol_scale");
    let negative = Potential::Constant { v0: -1.0 };
    assert_eq!(field(ExperimentPlan { potential: negative, ..base }), "potential");
}

#[test]
fn mirrored_minimum_is_a_positive_maximum() {
    let shape = Shape::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
    let v = Potential::Quadratic { v0: 1.0, a: 0.5, center: [0.2, 0.0] };
    let m = mirrored(&v, &shape).unwrap();
    assert!(m.inf_over(&shape) >= 1.0 - 1e-12);
    assert!(m.value(&[0.2, 0.0]) > m.value(&[0.5, 0.3]));
    assert!(m.grad(&[0.2, 0.0]).iter().all(|g| g.abs() < 1e-15));
    assert!(mirrored(&Potential::Constant { v0: 1.0 }, &shape).is_none());
    assert!(mirrored(&m, &shape).is_none());
}

#[test]
fn verdicts_are_deterministic_and_follow_their_checks() {
    let plan = ExperimentPlan::desk(ScenarioId::Interaction);
    let a = run_plan(&plan, &runner(None)).unwrap();
    let b = run_plan(&plan, &runner(None)).unwrap();
    assert_eq!(a, b);
    assert!(a.pass);
    assert_eq!(a.pass, a.checks.iter().all(|c| c.pass));
    // the same measurements against tolerances scaled far down
    let strict = ExperimentPlan { tol_scale: 1e-6, ..plan };
    let c = run_plan(&strict, &runner(None)).unwrap();
    assert!(!c.pass);
    for (x, y) in a.checks.iter().zip(&c.checks) {
        assert_eq!(x.measured.to_bits(), y.measured.to_bits());
    }
}

#[test]
fn violated_hypothesis_is_recorded_not_failed() {
    // constant V: sup over K equals sup over its boundary
    let plan = ExperimentPlan {
        potential: Potential::Constant { v0: 1.0 },
        ..ExperimentPlan::desk(ScenarioId::Thm3Cluster)
    };
    let v = run_plan(&plan, &runner(None)).unwrap();
    assert!(v.pass, "hypothesis gate only: {:?}", v.notes);
    assert!(v.notes.iter().any(|n| n.contains("hypothesis violated")));
}

#[test]
fn reports_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let plans = [
        ExperimentPlan::desk(ScenarioId::Interaction),
        ExperimentPlan::desk(ScenarioId::Thm4Nonexist),
    ];
    let report = run_suite(&plans, &runner(Some(dir.path())), 2).unwrap();
    assert_eq!(report.verdicts[0].scenario, ScenarioId::Interaction);
    assert!(report.pass, "{}", render_table(&report));
    let m = write_report(dir.path(), &report).unwrap();
    for v in &report.verdicts {
        for a in &v.artifacts {
            assert!(m.files.contains_key(a), "{a} missing from the manifest");
        }
    }
    assert!(m.files.contains_key("report.json") && !m.files.contains_key("manifest.json"));
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.lines().last().unwrap().contains("PASS"));
    assert_eq!(Manifest::of_dir(dir.path()).unwrap(), m);
    std::fs::write(dir.path().join("interaction/interaction.csv"), "changed").unwrap();
    assert_ne!(Manifest::of_dir(dir.path()).unwrap().hash, m.hash);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fits_recover_power_laws(k in -8.0f64..8.0, c in 0.01f64..100.0, x0 in 0.01f64..10.0) {
        let x: Vec<f64> = (0..4).map(|i| x0 * 2f64.powi(i)).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(k)).collect();
        let f = fit_exponent(&x, &y);
        prop_assert!((f.slope - k).abs() < 1e-9);
        prop_assert!(f.two_point.iter().all(|s| (s - k).abs() < 1e-9));
        prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn assignment_is_injective(pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 0..6), m in 1usize..5) {
        let detected: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let predicted: Vec<[f64; 2]> = (0..m).map(|i| [i as f64 - 2.0, 0.0]).collect();
        let a = assign_nearest(&detected, &predicted);
        let used: Vec<usize> = a.iter().flatten().copied().collect();
        prop_assert_eq!(used.len(), m.min(detected.len()));
        let mut sorted = used.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), used.len());
    }
}

#[test]
fn reports_roundtrip_through_json() {
    let mut v = run_plan(&ExperimentPlan::desk(ScenarioId::Interaction), &runner(None)).unwrap();
    v.checks.push(Check::at_least("open", f64::NAN, 0.0, Basis::Oracle));
    v.series.insert("gap".into(), vec![1.0, f64::INFINITY]);
    let report = fracpeak::verify::Report { pass: false, verdicts: vec![v] };
    let back: fracpeak::verify::Report = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    let (a, b) = (&report.verdicts[0], &back.verdicts[0]);
    for (x, y) in a.checks.iter().zip(&b.checks) {
        assert_eq!((x.lo, x.hi, x.pass), (y.lo, y.hi, y.pass));
    }
    assert!(b.checks.last().unwrap().measured.is_nan());
    assert!(b.series["gap"][1].is_nan());
}
