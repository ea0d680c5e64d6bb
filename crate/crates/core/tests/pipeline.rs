use refphase::models::shipped_model;
use refphase::oracle::exact_diagonalize;
use refphase::protocol::{RamseyPlan, TauGrid};
use refphase::spectral::{compare_runtimes, run_pipeline, scan_subspaces, AnalysisOptions, EstimateKind, Refinement, SectorOutcome};

fn shipped_plan() -> RamseyPlan<f64> {
    let model = shipped_model::<f64>();
    RamseyPlan::new(&model, 5.0, TauGrid::new(0.0, 70.0, 1000).unwrap()).unwrap()
}

#[test]
fn shipped_run_recovers_ground_branch_levels() {
    let plan = shipped_plan();
    let exact = exact_diagonalize(&plan.h_p).unwrap().energies;
    let run = run_pipeline(&plan, &AnalysisOptions::default()).unwrap();
    for e in &run.report.estimates {
        println!("{:>10.6} {:>10.6} {:?} {:?} {:?}", e.omega_refined, e.energy, e.kind, e.matched_level, e.relative_error);
    }
    let ground = run.report.ground_energy().unwrap();
    assert!(((ground - exact[0]) / exact[0]).abs() < 1e-5, "{ground}");
    for level in [0, 2, 5, 7, 10] {
        let est = run.report.for_level(level).unwrap_or_else(|| panic!("level {level} missing"));
        assert!(est.relative_error.unwrap() < 1e-3, "level {level}: {est:?}");
    }
    assert!(run.peaks.iter().all(|p| p.refinement == Refinement::Lsq));
}

#[test]
fn quadratic_refinement_still_finds_ground() {
    let plan = shipped_plan();
    let exact = exact_diagonalize(&plan.h_p).unwrap().energies[0];
    let mut opts = AnalysisOptions::default();
    opts.peaks.refinement = Refinement::Quadratic;
    let run = run_pipeline(&plan, &opts).unwrap();
    let g = run.report.estimates.iter().find(|e| e.matched_level == Some(0)).unwrap();
    assert!((g.energy - exact).abs() < 2.0 * std::f64::consts::PI / 70.0 / 20.0);
    assert!(run.report.estimates.iter().any(|e| e.kind == EstimateKind::Level));
}

#[test]
fn phase_injection_leaves_ground_estimate() {
    let opts = AnalysisOptions::default();
    let base = run_pipeline(&shipped_plan(), &opts).unwrap();
    let g0 = base.report.ground_energy().unwrap();
    for phase in [std::f64::consts::FRAC_PI_3, std::f64::consts::PI] {
        let mut plan = shipped_plan();
        plan.relative_phase = phase;
        let run = run_pipeline(&plan, &opts).unwrap();
        let g = run.report.ground_energy().unwrap();
        assert!((g - g0).abs() <= 1e-6, "phase {phase}: {g} vs {g0}");
    }
}

#[test]
fn scan_finds_zero_magnetization_minimum() {
    let plan = shipped_plan();
    let report = scan_subspaces(&plan, &[], &AnalysisOptions::default()).unwrap();
    let (e, q) = report.global_minimum.unwrap();
    assert_eq!(q, 0.0);
    let exact = exact_diagonalize(&plan.h_p).unwrap().energies[0];
    assert!((e - exact).abs() < 1e-3);
    for s in &report.sectors {
        if s.dim == 1 {
            assert!(matches!(s.outcome, SectorOutcome::Classical { .. }));
        }
    }
}

#[test]
fn compare_favours_proposed_at_short_runtime() {
    let model = shipped_model::<f64>();
    let plan = shipped_plan();
    let rows = compare_runtimes(&model, &plan, &[20.0, 240.0], &AnalysisOptions::default()).unwrap();
    let short = rows[0];
    let long = rows[1];
    println!("{rows:?}");
    assert!((short.proposed_estimate - short.exact).abs() < (short.conventional_estimate - short.exact).abs());
    assert!((short.proposed_estimate - short.exact).abs() <= 1e-2);
    assert!((long.proposed_estimate - long.exact).abs() <= 1e-3);
    assert!((long.conventional_estimate - long.exact).abs() <= 1e-3);
    assert!(compare_runtimes(&model, &plan, &[], &AnalysisOptions::default()).is_err());
    assert!(compare_runtimes(&model, &plan, &[8.0], &AnalysisOptions::default()).is_err());
}
