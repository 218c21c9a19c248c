use super::*;
use crate::config::{ExperimentConfig, Suite};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn failures(r: &SuiteReport) -> Vec<String> {
    r.checks
        .iter()
        .filter(|c| c.mandatory && c.status != Status::Pass)
        .map(|c| format!("{} {:?} {:?} {}", c.id, c.value, c.tolerance, c.detail))
        .collect()
}

const FLAT: &str = "grid.sizes = [16]\nranks = [1, 2]\nsamples = 2\n";

#[test]
fn flat_identity_suite_passes_and_is_deterministic() {
    let c = cfg(FLAT);
    let a = run_identity_suite(&c).unwrap();
    assert_eq!(a.status, Status::Pass, "{:#?}", failures(&a));
    let b = run_identity_suite(&c).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv().lines().count(), a.checks.len() + 1);
    assert!(a.check("identity/flat/n2/p1/N016/flat_curvature").is_some());
    assert_eq!(a.exit_code(), 0);
}

#[test]
fn negative_controls_fail_their_checks() {
    let c = cfg("grid.sizes = [16]\nranks = [2]\nsamples = 1\n");
    let r = run_identity_suite_with(&c, Fixture::CorruptD2(1.1)).unwrap();
    assert_eq!(r.status, Status::Fail);
    assert_eq!(r.check("identity/flat/n2/p2/N016/orthogonality").unwrap().status, Status::Fail);
    let r = run_identity_suite_with(&c, Fixture::FlipDivergence).unwrap();
    assert_eq!(r.check("identity/flat/n2/p2/N016/pairing").unwrap().status, Status::Fail);
    assert_eq!(r.check("identity/flat/n2/p2/N016/adjoint_exact").unwrap().status, Status::Pass);
    let md = r.to_markdown();
    let first = md.lines().find(|l| l.starts_with("| FAIL") || l.starts_with("| PASS")).unwrap();
    assert!(first.starts_with("| FAIL"), "{first}");
}

#[test]
fn conformal_identity_suite_refines() {
    let c = cfg("metric.preset = conformal\nmetric.f_expression = 0.1*cos(x1)\ngrid.sizes = [16, 32]\nranks = [2]\nsamples = 1\n");
    let r = run_identity_suite(&c).unwrap();
    assert_eq!(r.status, Status::Pass, "{:#?}", failures(&r));
    assert!(r.checks.iter().any(|c| c.id.contains("refine_016_032/weitzenbock_oracle")));
}

#[test]
fn small_flat_kernel_experiment() {
    let c = cfg("grid.sizes = [8, 12]\nranks = [1]\nsuites = kernel\n");
    let out = kernel_experiment(&c).unwrap();
    let r = &out.report;
    assert_eq!(r.status, Status::Pass, "{:#?}", failures(r));
    let ck = r.check("kernel/flat/n2/p1/conformal_killing/confirmed").unwrap();
    assert_eq!(ck.status, Status::Pass);
    assert_eq!(r.check("kernel/flat/n2/p1/conformal_killing/N012/count").unwrap().value, Some(2.0));
    assert_eq!(r.check("kernel/flat/n2/p1/transverse_traceless/near_kernel_grows").unwrap().status, Status::Pass);
    assert_eq!(out.spectra.len(), 8);
}

#[test]
fn symbol_experiment_passes() {
    for preset in ["", "metric.preset = conformal\nmetric.f_expression = 0.1*cos(x1) + 0.05*sin(x2)\n"] {
        let c = cfg(&format!("{preset}grid.sizes = [8]\nranks = [1, 2]\n"));
        let out = symbol_experiment(&c).unwrap();
        assert_eq!(out.report.status, Status::Pass, "{:#?}", failures(&out.report));
        assert_eq!(out.rows.len(), 200);
    }
}

#[test]
fn convergence_study_spectral() {
    let c = cfg("metric.preset = conformal\nmetric.f_expression = 0.1*cos(x1)\ngrid.sizes = [8, 16, 32]\nranks = [1]\nsamples = 1\nsuites = converge\n");
    let r = convergence_study(&c).unwrap();
    assert_eq!(r.status, Status::Pass, "{:#?}", failures(&r));
    let short = cfg("grid.sizes = [8, 16]\n");
    assert!(convergence_study(&short).is_err());
}

#[test]
fn combined_runs_selected_suites() {
    let mut c = cfg(FLAT);
    c.suites = vec![Suite::Symbol];
    let r = run_suites(&c).unwrap();
    assert!(r.checks.iter().all(|c| c.id.starts_with("symbol/")));
}
