use reeb_core::fixtures;
use reeb_core::pipeline::{run_pipeline_text, RunConfig, ScanConfig};
use reeb_core::specfile::{BackendKind, Overrides};

#[test]
fn every_fixture_meets_its_expectation() {
    for f in fixtures::all() {
        let cfg = RunConfig { source: f.name.clone(), ..Default::default() };
        let out = run_pipeline_text(&f.toml, &cfg);
        let r = &out.report;
        assert_eq!(out.exit_code(), f.expected.exit_code, "{}: {:?} {:?}", f.name, r.failure, r.gates);
        assert_eq!(r.case, f.expected.case, "{}", f.name);
        assert_eq!(r.failure.as_ref().map(|x| x.stage), f.expected.stage, "{}", f.name);
    }
}

#[test]
fn dual_backend_fixtures_agree_on_k() {
    for f in fixtures::all().into_iter().filter(|f| f.both_backends && f.expected.case.is_some()) {
        let k = |backend| {
            let cfg = RunConfig {
                source: f.name.clone(),
                overrides: Overrides { backend: Some(backend), ..Default::default() },
                ..Default::default()
            };
            let out = run_pipeline_text(&f.toml, &cfg);
            assert_eq!(out.exit_code(), 0, "{} {:?}: {:?}", f.name, backend, out.report.failure);
            out.report.k.unwrap()
        };
        assert!((k(BackendKind::Frame) - k(BackendKind::Grid)).abs() <= 1e-8, "{}", f.name);
    }
}

#[test]
fn orbit_scan_on_sasakian_fixtures() {
    for name in ["heisenberg", "su2_hopf"] {
        let f = fixtures::find(name).unwrap();
        let cfg = RunConfig { source: name.into(), orbit_scan: Some(ScanConfig::default()), ..Default::default() };
        let out = run_pipeline_text(&f.toml, &cfg);
        assert_eq!(out.exit_code(), 0, "{name}: {:?} {:?}", out.report.failure, out.report.orbit_scan);
    }
}
