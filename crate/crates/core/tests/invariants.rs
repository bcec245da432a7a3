//! Module-level invariants checked on fixtures and on random perturbations.

use proptest::prelude::*;
use reeb_core::basic::{basic_check, fix_gauge};
use reeb_core::conformal::normalize_conformal;
use reeb_core::dynamics::{closed_orbit_scan, default_samples, integrate_flow, FlowModel};
use reeb_core::exterior::{exterior_derivative, FieldMatrix, KForm, Metric, Signature, VectorField};
use reeb_core::field::{ScalarField, TrigPoly};
use reeb_core::fixtures;
use reeb_core::manifold::{FrameAlgebra, GridChart, Manifold};
use reeb_core::pipeline::{run_pipeline_text, RunConfig, ScanConfig};
use reeb_core::shs::{geodesic_unit_check, reeb_field};
use reeb_core::spectral::{average_field, poisson_field};

fn ok_fixtures() -> Vec<fixtures::Fixture> {
    fixtures::all().into_iter().filter(|f| f.expected.case.is_some()).collect()
}

fn run(f: &fixtures::Fixture) -> reeb_core::pipeline::Outcome {
    run_pipeline_text(&f.toml, &RunConfig { source: f.name.clone(), ..Default::default() })
}

#[test]
fn reeb_field_recovers_the_input_field() {
    for f in ok_fixtures() {
        let out = run(&f);
        let shs = out.artifacts.shs.as_ref().unwrap();
        let r = reeb_field(&shs.theta, &shs.omega).unwrap();
        let dev = (&r - &shs.r).sup_norm();
        assert!(dev <= 1e-9, "{}: {dev:e}", f.name);
    }
}

#[test]
fn killing_residual_after_normalization_and_idempotence() {
    for f in ok_fixtures() {
        let out = run(&f);
        let spec = out.artifacts.spec.as_ref().unwrap();
        let mf = &spec.manifold;
        let tol = mf.tol();
        let n = normalize_conformal(mf, &spec.metric, &spec.field).unwrap();
        assert!(n.killing_residual <= 10.0 * tol, "{}", f.name);
        let again = normalize_conformal(mf, &n.metric, &spec.field).unwrap();
        assert!(again.metric.tensor().sub(n.metric.tensor()).sup_norm() <= tol, "{}", f.name);
        let scaled = Metric::new(spec.metric.tensor().scale(3.7), Signature::Lorentzian);
        let s = normalize_conformal(mf, &scaled, &spec.field).unwrap();
        assert!(s.metric.tensor().sub(n.metric.tensor()).sup_norm() <= tol, "{}", f.name);
    }
}

#[test]
fn structure_invariants_on_fixtures() {
    for f in ok_fixtures() {
        let out = run(&f);
        let r = &out.report;
        // exactly one case, matching the sign of k
        let k = r.k.unwrap();
        let tol = r.config.tol.unwrap();
        assert_eq!(r.case, f.expected.case, "{}", f.name);
        assert_eq!(r.case == Some(reeb_core::classify::Case::Sasakian), k.abs() > tol, "{}", f.name);
        assert!(r.nijenhuis_residual.unwrap() <= 10.0 * tol, "{}", f.name);
        let chi = r.checks.iter().find(|c| c.name.starts_with("chi(chi^-1")).unwrap();
        assert!(chi.residual <= 1e-10, "{}: {:e}", f.name, chi.residual);
        let dec = out.artifacts.decomposition.as_ref().unwrap();
        let mf = &out.artifacts.spec.as_ref().unwrap().manifold;
        assert!(basic_check(mf, &dec.alpha, &out.artifacts.shs.as_ref().unwrap().r).is_basic(), "{}", f.name);
    }
}

#[test]
fn exit_status_is_zero_exactly_when_case_and_gates_pass() {
    for f in fixtures::all() {
        for cfg in [
            RunConfig { source: f.name.clone(), ..Default::default() },
            RunConfig { source: f.name.clone(), skip_betti: true, ..Default::default() },
        ] {
            let r = run_pipeline_text(&f.toml, &cfg).report;
            let expect_zero = r.case.is_some() && r.gates.values().all(|g| *g);
            assert_eq!(r.exit_code() == 0, expect_zero, "{}", f.name);
        }
    }
}

#[test]
fn detected_periods_are_flow_translation_invariant() {
    for name in ["su2_hopf", "heisenberg", "flat_t3"] {
        let f = fixtures::find(name).unwrap();
        let out = run(&f);
        let spec = out.artifacts.spec.as_ref().unwrap();
        let model = FlowModel::new(&spec.manifold, &spec.field, out.artifacts.g_hat.as_ref().unwrap()).unwrap();
        let samples = default_samples(&model);
        let threshold = 1e-3;
        let scan = closed_orbit_scan(&model, &samples, 20.0, 0.01, threshold).unwrap();
        let again = closed_orbit_scan(&model, &samples, 20.0, 0.01, threshold).unwrap();
        assert_eq!(scan, again, "{name}: scans must be deterministic");
        for d in &scan.detections {
            let traj = integrate_flow(&model, &d.initial, d.period / 2.0, 0.01).unwrap();
            let shifted = vec![traj.endpoint().to_vec()];
            let rescan = closed_orbit_scan(&model, &shifted, 20.0, 0.01, threshold).unwrap();
            let p = rescan.detections.first().expect("orbit point returns").period;
            assert!((p - d.period).abs() <= 2.0 * threshold, "{name}: {p} vs {}", d.period);
        }
    }
}

fn trig_xy(terms: &[(i32, i32, f64, bool)]) -> ScalarField {
    terms
        .iter()
        .map(|&(a, b, c, cos)| {
            ScalarField::Trig(if cos { TrigPoly::cos_mode([0, a, b], c) } else { TrigPoly::sin_mode([0, a, b], c) })
        })
        .sum::<ScalarField>()
        .simplified()
}

fn xy_terms() -> impl Strategy<Value = Vec<(i32, i32, f64, bool)>> {
    prop::collection::vec((-2i32..=2, -2i32..=2, -0.15f64..0.15, any::<bool>()), 1..4)
}

fn to_grid(mf: &Manifold, f: &ScalarField) -> ScalarField {
    match f {
        ScalarField::Trig(p) => ScalarField::Samples(mf.plan().unwrap().sample(|x| p.eval(x, [1.0; 3]))),
        other => other.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `R = ∂_t` is unit and Killing for any `t`-independent metric with `g_tt = 1`.
    #[test]
    fn unit_killing_fields_are_geodesic(a in xy_terms(), b in xy_terms(), c in xy_terms(), grid in any::<bool>()) {
        let mf = if grid {
            Manifold::grid(GridChart::new(16, [1.0; 3]).unwrap())
        } else {
            Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0)
        };
        let lift = |f: ScalarField| if grid { to_grid(&mf, &f) } else { f };
        let (a, b, c) = (lift(trig_xy(&a)), lift(trig_xy(&b)), lift(trig_xy(&c)));
        let two = ScalarField::Const(2.0);
        let entries = [
            [ScalarField::Const(1.0), a.clone(), b.clone()],
            [a, &two + &c, ScalarField::zero()],
            [b, ScalarField::zero(), &two - &c],
        ];
        let g = Metric::new(FieldMatrix::from_fn(3, |i, j| entries[i][j].clone()), Signature::Riemannian);
        let r = VectorField::basis(3, 0);
        let rep = match geodesic_unit_check(&mf, &g, &r) {
            Ok(rep) => rep,
            // Christoffel symbols on exact trig frames need a constant determinant
            Err(_) if !grid => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(rep.killing.passed() && rep.unit.passed());
        prop_assert!(rep.geodesic.residual <= 10.0 * mf.tol(), "{:e}", rep.geodesic.residual);
    }

    /// Adding `df` with `f` basic to `θ` moves the gauge-fixed `α` by `df`.
    #[test]
    fn gauge_robustness(f_terms in xy_terms(), grid in any::<bool>()) {
        let fx = fixtures::find("twisted_t3").unwrap();
        let backend = if grid { reeb_core::specfile::BackendKind::Grid } else { reeb_core::specfile::BackendKind::Frame };
        let cfg = RunConfig {
            overrides: reeb_core::specfile::Overrides { backend: Some(backend), grid_n: Some(16), tol: None },
            ..Default::default()
        };
        let out = run_pipeline_text(&fx.toml, &cfg);
        prop_assert_eq!(out.exit_code(), 0);
        let mf = &out.artifacts.spec.as_ref().unwrap().manifold;
        let shs = out.artifacts.shs.as_ref().unwrap();
        let dec = out.artifacts.decomposition.as_ref().unwrap();
        let f = if grid { to_grid(mf, &trig_xy(&f_terms)) } else { trig_xy(&f_terms) };
        let df = exterior_derivative(mf, &KForm::function(3, f)).unwrap();
        let theta2 = &shs.theta + &df;
        let d2 = exterior_derivative(mf, &theta2).unwrap();
        let dec2 = reeb_core::basic::decompose_basic_class(mf, &d2, &shs.omega, &shs.r).unwrap();
        prop_assert!((dec2.k - dec.k).abs() <= 1e-9);
        let alpha2 = fix_gauge(mf, &theta2, &shs.r, &dec2.alpha).unwrap();
        let shift = &(&alpha2 - &dec.alpha) - &df;
        prop_assert!(shift.sup_norm() <= 100.0 * mf.tol(), "{:e}", shift.sup_norm());
    }

    /// `d` commutes with the flow average on forms without `dt` components.
    #[test]
    fn d_commutes_with_flow_average(terms in prop::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2, -1.0f64..1.0), 1..4)) {
        let p: ScalarField = terms
            .iter()
            .map(|&(t, x, y, c)| ScalarField::Trig(TrigPoly::cos_mode([t, x, y], c)))
            .sum::<ScalarField>()
            .simplified();
        let grid = Manifold::grid(GridChart::new(8, [1.0; 3]).unwrap());
        let frame = Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0);
        for mf in [&grid, &frame] {
            let f = if mf.is_grid() { to_grid(mf, &p) } else { p.clone() };
            let mut a = KForm::zero(3, 1);
            a.set(&[1], f.clone());
            a.set(&[2], f.scale(0.5));
            let avg = |k: &KForm| {
                KForm::new(3, k.degree(), k.comps().iter().map(|c| average_field(mf.plan(), c, 0)).collect())
            };
            let lhs = exterior_derivative(mf, &avg(&a)).unwrap();
            let rhs = avg(&exterior_derivative(mf, &a).unwrap());
            prop_assert!((&lhs - &rhs).sup_norm() <= 1e-10);
        }
    }

    /// `poisson(Δu) = u` for basic zero-mean `u`.
    #[test]
    fn poisson_of_laplacian_is_identity(terms in xy_terms(), l in [0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0]) {
        let u = match trig_xy(&terms) {
            ScalarField::Trig(p) => p.map_modes(|m, c| if m == [0, 0, 0] { Default::default() } else { c }),
            _ => TrigPoly::default(),
        };
        let grid = Manifold::grid(GridChart::new(16, l).unwrap());
        let frame = Manifold::frame(FrameAlgebra::abelian(3), Some(l), 1.0);
        for mf in [&grid, &frame] {
            let uf = match mf.plan() {
                Some(plan) => ScalarField::Samples(plan.sample(|x| u.eval(x, l))),
                None => ScalarField::Trig(u.clone()),
            };
            let lap: ScalarField = (1..3).map(|a| mf.partial(a, &mf.partial(a, &uf))).sum();
            let back = poisson_field(mf.plan(), l, &lap, 0, 1e-9).unwrap();
            prop_assert!((&back - &uf).sup_norm() <= 1e-10, "{:e}", (&back - &uf).sup_norm());
        }
    }
}

#[test]
fn scan_config_defaults_reach_the_report() {
    let f = fixtures::find("su2_hopf").unwrap();
    let cfg = RunConfig { orbit_scan: Some(ScanConfig::default()), ..Default::default() };
    let out = run_pipeline_text(&f.toml, &cfg);
    let scan = out.report.orbit_scan.unwrap();
    assert_eq!((scan.horizon, scan.threshold), (50.0, 1e-3));
    assert!(scan.detections.iter().all(|d| d.distance <= scan.threshold && d.period > 0.0 && d.period <= scan.horizon));
}
