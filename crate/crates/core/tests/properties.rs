//! Randomized identities of the exterior calculus and the spectral backend.

use proptest::prelude::*;
use reeb_core::exterior::{exterior_derivative, KForm};
use reeb_core::field::{ScalarField, TrigPoly};
use reeb_core::manifold::{validate_frame_algebra, FrameAlgebra, GridChart, Manifold};
use reeb_core::selftest::{random_case, random_identities, RandomBackend};
use reeb_core::spectral::{average_field, poisson_field, SpectralPlan};

fn check_identities(backend: RandomBackend, seed: u64) -> Result<(), TestCaseError> {
    let case = random_case(backend, seed);
    for (name, residual, tol) in random_identities(&case) {
        prop_assert!(residual <= tol, "{name}: {residual:e} > {tol:e} (seed {seed})");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frame_identities(seed in any::<u64>()) {
        check_identities(RandomBackend::Frame, seed)?;
    }

    #[test]
    fn grid_identities(seed in any::<u64>()) {
        check_identities(RandomBackend::Grid, seed)?;
    }
}

fn mode() -> impl Strategy<Value = [i32; 3]> {
    [-2i32..=2, -2i32..=2, -2i32..=2]
}

fn trig() -> impl Strategy<Value = TrigPoly> {
    prop::collection::vec((mode(), -1.0f64..1.0, any::<bool>()), 1..5).prop_map(|terms| {
        terms.into_iter().fold(ScalarField::zero(), |acc, (n, c, cos)| {
            acc + ScalarField::Trig(if cos { TrigPoly::cos_mode(n, c) } else { TrigPoly::sin_mode(n, c) })
        })
    })
    .prop_map(|f| match f.simplified() {
        ScalarField::Trig(p) => p,
        other => TrigPoly::constant(other.mean()),
    })
}

fn periods() -> impl Strategy<Value = [f64; 3]> {
    [0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0]
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spectral_partial_matches_analytic(p in trig(), l in periods(), axis in 0usize..3) {
        let plan = SpectralPlan::new(16, l, false);
        let samples = plan.sample(|x| p.eval(x, l));
        let want = plan.sample(|x| p.partial(axis, l[axis]).eval(x, l));
        let got = plan.partial(&samples, axis);
        prop_assert!(sup_diff(&got, &want) <= 1e-10 * (1.0 + p.l1()) / l[axis]);
    }

    #[test]
    fn flow_average_is_idempotent(p in trig(), l in periods(), axis in 0usize..3) {
        let plan = SpectralPlan::new(8, l, false);
        let f = ScalarField::Samples(plan.sample(|x| p.eval(x, l)));
        let once = average_field(Some(&plan), &f, axis);
        let twice = average_field(Some(&plan), &once, axis);
        prop_assert!((&once - &twice).sup_norm() <= 1e-14 * (1.0 + p.l1()));
        let exact = average_field(None, &ScalarField::Trig(p.clone()), axis);
        let exact_twice = average_field(None, &exact, axis);
        prop_assert_eq!(&exact, &exact_twice);
    }

    #[test]
    fn poisson_inverts_the_transverse_laplacian(p in trig(), l in periods(), fiber in 0usize..3) {
        // basic, zero transverse mean: drop the fiber dependence and the mean
        let rho = p.average_axis(fiber).map_modes(|m, c| {
            if (0..3).filter(|a| *a != fiber).all(|a| m[a] == 0) { Default::default() } else { c }
        });
        let grid = Manifold::grid(GridChart::new(16, l).unwrap());
        let samples = ScalarField::Samples(grid.plan().unwrap().sample(|x| rho.eval(x, l)));
        let frame = Manifold::frame(FrameAlgebra::abelian(3), Some(l), 1.0);
        for (mf, field) in [(&grid, samples), (&frame, ScalarField::Trig(rho.clone()))] {
            let psi = poisson_field(mf.plan(), l, &field, fiber, 1e-12).unwrap();
            let lap: ScalarField = (0..3)
                .filter(|a| *a != fiber)
                .map(|a| mf.partial(a, &mf.partial(a, &psi)))
                .sum();
            prop_assert!((&lap - &field).sup_norm() <= 1e-9 * (1.0 + rho.l1()));
        }
    }

    #[test]
    fn exact_trig_d_squared_vanishes(comps in prop::collection::vec(trig(), 3), l in periods()) {
        let mf = Manifold::frame(FrameAlgebra::abelian(3), Some(l), 1.0);
        let a = KForm::new(3, 1, comps.into_iter().map(|p| ScalarField::Trig(p).simplified()).collect());
        let dd = exterior_derivative(&mf, &exterior_derivative(&mf, &a).unwrap()).unwrap();
        prop_assert!(dd.sup_norm() <= 1e-10);
    }

    #[test]
    fn algebra_validation_is_idempotent(which in 0usize..3, s in 0.1f64..3.0) {
        let alg = match which {
            0 => FrameAlgebra::abelian(3),
            1 => FrameAlgebra::heisenberg(),
            _ => FrameAlgebra::su2(),
        };
        let scaled: Vec<f64> = alg.raw().iter().map(|c| c * s).collect();
        let once = validate_frame_algebra(3, scaled).unwrap();
        let twice = validate_frame_algebra(3, once.raw().to_vec()).unwrap();
        prop_assert_eq!(once, twice);
    }
}
