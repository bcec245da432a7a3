//! Invariant suite: every residual the pipeline certifies on every bundled
//! fixture, extra identities on the produced objects, and randomized
//! exterior-calculus identities on both backends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{product_kahler, Flavor, KahlerConvention};
use crate::exterior::{
    exterior_derivative, flat, interior_product, lie_derivative_form, sharp, wedge, FieldMatrix, KForm, Metric,
    Signature, VectorField,
};
use crate::field::{ScalarField, TrigPoly};
use crate::fixtures;
use crate::manifold::{FrameAlgebra, GridChart, Manifold};
use crate::pipeline::{run_pipeline_text, Outcome, RunConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub subject: String,
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Entry {
    fn new(subject: &str, name: &str, residual: f64, tol: f64) -> Self {
        Self { subject: subject.into(), name: name.into(), residual, tol, passed: residual.is_finite() && residual <= tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomSummary {
    pub backend: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest `residual / tol` over all identities and cases.
    pub worst_ratio: f64,
    pub worst: Option<Entry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub entries: Vec<Entry>,
    pub random: Vec<RandomSummary>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed) && self.random.iter().all(|r| r.failures == 0)
    }
}

pub const DEFAULT_RANDOM_CASES: usize = 1000;
pub const DEFAULT_SEED: u64 = 0x5eed_3a5a;

pub fn run_selftest(random_cases: usize, seed: u64) -> SelftestReport {
    let fx = fixtures::all();
    let mut entries: Vec<Entry> = fx.par_iter().map(fixture_entries).flatten().collect();
    entries.sort_by(|a, b| a.subject.cmp(&b.subject));
    let random = [RandomBackend::Frame, RandomBackend::Grid]
        .into_par_iter()
        .map(|b| random_suite(b, random_cases, seed))
        .collect();
    SelftestReport { entries, random }
}

fn fixture_entries(f: &fixtures::Fixture) -> Vec<Entry> {
    let cfg = RunConfig { source: f.name.clone(), ..Default::default() };
    let out = run_pipeline_text(&f.toml, &cfg);
    let s = f.name.as_str();
    let mut v = vec![Entry::new(
        s,
        "exit code matches expectation",
        if out.exit_code() == f.expected.exit_code { 0.0 } else { 1.0 },
        0.0,
    )];
    if f.expected.stage.is_some() {
        let stage = out.report.failure.as_ref().map(|x| x.stage);
        v.push(Entry::new(s, "fails at the expected stage", if stage == f.expected.stage { 0.0 } else { 1.0 }, 0.0));
        return v;
    }
    v.extend(out.report.checks.iter().map(|c| Entry::new(s, &format!("{}: {}", c.stage.name(), c.name), c.residual, c.tol)));
    v.extend(object_identities(s, &out));
    v
}

/// Identities on the objects the pipeline produced, beyond its own checks.
fn object_identities(s: &str, out: &Outcome) -> Vec<Entry> {
    let art = &out.artifacts;
    let (Some(spec), Some(g_hat), Some(shs), Some(acs)) = (&art.spec, &art.g_hat, &art.shs, &art.structure) else {
        return vec![Entry::new(s, "pipeline produced all objects", 1.0, 0.0)];
    };
    let mf = &spec.manifold;
    let tol = mf.tol();
    let r = &spec.field;
    let mut v = Vec::new();
    let dd = exterior_derivative(mf, &shs.d_theta).map(|x| x.sup_norm()).unwrap_or(f64::NAN);
    v.push(Entry::new(s, "d d theta = 0", dd, 10.0 * tol));
    let cartan = || -> Result<f64, crate::exterior::ExteriorError> {
        let lhs = lie_derivative_form(mf, r, &shs.theta);
        let rhs = &interior_product(r, &shs.d_theta)? + &exterior_derivative(mf, &interior_product(r, &shs.theta)?)?;
        Ok((&lhs - &rhs).sup_norm())
    };
    v.push(Entry::new(s, "Cartan: L_R theta = i_R d theta + d i_R theta", cartan().unwrap_or(f64::NAN), 10.0 * tol));
    let leibniz = || -> Result<f64, crate::exterior::ExteriorError> {
        let eta = &acs.eta;
        let lhs = exterior_derivative(mf, &wedge(&shs.theta, eta)?)?;
        let rhs = &wedge(&shs.d_theta, eta)? - &wedge(&shs.theta, &exterior_derivative(mf, eta)?)?;
        Ok((&lhs - &rhs).sup_norm())
    };
    v.push(Entry::new(s, "Leibniz: d(theta ^ eta)", leibniz().unwrap_or(f64::NAN), 10.0 * tol));
    let musical = sharp(&flat(r, g_hat), g_hat).map(|x| (&x - r).sup_norm()).unwrap_or(f64::NAN);
    v.push(Entry::new(s, "musical round trip on R", musical, tol));
    if acs.flavor == Flavor::Cosymplectic && !mf.is_grid() {
        for (a, b) in [(0.0, 1.0), (0.5, 2.0), (-1.3, 0.7)] {
            match product_kahler(mf, acs, a, b, KahlerConvention::Compatible) {
                Ok(pk) => {
                    let tag = |n: &str| format!("product Kähler (a={a}, b={b}): {n}");
                    v.push(Entry::new(s, &tag("J^2 = -Id"), pk.j_squared, 1e-12));
                    v.push(Entry::new(s, &tag("G symmetric"), pk.g_symmetry, 1e-12));
                    v.push(Entry::new(s, &tag("G positive definite"), (-pk.g_min_eigenvalue).max(0.0) + if pk.g_min_eigenvalue > 0.0 { 0.0 } else { 1.0 }, 0.0));
                    v.push(Entry::new(s, &tag("G(J.,J.) = G"), pk.g_compatibility, 1e-12));
                    v.push(Entry::new(s, &tag("omega_K antisymmetric"), pk.omega_antisymmetry, 1e-12));
                    v.push(Entry::new(s, &tag("d omega_K = 0"), pk.d_omega, 1e-10));
                }
                // non-constant structures are outside the product construction
                Err(crate::classify::ClassifyError::NonConstant) => {}
                Err(e) => v.push(Entry::new(s, &format!("product Kähler: {e}"), 1.0, 0.0)),
            }
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomBackend {
    Frame,
    Grid,
}

/// Random data for one property case.
pub struct RandomCase {
    pub manifold: Manifold,
    pub f: ScalarField,
    pub a: KForm,
    pub b: KForm,
    pub c: KForm,
    pub x: VectorField,
    pub metric: Metric,
}

// modes up to 1 keep every product in the identities below Nyquist at N = 8
const GRID_N: usize = 8;

fn random_trig(rng: &mut ChaCha8Rng, max_mode: i32, terms: usize, amp: f64) -> TrigPoly {
    let mut p = ScalarField::Trig(TrigPoly::constant(rng.random_range(-amp..amp)));
    for _ in 0..terms {
        let n = [
            rng.random_range(-max_mode..=max_mode),
            rng.random_range(-max_mode..=max_mode),
            rng.random_range(-max_mode..=max_mode),
        ];
        let c = rng.random_range(-amp..amp);
        let term = if rng.random_bool(0.5) { TrigPoly::cos_mode(n, c) } else { TrigPoly::sin_mode(n, c) };
        p = p + ScalarField::Trig(term);
    }
    match p.simplified() {
        ScalarField::Trig(t) => t,
        other => TrigPoly::constant(other.mean()),
    }
}

fn random_scalar(rng: &mut ChaCha8Rng, mf: &Manifold, periods: Option<[f64; 3]>) -> ScalarField {
    match (mf.plan(), periods) {
        (Some(plan), Some(l)) => {
            let p = random_trig(rng, 1, 3, 1.0);
            ScalarField::Samples(plan.sample(|x| p.eval(x, l)))
        }
        (None, Some(_)) => ScalarField::Trig(random_trig(rng, 2, 3, 1.0)).simplified(),
        _ => ScalarField::Const(rng.random_range(-1.0..1.0)),
    }
}

fn random_form(rng: &mut ChaCha8Rng, mf: &Manifold, periods: Option<[f64; 3]>, k: usize) -> KForm {
    let n = crate::exterior::multi_indices(3, k).len();
    KForm::new(3, k, (0..n).map(|_| random_scalar(rng, mf, periods)).collect())
}

/// Generates a case on the requested backend from `seed`.
pub fn random_case(backend: RandomBackend, seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let (manifold, per) = match backend {
        RandomBackend::Grid => {
            (Manifold::grid(GridChart::new(GRID_N, periods).expect("power of two")), Some(periods))
        }
        RandomBackend::Frame => match rng.random_range(0..4) {
            0 => (Manifold::frame(FrameAlgebra::abelian(3), Some(periods), 1.0), Some(periods)),
            1 => (Manifold::frame(FrameAlgebra::heisenberg(), None, 1.0), None),
            2 => (Manifold::frame(FrameAlgebra::su2(), None, 1.0), None),
            _ => {
                let s = rng.random_range(0.5..2.0);
                let mut c = vec![0.0; 27];
                // solvable unimodular algebra: [e3, e1] = s e1, [e3, e2] = -s e2
                for (i, j, k, v) in [(0, 2, 0, s), (0, 0, 2, -s), (1, 2, 1, -s), (1, 1, 2, s)] {
                    c[(i * 3 + j) * 3 + k] = v;
                }
                let alg = crate::manifold::validate_frame_algebra(3, c).expect("Jacobi holds");
                (Manifold::frame(alg, None, 1.0), None)
            }
        },
    };
    let f = random_scalar(&mut rng, &manifold, per);
    let a = random_form(&mut rng, &manifold, per, 1);
    let b = random_form(&mut rng, &manifold, per, 1);
    let c = random_form(&mut rng, &manifold, per, 2);
    let x = VectorField::new((0..3).map(|_| random_scalar(&mut rng, &manifold, per)).collect());
    // symmetric positive definite: I + small symmetric perturbation, constant
    // unless the grid can invert it pointwise
    let metric = {
        let mut entries = vec![ScalarField::zero(); 9];
        for i in 0..3 {
            for j in i..3 {
                let base = if i == j { 2.0 } else { 0.0 };
                let v = if manifold.is_grid() {
                    let plan = manifold.plan().expect("grid");
                    let p = random_trig(&mut rng, 1, 2, 0.25);
                    ScalarField::Samples(plan.sample(|q| base + p.eval(q, periods)))
                } else {
                    ScalarField::Const(base + rng.random_range(-0.25..0.25))
                };
                entries[i * 3 + j] = v.clone();
                entries[j * 3 + i] = v;
            }
        }
        Metric::new(FieldMatrix::from_fn(3, |i, j| entries[i * 3 + j].clone()), Signature::Riemannian)
    };
    RandomCase { manifold, f, a, b, c, x, metric }
}

/// Residuals of d² = 0, Cartan, graded Leibniz and the musical round trip,
/// each paired with its tolerance.
pub fn random_identities(case: &RandomCase) -> Vec<(&'static str, f64, f64)> {
    let mf = &case.manifold;
    let d = |a: &KForm| exterior_derivative(mf, a).expect("degree below dimension");
    let scale = [&case.a, &case.b, &case.c].iter().map(|x| x.sup_norm()).fold(1.0, f64::max)
        * case.x.sup_norm().max(1.0);
    // grid identities lose a few digits to spectral round-off; frame ones are exact up to rounding
    let tol = if mf.is_grid() { 1e-9 } else { 1e-11 } * scale * scale;
    let mut out = Vec::new();
    let f = KForm::function(3, case.f.clone());
    out.push(("d d f = 0", d(&d(&f)).sup_norm(), tol));
    out.push(("d d a = 0", d(&d(&case.a)).sup_norm(), tol));
    for (name, form) in [("Cartan on 1-forms", &case.a), ("Cartan on 2-forms", &case.c)] {
        let lhs = lie_derivative_form(mf, &case.x, form);
        let ix = interior_product(&case.x, form).expect("degree > 0");
        let rhs = &interior_product(&case.x, &d(form)).expect("degree > 0") + &d(&ix);
        out.push((name, (&lhs - &rhs).sup_norm(), tol));
    }
    let ab = wedge(&case.a, &case.b).expect("fits");
    let lhs = d(&ab);
    let rhs = &wedge(&d(&case.a), &case.b).expect("fits") - &wedge(&case.a, &d(&case.b)).expect("fits");
    out.push(("graded Leibniz for 1-forms", (&lhs - &rhs).sup_norm(), tol));
    let fa = wedge(&f, &case.c).expect("fits");
    let lhs = d(&fa);
    let rhs = &wedge(&d(&f), &case.c).expect("fits") + &wedge(&f, &d(&case.c)).expect("fits");
    out.push(("graded Leibniz for f and 2-forms", (&lhs - &rhs).sup_norm(), tol));
    let back = sharp(&flat(&case.x, &case.metric), &case.metric).expect("positive definite");
    out.push(("musical round trip", (&back - &case.x).sup_norm(), 1e-12 * scale));
    out
}

fn random_suite(backend: RandomBackend, cases: usize, seed: u64) -> RandomSummary {
    let name = match backend {
        RandomBackend::Frame => "frame",
        RandomBackend::Grid => "grid",
    };
    let results: Vec<(usize, f64, Option<Entry>)> = (0..cases as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i);
            let case = random_case(backend, s);
            let mut fails = 0;
            let mut worst = (0.0_f64, None);
            for (id, res, tol) in random_identities(&case) {
                let ratio = if res.is_finite() { res / tol } else { f64::INFINITY };
                if ratio.is_nan() || ratio > 1.0 {
                    fails += 1;
                }
                if ratio > worst.0 || worst.1.is_none() {
                    worst = (ratio, Some(Entry::new(&format!("{name} case {i}"), id, res, tol)));
                }
            }
            (fails, worst.0, worst.1)
        })
        .collect();
    let failures = results.iter().map(|r| r.0).sum();
    let (worst_ratio, worst) = results
        .into_iter()
        .map(|r| (r.1, r.2))
        .fold((0.0, None), |acc, x| if x.0 > acc.0 || acc.1.is_none() { x } else { acc });
    RandomSummary { backend: name, cases, failures, worst_ratio, worst }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_cases_are_reproducible() {
        let a = random_case(RandomBackend::Grid, 7);
        let b = random_case(RandomBackend::Grid, 7);
        assert_eq!(a.f, b.f);
        assert_eq!(a.c, b.c);
    }

    #[test]
    fn small_random_suite_passes() {
        for b in [RandomBackend::Frame, RandomBackend::Grid] {
            let s = random_suite(b, 20, 1);
            assert_eq!(s.failures, 0, "{s:?}");
        }
    }
}
