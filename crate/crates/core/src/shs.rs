//! Riemannian metric from a unit Killing field, and the stable Hamiltonian
//! structure `(θ, Ω)` it induces.

use thiserror::Error;

use crate::exterior::{
    covariant_derivative, exterior_derivative, flat, inner, interior_product, lie_derivative_form,
    lie_derivative_metric, tensor_product, volume_form, wedge, ExteriorError, FieldMatrix, KForm, Metric, Signature,
    VectorField,
};
use crate::field::{FieldError, ScalarField};
use crate::manifold::{Manifold, Orientation};

/// One named residual compared with its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Self { name: name.into(), residual, tol }
    }

    pub fn passed(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tol
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShsError {
    #[error("precondition `{gate}` failed: residual {residual:e}")]
    PreconditionViolated { gate: &'static str, residual: f64 },
    #[error("SHS axiom `{axiom}` violated: residual {residual:e} > {tol:e}")]
    ShsViolation { axiom: String, residual: f64, tol: f64 },
    #[error("dθ is not proportional to Ω: residual {residual:e}")]
    KernelInclusionFails { residual: f64 },
    #[error("Reeb system is ill-conditioned (min |det| = {det:e})")]
    NonUniqueSolve { det: f64 },
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Minimum eigenvalue of a metric over the evaluation lattice.
pub fn min_eigenvalue(mf: &Manifold, g: &Metric) -> f64 {
    let n = g.dim();
    let comps: Vec<&ScalarField> = g.tensor().entries().iter().collect();
    let lv = mf.lattice(&comps);
    (0..lv.points.len())
        .map(|p| {
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| lv.values[i * n + j][p]);
            nalgebra::SymmetricEigen::new(m).eigenvalues.min()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `g_R = g̃ + 2 α_L ⊗ α_L` with `α_L = g̃(R, ·)`.
pub fn riemannianize(mf: &Manifold, gt: &Metric, r: &VectorField) -> Result<Metric, ShsError> {
    let tol = mf.tol();
    let unit = (inner(gt, r, r) + ScalarField::Const(1.0)).sup_norm();
    if unit > tol {
        return Err(ShsError::PreconditionViolated { gate: "g̃(R,R) = -1", residual: unit });
    }
    let killing = lie_derivative_metric(mf, r, gt).sup_norm();
    if killing > 10.0 * tol {
        return Err(ShsError::PreconditionViolated { gate: "L_R g̃ = 0", residual: killing });
    }
    let alpha = flat(r, gt);
    let t = gt.tensor().add(&tensor_product(&alpha, &alpha).scale(2.0));
    let g_r = Metric::new(t, Signature::Riemannian);
    let lam = min_eigenvalue(mf, &g_r);
    if lam <= tol {
        return Err(ShsError::PreconditionViolated { gate: "g_R positive definite", residual: lam });
    }
    Ok(g_r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicReport {
    pub geodesic: Check,
    pub killing: Check,
    pub unit: Check,
}

impl GeodesicReport {
    pub fn passed(&self) -> bool {
        self.geodesic.passed() && self.killing.passed() && self.unit.passed()
    }

    pub fn checks(&self) -> [&Check; 3] {
        [&self.geodesic, &self.killing, &self.unit]
    }
}

/// Reports `‖∇_R R‖`, `‖L_R ĝ‖` and `|ĝ(R,R) − 1|`.
pub fn geodesic_unit_check(mf: &Manifold, g: &Metric, r: &VectorField) -> Result<GeodesicReport, ShsError> {
    let tol = mf.tol();
    let nabla = covariant_derivative(mf, r, r, g)?;
    let geo = inner(g, &nabla, &nabla).sup_norm().sqrt();
    let killing = lie_derivative_metric(mf, r, g).sup_norm();
    let unit = (inner(g, r, r) - ScalarField::Const(1.0)).sup_norm();
    Ok(GeodesicReport {
        geodesic: Check::new("nabla_R R = 0", geo, 10.0 * tol),
        killing: Check::new("L_R g_hat = 0", killing, 10.0 * tol),
        unit: Check::new("g_hat(R,R) = 1", unit, tol),
    })
}

/// Stable Hamiltonian structure together with the residuals that certify it.
#[derive(Clone, Debug)]
pub struct Shs {
    pub theta: KForm,
    pub omega: KForm,
    pub tau: ScalarField,
    pub vol: KForm,
    pub r: VectorField,
    pub d_theta: KForm,
    pub checks: Vec<Check>,
}

impl Shs {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Pointwise least squares `τ = ⟨dθ, Ω⟩ / ⟨Ω, Ω⟩`; returns `(τ, ‖dθ − τΩ‖)`.
pub fn stabilizing_function(d_theta: &KForm, omega: &KForm, tol: f64) -> Result<(ScalarField, f64), ShsError> {
    let num: ScalarField = d_theta
        .comps()
        .iter()
        .zip(omega.comps())
        .filter(|(a, b)| !a.is_exact_zero() && !b.is_exact_zero())
        .map(|(a, b)| a * b)
        .sum();
    let den: ScalarField = omega.comps().iter().filter(|b| !b.is_exact_zero()).map(|b| b * b).sum();
    let tau = num.try_div(&den)?;
    let residual = (d_theta - &omega.scale_by(&tau)).sup_norm();
    let scale = d_theta.sup_norm().max(1.0);
    if residual > tol * scale {
        return Err(ShsError::KernelInclusionFails { residual });
    }
    Ok((tau, residual))
}

/// `θ = ĝ(R, ·)`, `vol = ±√det ĝ e^{123}`, `Ω = ι_R vol`, and all SHS checks.
pub fn build_theta_omega(
    mf: &Manifold,
    g: &Metric,
    r: &VectorField,
    orientation: Orientation,
) -> Result<Shs, ShsError> {
    let tol = mf.tol();
    let theta = flat(r, g);
    let vol = volume_form(g, orientation.sign())?;
    let omega = interior_product(r, &vol)?;
    let d_theta = exterior_derivative(mf, &theta)?;
    let (tau, tau_res) = stabilizing_function(&d_theta, &omega, tol)?;

    let mut checks = Vec::new();
    checks.push(Check::new("d Omega = 0", exterior_derivative(mf, &omega)?.sup_norm(), 10.0 * tol));
    let tw = wedge(&theta, &omega)?;
    checks.push(Check::new("theta ^ Omega = vol", (&tw - &vol).sup_norm(), tol));
    let (min_vol, _, _, _) = mf.extrema(&tw.comps()[0].scale(orientation.sign()));
    // positivity relative to the chosen orientation form
    checks.push(Check::new("theta ^ Omega > 0", if min_vol > 0.0 { 0.0 } else { -min_vol + f64::MIN_POSITIVE }, 0.0));
    checks.push(Check::new("d theta = tau Omega", tau_res, 10.0 * tol));
    checks.push(Check::new(
        "theta(R) = 1",
        (interior_product(r, &theta)?.comps()[0].clone() - ScalarField::Const(1.0)).sup_norm(),
        tol,
    ));
    checks.push(Check::new("i_R Omega = 0", interior_product(r, &omega)?.sup_norm(), tol));
    checks.push(Check::new("i_R d theta = 0", interior_product(r, &d_theta)?.sup_norm(), 10.0 * tol));
    checks.push(Check::new("L_R theta = 0", lie_derivative_form(mf, r, &theta).sup_norm(), 10.0 * tol));
    checks.push(Check::new("L_R Omega = 0", lie_derivative_form(mf, r, &omega).sup_norm(), 10.0 * tol));
    checks.push(Check::new("L_R (theta ^ Omega) = 0", lie_derivative_form(mf, r, &tw).sup_norm(), 10.0 * tol));
    checks.push(Check::new("L_R tau = 0", mf.derivative(r, &tau).sup_norm(), 10.0 * tol));

    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(ShsError::ShsViolation { axiom: bad.name.clone(), residual: bad.residual, tol: bad.tol });
    }
    Ok(Shs { theta, omega, tau, vol, r: r.clone(), d_theta, checks })
}

/// Solves `ι_R Ω = 0`, `θ(R) = 1` pointwise through the normal equations
/// `(ΩᵀΩ + θθᵀ) R = θ`, where `Ω_ij` is the matrix of `Ω`.
pub fn reeb_field(theta: &KForm, omega: &KForm) -> Result<VectorField, ShsError> {
    let n = theta.dim();
    let om = FieldMatrix::from_fn(n, |i, j| omega.value(&[i, j]));
    let th = theta.comps();
    let a = FieldMatrix::from_fn(n, |i, j| {
        let mut acc = &th[i] * &th[j];
        for k in 0..n {
            let (x, y) = (om.get(k, i), om.get(k, j));
            if !x.is_exact_zero() && !y.is_exact_zero() {
                acc = acc + x * y;
            }
        }
        acc
    });
    let inv = a.inverse().map_err(|e| match e {
        ExteriorError::SingularMetricAtPoint { det } => ShsError::NonUniqueSolve { det },
        other => other.into(),
    })?;
    Ok(VectorField::new(inv.apply(th)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::FrameAlgebra;

    fn heis() -> (Manifold, Metric) {
        (
            Manifold::frame(FrameAlgebra::heisenberg(), None, 1.0),
            Metric::diagonal(&[1.0, 1.0, -1.0], Signature::Lorentzian),
        )
    }

    #[test]
    fn flat_riemannianization() {
        let mf = Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0);
        let g = Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian);
        let r = VectorField::basis(3, 0);
        let gr = riemannianize(&mf, &g, &r).unwrap();
        assert_eq!(gr, Metric::euclidean(3));
        let s = build_theta_omega(&mf, &gr, &r, Orientation::Positive).unwrap();
        assert_eq!(s.theta, KForm::basis(3, &[0]));
        assert_eq!(s.omega, KForm::basis(3, &[1, 2]));
        assert_eq!(s.tau, ScalarField::Const(0.0));
    }

    #[test]
    fn heisenberg_shs() {
        let (mf, g) = heis();
        let r = VectorField::basis(3, 2);
        let gr = riemannianize(&mf, &g, &r).unwrap();
        assert_eq!(gr, Metric::euclidean(3));
        assert!(geodesic_unit_check(&mf, &gr, &r).unwrap().passed());
        let s = build_theta_omega(&mf, &gr, &r, Orientation::Positive).unwrap();
        assert_eq!(s.theta, KForm::basis(3, &[2]));
        assert_eq!(s.omega, KForm::basis(3, &[0, 1]));
        assert_eq!(s.d_theta, s.omega);
        assert_eq!(s.tau, ScalarField::Const(1.0));
        assert_eq!(reeb_field(&s.theta, &s.omega).unwrap(), r);
    }

    #[test]
    fn scaled_metric_is_flagged() {
        let (mf, _) = heis();
        let g = Metric::diagonal(&[1.0, 1.0, 4.0], Signature::Riemannian);
        let rep = geodesic_unit_check(&mf, &g, &VectorField::basis(3, 2)).unwrap();
        assert!(!rep.unit.passed());
        assert!((rep.unit.residual - 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_timelike_precondition() {
        let (mf, g) = heis();
        assert!(matches!(
            riemannianize(&mf, &g, &VectorField::basis(3, 0)),
            Err(ShsError::PreconditionViolated { .. })
        ));
    }

    #[test]
    fn stabilizing_function_rejects_non_proportional() {
        let d = KForm::basis(3, &[0, 1]);
        let om = KForm::basis(3, &[1, 2]);
        assert!(matches!(stabilizing_function(&d, &om, 1e-10), Err(ShsError::KernelInclusionFails { .. })));
    }
}
