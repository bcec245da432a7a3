//! Causal character, conformal factor and the conformal normalization that makes
//! a timelike conformal field a unit Killing field.

use serde::Serialize;
use thiserror::Error;

use crate::exterior::{inner, lie_derivative_metric, ExteriorError, FieldMatrix, Metric, Signature, VectorField};
use crate::field::{FieldError, ScalarField};
use crate::manifold::Manifold;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Causal {
    Timelike,
    Mixed,
    NonTimelike,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalReport {
    pub character: Causal,
    pub min: f64,
    pub argmin: [f64; 3],
    pub max: f64,
    pub argmax: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConformalReport {
    pub sigma: ScalarField,
    pub residual: f64,
    pub threshold: f64,
    pub lie_norm: f64,
    pub is_killing: bool,
    pub is_timelike: bool,
    pub norm_min: f64,
    pub norm_max: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("field is not timelike: max g(R,R) = {max:e} at {at:?}")]
    NotTimelike { max: f64, at: [f64; 3] },
    #[error("field is not conformal: residual {:e} exceeds {:e}", .0.residual, .0.threshold)]
    NotConformal(Box<ConformalReport>),
    #[error("expected a Lorentzian metric")]
    NotLorentzian,
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Classifies `g(R, R)` over every sample or frame point.
pub fn causal_character(mf: &Manifold, r: &VectorField, g: &Metric) -> CausalReport {
    let n2 = inner(g, r, r);
    let (min, argmin, max, argmax) = mf.extrema(&n2);
    let character = if max < 0.0 {
        Causal::Timelike
    } else if min < 0.0 {
        Causal::Mixed
    } else {
        Causal::NonTimelike
    };
    CausalReport { character, min, argmin, max, argmax }
}

/// Componentwise inner product `Σ_ij A_ij B_ij`.
fn frobenius(a: &FieldMatrix, b: &FieldMatrix) -> ScalarField {
    a.entries()
        .iter()
        .zip(b.entries())
        .filter(|(x, y)| !x.is_exact_zero() && !y.is_exact_zero())
        .map(|(x, y)| x * y)
        .sum()
}

/// `σ = ⟨L_R g, g⟩ / ⟨g, g⟩` and the residual `‖L_R g − σ g‖`.
pub fn conformal_factor(mf: &Manifold, r: &VectorField, g: &Metric) -> Result<ConformalReport, ConformalError> {
    let lie = lie_derivative_metric(mf, r, g);
    let lie_norm = lie.sup_norm();
    let sigma = frobenius(&lie, g.tensor()).try_div(&frobenius(g.tensor(), g.tensor()))?;
    let residual = lie.sub(&g.tensor().scale_by(&sigma)).sup_norm();
    let tol = mf.tol();
    let threshold = tol.max(1e-6 * lie_norm);
    let causal = causal_character(mf, r, g);
    let report = ConformalReport {
        is_killing: sigma.sup_norm() <= tol && residual <= tol,
        sigma,
        residual,
        threshold,
        lie_norm,
        is_timelike: causal.character == Causal::Timelike,
        norm_min: causal.min,
        norm_max: causal.max,
    };
    if residual > threshold {
        return Err(ConformalError::NotConformal(Box::new(report)));
    }
    Ok(report)
}

/// Result of [`normalize_conformal`], with the checks it performed.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub metric: Metric,
    pub report: ConformalReport,
    /// `max |g̃(R,R) + 1|`.
    pub unit_residual: f64,
    /// `‖L_R g̃‖`.
    pub killing_residual: f64,
}

/// `g̃ = −g / g(R, R)`.
pub fn normalize_conformal(mf: &Manifold, g: &Metric, r: &VectorField) -> Result<Normalized, ConformalError> {
    if g.signature() != Signature::Lorentzian {
        return Err(ConformalError::NotLorentzian);
    }
    let causal = causal_character(mf, r, g);
    if causal.character != Causal::Timelike {
        return Err(ConformalError::NotTimelike { max: causal.max, at: causal.argmax });
    }
    let report = conformal_factor(mf, r, g)?;
    let factor = -inner(g, r, r).recip()?;
    let metric = Metric::new(g.tensor().scale_by(&factor), Signature::Lorentzian);
    let unit_residual = (inner(&metric, r, r) + ScalarField::Const(1.0)).sup_norm();
    let killing_residual = lie_derivative_metric(mf, r, &metric).sup_norm();
    Ok(Normalized { metric, report, unit_residual, killing_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{FrameAlgebra, GridChart};
    use std::f64::consts::PI;

    fn flat() -> (Manifold, Metric) {
        let mf = Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0);
        (mf, Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian))
    }

    #[test]
    fn causal_examples() {
        let (mf, g) = flat();
        let c = causal_character(&mf, &VectorField::basis(3, 0), &g);
        assert_eq!(c.character, Causal::Timelike);
        assert_eq!((c.min, c.max), (-1.0, -1.0));
        assert_eq!(causal_character(&mf, &VectorField::basis(3, 1), &g).character, Causal::NonTimelike);
        let h = Manifold::frame(FrameAlgebra::heisenberg(), None, 1.0);
        let gh = Metric::diagonal(&[1.0, 1.0, -1.0], Signature::Lorentzian);
        assert_eq!(causal_character(&h, &VectorField::basis(3, 2), &gh).character, Causal::Timelike);
    }

    #[test]
    fn flat_is_killing_and_already_normal() {
        let (mf, g) = flat();
        let n = normalize_conformal(&mf, &g, &VectorField::basis(3, 0)).unwrap();
        assert!(n.report.is_killing);
        assert_eq!(n.metric, g);
    }

    #[test]
    fn warped_sigma_on_grid() {
        let mf = Manifold::grid(GridChart::new(32, [1.0; 3]).unwrap());
        let plan = mf.plan().unwrap();
        let w = ScalarField::Samples(plan.sample(|p| (0.6 * (2.0 * PI * p[0]).sin()).exp()));
        let g = Metric::new(
            FieldMatrix::from_fn(3, |i, j| if i != j { 0.0.into() } else if i == 0 { -&w } else { w.clone() }),
            Signature::Lorentzian,
        );
        let r = VectorField::basis(3, 0);
        let rep = conformal_factor(&mf, &r, &g).unwrap();
        let want = plan.sample(|p| 2.0 * 0.3 * 2.0 * PI * (2.0 * PI * p[0]).cos());
        let ScalarField::Samples(s) = &rep.sigma else { panic!() };
        let err = s.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(!rep.is_killing);
        let n = normalize_conformal(&mf, &g, &r).unwrap();
        let flat = Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian);
        assert!(n.metric.tensor().sub(flat.tensor()).sup_norm() < 1e-12);
    }

    #[test]
    fn shear_field_is_not_conformal() {
        let mf = Manifold::grid(GridChart::new(16, [1.0; 3]).unwrap());
        let plan = mf.plan().unwrap();
        let g = Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian);
        let r = VectorField::new(vec![
            1.0.into(),
            0.0.into(),
            ScalarField::Samples(plan.sample(|p| 0.2 * (2.0 * PI * p[1]).sin())),
        ]);
        match conformal_factor(&mf, &r, &g) {
            Err(ConformalError::NotConformal(rep)) => assert!(rep.residual > 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spacelike_is_rejected_before_normalizing() {
        let (mf, g) = flat();
        assert!(matches!(
            normalize_conformal(&mf, &g, &VectorField::basis(3, 1)),
            Err(ConformalError::NotTimelike { .. })
        ));
    }
}
