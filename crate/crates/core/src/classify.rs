//! Case split on `k`, the almost contact metric structure, normality, the `χ`
//! isomorphism, the product Kähler structure and mapping-torus fixtures.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::exterior::{
    bracket, exterior_derivative, interior_product, tensor_product, wedge, Endomorphism, ExteriorError, FieldMatrix,
    KForm, Metric, Signature, VectorField,
};
use crate::expr::Expr;
use crate::field::{FieldError, ScalarField};
use crate::manifold::Manifold;
use crate::shs::{Check, Shs};
use crate::basic::BasicDecomposition;
use crate::specfile::{RawSpec, SpecError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("case check `{equation}` failed: residual {residual:e}")]
    CaseCheckFailed { equation: String, residual: f64 },
    #[error("compatibility identity `{identity}` failed: residual {residual:e}")]
    CompatibilityFailure { identity: String, residual: f64 },
    #[error("χ is singular at a point (|det| = {det:e})")]
    SingularAtPoint { det: f64 },
    #[error("b must be nonzero")]
    ZeroB,
    #[error("structure must be co-Kähler")]
    NotCoKahler,
    #[error("the product construction needs constant structure tensors on a frame backend")]
    NonConstant,
    #[error("rotation angle {0} does not preserve the square lattice (must be a multiple of π/2)")]
    UnsupportedRotation(f64),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    #[serde(rename = "sasakian")]
    Sasakian,
    #[serde(rename = "co-kahler")]
    CoKahler,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Sasakian => "sasakian",
            Case::CoKahler => "co-kahler",
        }
    }
}

/// For `k ≠ 0`: `η / k` is a contact form with `d(η/k) = Ω` and Reeb field `kR`.
/// Nothing is rescaled in place; the constants are only recorded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCertificate {
    pub k: f64,
    pub eta_scale: f64,
    pub reeb_scale: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub case: Case,
    pub k: f64,
    /// `θ̃` (co-Kähler) or `η` (Sasakian), both equal to `θ − α`.
    pub eta: KForm,
    pub d_eta: KForm,
    pub checks: Vec<Check>,
    pub certificate: Option<ScalingCertificate>,
}

/// Executes the case split on `k`.
pub fn classify(mf: &Manifold, shs: &Shs, dec: &BasicDecomposition) -> Result<Classification, ClassifyError> {
    let tol = mf.tol();
    let eta = &shs.theta - &dec.alpha;
    let d_eta = exterior_derivative(mf, &eta)?;
    let unit = (interior_product(&shs.r, &eta)?.comps()[0].clone() - ScalarField::Const(1.0)).sup_norm();
    let mut checks = vec![Check::new("eta(R) = 1", unit, tol)];
    let (case, certificate) = if dec.k.abs() <= tol {
        checks.push(Check::new("d theta~ = 0", d_eta.sup_norm(), 10.0 * tol));
        let top = wedge(&eta, &shs.omega)?;
        checks.push(Check::new("theta~ ^ Omega = vol", (&top - &shs.vol).sup_norm(), tol));
        (Case::CoKahler, None)
    } else {
        let k = dec.k;
        let res = (&d_eta - &shs.omega.scale(k)).sup_norm();
        checks.push(Check::new("d eta = k Omega", res, 10.0 * tol));
        let top = wedge(&eta, &d_eta)?;
        checks.push(Check::new("eta ^ d eta = k vol", (&top - &shs.vol.scale(k)).sup_norm(), 10.0 * tol));
        let (min, _, max, _) = mf.extrema(&top.comps()[0]);
        let nowhere_zero = min > 0.0 || max < 0.0;
        checks.push(Check::new("eta ^ d eta nowhere zero", if nowhere_zero { 0.0 } else { 1.0 }, 0.0));
        let cert = ScalingCertificate {
            k,
            eta_scale: 1.0 / k,
            reeb_scale: k,
            residual: (&d_eta.scale(1.0 / k) - &shs.omega).sup_norm(),
        };
        (Case::Sasakian, Some(cert))
    };
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(ClassifyError::CaseCheckFailed { equation: bad.name.clone(), residual: bad.residual });
    }
    Ok(Classification { case, k: dec.k, eta, d_eta, checks, certificate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Contact,
    Cosymplectic,
}

#[derive(Clone, Debug)]
pub struct AlmostContact {
    pub eta: KForm,
    pub xi: VectorField,
    pub phi: Endomorphism,
    pub metric: Metric,
    /// `Φ(X, Y) = g(X, φY)`.
    pub big_phi: KForm,
    pub flavor: Flavor,
    /// Contact constant: `dη = k Ω`.
    pub k: f64,
    /// Whether `ĝ` had to be adjusted so that `ξ^♭ = η` (only when `α ≠ 0`).
    pub metric_adjusted: bool,
    pub checks: Vec<Check>,
}

fn matrix_of_2form(a: &KForm) -> FieldMatrix {
    FieldMatrix::from_fn(a.dim(), |i, j| a.value(&[i, j]))
}

fn form_from_matrix(m: &FieldMatrix) -> KForm {
    let n = m.n();
    let comps = crate::exterior::multi_indices(n, 2).iter().map(|ij| m.get(ij[0], ij[1]).clone()).collect();
    KForm::new(n, 2, comps)
}

/// Builds `(η, ξ, φ, g)` with `ξ = R` and `φX = g^♯(ι_X Ω)`, `φR = 0`.
///
/// The metric is `g = ĝ − θ⊗θ + η⊗η`, which equals `ĝ` when `η = θ`; it keeps
/// `R` unit and Killing, has the same volume, and makes `η` the metric dual of `R`.
pub fn build_almost_contact(
    mf: &Manifold,
    eta: &KForm,
    r: &VectorField,
    g_hat: &Metric,
    theta: &KForm,
    omega: &KForm,
    k: f64,
) -> Result<AlmostContact, ClassifyError> {
    let tol = mf.tol();
    let n = eta.dim();
    let metric_adjusted = (eta - theta).sup_norm() > 0.0;
    let t = if metric_adjusted {
        g_hat.tensor().sub(&tensor_product(theta, theta)).add(&tensor_product(eta, eta))
    } else {
        g_hat.tensor().clone()
    };
    let metric = Metric::new(t, Signature::Riemannian);
    let inv = metric.inverse()?;
    let om = matrix_of_2form(omega);
    // column j of φ is g^{-1}(ι_{e_j} Ω), and (ι_{e_j} Ω)_l = Ω_jl
    let phi_m = FieldMatrix::from_fn(n, |i, j| {
        (0..n)
            .filter(|l| !inv.get(i, *l).is_exact_zero() && !om.get(j, *l).is_exact_zero())
            .map(|l| inv.get(i, l) * om.get(j, l))
            .sum()
    });
    let phi = Endomorphism(phi_m.clone());
    let gm = metric.tensor();
    let big_phi_m = gm.mul(&phi_m);
    let big_phi = form_from_matrix(&big_phi_m);

    let mut checks = Vec::new();
    let eta_xi = (interior_product(r, eta)?.comps()[0].clone() - ScalarField::Const(1.0)).sup_norm();
    checks.push(Check::new("eta(xi) = 1", eta_xi, tol));
    checks.push(Check::new("phi xi = 0", phi.apply(r).sup_norm(), tol));
    let eta_phi = (0..n)
        .map(|j| {
            let col = VectorField::new((0..n).map(|i| phi_m.get(i, j).clone()).collect());
            interior_product(&col, eta).unwrap().comps()[0].sup_norm()
        })
        .fold(0.0, f64::max);
    checks.push(Check::new("eta o phi = 0", eta_phi, tol));
    let eta_xi_m = FieldMatrix::from_fn(n, |i, j| r.component(i) * &eta.comps()[j]);
    let phi2 = phi_m.mul(&phi_m).add(&FieldMatrix::identity(n)).sub(&eta_xi_m);
    checks.push(Check::new("phi^2 = -I + eta (x) xi", phi2.sup_norm(), 10.0 * tol));
    let compat = phi_m.transpose().mul(gm).mul(&phi_m).sub(gm).add(&tensor_product(eta, eta));
    checks.push(Check::new("g(phi X, phi Y) = g(X,Y) - eta(X) eta(Y)", compat.sup_norm(), 10.0 * tol));
    checks.push(Check::new(
        "Phi antisymmetric",
        big_phi_m.add(&big_phi_m.transpose()).sup_norm(),
        10.0 * tol,
    ));
    let d_eta = exterior_derivative(mf, eta)?;
    let flavor = if k.abs() <= tol { Flavor::Cosymplectic } else { Flavor::Contact };
    match flavor {
        Flavor::Contact => {
            // with φ = ♯ ∘ ι_·Ω one has Φ = −Ω, so dη = kΩ reads dη + kΦ = 0
            checks.push(Check::new("d eta + k Phi = 0", (&d_eta + &big_phi.scale(k)).sup_norm(), 10.0 * tol));
            let top = wedge(eta, &d_eta)?;
            let (min, _, max, _) = mf.extrema(&top.comps()[0]);
            checks.push(Check::new(
                "eta ^ d eta nowhere zero",
                if min > 0.0 || max < 0.0 { 0.0 } else { 1.0 },
                0.0,
            ));
        }
        Flavor::Cosymplectic => {
            checks.push(Check::new("d eta = 0", d_eta.sup_norm(), 10.0 * tol));
            checks.push(Check::new("d Phi = 0", exterior_derivative(mf, &big_phi)?.sup_norm(), 10.0 * tol));
        }
    }
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(ClassifyError::CompatibilityFailure { identity: bad.name.clone(), residual: bad.residual });
    }
    Ok(AlmostContact {
        eta: eta.clone(),
        xi: r.clone(),
        phi,
        metric,
        big_phi,
        flavor,
        k,
        metric_adjusted,
        checks,
    })
}

/// `max ‖N_φ(e_i, e_j) + dη(e_i, e_j) ξ‖` over basis pairs, where
/// `N_φ(X,Y) = φ²[X,Y] + [φX,φY] − φ[φX,Y] − φ[X,φY]`.
///
/// The `dη` term has coefficient 1 because `dη` here carries no ½; the usual
/// `2 dη ⊗ ξ` assumes the ½ convention.
pub fn nijenhuis_normality(mf: &Manifold, acs: &AlmostContact) -> f64 {
    let n = acs.eta.dim();
    let d_eta = exterior_derivative(mf, &acs.eta).expect("degree 1 < dim");
    let phi = &acs.phi;
    let phi2 = phi.compose(phi);
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let x = VectorField::basis(n, i);
            let y = VectorField::basis(n, j);
            let px = phi.apply(&x);
            let py = phi.apply(&y);
            let nij = &(&phi2.apply(&bracket(mf, &x, &y)) + &bracket(mf, &px, &py))
                - &(&phi.apply(&bracket(mf, &px, &y)) + &phi.apply(&bracket(mf, &x, &py)));
            let term = acs.xi.scale_by(&d_eta.value(&[i, j]));
            worst = worst.max((&nij + &term).sup_norm());
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct ChiResult {
    pub inverse_of_lambda: VectorField,
    /// `‖χ(χ⁻¹(λ)) − λ‖`.
    pub roundtrip: f64,
}

/// `χ(v) = ι_v Ω + λ(v) λ`, inverted pointwise and applied to `λ`.
pub fn chi_isomorphism(lambda: &KForm, omega: &KForm) -> Result<ChiResult, ClassifyError> {
    let n = lambda.dim();
    let om = matrix_of_2form(omega);
    let l = lambda.comps();
    // χ(v)_j = Σ_i v^i (Ω_ij + λ_i λ_j), i.e. the matrix M_ji
    let m = FieldMatrix::from_fn(n, |j, i| om.get(i, j) + &(&l[i] * &l[j]));
    let inv = m.inverse().map_err(|e| match e {
        ExteriorError::SingularMetricAtPoint { det } => ClassifyError::SingularAtPoint { det },
        other => other.into(),
    })?;
    let v = VectorField::new(inv.apply(l));
    let back = KForm::new(n, 1, m.apply(v.comps()));
    let roundtrip = (&back - lambda).sup_norm();
    Ok(ChiResult { inverse_of_lambda: v, roundtrip })
}

/// Coefficient of `α(X₂)α(Y₂)` in `G_{a,b}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KahlerConvention {
    /// `a² + b² + 1`, as commonly printed.
    AsPrinted,
    /// `a² + b² − 1`, the value for which `G(J·, J·) = G` holds.
    Compatible,
}

#[derive(Clone, Debug)]
pub struct ProductKahler {
    pub j: FieldMatrix,
    pub g: FieldMatrix,
    pub omega_k: KForm,
    pub j_squared: f64,
    pub g_symmetry: f64,
    pub g_min_eigenvalue: f64,
    pub g_compatibility: f64,
    pub omega_antisymmetry: f64,
    pub d_omega: f64,
}

fn constants(m: &FieldMatrix) -> Option<Vec<f64>> {
    m.entries()
        .iter()
        .map(|x| if let ScalarField::Const(c) = x { Some(*c) } else { None })
        .collect()
}

/// `(J_{a,b}, G_{a,b})` on `M × M`, with the residuals of the Kähler identities.
pub fn product_kahler(
    mf: &Manifold,
    acs: &AlmostContact,
    a: f64,
    b: f64,
    convention: KahlerConvention,
) -> Result<ProductKahler, ClassifyError> {
    if b == 0.0 {
        return Err(ClassifyError::ZeroB);
    }
    if acs.flavor != Flavor::Cosymplectic {
        return Err(ClassifyError::NotCoKahler);
    }
    let n = acs.eta.dim();
    let phi = constants(acs.phi.matrix()).ok_or(ClassifyError::NonConstant)?;
    let g = constants(acs.metric.tensor()).ok_or(ClassifyError::NonConstant)?;
    let eta: Vec<f64> = acs.eta.comps().iter().map(|c| c.as_constant(0.0)).collect::<Option<_>>().ok_or(ClassifyError::NonConstant)?;
    let xi: Vec<f64> = acs.xi.comps().iter().map(|c| c.as_constant(0.0)).collect::<Option<_>>().ok_or(ClassifyError::NonConstant)?;
    if mf.is_grid() {
        return Err(ClassifyError::NonConstant);
    }
    let c22 = match convention {
        KahlerConvention::AsPrinted => a * a + b * b + 1.0,
        KahlerConvention::Compatible => a * a + b * b - 1.0,
    };
    let m = 2 * n;
    let xa = |i: usize, j: usize| xi[i] * eta[j];
    let mut jm = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut gm = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            jm[(i, j)] = phi[i * n + j] - a / b * xa(i, j);
            jm[(i, n + j)] = -(a * a + b * b) / b * xa(i, j);
            jm[(n + i, j)] = xa(i, j) / b;
            jm[(n + i, n + j)] = phi[i * n + j] + a / b * xa(i, j);
            gm[(i, j)] = g[i * n + j];
            gm[(i, n + j)] = a * eta[i] * eta[j];
            gm[(n + i, j)] = a * eta[i] * eta[j];
            gm[(n + i, n + j)] = g[i * n + j] + c22 * eta[i] * eta[j];
        }
    }
    let id = nalgebra::DMatrix::<f64>::identity(m, m);
    let j_squared = (&jm * &jm + &id).amax();
    let g_symmetry = (&gm - gm.transpose()).amax();
    let g_min_eigenvalue = nalgebra::SymmetricEigen::new(gm.clone()).eigenvalues.min();
    let g_compatibility = (jm.transpose() * &gm * &jm - &gm).amax();
    // ω_K(X, Y) = G(JX, Y), so ω_ij = (Jᵀ G)_ij
    let om = jm.transpose() * &gm;
    let omega_antisymmetry = (&om + om.transpose()).amax();
    let product = mf.product();
    let comps: Vec<f64> =
        crate::exterior::multi_indices(m, 2).iter().map(|ij| 0.5 * (om[(ij[0], ij[1])] - om[(ij[1], ij[0])])).collect();
    let omega_k = KForm::constant(m, 2, &comps);
    let d_omega = exterior_derivative(&product, &omega_k)?.sup_norm();
    let to_field = |x: &nalgebra::DMatrix<f64>| FieldMatrix::from_fn(m, |i, j| ScalarField::Const(x[(i, j)]));
    Ok(ProductKahler {
        j: to_field(&jm),
        g: to_field(&gm),
        omega_k,
        j_squared,
        g_symmetry,
        g_min_eigenvalue,
        g_compatibility,
        omega_antisymmetry,
        d_omega,
    })
}

/// Grid fixture for the mapping torus of a lattice rotation of the flat `T²`.
#[derive(Clone, Debug)]
pub struct MappingTorus {
    pub rho: f64,
    pub order: usize,
    pub toml: String,
    pub raw: RawSpec,
}

fn format_number(v: f64) -> String {
    format!("{v:?}")
}

/// Realizes `Σ_ρ` through its `order`-fold cover `T³`, whose deck transformation
/// `(t, x, y) ↦ (t + L_t, rot_ρ(x, y))` preserves all the data.
///
/// The metric is `e^{2u}(−dt² + dx² + dy²)` with a rotation-invariant `u`, so
/// `∂_t` is a timelike conformal (not Killing) field descending to `Σ_ρ`.
pub fn mapping_torus_builder(rho: f64, periods: [f64; 3], resolution: usize) -> Result<MappingTorus, ClassifyError> {
    let quarter = rho / (PI / 2.0);
    if !(0.0..4.0).contains(&(quarter + 1e-12)) || (quarter - quarter.round()).abs() > 1e-12 {
        return Err(ClassifyError::UnsupportedRotation(rho));
    }
    let q = quarter.round() as usize % 4;
    let order = match q {
        0 => 1,
        2 => 2,
        _ => 4,
    };
    if order == 4 && periods[1] != periods[2] {
        return Err(ClassifyError::UnsupportedRotation(rho));
    }
    let [lt, lx, ly] = periods.map(format_number);
    let u = format!("0.1*(cos(2*pi*x/{lx}) + cos(2*pi*y/{ly})) + 0.05*sin(2*pi*t/{lt})");
    let cover_t = format_number(periods[0] * order as f64);
    let b1 = if order == 1 { 3 } else { 1 };
    let toml = format!(
        "[manifold]\nname = \"mapping_torus_q{q}\"\nbackend = \"grid\"\nperiods = [{cover_t}, {lx}, {ly}]\nresolution = {resolution}\n\n\
         [metric]\nsignature = \"lorentzian\"\ng11 = \"-exp(2*({u}))\"\ng22 = \"exp(2*({u}))\"\ng33 = \"exp(2*({u}))\"\n\n\
         [field]\nr1 = 1\n\n\
         [fixture-metadata]\nb1 = {b1}\norientation = 1\ndescription = \"mapping torus of the rotation by {q}·π/2, on its {order}-fold cover\"\n"
    );
    let raw = RawSpec::parse(&toml).map_err(|e: SpecError| ClassifyError::CaseCheckFailed {
        equation: format!("mapping torus spec: {e}"),
        residual: f64::NAN,
    })?;
    Ok(MappingTorus { rho, order, toml, raw })
}

impl MappingTorus {
    /// `max |g(deck p) − Dᵀ g(p) D|` and `|R(deck p) − D R(p)|` at probe points,
    /// with `D = diag(1, rot_ρ)` the differential of the deck transformation.
    pub fn deck_residual(&self) -> f64 {
        let q = ((self.rho / (PI / 2.0)).round() as usize) % 4;
        let (c, s) = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][q];
        let d = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let lt = self.raw.periods.unwrap()[0] / self.order as f64;
        let eval = |e: &Expr, p: [f64; 3]| e.eval(p);
        let mut worst = 0.0_f64;
        for p in [[0.1, 0.2, 0.3], [0.37, 0.61, 0.05], [0.9, 0.44, 0.72]] {
            let img = [p[0] + lt, c * p[1] - s * p[2], s * p[1] + c * p[2]];
            for i in 0..3 {
                for j in 0..3 {
                    let pulled: f64 = (0..3)
                        .flat_map(|a| (0..3).map(move |b| (a, b)))
                        .map(|(a, b)| d[a][i] * eval(&self.raw.metric[a][b], img) * d[b][j])
                        .sum();
                    worst = worst.max((pulled - eval(&self.raw.metric[i][j], p)).abs());
                }
                let pushed: f64 = (0..3).map(|a| d[i][a] * eval(&self.raw.field[a], p)).sum();
                worst = worst.max((eval(&self.raw.field[i], img) - pushed).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::FrameAlgebra;

    fn flat_acs() -> (Manifold, AlmostContact) {
        let mf = Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0);
        let theta = KForm::basis(3, &[0]);
        let omega = KForm::basis(3, &[1, 2]);
        let acs = build_almost_contact(&mf, &theta, &VectorField::basis(3, 0), &Metric::euclidean(3), &theta, &omega, 0.0)
            .unwrap();
        (mf, acs)
    }

    #[test]
    fn flat_phi_is_a_rotation() {
        let (mf, acs) = flat_acs();
        assert_eq!(acs.phi.apply(&VectorField::basis(3, 1)), VectorField::basis(3, 2));
        assert_eq!(acs.phi.apply(&VectorField::basis(3, 2)), VectorField::constant(&[0.0, -1.0, 0.0]));
        assert_eq!(acs.phi.apply(&VectorField::basis(3, 0)).sup_norm(), 0.0);
        assert_eq!(nijenhuis_normality(&mf, &acs), 0.0);
    }

    #[test]
    fn heisenberg_structure_is_normal() {
        let mf = Manifold::frame(FrameAlgebra::heisenberg(), None, 1.0);
        let eta = KForm::basis(3, &[2]);
        let omega = KForm::basis(3, &[0, 1]);
        let r = VectorField::basis(3, 2);
        let acs = build_almost_contact(&mf, &eta, &r, &Metric::euclidean(3), &eta, &omega, 1.0).unwrap();
        assert_eq!(acs.phi.apply(&VectorField::basis(3, 0)), VectorField::basis(3, 1));
        assert_eq!(acs.phi.apply(&VectorField::basis(3, 1)), VectorField::constant(&[-1.0, 0.0, 0.0]));
        assert_eq!(nijenhuis_normality(&mf, &acs), 0.0);
        let chi = chi_isomorphism(&eta, &omega).unwrap();
        assert_eq!(chi.inverse_of_lambda, r);
        assert_eq!(chi.roundtrip, 0.0);
    }

    #[test]
    fn product_kahler_conventions() {
        let (mf, acs) = flat_acs();
        for (a, b) in [(0.0, 1.0), (0.7, -1.3), (-2.0, 0.4)] {
            let printed = product_kahler(&mf, &acs, a, b, KahlerConvention::AsPrinted).unwrap();
            assert!(printed.j_squared < 1e-14);
            assert!(printed.d_omega < 1e-14);
            assert!(printed.g_compatibility > 0.5);
            let fixed = product_kahler(&mf, &acs, a, b, KahlerConvention::Compatible).unwrap();
            assert!(fixed.g_compatibility < 1e-12, "{}", fixed.g_compatibility);
            assert!(fixed.omega_antisymmetry < 1e-12);
            assert!(fixed.g_min_eigenvalue > 0.0);
        }
        assert_eq!(
            product_kahler(&mf, &acs, 0.0, 0.0, KahlerConvention::AsPrinted).unwrap_err(),
            ClassifyError::ZeroB
        );
    }

    #[test]
    fn mapping_torus_rotations() {
        for (rho, order) in [(0.0, 1), (PI, 2), (PI / 2.0, 4)] {
            let mt = mapping_torus_builder(rho, [1.0; 3], 16).unwrap();
            assert_eq!(mt.order, order);
            assert!(mt.deck_residual() < 1e-12, "{}", mt.deck_residual());
        }
        assert!(mapping_torus_builder(1.0, [1.0; 3], 16).is_err());
    }
}
