//! Manifold backends and validated problem instances.
//!
//! The frame backend models a compact quotient of a unimodular Lie group
//! through the structure constants of a left-invariant coframe; its fields are
//! constants, or exact trigonometric polynomials when the algebra is abelian
//! and periods are declared. The grid backend is the flat 3-torus sampled on an
//! N³ lattice with coordinates `(t, x, y)`.

use std::sync::Arc;

use thiserror::Error;

use crate::exterior::{inner, Metric, Signature, VectorField};
use crate::field::{FieldError, ScalarField};
use crate::spectral::SpectralPlan;

pub const FRAME_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-12;

/// Default grid tolerance for resolution `n` (grows with the spectral
/// round-off, which scales with the largest resolved wavenumber).
pub fn grid_tolerance(n: usize) -> f64 {
    1e-8 * (n as f64 / 64.0).max(0.125)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("frame dimension {0} is not supported (expected 3 or 6)")]
    InvalidDimension(usize),
    #[error("structure constant c^{i}_{{{j}{k}}} is not finite")]
    NonFinite { i: usize, j: usize, k: usize },
    #[error("antisymmetry violated: c^{i}_{{{j}{k}}} = {a}, c^{i}_{{{k}{j}}} = {b}")]
    AntisymmetryViolation { i: usize, j: usize, k: usize, a: f64, b: f64 },
    #[error("Jacobi identity violated at (i,j,k,l) = {indices:?}: residual {residual:e}")]
    JacobiViolation { indices: [usize; 4], residual: f64 },
    #[error("algebra is not unimodular (trace of ad e_{index} = {trace:e}); no compact quotient exists")]
    NotUnimodular { index: usize, trace: f64 },
    #[error("invalid grid chart: {0}")]
    InvalidChart(String),
    #[error("metric is degenerate: |det| = {det:e} at {point:?}")]
    DegenerateMetric { det: f64, point: [f64; 3] },
    #[error("metric signature does not match {expected:?} at {point:?} (eigenvalues {eigenvalues:?})")]
    SignatureMismatch {
        expected: Signature,
        eigenvalues: Vec<f64>,
        point: [f64; 3],
    },
    #[error("candidate field vanishes: reference norm {norm:e} at {point:?}")]
    VanishingField { norm: f64, point: [f64; 3] },
    #[error("metric component g{i}{j} differs from g{j}{i}")]
    AsymmetricMetric { i: usize, j: usize },
    #[error("field component cannot be represented on this backend: {0}")]
    NotRepresentable(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Structure constants `c^i_{jk}` of a left-invariant frame, `[e_j, e_k] = c^i_{jk} e_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameAlgebra {
    dim: usize,
    c: Vec<f64>,
}

/// Recognized model groups; used to integrate flows on the group itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Abelian,
    /// `[e_1, e_2] = -e_3`, lattice quotient by integer Heisenberg matrices.
    Heisenberg,
    /// `[e_i, e_j] = -ε_ijk e_k`, the group SU(2) ≅ S³.
    Su2,
    Other,
}

impl FrameAlgebra {
    pub fn abelian(dim: usize) -> Self {
        Self { dim, c: vec![0.0; dim * dim * dim] }
    }

    /// Heisenberg algebra with `c^3_{12} = -1`.
    pub fn heisenberg() -> Self {
        let mut a = Self::abelian(3);
        a.set(2, 0, 1, -1.0);
        a.set(2, 1, 0, 1.0);
        a
    }

    /// su(2) with `[e_i, e_j] = -ε_ijk e_k`.
    pub fn su2() -> Self {
        let mut a = Self::abelian(3);
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            a.set(k, i, j, -1.0);
            a.set(k, j, i, 1.0);
        }
        a
    }


    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn raw(&self) -> &[f64] {
        &self.c
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let d = self.dim;
        self.c[(i * d + j) * d + k] = v;
    }

    pub fn is_abelian(&self) -> bool {
        self.c.iter().all(|x| *x == 0.0)
    }

    pub fn kind(&self) -> GroupKind {
        if self.is_abelian() {
            GroupKind::Abelian
        } else if *self == Self::heisenberg() {
            GroupKind::Heisenberg
        } else if *self == Self::su2() {
            GroupKind::Su2
        } else {
            GroupKind::Other
        }
    }

    /// Max-norm residual of the Jacobi identity and the worst index quadruple.
    pub fn jacobi_residual(&self) -> (f64, [usize; 4]) {
        let d = self.dim;
        let mut worst = (0.0, [0; 4]);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r: f64 = (0..d)
                            .map(|m| {
                                self.c(m, j, k) * self.c(i, m, l)
                                    + self.c(m, k, l) * self.c(i, m, j)
                                    + self.c(m, l, j) * self.c(i, m, k)
                            })
                            .sum();
                        if r.abs() > worst.0 {
                            worst = (r.abs(), [i, j, k, l]);
                        }
                    }
                }
            }
        }
        worst
    }

    /// Frame algebra of the product manifold `M × M`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let d = self.dim + other.dim;
        let mut out = Self::abelian(d);
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    out.set(i, j, k, self.c(i, j, k));
                }
            }
        }
        let o = self.dim;
        for i in 0..other.dim {
            for j in 0..other.dim {
                for k in 0..other.dim {
                    out.set(i + o, j + o, k + o, other.c(i, j, k));
                }
            }
        }
        out
    }
}

/// Validates raw structure constants (`c[(i·dim + j)·dim + k] = c^i_{jk}`).
pub fn validate_frame_algebra(dim: usize, c: Vec<f64>) -> Result<FrameAlgebra, ManifoldError> {
    if dim != 3 && dim != 6 {
        return Err(ManifoldError::InvalidDimension(dim));
    }
    if c.len() != dim * dim * dim {
        return Err(ManifoldError::InvalidDimension(dim));
    }
    let alg = FrameAlgebra { dim, c };
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                if !alg.c(i, j, k).is_finite() {
                    return Err(ManifoldError::NonFinite { i, j, k });
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            for k in j..dim {
                let (a, b) = (alg.c(i, j, k), alg.c(i, k, j));
                if (a + b).abs() > JACOBI_TOL {
                    return Err(ManifoldError::AntisymmetryViolation { i, j, k, a, b });
                }
            }
        }
    }
    let (residual, indices) = alg.jacobi_residual();
    if residual > JACOBI_TOL {
        return Err(ManifoldError::JacobiViolation { indices, residual });
    }
    for j in 0..dim {
        let trace: f64 = (0..dim).map(|i| alg.c(i, j, i)).sum();
        if trace.abs() > JACOBI_TOL {
            return Err(ManifoldError::NotUnimodular { index: j, trace });
        }
    }
    Ok(alg)
}

/// Uniform periodic lattice on the 3-torus with axes `(t, x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridChart {
    pub n: usize,
    pub periods: [f64; 3],
    pub dealias: bool,
}

impl GridChart {
    pub fn new(n: usize, periods: [f64; 3]) -> Result<Self, ManifoldError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(ManifoldError::InvalidChart(format!(
                "resolution {n} must be a power of two ≥ 8"
            )));
        }
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(ManifoldError::InvalidChart(format!(
                "periods {periods:?} must be positive"
            )));
        }
        Ok(Self { n, periods, dealias: false })
    }
}

#[derive(Clone, Debug)]
pub enum Backend {
    Frame {
        /// Coordinate periods when the frame is the coordinate frame of a flat torus.
        periods: Option<[f64; 3]>,
        /// Volume of the quotient measured by `e^1 ∧ … ∧ e^n`.
        volume: f64,
    },
    Grid {
        chart: GridChart,
        plan: Arc<SpectralPlan>,
    },
}

/// A manifold model: frame algebra plus backend and base tolerance.
#[derive(Clone, Debug)]
pub struct Manifold {
    algebra: FrameAlgebra,
    backend: Backend,
    tol: f64,
}

/// Field values on an evaluation lattice, one row per input field.
#[derive(Clone, Debug)]
pub struct LatticeValues {
    pub points: Vec<[f64; 3]>,
    pub values: Vec<Vec<f64>>,
}

impl Manifold {
    pub fn frame(algebra: FrameAlgebra, periods: Option<[f64; 3]>, volume: f64) -> Self {
        Self {
            algebra,
            backend: Backend::Frame { periods, volume },
            tol: FRAME_TOL,
        }
    }

    pub fn grid(chart: GridChart) -> Self {
        let plan = Arc::new(SpectralPlan::new(chart.n, chart.periods, chart.dealias));
        let tol = grid_tolerance(chart.n);
        Self {
            algebra: FrameAlgebra::abelian(3),
            backend: Backend::Grid { chart, plan },
            tol,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim
    }

    pub fn algebra(&self) -> &FrameAlgebra {
        &self.algebra
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.backend, Backend::Grid { .. })
    }

    pub fn backend_name(&self) -> &'static str {
        if self.is_grid() {
            "grid"
        } else {
            "frame"
        }
    }

    pub fn plan(&self) -> Option<&SpectralPlan> {
        match &self.backend {
            Backend::Grid { plan, .. } => Some(plan),
            Backend::Frame { .. } => None,
        }
    }

    pub fn chart(&self) -> Option<&GridChart> {
        match &self.backend {
            Backend::Grid { chart, .. } => Some(chart),
            Backend::Frame { .. } => None,
        }
    }

    /// Coordinate periods, when the model is a coordinate torus.
    pub fn periods(&self) -> Option<[f64; 3]> {
        match &self.backend {
            Backend::Grid { chart, .. } => Some(chart.periods),
            Backend::Frame { periods, .. } => *periods,
        }
    }

    /// Total volume of the closed manifold with respect to the frame volume form.
    pub fn total_volume(&self) -> f64 {
        match &self.backend {
            Backend::Grid { chart, .. } => chart.periods.iter().product(),
            Backend::Frame { volume, .. } => *volume,
        }
    }

    /// Product manifold `M × M` on the frame backend (constant fields only).
    pub fn product(&self) -> Self {
        let volume = self.total_volume().powi(2);
        Self {
            algebra: self.algebra.direct_sum(&self.algebra),
            backend: Backend::Frame { periods: None, volume },
            tol: self.tol,
        }
    }

    /// Derivative of `f` along the frame vector `e_axis`.
    pub fn partial(&self, axis: usize, f: &ScalarField) -> ScalarField {
        match f {
            ScalarField::Const(_) => ScalarField::zero(),
            ScalarField::Trig(p) => {
                let periods = self
                    .periods()
                    .expect("trigonometric field on a frame without coordinate periods");
                ScalarField::Trig(p.partial(axis, periods[axis])).simplified()
            }
            ScalarField::Samples(v) => {
                let plan = self.plan().expect("sampled field on frame backend");
                ScalarField::Samples(plan.partial(v, axis)).simplified()
            }
        }
    }

    /// Directional derivative `X(f)`.
    pub fn derivative(&self, x: &VectorField, f: &ScalarField) -> ScalarField {
        if matches!(f, ScalarField::Const(_)) {
            return ScalarField::zero();
        }
        let mut acc = ScalarField::zero();
        for (m, xm) in x.comps().iter().enumerate() {
            if xm.is_exact_zero() {
                continue;
            }
            acc = acc + xm * &self.partial(m, f);
        }
        acc
    }

    /// Values of the given fields on a common lattice fine enough to see their extrema.
    pub fn lattice(&self, fields: &[&ScalarField]) -> LatticeValues {
        let any_samples = fields.iter().any(|f| matches!(f, ScalarField::Samples(_)));
        let trig_freq = fields
            .iter()
            .filter_map(|f| match f {
                ScalarField::Trig(p) => Some((0..3).map(|a| p.max_frequency(a)).max().unwrap_or(0)),
                _ => None,
            })
            .max();
        if any_samples {
            let plan = self.plan().expect("sampled field on frame backend");
            let points = (0..plan.len()).map(|i| plan.point(i)).collect();
            let values = fields
                .iter()
                .map(|f| match f {
                    ScalarField::Samples(v) => v.clone(),
                    ScalarField::Const(c) => vec![*c; plan.len()],
                    ScalarField::Trig(_) => panic!("mixed field representations"),
                })
                .collect();
            return LatticeValues { points, values };
        }
        if let Some(freq) = trig_freq {
            let periods = self.periods().expect("trigonometric field without periods");
            let m = (4 * freq as usize + 4).clamp(8, 48);
            let mut points = Vec::with_capacity(m * m * m);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let ijk = [i, j, k];
                        points.push([0, 1, 2].map(|a| ijk[a] as f64 * periods[a] / m as f64));
                    }
                }
            }
            let values = fields
                .iter()
                .map(|f| match f {
                    ScalarField::Const(c) => vec![*c; points.len()],
                    ScalarField::Trig(p) => points.iter().map(|q| p.eval(*q, periods)).collect(),
                    ScalarField::Samples(_) => unreachable!(),
                })
                .collect();
            return LatticeValues { points, values };
        }
        LatticeValues {
            points: vec![[0.0; 3]],
            values: fields
                .iter()
                .map(|f| match f {
                    ScalarField::Const(c) => vec![*c],
                    _ => unreachable!(),
                })
                .collect(),
        }
    }

    /// `(min, argmin, max, argmax)` of a field over the lattice.
    pub fn extrema(&self, f: &ScalarField) -> (f64, [f64; 3], f64, [f64; 3]) {
        let lv = self.lattice(&[f]);
        let mut out = (f64::INFINITY, [0.0; 3], f64::NEG_INFINITY, [0.0; 3]);
        for (p, v) in lv.points.iter().zip(&lv.values[0]) {
            if *v < out.0 {
                out.0 = *v;
                out.1 = *p;
            }
            if *v > out.2 {
                out.2 = *v;
                out.3 = *p;
            }
        }
        out
    }
}

/// Fixture metadata carried alongside a problem instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FixtureMetadata {
    pub b1: Option<u32>,
    pub description: String,
}

/// Sign selecting the orientation form `±e^1 ∧ e^2 ∧ e^3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// Fully validated problem instance.
#[derive(Clone, Debug)]
pub struct ManifoldSpec {
    pub name: String,
    pub manifold: Manifold,
    pub metric: Metric,
    pub field: VectorField,
    pub orientation: Orientation,
    pub metadata: FixtureMetadata,
}

impl ManifoldSpec {
    /// Checks nondegeneracy and signature of the metric and that the field
    /// never vanishes (in the Euclidean frame reference metric).
    pub fn validate(
        name: String,
        manifold: Manifold,
        metric: Metric,
        field: VectorField,
        orientation: Orientation,
        metadata: FixtureMetadata,
    ) -> Result<Self, ManifoldError> {
        let n = manifold.dim();
        let tol = manifold.tol();
        for i in 0..n {
            for j in 0..i {
                if metric.get(i, j) != metric.get(j, i) {
                    return Err(ManifoldError::AsymmetricMetric { i, j });
                }
            }
        }
        let comps: Vec<&ScalarField> = metric.tensor().entries().iter().collect();
        let lv = manifold.lattice(&comps);
        for (p, point) in lv.points.iter().enumerate() {
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| lv.values[i * n + j][p]);
            let det = m.determinant();
            if det.abs() <= tol {
                return Err(ManifoldError::DegenerateMetric { det, point: *point });
            }
            let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
            let negatives = eig.iter().filter(|e| **e < 0.0).count();
            let expected = match metric.signature() {
                Signature::Lorentzian => 1,
                Signature::Riemannian => 0,
            };
            if negatives != expected {
                return Err(ManifoldError::SignatureMismatch {
                    expected: metric.signature(),
                    eigenvalues: eig.iter().copied().collect(),
                    point: *point,
                });
            }
        }
        let reference = Metric::euclidean(n);
        let norm2 = inner(&reference, &field, &field);
        let (min, at, _, _) = manifold.extrema(&norm2);
        let norm = min.max(0.0).sqrt();
        if norm <= tol.max(1e-8) {
            return Err(ManifoldError::VanishingField { norm, point: at });
        }
        Ok(Self { name, manifold, metric, field, orientation, metadata })
    }

    /// Minimum of the candidate field's Euclidean frame norm.
    pub fn min_reference_norm(&self) -> f64 {
        let reference = Metric::euclidean(self.manifold.dim());
        let norm2 = inner(&reference, &self.field, &self.field);
        self.manifold.extrema(&norm2).0.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(entries: &[(usize, usize, usize, f64)]) -> Vec<f64> {
        let mut c = vec![0.0; 27];
        for (i, j, k, v) in entries {
            c[(i * 3 + j) * 3 + k] = *v;
        }
        c
    }

    #[test]
    fn abelian_is_valid() {
        let a = validate_frame_algebra(3, vec![0.0; 27]).unwrap();
        assert_eq!(a.kind(), GroupKind::Abelian);
    }

    #[test]
    fn heisenberg_is_valid() {
        let a = validate_frame_algebra(3, raw(&[(2, 0, 1, -1.0), (2, 1, 0, 1.0)])).unwrap();
        assert_eq!(a, FrameAlgebra::heisenberg());
        assert_eq!(a.kind(), GroupKind::Heisenberg);
    }

    #[test]
    fn symmetric_entry_is_rejected() {
        let err = validate_frame_algebra(3, raw(&[(2, 0, 1, 1.0), (2, 1, 0, 1.0)])).unwrap_err();
        assert!(matches!(err, ManifoldError::AntisymmetryViolation { i: 2, j: 0, k: 1, .. }));
    }

    #[test]
    fn jacobi_violation_names_indices() {
        // [e1,e2] = e3, [e1,e3] = e1 breaks Jacobi
        let c = raw(&[(2, 0, 1, 1.0), (2, 1, 0, -1.0), (0, 0, 2, 1.0), (0, 2, 0, -1.0)]);
        match validate_frame_algebra(3, c) {
            Err(ManifoldError::JacobiViolation { residual, .. }) => assert!(residual > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn su2_is_valid_and_idempotent() {
        let a = validate_frame_algebra(3, FrameAlgebra::su2().raw().to_vec()).unwrap();
        let b = validate_frame_algebra(3, a.raw().to_vec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kind(), GroupKind::Su2);
    }

    #[test]
    fn bad_dimension() {
        assert_eq!(
            validate_frame_algebra(4, vec![0.0; 64]).unwrap_err(),
            ManifoldError::InvalidDimension(4)
        );
    }

    #[test]
    fn grid_chart_rejects_non_power_of_two() {
        assert!(GridChart::new(12, [1.0; 3]).is_err());
        assert!(GridChart::new(4, [1.0; 3]).is_err());
        assert!(GridChart::new(16, [1.0, 0.0, 1.0]).is_err());
        assert!(GridChart::new(16, [1.0; 3]).is_ok());
    }
}
