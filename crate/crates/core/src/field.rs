//! Scalar fields over either manifold backend.
//!
//! A field is a constant, an exact trigonometric polynomial in the coordinates
//! of an abelian frame (a flat torus), or the N³ samples of a grid chart.
//! Arithmetic between a trigonometric polynomial and grid samples is a
//! programming error: a single manifold never produces both.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Relative size below which Fourier coefficients of a product are dropped.
const PRUNE_REL: f64 = 1e-17;
/// Relative size of the non-constant modes below which a polynomial counts as constant.
const CONST_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("`{op}` of a non-constant trigonometric polynomial is not representable exactly")]
    NonPolynomial { op: &'static str },
    #[error("`{op}` evaluated outside its domain (value {value})")]
    Domain { op: &'static str, value: f64 },
}

/// Wave vector of a Fourier mode on the 3-torus.
pub type Mode = [i32; 3];

/// Finite real trigonometric polynomial `Σ c_n exp(2πi n·x / L)` with Hermitian
/// coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigPoly {
    modes: BTreeMap<Mode, Complex64>,
}

fn neg_mode(n: Mode) -> Mode {
    [-n[0], -n[1], -n[2]]
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        let mut modes = BTreeMap::new();
        if c != 0.0 {
            modes.insert([0, 0, 0], Complex64::new(c, 0.0));
        }
        Self { modes }
    }

    /// `amp · cos(2π n·x/L)`.
    pub fn cos_mode(n: Mode, amp: f64) -> Self {
        if n == [0, 0, 0] {
            return Self::constant(amp);
        }
        let mut modes = BTreeMap::new();
        modes.insert(n, Complex64::new(amp / 2.0, 0.0));
        modes.insert(neg_mode(n), Complex64::new(amp / 2.0, 0.0));
        Self { modes }
    }

    /// `amp · sin(2π n·x/L)`.
    pub fn sin_mode(n: Mode, amp: f64) -> Self {
        if n == [0, 0, 0] {
            return Self::default();
        }
        let mut modes = BTreeMap::new();
        modes.insert(n, Complex64::new(0.0, -amp / 2.0));
        modes.insert(neg_mode(n), Complex64::new(0.0, amp / 2.0));
        Self { modes }
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Mode, &Complex64)> {
        self.modes.iter()
    }

    pub fn coefficient(&self, n: Mode) -> Complex64 {
        self.modes.get(&n).copied().unwrap_or_default()
    }

    pub fn mean(&self) -> f64 {
        self.coefficient([0, 0, 0]).re
    }

    /// Sum of coefficient magnitudes; an upper bound for the sup norm.
    pub fn l1(&self) -> f64 {
        self.modes.values().map(|c| c.norm()).sum()
    }

    fn nonconstant_l1(&self) -> f64 {
        self.modes
            .iter()
            .filter(|(n, _)| **n != [0, 0, 0])
            .map(|(_, c)| c.norm())
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.nonconstant_l1() <= CONST_REL * self.mean().abs().max(f64::MIN_POSITIVE)
    }

    /// Largest |n_axis| over the stored modes.
    pub fn max_frequency(&self, axis: usize) -> i32 {
        self.modes.keys().map(|n| n[axis].abs()).max().unwrap_or(0)
    }

    pub fn eval(&self, point: [f64; 3], periods: [f64; 3]) -> f64 {
        self.modes
            .iter()
            .map(|(n, c)| {
                let phase: f64 = (0..3)
                    .map(|a| 2.0 * PI * n[a] as f64 * point[a] / periods[a])
                    .sum();
                (c * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }

    pub fn partial(&self, axis: usize, period: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .filter(|(n, _)| n[axis] != 0)
            .map(|(n, c)| {
                let k = 2.0 * PI * n[axis] as f64 / period;
                (*n, c * Complex64::new(0.0, k))
            })
            .collect();
        Self { modes }.pruned()
    }

    /// Keeps only the modes with zero frequency along `axis` (the average over that circle).
    pub fn average_axis(&self, axis: usize) -> Self {
        let modes = self
            .modes
            .iter()
            .filter(|(n, _)| n[axis] == 0)
            .map(|(n, c)| (*n, *c))
            .collect();
        Self { modes }
    }

    /// Applies a per-mode multiplier; used for Poisson solves.
    pub fn map_modes(&self, mut f: impl FnMut(Mode, Complex64) -> Complex64) -> Self {
        let modes = self.modes.iter().map(|(n, c)| (*n, f(*n, *c))).collect();
        Self { modes }.pruned()
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::default();
        }
        let modes = self.modes.iter().map(|(n, c)| (*n, c * s)).collect();
        Self { modes }
    }

    fn add_poly(&self, other: &Self, sign: f64) -> Self {
        let mut modes = self.modes.clone();
        for (n, c) in &other.modes {
            *modes.entry(*n).or_default() += c * sign;
        }
        Self { modes }.pruned()
    }

    fn mul_poly(&self, other: &Self) -> Self {
        let mut modes: BTreeMap<Mode, Complex64> = BTreeMap::new();
        for (n, a) in &self.modes {
            for (m, b) in &other.modes {
                let key = [n[0] + m[0], n[1] + m[1], n[2] + m[2]];
                *modes.entry(key).or_default() += a * b;
            }
        }
        Self { modes }.pruned()
    }

    /// Drops negligible coefficients and restores Hermitian symmetry.
    fn pruned(mut self) -> Self {
        let scale = self.l1();
        let cutoff = PRUNE_REL * scale;
        let keys: Vec<Mode> = self.modes.keys().copied().collect();
        let mut out = BTreeMap::new();
        for n in keys {
            let c = self.modes[&n];
            let partner = self.modes.get(&neg_mode(n)).copied().unwrap_or_default();
            let sym = (c + partner.conj()) * 0.5;
            let sym = if n == [0, 0, 0] {
                Complex64::new(sym.re, 0.0)
            } else {
                sym
            };
            if sym.norm() > cutoff {
                out.insert(n, sym);
            }
        }
        self.modes = out;
        self
    }
}

/// A function on the manifold.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarField {
    Const(f64),
    Trig(TrigPoly),
    Samples(Vec<f64>),
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Const(0.0)
    }
}

impl From<f64> for ScalarField {
    fn from(c: f64) -> Self {
        ScalarField::Const(c)
    }
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Const(0.0)
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::Const(c)
    }

    /// Collapses representations that are exactly constant.
    pub fn simplified(self) -> Self {
        match self {
            ScalarField::Samples(v) => {
                if let Some(first) = v.first().copied() {
                    if v.iter().all(|x| *x == first) {
                        return ScalarField::Const(first);
                    }
                }
                ScalarField::Samples(v)
            }
            ScalarField::Trig(p) => {
                if p.modes.keys().all(|n| *n == [0, 0, 0]) {
                    ScalarField::Const(p.mean())
                } else {
                    ScalarField::Trig(p)
                }
            }
            c => c,
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        matches!(self, ScalarField::Const(c) if *c == 0.0)
    }

    /// Returns the constant value if the field is constant to within `tol`
    /// (absolute spread for samples, coefficient mass for polynomials).
    pub fn as_constant(&self, tol: f64) -> Option<f64> {
        match self {
            ScalarField::Const(c) => Some(*c),
            ScalarField::Trig(p) => (p.nonconstant_l1() <= tol).then(|| p.mean()),
            ScalarField::Samples(v) => {
                let (lo, hi) = min_max(v);
                (hi - lo <= tol).then(|| self.mean())
            }
        }
    }

    /// Sup norm. For polynomials this is the coefficient l¹ norm, which bounds it from above.
    pub fn sup_norm(&self) -> f64 {
        match self {
            ScalarField::Const(c) => c.abs(),
            ScalarField::Trig(p) => p.l1(),
            ScalarField::Samples(v) => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        }
    }

    /// Mean over the manifold with respect to the coordinate (or frame) volume.
    pub fn mean(&self) -> f64 {
        match self {
            ScalarField::Const(c) => *c,
            ScalarField::Trig(p) => p.mean(),
            ScalarField::Samples(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    fn constant_value(&self, op: &'static str) -> Result<f64, FieldError> {
        match self {
            ScalarField::Const(c) => Ok(*c),
            ScalarField::Trig(p) if p.is_constant() => Ok(p.mean()),
            ScalarField::Trig(_) => Err(FieldError::NonPolynomial { op }),
            ScalarField::Samples(_) => unreachable!("handled pointwise"),
        }
    }

    fn pointwise(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64 + Sync,
        valid: impl Fn(f64) -> bool,
    ) -> Result<Self, FieldError> {
        match self {
            ScalarField::Samples(v) => {
                if let Some(bad) = v.iter().find(|x| !valid(**x)) {
                    return Err(FieldError::Domain { op, value: *bad });
                }
                Ok(ScalarField::Samples(v.iter().map(|x| f(*x)).collect()).simplified())
            }
            other => {
                let c = other.constant_value(op)?;
                if !valid(c) {
                    return Err(FieldError::Domain { op, value: c });
                }
                Ok(ScalarField::Const(f(c)))
            }
        }
    }

    pub fn recip(&self) -> Result<Self, FieldError> {
        self.pointwise("recip", |x| 1.0 / x, |x| x != 0.0)
    }

    pub fn sqrt(&self) -> Result<Self, FieldError> {
        self.pointwise("sqrt", f64::sqrt, |x| x >= 0.0)
    }

    pub fn exp(&self) -> Result<Self, FieldError> {
        self.pointwise("exp", f64::exp, f64::is_finite)
    }

    /// `self / other`, exact for polynomials when the divisor is constant or
    /// the numerator vanishes identically.
    pub fn try_div(&self, other: &Self) -> Result<Self, FieldError> {
        match (self, other) {
            (ScalarField::Trig(p), ScalarField::Trig(_)) if p.modes.is_empty() => {
                Ok(ScalarField::zero())
            }
            (ScalarField::Const(c), ScalarField::Trig(_)) if *c == 0.0 => Ok(ScalarField::zero()),
            _ => Ok(self * &other.recip()?),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            ScalarField::Const(c) => ScalarField::Const(c * s),
            ScalarField::Trig(p) => ScalarField::Trig(p.scale(s)).simplified(),
            ScalarField::Samples(v) => {
                ScalarField::Samples(v.iter().map(|x| x * s).collect()).simplified()
            }
        }
    }

    fn combine(&self, other: &Self, op: BinOp) -> Self {
        use ScalarField::*;
        let f = |a: f64, b: f64| match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
        };
        let out = match (self, other) {
            (Const(a), Const(b)) => Const(f(*a, *b)),
            (Samples(a), Samples(b)) => {
                assert_eq!(a.len(), b.len(), "grid fields of different resolution");
                Samples(a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            }
            (Samples(a), Const(b)) => {
                if op == BinOp::Mul && *b == 0.0 {
                    Const(0.0)
                } else {
                    Samples(a.iter().map(|x| f(*x, *b)).collect())
                }
            }
            (Const(a), Samples(b)) => {
                if op == BinOp::Mul && *a == 0.0 {
                    Const(0.0)
                } else {
                    Samples(b.iter().map(|y| f(*a, *y)).collect())
                }
            }
            (Trig(p), Trig(q)) => Trig(match op {
                BinOp::Add => p.add_poly(q, 1.0),
                BinOp::Sub => p.add_poly(q, -1.0),
                BinOp::Mul => p.mul_poly(q),
            }),
            (Trig(p), Const(c)) => Trig(match op {
                BinOp::Add => p.add_poly(&TrigPoly::constant(*c), 1.0),
                BinOp::Sub => p.add_poly(&TrigPoly::constant(*c), -1.0),
                BinOp::Mul => p.scale(*c),
            }),
            (Const(c), Trig(q)) => Trig(match op {
                BinOp::Add => TrigPoly::constant(*c).add_poly(q, 1.0),
                BinOp::Sub => TrigPoly::constant(*c).add_poly(q, -1.0),
                BinOp::Mul => q.scale(*c),
            }),
            _ => panic!("trigonometric and sampled fields cannot be combined"),
        };
        out.simplified()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        })
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<&ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                self.combine(rhs, $op)
            }
        }
        impl $trait<ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                self.combine(&rhs, $op)
            }
        }
        impl $trait<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                self.combine(rhs, $op)
            }
        }
        impl $trait<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                self.combine(&rhs, $op)
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

impl Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Mul<f64> for ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl std::iter::Sum for ScalarField {
    fn sum<I: Iterator<Item = ScalarField>>(iter: I) -> Self {
        iter.fold(ScalarField::zero(), |acc, x| acc + x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: [f64; 3] = [1.0, 1.0, 1.0];

    #[test]
    fn trig_product_matches_pointwise_product() {
        let a = TrigPoly::cos_mode([0, 1, 0], 0.7);
        let b = TrigPoly::sin_mode([1, 0, 2], 1.3).add_poly(&TrigPoly::constant(0.4), 1.0);
        let ab = a.mul_poly(&b);
        for pt in [[0.1, 0.2, 0.3], [0.77, 0.01, 0.5]] {
            let want = a.eval(pt, P) * b.eval(pt, P);
            assert!((ab.eval(pt, P) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn cos_squared_has_expected_modes() {
        let c = TrigPoly::cos_mode([0, 1, 0], 1.0);
        let c2 = c.mul_poly(&c);
        assert!((c2.mean() - 0.5).abs() < 1e-15);
        assert!((c2.coefficient([0, 2, 0]).re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn trig_partial_is_analytic() {
        let f = TrigPoly::cos_mode([0, 1, 0], 1.0);
        let df = f.partial(1, 2.0);
        let x = 0.3;
        let want = -(2.0 * PI / 2.0) * (2.0 * PI * x / 2.0).sin();
        assert!((df.eval([0.0, x, 0.0], [1.0, 2.0, 1.0]) - want).abs() < 1e-14);
    }

    #[test]
    fn recip_of_nonconstant_polynomial_is_rejected() {
        let f = ScalarField::Trig(TrigPoly::cos_mode([1, 0, 0], 1.0));
        assert!(matches!(f.recip(), Err(FieldError::NonPolynomial { .. })));
        let g = ScalarField::Trig(TrigPoly::constant(2.0)).simplified();
        assert_eq!(g.recip().unwrap(), ScalarField::Const(0.5));
    }

    #[test]
    fn samples_collapse_when_constant() {
        let f = ScalarField::Samples(vec![2.0; 8]).simplified();
        assert_eq!(f, ScalarField::Const(2.0));
    }

    #[test]
    fn sqrt_domain_error_reports_value() {
        let f = ScalarField::Samples(vec![1.0, -4.0]);
        assert_eq!(
            f.sqrt().unwrap_err(),
            FieldError::Domain { op: "sqrt", value: -4.0 }
        );
    }
}
