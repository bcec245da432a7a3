//! Exterior algebra, Lie derivatives, musical isomorphisms and the
//! Levi-Civita connection in a fixed global (co)frame.
//!
//! Conventions: `e^I = e^{i1} ∧ … ∧ e^{ik}` with the determinant pairing
//! `e^1 ∧ e^2 (e_1, e_2) = 1`, and
//! `dα(X, Y) = X α(Y) − Y α(X) − α([X, Y])`. With `[e_j, e_k] = c^i_{jk} e_i`
//! this gives `d e^i = −½ c^i_{jk} e^j ∧ e^k`.

use thiserror::Error;

use crate::field::{FieldError, ScalarField};
use crate::manifold::Manifold;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExteriorError {
    #[error("degree {degree} exceeds the dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },
    #[error("interior product of a 0-form")]
    ZeroDegree,
    #[error("metric is singular at a sample point (|det| = {det:e})")]
    SingularMetricAtPoint { det: f64 },
    #[error("pointwise inverse of a non-constant {0}×{0} matrix is not supported")]
    UnsupportedInverse(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Strictly increasing multi-indices of length `k` in `0..dim`, in lexicographic order.
pub fn multi_indices(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, dim: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(i + 1, dim, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(binomial(dim, k));
    rec(0, dim, k, &mut Vec::new(), &mut out);
    out
}

/// Lexicographic rank of a strictly increasing multi-index.
pub fn multi_index_position(dim: usize, idx: &[usize]) -> usize {
    let k = idx.len();
    let mut rank = 0;
    let mut prev: isize = -1;
    for (i, &c) in idx.iter().enumerate() {
        for j in (prev + 1) as usize..c {
            rank += binomial(dim - 1 - j, k - 1 - i);
        }
        prev = c as isize;
    }
    rank
}

/// Sorts an index list, returning the permutation sign, or `None` on repeats.
pub fn sort_with_sign(idx: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((sign, v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signature {
    Lorentzian,
    Riemannian,
}

/// Vector field with components in the frame basis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(comps: Vec<ScalarField>) -> Self {
        Self { comps }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self::new(values.iter().map(|v| ScalarField::Const(*v)).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![ScalarField::zero(); dim])
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zero(dim);
        v.comps[i] = ScalarField::Const(1.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn scale_by(&self, f: &ScalarField) -> Self {
        Self::new(self.comps.iter().map(|c| c * f).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.comps.iter().map(|c| c.scale(s)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().map(|c| c.sup_norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Add<&VectorField> for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField::new(self.comps.iter().zip(&rhs.comps).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Sub<&VectorField> for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField::new(self.comps.iter().zip(&rhs.comps).map(|(a, b)| a - b).collect())
    }
}

/// Differential form of fixed degree; components over increasing multi-indices.
#[derive(Clone, Debug, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    comps: Vec<ScalarField>,
}

impl KForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            degree,
            comps: vec![ScalarField::zero(); binomial(dim, degree)],
        }
    }

    pub fn new(dim: usize, degree: usize, comps: Vec<ScalarField>) -> Self {
        assert_eq!(comps.len(), binomial(dim, degree), "component count");
        Self { dim, degree, comps }
    }

    pub fn constant(dim: usize, degree: usize, values: &[f64]) -> Self {
        Self::new(dim, degree, values.iter().map(|v| ScalarField::Const(*v)).collect())
    }

    pub fn function(dim: usize, f: ScalarField) -> Self {
        Self::new(dim, 0, vec![f])
    }

    /// `sign · e^{idx}` for an arbitrary (possibly unsorted) index list.
    pub fn basis(dim: usize, idx: &[usize]) -> Self {
        let mut out = Self::zero(dim, idx.len());
        if let Some((sign, sorted)) = sort_with_sign(idx) {
            out.comps[multi_index_position(dim, &sorted)] = ScalarField::Const(sign);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<ScalarField> {
        self.comps
    }

    /// Component `a(e_{i1}, …, e_{ik})` for any index list.
    pub fn value(&self, idx: &[usize]) -> ScalarField {
        match sort_with_sign(idx) {
            Some((sign, sorted)) => {
                self.comps[multi_index_position(self.dim, &sorted)].scale(sign)
            }
            None => ScalarField::zero(),
        }
    }

    pub fn set(&mut self, sorted: &[usize], v: ScalarField) {
        let p = multi_index_position(self.dim, sorted);
        self.comps[p] = v;
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.dim, self.degree, self.comps.iter().map(|c| c.scale(s)).collect())
    }

    pub fn scale_by(&self, f: &ScalarField) -> Self {
        Self::new(self.dim, self.degree, self.comps.iter().map(|c| c * f).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().map(|c| c.sup_norm()).fold(0.0, f64::max)
    }

    /// Evaluates the form on `k` vector fields.
    pub fn eval(&self, vectors: &[&VectorField]) -> ScalarField {
        assert_eq!(vectors.len(), self.degree);
        let mut acc = ScalarField::zero();
        for (idx, a) in multi_indices(self.dim, self.degree).iter().zip(&self.comps) {
            if a.is_exact_zero() {
                continue;
            }
            acc = acc + a * &determinant_of(vectors, idx);
        }
        acc
    }
}

fn determinant_of(vectors: &[&VectorField], idx: &[usize]) -> ScalarField {
    let k = idx.len();
    if k == 0 {
        return ScalarField::Const(1.0);
    }
    // Laplace expansion along the first vector; k ≤ 3 in practice
    let mut acc = ScalarField::zero();
    for (m, &i) in idx.iter().enumerate() {
        let entry = vectors[0].component(i);
        if entry.is_exact_zero() {
            continue;
        }
        let rest: Vec<usize> = idx.iter().enumerate().filter(|(p, _)| *p != m).map(|(_, v)| *v).collect();
        let minor = determinant_of(&vectors[1..], &rest);
        let term = entry * &minor;
        acc = if m % 2 == 0 { acc + term } else { acc - term };
    }
    acc
}

impl std::ops::Add<&KForm> for &KForm {
    type Output = KForm;
    fn add(self, rhs: &KForm) -> KForm {
        assert_eq!((self.dim, self.degree), (rhs.dim, rhs.degree), "form shapes");
        KForm::new(self.dim, self.degree, self.comps.iter().zip(&rhs.comps).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Sub<&KForm> for &KForm {
    type Output = KForm;
    fn sub(self, rhs: &KForm) -> KForm {
        assert_eq!((self.dim, self.degree), (rhs.dim, rhs.degree), "form shapes");
        KForm::new(self.dim, self.degree, self.comps.iter().zip(&rhs.comps).map(|(a, b)| a - b).collect())
    }
}

/// Square matrix of scalar fields.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMatrix {
    n: usize,
    m: Vec<ScalarField>,
}

impl FieldMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, m: vec![ScalarField::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.set(i, i, ScalarField::Const(1.0));
        }
        out
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> ScalarField) -> Self {
        let mut m = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                m.push(f(i, j));
            }
        }
        Self { n, m }
    }

    pub fn constant(n: usize, values: &[f64]) -> Self {
        Self::from_fn(n, |i, j| ScalarField::Const(values[i * n + j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[ScalarField] {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        &self.m[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: ScalarField) {
        self.m[i * self.n + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| {
            (0..n)
                .filter(|k| !self.get(i, *k).is_exact_zero() && !other.get(*k, j).is_exact_zero())
                .map(|k| self.get(i, k) * other.get(k, j))
                .sum()
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { n: self.n, m: self.m.iter().map(|x| x.scale(s)).collect() }
    }

    pub fn scale_by(&self, f: &ScalarField) -> Self {
        Self { n: self.n, m: self.m.iter().map(|x| x * f).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { n: self.n, m: self.m.iter().zip(&other.m).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { n: self.n, m: self.m.iter().zip(&other.m).map(|(a, b)| a - b).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.m.iter().map(|x| x.sup_norm()).fold(0.0, f64::max)
    }

    /// `Σ_j M_ij v_j`.
    pub fn apply(&self, v: &[ScalarField]) -> Vec<ScalarField> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|j| !self.get(i, *j).is_exact_zero() && !v[*j].is_exact_zero())
                    .map(|j| self.get(i, j) * &v[j])
                    .sum()
            })
            .collect()
    }

    fn as_constants(&self) -> Option<nalgebra::DMatrix<f64>> {
        let vals: Option<Vec<f64>> = self
            .m
            .iter()
            .map(|x| match x {
                ScalarField::Const(c) => Some(*c),
                _ => None,
            })
            .collect();
        vals.map(|v| nalgebra::DMatrix::from_row_slice(self.n, self.n, &v))
    }

    pub fn det(&self) -> Result<ScalarField, ExteriorError> {
        let g = |i, j| self.get(i, j);
        match self.n {
            1 => Ok(g(0, 0).clone()),
            2 => Ok(g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)),
            3 => Ok(g(0, 0) * &(g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * &(g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * &(g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))),
            n => self
                .as_constants()
                .map(|m| ScalarField::Const(m.determinant()))
                .ok_or(ExteriorError::UnsupportedInverse(n)),
        }
    }

    /// Pointwise inverse.
    pub fn inverse(&self) -> Result<Self, ExteriorError> {
        let n = self.n;
        if n > 3 {
            let m = self.as_constants().ok_or(ExteriorError::UnsupportedInverse(n))?;
            let inv = m
                .clone()
                .try_inverse()
                .ok_or(ExteriorError::SingularMetricAtPoint { det: m.determinant() })?;
            return Ok(Self::from_fn(n, |i, j| ScalarField::Const(inv[(i, j)])));
        }
        let det = self.det()?;
        let scale = self.sup_norm().max(1.0);
        let min_abs = match &det {
            ScalarField::Samples(v) => v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs())),
            other => other.mean().abs(),
        };
        if min_abs <= 1e-13 * scale.powi(n as i32) {
            return Err(ExteriorError::SingularMetricAtPoint { det: min_abs });
        }
        let inv_det = det.recip()?;
        let cof = |i: usize, j: usize| -> ScalarField {
            // cofactor C_ij
            let rows: Vec<usize> = (0..n).filter(|r| *r != i).collect();
            let cols: Vec<usize> = (0..n).filter(|c| *c != j).collect();
            let minor = match n {
                1 => ScalarField::Const(1.0),
                2 => self.get(rows[0], cols[0]).clone(),
                _ => self.get(rows[0], cols[0]) * self.get(rows[1], cols[1])
                    - self.get(rows[0], cols[1]) * self.get(rows[1], cols[0]),
            };
            if (i + j).is_multiple_of(2) {
                minor
            } else {
                -minor
            }
        };
        Ok(Self::from_fn(n, |i, j| cof(j, i) * &inv_det))
    }
}

/// Metric tensor `g_ij = g(e_i, e_j)` with a declared signature.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    tensor: FieldMatrix,
    signature: Signature,
}

impl Metric {
    pub fn new(tensor: FieldMatrix, signature: Signature) -> Self {
        Self { tensor, signature }
    }

    pub fn diagonal(values: &[f64], signature: Signature) -> Self {
        let n = values.len();
        Self::new(
            FieldMatrix::from_fn(n, |i, j| ScalarField::Const(if i == j { values[i] } else { 0.0 })),
            signature,
        )
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(FieldMatrix::identity(n), Signature::Riemannian)
    }

    pub fn dim(&self) -> usize {
        self.tensor.n
    }

    pub fn tensor(&self) -> &FieldMatrix {
        &self.tensor
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        self.tensor.get(i, j)
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn inverse(&self) -> Result<FieldMatrix, ExteriorError> {
        self.tensor.inverse()
    }
}

/// Endomorphism of the tangent bundle; column `j` holds the components of `φ(e_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Endomorphism(pub FieldMatrix);

impl Endomorphism {
    pub fn apply(&self, x: &VectorField) -> VectorField {
        VectorField::new(self.0.apply(x.comps()))
    }

    pub fn compose(&self, other: &Endomorphism) -> Endomorphism {
        Endomorphism(self.0.mul(&other.0))
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.0
    }
}

/// `g(X, Y)`.
pub fn inner(g: &Metric, x: &VectorField, y: &VectorField) -> ScalarField {
    let n = g.dim();
    let mut acc = ScalarField::zero();
    for i in 0..n {
        if x.component(i).is_exact_zero() {
            continue;
        }
        for j in 0..n {
            if y.component(j).is_exact_zero() || g.get(i, j).is_exact_zero() {
                continue;
            }
            acc = acc + g.get(i, j) * &(x.component(i) * y.component(j));
        }
    }
    acc
}

/// Symmetric bilinear form evaluated on two vectors (for non-metric tensors).
pub fn tensor_apply(t: &FieldMatrix, x: &VectorField, y: &VectorField) -> ScalarField {
    let n = t.n();
    let mut acc = ScalarField::zero();
    for i in 0..n {
        for j in 0..n {
            if t.get(i, j).is_exact_zero() {
                continue;
            }
            acc = acc + t.get(i, j) * &(x.component(i) * y.component(j));
        }
    }
    acc
}

/// `a ⊗ b` as a matrix of components.
pub fn tensor_product(a: &KForm, b: &KForm) -> FieldMatrix {
    assert!(a.degree == 1 && b.degree == 1);
    FieldMatrix::from_fn(a.dim, |i, j| &a.comps[i] * &b.comps[j])
}

pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm, ExteriorError> {
    let dim = a.dim;
    let degree = a.degree + b.degree;
    if degree > dim {
        return Err(ExteriorError::DegreeOverflow { degree, dim });
    }
    let mut out = KForm::zero(dim, degree);
    let ia = multi_indices(dim, a.degree);
    let ib = multi_indices(dim, b.degree);
    for (i, ca) in ia.iter().zip(&a.comps) {
        if ca.is_exact_zero() {
            continue;
        }
        for (j, cb) in ib.iter().zip(&b.comps) {
            if cb.is_exact_zero() {
                continue;
            }
            let joined: Vec<usize> = i.iter().chain(j.iter()).copied().collect();
            if let Some((sign, sorted)) = sort_with_sign(&joined) {
                let p = multi_index_position(dim, &sorted);
                out.comps[p] = &out.comps[p] + &(ca * cb).scale(sign);
            }
        }
    }
    Ok(out)
}

/// `ι_X a`.
pub fn interior_product(x: &VectorField, a: &KForm) -> Result<KForm, ExteriorError> {
    if a.degree == 0 {
        return Err(ExteriorError::ZeroDegree);
    }
    let dim = a.dim;
    let idx = multi_indices(dim, a.degree - 1);
    let comps = idx
        .iter()
        .map(|j| {
            let mut acc = ScalarField::zero();
            for i in 0..dim {
                if j.contains(&i) || x.component(i).is_exact_zero() {
                    continue;
                }
                let mut full = vec![i];
                full.extend_from_slice(j);
                let v = a.value(&full);
                if !v.is_exact_zero() {
                    acc = acc + x.component(i) * &v;
                }
            }
            acc
        })
        .collect();
    Ok(KForm::new(dim, a.degree - 1, comps))
}

/// Differentials of the constant basis forms `e^I` of degree `k`.
fn basis_differentials(mf: &Manifold, k: usize) -> Vec<KForm> {
    let dim = mf.dim();
    let alg = mf.algebra();
    let de: Vec<KForm> = (0..dim)
        .map(|i| {
            let mut f = KForm::zero(dim, 2);
            for (p, jk) in multi_indices(dim, 2).iter().enumerate() {
                f.comps[p] = ScalarField::Const(-alg.c(i, jk[0], jk[1]));
            }
            f
        })
        .collect();
    multi_indices(dim, k)
        .iter()
        .map(|idx| {
            let mut acc = KForm::zero(dim, k + 1);
            if alg.is_abelian() {
                return acc;
            }
            for m in 0..k {
                let left = KForm::basis(dim, &idx[..m]);
                let right = KForm::basis(dim, &idx[m + 1..]);
                let term = wedge(&wedge(&left, &de[idx[m]]).unwrap(), &right).unwrap();
                let term = if m % 2 == 0 { term } else { term.scale(-1.0) };
                acc = &acc + &term;
            }
            acc
        })
        .collect()
}

pub fn exterior_derivative(mf: &Manifold, a: &KForm) -> Result<KForm, ExteriorError> {
    let dim = a.dim;
    if a.degree >= dim {
        return Err(ExteriorError::DegreeOverflow { degree: a.degree + 1, dim });
    }
    let k = a.degree;
    let src = multi_indices(dim, k);
    let mut out = KForm::zero(dim, k + 1);
    for (p, idx) in multi_indices(dim, k + 1).iter().enumerate() {
        let mut acc = ScalarField::zero();
        for (m, &i) in idx.iter().enumerate() {
            let rest: Vec<usize> = idx.iter().enumerate().filter(|(q, _)| *q != m).map(|(_, v)| *v).collect();
            let comp = &a.comps[multi_index_position(dim, &rest)];
            let d = mf.partial(i, comp);
            if d.is_exact_zero() {
                continue;
            }
            acc = if m % 2 == 0 { acc + d } else { acc - d };
        }
        out.comps[p] = acc;
    }
    if !mf.algebra().is_abelian() {
        for (i, dbasis) in src.iter().zip(basis_differentials(mf, k)) {
            let coeff = &a.comps[multi_index_position(dim, i)];
            if coeff.is_exact_zero() {
                continue;
            }
            for (p, c) in dbasis.comps.iter().enumerate() {
                if !c.is_exact_zero() {
                    out.comps[p] = &out.comps[p] + &(coeff * c);
                }
            }
        }
    }
    Ok(out)
}

/// Components `B^m_j` of `[X, e_j] = B^m_j e_m`; returned as `b[j][m]`.
fn bracket_with_frame(mf: &Manifold, x: &VectorField) -> Vec<Vec<ScalarField>> {
    let dim = mf.dim();
    let alg = mf.algebra();
    (0..dim)
        .map(|j| {
            (0..dim)
                .map(|m| {
                    let mut acc = -mf.partial(j, x.component(m));
                    for l in 0..dim {
                        let c = alg.c(m, l, j);
                        if c != 0.0 && !x.component(l).is_exact_zero() {
                            acc = acc + x.component(l).scale(c);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `L_X a`, from `(L_X a)(Y…) = X(a(Y…)) − Σ a(…, [X, Y_s], …)`.
pub fn lie_derivative_form(mf: &Manifold, x: &VectorField, a: &KForm) -> KForm {
    let dim = a.dim;
    let b = bracket_with_frame(mf, x);
    let mut out = KForm::zero(dim, a.degree);
    for (p, idx) in multi_indices(dim, a.degree).iter().enumerate() {
        let mut acc = mf.derivative(x, &a.comps[p]);
        for s in 0..idx.len() {
            for m in 0..dim {
                let bm = &b[idx[s]][m];
                if bm.is_exact_zero() {
                    continue;
                }
                let mut swapped = idx.clone();
                swapped[s] = m;
                let v = a.value(&swapped);
                if !v.is_exact_zero() {
                    acc = acc - bm * &v;
                }
            }
        }
        out.comps[p] = acc;
    }
    out
}

/// `L_X T` for a covariant 2-tensor.
pub fn lie_derivative_tensor(mf: &Manifold, x: &VectorField, t: &FieldMatrix) -> FieldMatrix {
    let dim = t.n();
    let b = bracket_with_frame(mf, x);
    FieldMatrix::from_fn(dim, |i, j| {
        let mut acc = mf.derivative(x, t.get(i, j));
        for m in 0..dim {
            if !b[i][m].is_exact_zero() && !t.get(m, j).is_exact_zero() {
                acc = acc - &b[i][m] * t.get(m, j);
            }
            if !b[j][m].is_exact_zero() && !t.get(i, m).is_exact_zero() {
                acc = acc - &b[j][m] * t.get(i, m);
            }
        }
        acc
    })
}

pub fn lie_derivative_metric(mf: &Manifold, x: &VectorField, g: &Metric) -> FieldMatrix {
    lie_derivative_tensor(mf, x, g.tensor())
}

/// `[X, Y]`.
pub fn bracket(mf: &Manifold, x: &VectorField, y: &VectorField) -> VectorField {
    let dim = mf.dim();
    let alg = mf.algebra();
    VectorField::new(
        (0..dim)
            .map(|m| {
                let mut acc = mf.derivative(x, y.component(m)) - mf.derivative(y, x.component(m));
                for i in 0..dim {
                    for j in 0..dim {
                        let c = alg.c(m, i, j);
                        if c != 0.0 {
                            acc = acc + (x.component(i) * y.component(j)).scale(c);
                        }
                    }
                }
                acc
            })
            .collect(),
    )
}

/// `X♭ = g(X, ·)`.
pub fn flat(x: &VectorField, g: &Metric) -> KForm {
    KForm::new(g.dim(), 1, g.tensor().apply(x.comps()))
}

/// `a♯`, the vector metrically dual to a 1-form.
pub fn sharp(a: &KForm, g: &Metric) -> Result<VectorField, ExteriorError> {
    let inv = g.inverse()?;
    Ok(VectorField::new(inv.apply(a.comps())))
}

pub fn sharp_with_inverse(a: &KForm, g_inv: &FieldMatrix) -> VectorField {
    VectorField::new(g_inv.apply(a.comps()))
}

/// `∇_X Y` via the Koszul formula in the frame.
pub fn koszul_derivative(
    mf: &Manifold,
    x: &VectorField,
    y: &VectorField,
    g: &Metric,
) -> Result<VectorField, ExteriorError> {
    let dim = mf.dim();
    let xf = flat(x, g);
    let yf = flat(y, g);
    let gxy = inner(g, x, y);
    let xy = bracket(mf, x, y);
    let xyf = flat(&xy, g);
    let bx = bracket_with_frame(mf, x);
    let by = bracket_with_frame(mf, y);
    let mut k = Vec::with_capacity(dim);
    for l in 0..dim {
        let el = VectorField::basis(dim, l);
        let xel = VectorField::new(bx[l].clone());
        let yel = VectorField::new(by[l].clone());
        let v = mf.derivative(x, &yf.comps[l]) + mf.derivative(y, &xf.comps[l])
            - mf.derivative(&el, &gxy)
            + xyf.comps[l].clone()
            - inner(g, &xel, y)
            - inner(g, &yel, x);
        k.push(v.scale(0.5));
    }
    sharp(&KForm::new(dim, 1, k), g)
}

/// Christoffel symbols of a coordinate-frame metric, `Γ^k_{ij}` stored at `(k·n + i)·n + j`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    n: usize,
    gamma: Vec<ScalarField>,
}

impl Christoffel {
    /// Requires an abelian (coordinate) frame.
    pub fn new(mf: &Manifold, g: &Metric) -> Result<Self, ExteriorError> {
        assert!(mf.algebra().is_abelian(), "Christoffel symbols need a coordinate frame");
        let n = g.dim();
        let inv = g.inverse()?;
        let dg: Vec<Vec<ScalarField>> = (0..n)
            .map(|a| g.tensor().entries().iter().map(|e| mf.partial(a, e)).collect())
            .collect();
        let d = |a: usize, i: usize, j: usize| &dg[a][i * n + j];
        let mut gamma = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = ScalarField::zero();
                    for m in 0..n {
                        if inv.get(k, m).is_exact_zero() {
                            continue;
                        }
                        let s = d(i, j, m) + d(j, i, m) - d(m, i, j);
                        if !s.is_exact_zero() {
                            acc = acc + inv.get(k, m) * &s;
                        }
                    }
                    gamma.push(acc.scale(0.5));
                }
            }
        }
        Ok(Self { n, gamma })
    }

    pub fn symbol(&self, k: usize, i: usize, j: usize) -> &ScalarField {
        &self.gamma[(k * self.n + i) * self.n + j]
    }

    pub fn derivative(&self, mf: &Manifold, x: &VectorField, y: &VectorField) -> VectorField {
        let n = self.n;
        VectorField::new(
            (0..n)
                .map(|k| {
                    let mut acc = mf.derivative(x, y.component(k));
                    for i in 0..n {
                        for j in 0..n {
                            let s = self.symbol(k, i, j);
                            if s.is_exact_zero() || x.component(i).is_exact_zero() || y.component(j).is_exact_zero() {
                                continue;
                            }
                            acc = acc + s * &(x.component(i) * y.component(j));
                        }
                    }
                    acc
                })
                .collect(),
        )
    }
}

/// `∇_X Y`: Koszul on the frame backend, precomputed Christoffel symbols on the grid.
pub fn covariant_derivative(
    mf: &Manifold,
    x: &VectorField,
    y: &VectorField,
    g: &Metric,
) -> Result<VectorField, ExteriorError> {
    if mf.is_grid() {
        Ok(Christoffel::new(mf, g)?.derivative(mf, x, y))
    } else {
        koszul_derivative(mf, x, y, g)
    }
}

/// Riemannian volume form `sign · √|det g| e^1 ∧ … ∧ e^n`.
pub fn volume_form(g: &Metric, sign: f64) -> Result<KForm, ExteriorError> {
    let n = g.dim();
    let det = g.tensor().det()?;
    let abs = match &det {
        ScalarField::Samples(v) => ScalarField::Samples(v.iter().map(|x| x.abs()).collect()),
        ScalarField::Const(c) => ScalarField::Const(c.abs()),
        ScalarField::Trig(_) => {
            if det.mean() < 0.0 {
                -&det
            } else {
                det.clone()
            }
        }
    };
    let mut out = KForm::zero(n, n);
    out.comps[0] = abs.sqrt()?.scale(sign);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{FrameAlgebra, GridChart};
    use std::f64::consts::PI;

    fn flat3() -> Manifold {
        Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0)
    }

    fn heis() -> Manifold {
        Manifold::frame(FrameAlgebra::heisenberg(), None, 1.0)
    }

    #[test]
    fn multi_index_ranks_are_lexicographic() {
        for dim in [3, 6] {
            for k in 0..=dim {
                for (p, idx) in multi_indices(dim, k).iter().enumerate() {
                    assert_eq!(multi_index_position(dim, idx), p);
                }
            }
        }
    }

    #[test]
    fn basis_wedge() {
        let dt = KForm::basis(3, &[0]);
        let dxdy = KForm::basis(3, &[1, 2]);
        assert_eq!(wedge(&dt, &dxdy).unwrap(), KForm::constant(3, 3, &[1.0]));
    }

    #[test]
    fn odd_form_squares_to_zero() {
        let a = KForm::constant(3, 1, &[0.3, -1.2, 2.0]);
        assert!(wedge(&a, &a).unwrap().sup_norm() == 0.0);
    }

    #[test]
    fn wedge_by_multilinearity() {
        // (e1 + e2) ∧ e1∧e3 = e2∧e1∧e3 = −e1∧e2∧e3
        let a = KForm::constant(3, 1, &[1.0, 1.0, 0.0]);
        let b = KForm::basis(3, &[0, 2]);
        assert_eq!(wedge(&a, &b).unwrap(), KForm::constant(3, 3, &[-1.0]));
    }

    #[test]
    fn wedge_degree_overflow() {
        let a = KForm::basis(3, &[0, 1]);
        assert_eq!(
            wedge(&a, &a).unwrap_err(),
            ExteriorError::DegreeOverflow { degree: 4, dim: 3 }
        );
    }

    #[test]
    fn interior_examples() {
        let vol = KForm::constant(3, 3, &[1.0]);
        let r = VectorField::basis(3, 0);
        assert_eq!(interior_product(&r, &vol).unwrap(), KForm::basis(3, &[1, 2]));
        let e3 = VectorField::basis(3, 2);
        assert_eq!(interior_product(&e3, &KForm::basis(3, &[0, 1])).unwrap().sup_norm(), 0.0);
        assert_eq!(
            interior_product(&e3, &KForm::function(3, ScalarField::Const(1.0))).unwrap_err(),
            ExteriorError::ZeroDegree
        );
    }

    #[test]
    fn interior_of_theta_wedge_omega() {
        let theta = KForm::constant(3, 1, &[1.0, 0.0, 0.3]);
        let omega = KForm::basis(3, &[1, 2]);
        let r = VectorField::basis(3, 0);
        let got = interior_product(&r, &wedge(&theta, &omega).unwrap()).unwrap();
        assert_eq!(got, omega);
    }

    #[test]
    fn heisenberg_maurer_cartan() {
        let de3 = exterior_derivative(&heis(), &KForm::basis(3, &[2])).unwrap();
        assert_eq!(de3, KForm::basis(3, &[0, 1]));
        let de1 = exterior_derivative(&heis(), &KForm::basis(3, &[0])).unwrap();
        assert_eq!(de1.sup_norm(), 0.0);
    }

    #[test]
    fn d_of_constant_is_zero() {
        let f = KForm::function(3, ScalarField::Const(4.0));
        assert_eq!(exterior_derivative(&heis(), &f).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn grid_derivative_of_cos_dy() {
        let mf = Manifold::grid(GridChart::new(16, [1.0; 3]).unwrap());
        let plan = mf.plan().unwrap();
        let f = plan.sample(|p| (2.0 * PI * p[1]).cos());
        let mut a = KForm::zero(3, 1);
        a.set(&[2], ScalarField::Samples(f));
        let da = exterior_derivative(&mf, &a).unwrap();
        let want = plan.sample(|p| -2.0 * PI * (2.0 * PI * p[1]).sin());
        let got = da.value(&[1, 2]);
        let ScalarField::Samples(got) = got else { panic!() };
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        // finite-difference cross-check at one interior sample
        let h = 1e-5;
        let x = 0.3125;
        let fd = ((2.0 * PI * (x + h)).cos() - (2.0 * PI * (x - h)).cos()) / (2.0 * h);
        assert!((fd - (-2.0 * PI * (2.0 * PI * x).sin())).abs() < 1e-6);
    }

    #[test]
    fn musical_examples() {
        let g = Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian);
        assert_eq!(flat(&VectorField::basis(3, 0), &g), KForm::constant(3, 1, &[-1.0, 0.0, 0.0]));
        let e = Metric::euclidean(3);
        assert_eq!(sharp(&KForm::basis(3, &[1]), &e).unwrap(), VectorField::basis(3, 1));
        let h = Metric::diagonal(&[1.0, 1.0, -1.0], Signature::Lorentzian);
        assert_eq!(flat(&VectorField::basis(3, 2), &h), KForm::constant(3, 1, &[0.0, 0.0, -1.0]));
    }

    #[test]
    fn singular_metric_is_rejected() {
        let g = Metric::diagonal(&[0.0, 1.0, 1.0], Signature::Riemannian);
        assert!(matches!(
            sharp(&KForm::basis(3, &[1]), &g),
            Err(ExteriorError::SingularMetricAtPoint { .. })
        ));
    }

    #[test]
    fn flat_connection_vanishes() {
        let g = Metric::diagonal(&[-1.0, 1.0, 1.0], Signature::Lorentzian);
        let t = VectorField::basis(3, 0);
        assert_eq!(covariant_derivative(&flat3(), &t, &t, &g).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn heisenberg_fiber_is_geodesic() {
        let g = Metric::euclidean(3);
        let e3 = VectorField::basis(3, 2);
        assert!(koszul_derivative(&heis(), &e3, &e3, &g).unwrap().sup_norm() < 1e-15);
        assert!(lie_derivative_metric(&heis(), &e3, &g).sup_norm() < 1e-15);
    }

    #[test]
    fn heisenberg_connection_on_horizontal_pair() {
        // Koszul: ∇_{e1} e2 = ½[e1,e2] = −½ e3 for an orthonormal frame
        let g = Metric::euclidean(3);
        let v = koszul_derivative(&heis(), &VectorField::basis(3, 0), &VectorField::basis(3, 1), &g).unwrap();
        assert_eq!(v, VectorField::constant(&[0.0, 0.0, -0.5]));
    }
}
