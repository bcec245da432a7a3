//! Periodic calculus on the grid chart: spectral differentiation, fiber
//! averaging, and Poisson solves on the transverse torus.
//!
//! Samples are stored with the `t` axis slowest: index `(i_t·N + i_x)·N + i_y`.
//! The same operations are provided for exact trigonometric polynomials so
//! the abelian frame backend shares one code path.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::field::{ScalarField, TrigPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("Poisson right-hand side has nonzero mean {mean:e} (tolerance {tol:e})")]
    NonzeroMean { mean: f64, tol: f64 },
}

/// Complex Fourier coefficients on the dual lattice, normalized so that the
/// zero mode is the mean.
#[derive(Clone, PartialEq)]
pub struct SpectrumField {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectrumField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectrumField")
            .field("n", &self.n)
            .field("mean", &self.coeffs[0].re)
            .finish()
    }
}

impl SpectrumField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
        let m = |i: usize| (n - i) % n;
        (m(a) * n + m(b)) * n + m(c)
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.mirror(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Projects onto real-valued fields.
    pub fn enforce_hermitian(&mut self) {
        let orig = self.coeffs.clone();
        for i in 0..orig.len() {
            self.coeffs[i] = (orig[i] + orig[self.mirror(i)].conj()) * 0.5;
        }
    }
}

/// FFT plans for one chart resolution. Immutable and shareable across threads.
pub struct SpectralPlan {
    n: usize,
    periods: [f64; 3],
    dealias: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("n", &self.n)
            .field("periods", &self.periods)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl SpectralPlan {
    pub fn new(n: usize, periods: [f64; 3], dealias: bool) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            periods,
            dealias,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn periods(&self) -> [f64; 3] {
        self.periods
    }

    /// Signed integer frequency stored at lattice index `i`.
    pub fn frequency(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Coordinates of lattice sample `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let ijk = [idx / (n * n), (idx / n) % n, idx % n];
        [0, 1, 2].map(|a| ijk[a] as f64 * self.periods[a] / n as f64)
    }

    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let stride = [n * n, n, 1][axis];
        let mut line = vec![Complex64::default(); n];
        for base in 0..n * n {
            // enumerate the two fixed indices
            let (hi, lo) = (base / n, base % n);
            let start = match axis {
                0 => hi * n + lo,
                1 => hi * n * n + lo,
                _ => (hi * n + lo) * n,
            };
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[start + k * stride];
            }
            plan.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[start + k * stride] = *v;
            }
        }
    }

    pub fn forward(&self, samples: &[f64]) -> SpectrumField {
        assert_eq!(samples.len(), self.len(), "sample count does not match chart");
        let mut data: Vec<Complex64> = samples.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        for axis in 0..3 {
            self.transform_axis(&mut data, axis, &self.forward);
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        SpectrumField { n: self.n, coeffs: data }
    }

    pub fn inverse(&self, spectrum: &SpectrumField) -> Vec<f64> {
        let mut s = spectrum.clone();
        s.enforce_hermitian();
        let mut data = s.coeffs;
        for axis in 0..3 {
            self.transform_axis(&mut data, axis, &self.inverse);
        }
        data.iter().map(|c| c.re).collect()
    }

    fn multiply(&self, samples: &[f64], symbol: impl Fn([i64; 3]) -> Complex64) -> Vec<f64> {
        let mut spec = self.forward(samples);
        let n = self.n;
        let cut = n as i64 / 3;
        for (idx, c) in spec.coeffs.iter_mut().enumerate() {
            let m = [
                self.frequency(idx / (n * n)),
                self.frequency((idx / n) % n),
                self.frequency(idx % n),
            ];
            if self.dealias && m.iter().any(|k| k.abs() > cut) {
                *c = Complex64::default();
            } else {
                *c *= symbol(m);
            }
        }
        self.inverse(&spec)
    }

    fn wavenumber(&self, axis: usize, m: i64) -> f64 {
        2.0 * PI * m as f64 / self.periods[axis]
    }

    /// Spectral derivative of grid samples along `axis`.
    pub fn partial(&self, samples: &[f64], axis: usize) -> Vec<f64> {
        let nyquist = self.n as i64 / 2;
        self.multiply(samples, |m| {
            if m[axis].abs() == nyquist {
                Complex64::default()
            } else {
                Complex64::new(0.0, self.wavenumber(axis, m[axis]))
            }
        })
    }

    /// Mean along `axis`, broadcast back over the lattice.
    pub fn average_axis(&self, samples: &[f64], axis: usize) -> Vec<f64> {
        let n = self.n;
        let stride = [n * n, n, 1][axis];
        let mut out = vec![0.0; samples.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let pos = (idx / stride) % n;
            let base = idx - pos * stride;
            *slot = (0..n).map(|k| samples[base + k * stride]).sum::<f64>() / n as f64;
        }
        out
    }

    /// Solves `Δu = ρ` with the Laplacian over the two axes transverse to `fiber_axis`.
    pub fn poisson_transverse(
        &self,
        samples: &[f64],
        fiber_axis: usize,
        tol: f64,
    ) -> Result<Vec<f64>, SpectralError> {
        let spec = self.forward(samples);
        let n = self.n;
        let mut worst = 0.0_f64;
        for (idx, c) in spec.coeffs.iter().enumerate() {
            let m = [idx / (n * n), (idx / n) % n, idx % n];
            let transverse_zero = (0..3).filter(|a| *a != fiber_axis).all(|a| m[a] == 0);
            if transverse_zero {
                worst = worst.max(c.norm());
            }
        }
        if worst > tol {
            return Err(SpectralError::NonzeroMean { mean: worst, tol });
        }
        Ok(self.multiply(samples, |m| {
            let k2: f64 = (0..3)
                .filter(|a| *a != fiber_axis)
                .map(|a| self.wavenumber(a, m[a]).powi(2))
                .sum();
            if k2 == 0.0 {
                Complex64::default()
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        }))
    }

    /// Trigonometric interpolant of grid samples at an arbitrary point.
    pub fn interpolator(&self, samples: &[f64]) -> Interpolant {
        let spec = self.forward(samples);
        let n = self.n;
        let peak = spec.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let nyquist = n as i64 / 2;
        let mut terms = Vec::new();
        for (idx, c) in spec.coeffs.iter().enumerate() {
            if c.norm() <= 1e-15 * peak {
                continue;
            }
            let m = [
                self.frequency(idx / (n * n)),
                self.frequency((idx / n) % n),
                self.frequency(idx % n),
            ];
            // split Nyquist modes symmetrically so the interpolant is real
            let splits = m.iter().filter(|k| k.abs() == nyquist).count();
            let weight = 0.5_f64.powi(splits as i32);
            let mut variants = vec![m];
            for a in 0..3 {
                if m[a].abs() == nyquist {
                    let mut extra = Vec::new();
                    for v in &variants {
                        let mut w = *v;
                        w[a] = -w[a];
                        extra.push(w);
                    }
                    variants.extend(extra);
                }
            }
            for v in variants {
                let k = [0, 1, 2].map(|a| self.wavenumber(a, v[a]));
                terms.push((k, c * weight));
            }
        }
        Interpolant { terms }
    }
}

/// Sparse evaluator for a band-limited grid field.
#[derive(Clone, Debug)]
pub struct Interpolant {
    terms: Vec<([f64; 3], Complex64)>,
}

impl Interpolant {
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let phase = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
                (c * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }
}

/// Flow average of a scalar field along a coordinate circle.
pub fn average_field(plan: Option<&SpectralPlan>, f: &ScalarField, axis: usize) -> ScalarField {
    match f {
        ScalarField::Const(_) => f.clone(),
        ScalarField::Trig(p) => ScalarField::Trig(p.average_axis(axis)).simplified(),
        ScalarField::Samples(v) => {
            let plan = plan.expect("sampled field without a grid plan");
            ScalarField::Samples(plan.average_axis(v, axis)).simplified()
        }
    }
}

/// Transverse Poisson solve for a scalar field; the solution has zero mean.
pub fn poisson_field(
    plan: Option<&SpectralPlan>,
    periods: [f64; 3],
    rho: &ScalarField,
    fiber_axis: usize,
    tol: f64,
) -> Result<ScalarField, SpectralError> {
    match rho {
        ScalarField::Const(c) => {
            if c.abs() > tol {
                Err(SpectralError::NonzeroMean { mean: *c, tol })
            } else {
                Ok(ScalarField::zero())
            }
        }
        ScalarField::Trig(p) => {
            let worst = p
                .modes()
                .filter(|(m, _)| (0..3).filter(|a| *a != fiber_axis).all(|a| m[a] == 0))
                .map(|(_, c)| c.norm())
                .fold(0.0, f64::max);
            if worst > tol {
                return Err(SpectralError::NonzeroMean { mean: worst, tol });
            }
            let solved: TrigPoly = p.map_modes(|m, c| {
                let k2: f64 = (0..3)
                    .filter(|a| *a != fiber_axis)
                    .map(|a| (2.0 * PI * m[a] as f64 / periods[a]).powi(2))
                    .sum();
                if k2 == 0.0 {
                    Complex64::default()
                } else {
                    c * (-1.0 / k2)
                }
            });
            Ok(ScalarField::Trig(solved).simplified())
        }
        ScalarField::Samples(v) => {
            let plan = plan.expect("sampled field without a grid plan");
            Ok(ScalarField::Samples(plan.poisson_transverse(v, fiber_axis, tol)?).simplified())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn derivative_of_cosine_in_x() {
        let lx = 2.0;
        let plan = SpectralPlan::new(16, [1.0, lx, 1.0], false);
        let f = plan.sample(|p| (2.0 * PI * p[1] / lx).cos());
        let want = plan.sample(|p| -(2.0 * PI / lx) * (2.0 * PI * p[1] / lx).sin());
        assert!(max_err(&plan.partial(&f, 1), &want) <= 1e-12);
    }

    #[test]
    fn derivative_of_sine_in_y() {
        let ly = 0.5;
        let plan = SpectralPlan::new(16, [1.0, 1.0, ly], false);
        let f = plan.sample(|p| (4.0 * PI * p[2] / ly).sin());
        let want = plan.sample(|p| (4.0 * PI / ly) * (4.0 * PI * p[2] / ly).cos());
        assert!(max_err(&plan.partial(&f, 2), &want) <= 1e-11);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let plan = SpectralPlan::new(8, [1.0; 3], false);
        let d = plan.partial(&vec![3.5; 512], 0);
        assert!(d.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn round_trip_and_hermitian() {
        let plan = SpectralPlan::new(8, [1.0, 2.0, 3.0], false);
        let f = plan.sample(|p| (p[0] * 7.0).sin() + p[1] * p[2]);
        let s = plan.forward(&f);
        assert!(s.hermitian_defect() < 1e-14);
        assert!(max_err(&plan.inverse(&s), &f) < 1e-12);
    }

    #[test]
    fn fiber_average_examples() {
        let plan = SpectralPlan::new(16, [1.0; 3], false);
        let c = plan.sample(|p| (2.0 * PI * p[0]).cos());
        assert!(plan.average_axis(&c, 0).iter().all(|x| x.abs() < 1e-15));
        let cx = plan.sample(|p| (2.0 * PI * p[1]).cos());
        assert!(max_err(&plan.average_axis(&cx, 0), &cx) < 1e-15);
        let mix = plan.sample(|p| 1.0 + (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos());
        assert!(plan.average_axis(&mix, 0).iter().all(|x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn poisson_eigenfunction() {
        let l = 1.5;
        let plan = SpectralPlan::new(16, [1.0, l, l], false);
        let rho = plan.sample(|p| (2.0 * PI * p[1] / l).cos());
        let u = plan.poisson_transverse(&rho, 0, 1e-12).unwrap();
        let k = l / (2.0 * PI);
        let want = plan.sample(|p| -k * k * (2.0 * PI * p[1] / l).cos());
        assert!(max_err(&u, &want) < 1e-12);
        assert!(plan.poisson_transverse(&vec![0.0; 4096], 0, 1e-12).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(
            plan.poisson_transverse(&vec![0.3; 4096], 0, 1e-12),
            Err(SpectralError::NonzeroMean { .. })
        ));
    }

    #[test]
    fn interpolant_reproduces_band_limited_function() {
        let plan = SpectralPlan::new(8, [1.0, 1.0, 2.0], false);
        let g = |p: [f64; 3]| 0.3 + (2.0 * PI * p[0]).cos() * (PI * p[2]).sin();
        let it = plan.interpolator(&plan.sample(g));
        for p in [[0.123, 0.4, 1.7], [0.9, 0.1, 0.05]] {
            assert!((it.eval(p) - g(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn trig_poisson_matches_grid_poisson() {
        let periods = [1.0, 1.0, 1.0];
        let p = TrigPoly::sin_mode([0, 1, 0], -0.2 * PI);
        let u = poisson_field(None, periods, &ScalarField::Trig(p), 0, 1e-12).unwrap();
        let ScalarField::Trig(u) = u else { panic!() };
        let want = 0.2 * PI / (2.0 * PI).powi(2);
        assert!((u.eval([0.0, 0.25, 0.0], periods) - want).abs() < 1e-15);
    }
}
