//! Flow integration, closed-orbit scanning and the Betti-parity gate.
//!
//! Orbit detection is numerical: a scan that finds nothing reports
//! "none detected up to the horizon", never the absence of periodic orbits.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classify::Case;
use crate::exterior::{inner, Metric, VectorField};
use crate::field::{ScalarField, TrigPoly};
use crate::manifold::{GroupKind, Manifold};
use crate::spectral::Interpolant;

pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_STEP: f64 = 0.01;
const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step {step} too large: drift {drift:e} exceeds {tol:e}")]
    StepTooLarge { step: f64, drift: f64, tol: f64 },
    #[error("invalid step {0}")]
    InvalidStep(f64),
    #[error("flow integration is not available for {0}")]
    Unsupported(String),
    #[error("Betti parity violated: b1 = {b1} but case is {case}")]
    CorollaryViolation { b1: u32, case: &'static str },
}

/// Pointwise evaluator for a field component.
#[derive(Clone, Debug)]
pub enum Eval {
    Const(f64),
    Trig(TrigPoly, [f64; 3]),
    Interp(Interpolant),
}

impl Eval {
    fn new(mf: &Manifold, f: &ScalarField) -> Self {
        match f {
            ScalarField::Const(c) => Eval::Const(*c),
            ScalarField::Trig(p) => Eval::Trig(p.clone(), mf.periods().expect("periods")),
            ScalarField::Samples(v) => Eval::Interp(mf.plan().expect("plan").interpolator(v)),
        }
    }

    fn at(&self, p: &[f64]) -> f64 {
        match self {
            Eval::Const(c) => *c,
            Eval::Trig(poly, periods) => poly.eval([p[0], p[1], p[2]], *periods),
            Eval::Interp(i) => i.eval([p[0], p[1], p[2]]),
        }
    }
}

/// A vector field realized as an ODE on a model of the manifold.
#[derive(Clone, Debug)]
pub enum FlowModel {
    /// Coordinates `(t, x, y)` on a torus with the given periods.
    Torus { periods: [f64; 3], field: [Eval; 3], norm: Eval },
    /// Coordinates `(a, b, c)` with `e₁ = ∂_a`, `e₂ = ∂_b − a ∂_c`, `e₃ = ∂_c`,
    /// so `[e₁, e₂] = −e₃`; the lattice `ℤ³` acts by `(m,n,k)·(a,b,c) = (a+m, b+n, c+k−mb)`.
    Heisenberg { v: [f64; 3], norm: f64 },
    /// Unit quaternions with `e_i(q) = q·(−i, −j, −k)_i / 2`.
    Su2 { v: [f64; 3], norm: f64 },
}

impl FlowModel {
    /// Model for `field` on `mf`, with `ĝ(R, R)` used as the drift monitor.
    pub fn new(mf: &Manifold, field: &VectorField, g_hat: &Metric) -> Result<Self, DynamicsError> {
        let norm = inner(g_hat, field, field);
        let constant = |f: &ScalarField| f.as_constant(0.0);
        match mf.algebra().kind() {
            GroupKind::Abelian => {
                let periods = mf
                    .periods()
                    .ok_or_else(|| DynamicsError::Unsupported("an abelian frame without periods".into()))?;
                let c = field.comps();
                Ok(FlowModel::Torus {
                    periods,
                    field: [Eval::new(mf, &c[0]), Eval::new(mf, &c[1]), Eval::new(mf, &c[2])],
                    norm: Eval::new(mf, &norm),
                })
            }
            kind @ (GroupKind::Heisenberg | GroupKind::Su2) => {
                let v: Option<Vec<f64>> = field.comps().iter().map(constant).collect();
                let v = v.ok_or_else(|| DynamicsError::Unsupported("non-invariant fields on a group".into()))?;
                let norm = constant(&norm).ok_or_else(|| DynamicsError::Unsupported("non-invariant metric".into()))?;
                let v = [v[0], v[1], v[2]];
                Ok(if kind == GroupKind::Heisenberg {
                    FlowModel::Heisenberg { v, norm }
                } else {
                    FlowModel::Su2 { v, norm }
                })
            }
            GroupKind::Other => Err(DynamicsError::Unsupported("this frame algebra".into())),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            FlowModel::Su2 { .. } => 4,
            _ => 3,
        }
    }

    fn velocity(&self, p: &[f64]) -> Vec<f64> {
        match self {
            FlowModel::Torus { field, .. } => field.iter().map(|f| f.at(p)).collect(),
            FlowModel::Heisenberg { v, .. } => vec![v[0], v[1], v[2] - p[0] * v[1]],
            FlowModel::Su2 { v, .. } => {
                // q · u with u = −(v₁ i + v₂ j + v₃ k)/2
                let (w, x, y, z) = (p[0], p[1], p[2], p[3]);
                let (ux, uy, uz) = (-v[0] / 2.0, -v[1] / 2.0, -v[2] / 2.0);
                vec![
                    -x * ux - y * uy - z * uz,
                    w * ux + y * uz - z * uy,
                    w * uy - x * uz + z * ux,
                    w * uz + x * uy - y * ux,
                ]
            }
        }
    }

    /// Deviation from `ĝ(R,R) = 1` along the orbit (and from `|q| = 1` on SU(2)).
    fn drift(&self, p: &[f64]) -> f64 {
        match self {
            FlowModel::Torus { norm, .. } => (norm.at(p) - 1.0).abs(),
            FlowModel::Heisenberg { norm, .. } => (norm - 1.0).abs(),
            FlowModel::Su2 { norm, .. } => {
                let q: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                (norm - 1.0).abs().max((q - 1.0).abs())
            }
        }
    }

    /// Distance between two points of the closed manifold.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            FlowModel::Torus { periods, .. } => (0..3)
                .map(|i| {
                    let d = p[i] - q[i];
                    let d = d - periods[i] * (d / periods[i]).round();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            FlowModel::Heisenberg { .. } => {
                // move p by the lattice element bringing it closest to q
                let m = (q[0] - p[0]).round();
                let n = (q[1] - p[1]).round();
                let a = p[0] + m;
                let b = p[1] + n;
                let c = p[2] - m * p[1];
                let k = (q[2] - c).round();
                let c = c + k;
                ((a - q[0]).powi(2) + (b - q[1]).powi(2) + (c - q[2]).powi(2)).sqrt()
            }
            FlowModel::Su2 { .. } => p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// Initial point from frame coordinates (exponential coordinates on SU(2)).
    pub fn point(&self, coords: [f64; 3]) -> Vec<f64> {
        match self {
            FlowModel::Su2 { .. } => {
                let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n == 0.0 {
                    return vec![1.0, 0.0, 0.0, 0.0];
                }
                let s = n.sin() / n;
                vec![n.cos(), coords[0] * s, coords[1] * s, coords[2] * s]
            }
            _ => coords.to_vec(),
        }
    }

    fn rk4(&self, p: &[f64], h: f64) -> Vec<f64> {
        let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
        let k1 = self.velocity(p);
        let k2 = self.velocity(&add(p, &k1, h / 2.0));
        let k3 = self.velocity(&add(p, &k2, h / 2.0));
        let k4 = self.velocity(&add(p, &k3, h));
        (0..p.len()).map(|i| p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub step: f64,
    pub points: Vec<Vec<f64>>,
    pub max_drift: f64,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().unwrap()
    }
}

/// Fixed-step RK4 from `x0` over `[0, horizon]`.
pub fn integrate_flow(model: &FlowModel, x0: &[f64], horizon: f64, step: f64) -> Result<Trajectory, DynamicsError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(DynamicsError::InvalidStep(step));
    }
    let n = (horizon / step).round().max(1.0) as usize;
    let h = horizon / n as f64;
    let mut points = Vec::with_capacity(n + 1);
    points.push(x0.to_vec());
    let mut max_drift = model.drift(x0);
    // local error estimate on the first step by step doubling
    let full = model.rk4(x0, h);
    let half = model.rk4(&model.rk4(x0, h / 2.0), h / 2.0);
    let local = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) * 16.0 / 15.0;
    if local > DRIFT_TOL * h {
        return Err(DynamicsError::StepTooLarge { step, drift: local, tol: DRIFT_TOL * h });
    }
    let mut p = x0.to_vec();
    for _ in 0..n {
        p = model.rk4(&p, h);
        let d = model.drift(&p);
        max_drift = max_drift.max(d);
        if d > DRIFT_TOL {
            return Err(DynamicsError::StepTooLarge { step, drift: d, tol: DRIFT_TOL });
        }
        points.push(p.clone());
    }
    Ok(Trajectory { step: h, points, max_drift })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub initial: Vec<f64>,
    pub period: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    OrbitsFound { distinct: usize },
    NoneDetectedUpToHorizon,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitScan {
    pub horizon: f64,
    pub step: f64,
    pub threshold: f64,
    pub samples: Vec<Vec<f64>>,
    pub detections: Vec<Detection>,
    pub verdict: Verdict,
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = (a + b) / 2.0;
    (t, f(t))
}

/// First return of the orbit of `x0` to within `threshold`, if any.
fn first_return(model: &FlowModel, traj: &Trajectory, threshold: f64) -> Option<(f64, f64)> {
    let x0 = &traj.points[0];
    let dist: Vec<f64> = traj.points.iter().map(|p| model.distance(p, x0)).collect();
    let leave = 10.0 * threshold;
    let start = dist.iter().position(|d| *d > leave)?;
    for i in start.max(1)..dist.len() {
        let prev = dist[i - 1];
        let next = dist.get(i + 1).copied().unwrap_or(f64::INFINITY);
        if dist[i] <= prev && dist[i] <= next && dist[i] <= leave {
            // refine between the neighbouring samples
            let base = &traj.points[i - 1];
            let h = traj.step;
            let (s, d) = golden_min(|s| model.distance(&model.rk4(base, s), x0), 0.0, 2.0 * h);
            let t = (i - 1) as f64 * h + s;
            if d <= threshold {
                return Some((t, d));
            }
        }
    }
    None
}

type ScanRun = (Trajectory, Option<(f64, f64)>);

/// Nearest-return scan from each sample; results are ordered like `samples`.
pub fn closed_orbit_scan(
    model: &FlowModel,
    samples: &[Vec<f64>],
    horizon: f64,
    step: f64,
    threshold: f64,
) -> Result<OrbitScan, DynamicsError> {
    let runs: Vec<Result<ScanRun, DynamicsError>> = samples
        .par_iter()
        .map(|x0| {
            let traj = integrate_flow(model, x0, horizon, step)?;
            let ret = first_return(model, &traj, threshold);
            Ok((traj, ret))
        })
        .collect();
    let mut detections = Vec::new();
    let mut orbits: Vec<&Trajectory> = Vec::new();
    let runs: Vec<ScanRun> = runs.into_iter().collect::<Result<_, _>>()?;
    for (x0, (traj, ret)) in samples.iter().zip(&runs) {
        if let Some((period, distance)) = ret {
            detections.push(Detection { initial: x0.clone(), period: *period, distance: *distance });
            let same = orbits.iter().any(|o| {
                let upto = ((period / o.step).ceil() as usize + 1).min(o.points.len());
                o.points[..upto].iter().any(|p| model.distance(p, x0) <= 10.0 * threshold)
            });
            if !same {
                orbits.push(traj);
            }
        }
    }
    let verdict = if orbits.is_empty() {
        Verdict::NoneDetectedUpToHorizon
    } else {
        Verdict::OrbitsFound { distinct: orbits.len() }
    };
    Ok(OrbitScan { horizon, step, threshold, samples: samples.to_vec(), detections, verdict })
}

/// Deterministic initial conditions spread over the model.
pub fn default_samples(model: &FlowModel) -> Vec<Vec<f64>> {
    let coords: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.0, 0.25, 0.5], [0.0, 0.5, 0.125], [0.0, 0.75, 0.8]];
    match model {
        FlowModel::Torus { periods, .. } => {
            coords.iter().map(|c| (0..3).map(|i| c[i] * periods[i]).collect()).collect()
        }
        FlowModel::Heisenberg { .. } => coords.iter().map(|c| vec![c[1], c[2], 0.0]).collect(),
        FlowModel::Su2 { .. } => {
            [[0.0, 0.0, 0.0], [0.7, 0.0, 0.0], [0.0, 1.1, 0.3], [0.4, 0.2, 1.3]].iter().map(|c| model.point(*c)).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BettiVerdict {
    pub b1: u32,
    pub case: &'static str,
    pub passed: bool,
}

/// Even `b1` forces the Sasakian case and odd `b1` the co-Kähler case.
pub fn betti_consistency(b1: u32, case: Case) -> Result<BettiVerdict, DynamicsError> {
    let expected = if b1.is_multiple_of(2) { Case::Sasakian } else { Case::CoKahler };
    if case != expected {
        return Err(DynamicsError::CorollaryViolation { b1, case: case.as_str() });
    }
    Ok(BettiVerdict { b1, case: case.as_str(), passed: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::Signature;
    use crate::manifold::FrameAlgebra;

    fn torus(v: [f64; 3]) -> FlowModel {
        let mf = Manifold::frame(FrameAlgebra::abelian(3), Some([1.0; 3]), 1.0);
        let r = VectorField::constant(&v);
        let n2: f64 = v.iter().map(|x| x * x).sum();
        let g = Metric::diagonal(&[1.0 / n2; 3], Signature::Riemannian);
        FlowModel::new(&mf, &r, &g).unwrap()
    }

    #[test]
    fn linear_flow_endpoint() {
        let m = torus([1.0, 0.0, 0.0]);
        let tr = integrate_flow(&m, &[0.0; 3], 1.0, 0.01).unwrap();
        assert!((tr.endpoint()[0] - 1.0).abs() < 1e-12);
        let s2 = 2f64.sqrt();
        let m = torus([1.0, s2, 0.0]);
        let tr = integrate_flow(&m, &[0.0; 3], 3.0, 0.01).unwrap();
        assert!((tr.endpoint()[1] - 3.0 * s2).abs() < 1e-8);
    }

    #[test]
    fn heisenberg_fiber_closes() {
        let m = FlowModel::Heisenberg { v: [0.0, 0.0, 1.0], norm: 1.0 };
        let tr = integrate_flow(&m, &[0.3, 0.6, 0.1], 1.0, 0.01).unwrap();
        assert!(m.distance(tr.endpoint(), &[0.3, 0.6, 0.1]) < 1e-12);
        // along e2 from a = 0.3 the fiber coordinate drifts by -0.3 per unit time
        let h = FlowModel::Heisenberg { v: [0.0, 1.0, 0.0], norm: 1.0 };
        let tr = integrate_flow(&h, &[0.3, 0.0, 0.0], 1.0, 0.01).unwrap();
        assert!((h.distance(tr.endpoint(), &[0.3, 0.0, 0.0]) - 0.3).abs() < 1e-10);
        let tr = integrate_flow(&h, &[0.3, 0.0, 0.0], 10.0, 0.01).unwrap();
        assert!(h.distance(tr.endpoint(), &[0.3, 0.0, 0.0]) < 1e-10);
    }

    #[test]
    fn hopf_orbits_close_with_period_4pi() {
        let m = FlowModel::Su2 { v: [0.0, 0.0, 1.0], norm: 1.0 };
        let samples = default_samples(&m);
        let scan = closed_orbit_scan(&m, &samples, 20.0, 0.01, 1e-3).unwrap();
        assert_eq!(scan.detections.len(), samples.len());
        for d in &scan.detections {
            assert!((d.period - 4.0 * std::f64::consts::PI).abs() < 1e-6, "{}", d.period);
        }
        assert!(matches!(scan.verdict, Verdict::OrbitsFound { distinct } if distinct >= 2));
    }

    #[test]
    fn irrational_flow_has_no_detected_orbit() {
        let m = torus([1.0, 2f64.sqrt(), 0.0]);
        let scan = closed_orbit_scan(&m, &default_samples(&m), 50.0, 0.01, 1e-3).unwrap();
        assert_eq!(scan.verdict, Verdict::NoneDetectedUpToHorizon);
    }

    #[test]
    fn product_flow_period() {
        let m = torus([1.0, 0.0, 0.0]);
        let scan = closed_orbit_scan(&m, &default_samples(&m), 5.0, 0.01, 1e-3).unwrap();
        assert_eq!(scan.detections.len(), 4);
        assert!(scan.detections.iter().all(|d| (d.period - 1.0).abs() < 1e-8));
    }

    #[test]
    fn betti_gate() {
        assert!(betti_consistency(3, Case::CoKahler).unwrap().passed);
        assert!(betti_consistency(0, Case::Sasakian).unwrap().passed);
        assert!(betti_consistency(2, Case::Sasakian).unwrap().passed);
        assert!(matches!(betti_consistency(2, Case::CoKahler), Err(DynamicsError::CorollaryViolation { .. })));
    }
}
