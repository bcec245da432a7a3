//! End-to-end orchestration: parse, validate, normalize, build the SHS,
//! decompose, classify, certify, and (optionally) scan for closed orbits.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::basic::{decompose_basic_class, fix_gauge, verify_nonexact_volume, BasicDecomposition, DecompositionMethod};
use crate::classify::{
    build_almost_contact, chi_isomorphism, classify, nijenhuis_normality, AlmostContact, Case, Classification,
    Flavor, ScalingCertificate,
};
use crate::conformal::{causal_character, normalize_conformal, Causal, ConformalError};
use crate::dynamics::{
    betti_consistency, closed_orbit_scan, default_samples, BettiVerdict, FlowModel, OrbitScan, Verdict,
    DEFAULT_HORIZON, DEFAULT_STEP, DEFAULT_THRESHOLD,
};
use crate::exterior::{exterior_derivative, Metric};
use crate::field::ScalarField;
use crate::manifold::{Manifold, ManifoldSpec};
use crate::shs::{build_theta_omega, geodesic_unit_check, riemannianize, Check, Shs, ShsError};
use crate::specfile::{Overrides, RawSpec, SpecError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_PARSE: i32 = 4;

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    ValidateSpec,
    CausalCharacter,
    ConformalFactor,
    NormalizeConformal,
    Riemannianize,
    GeodesicUnitCheck,
    BuildThetaOmega,
    DecomposeBasicClass,
    Classify,
    BuildAlmostContact,
    NijenhuisNormality,
    ChiIsomorphism,
    ClosedOrbitScan,
    BettiConsistency,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::ValidateSpec => "validate_spec",
            Stage::CausalCharacter => "causal_character",
            Stage::ConformalFactor => "conformal_factor",
            Stage::NormalizeConformal => "normalize_conformal",
            Stage::Riemannianize => "riemannianize",
            Stage::GeodesicUnitCheck => "geodesic_unit_check",
            Stage::BuildThetaOmega => "build_theta_omega",
            Stage::DecomposeBasicClass => "decompose_basic_class",
            Stage::Classify => "classify",
            Stage::BuildAlmostContact => "build_almost_contact",
            Stage::NijenhuisNormality => "nijenhuis_normality",
            Stage::ChiIsomorphism => "chi_isomorphism",
            Stage::ClosedOrbitScan => "closed_orbit_scan",
            Stage::BettiConsistency => "betti_consistency",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanConfig {
    pub horizon: f64,
    pub step: f64,
    pub threshold: f64,
    /// Initial points in model coordinates; `None` uses the model defaults.
    pub samples: Option<Vec<Vec<f64>>>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON, step: DEFAULT_STEP, threshold: DEFAULT_THRESHOLD, samples: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("grid resolution {0} must be a power of two in [8, 256]")]
    GridResolution(usize),
    #[error("tolerance {0} must be positive and finite")]
    Tolerance(f64),
    #[error("orbit scan parameter `{0}` must be positive and finite")]
    Scan(&'static str),
}

/// Everything that determines a run, echoed verbatim into the report.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    /// Label for the input (file path or fixture name).
    pub source: String,
    pub overrides: Overrides,
    pub orbit_scan: Option<ScanConfig>,
    /// Skip the Betti gate even when the spec carries `b1`.
    pub skip_betti: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(n) = self.overrides.grid_n {
            if !n.is_power_of_two() || !(8..=256).contains(&n) {
                return Err(ConfigError::GridResolution(n));
            }
        }
        if let Some(t) = self.overrides.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::Tolerance(t));
            }
        }
        if let Some(s) = &self.orbit_scan {
            for (name, v) in [("horizon", s.horizon), ("step", s.step), ("threshold", s.threshold)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::Scan(name));
                }
            }
        }
        Ok(())
    }
}

/// `min / mean / max` of a scalar over the evaluation lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(mf: &Manifold, f: &ScalarField) -> Self {
        let (min, _, max, _) = mf.extrema(f);
        Self { min, mean: f.mean(), max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageCheck {
    pub stage: Stage,
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
    pub residual: Option<f64>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionSummary {
    pub k: f64,
    pub method: DecompositionMethod,
    pub alpha_norm: f64,
    pub alpha: Vec<Stats>,
    pub residual: f64,
    pub volume_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureSummary {
    pub flavor: Flavor,
    pub metric_adjusted: bool,
    /// Components of `η` (or `θ̃`) in the frame.
    pub eta: Vec<Stats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub source: String,
    pub name: Option<String>,
    pub backend: Option<&'static str>,
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub orbit_scan: Option<ScanConfig>,
    pub skip_betti: bool,
}

/// Everything the pipeline certified, stage by stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub config: ConfigEcho,
    pub stages: Vec<Stage>,
    pub causal: Option<Causal>,
    pub sigma: Option<Stats>,
    pub is_killing: Option<bool>,
    pub tau: Option<Stats>,
    pub case: Option<Case>,
    pub k: Option<f64>,
    pub decomposition: Option<DecompositionSummary>,
    pub certificate: Option<ScalingCertificate>,
    pub structure: Option<StructureSummary>,
    pub nijenhuis_residual: Option<f64>,
    pub orbit_scan: Option<OrbitScan>,
    pub betti: Option<BettiVerdict>,
    pub checks: Vec<StageCheck>,
    pub gates: BTreeMap<String, bool>,
    pub failure: Option<Failure>,
}

impl ClassificationReport {
    fn new(config: &RunConfig) -> Self {
        Self {
            config: ConfigEcho {
                source: config.source.clone(),
                name: None,
                backend: None,
                grid_n: config.overrides.grid_n,
                tol: config.overrides.tol,
                orbit_scan: config.orbit_scan.clone(),
                skip_betti: config.skip_betti,
            },
            stages: Vec::new(),
            causal: None,
            sigma: None,
            is_killing: None,
            tau: None,
            case: None,
            k: None,
            decomposition: None,
            certificate: None,
            structure: None,
            nijenhuis_residual: None,
            orbit_scan: None,
            betti: None,
            checks: Vec::new(),
            gates: BTreeMap::new(),
            failure: None,
        }
    }

    /// `0` exactly when a case was emitted and every gate passed.
    pub fn exit_code(&self) -> i32 {
        if let Some(f) = &self.failure {
            return f.exit_code;
        }
        if self.case.is_some() && self.gates.values().all(|g| *g) {
            EXIT_OK
        } else {
            EXIT_INVARIANT
        }
    }

    fn record(&mut self, stage: Stage, checks: impl IntoIterator<Item = Check>) {
        for c in checks {
            let passed = c.passed();
            self.checks.push(StageCheck { stage, name: c.name, residual: c.residual, tol: c.tol, passed });
        }
    }

    fn gate(&mut self, name: &str, passed: bool) {
        self.gates.insert(name.to_string(), passed);
    }
}

/// Intermediate objects kept for plotting and further inspection.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub spec: Option<ManifoldSpec>,
    pub g_tilde: Option<Metric>,
    pub g_hat: Option<Metric>,
    pub shs: Option<Shs>,
    pub decomposition: Option<BasicDecomposition>,
    pub classification: Option<Classification>,
    pub structure: Option<AlmostContact>,
    pub flow: Option<FlowModel>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: ClassificationReport,
    pub artifacts: Artifacts,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }
}

struct Abort {
    message: String,
    residual: Option<f64>,
    exit_code: i32,
}

impl Abort {
    fn new(e: impl std::fmt::Display, residual: Option<f64>, exit_code: i32) -> Self {
        Self { message: e.to_string(), residual, exit_code }
    }

    fn invariant(e: impl std::fmt::Display) -> Self {
        Self::new(e, None, EXIT_INVARIANT)
    }
}

fn spec_abort(e: SpecError) -> Abort {
    match e {
        SpecError::Manifold(m) => Abort::new(m, None, EXIT_HYPOTHESIS),
        other => Abort::new(other, None, EXIT_PARSE),
    }
}

fn shs_abort(e: ShsError) -> Abort {
    let residual = match &e {
        ShsError::PreconditionViolated { residual, .. }
        | ShsError::ShsViolation { residual, .. }
        | ShsError::KernelInclusionFails { residual } => Some(*residual),
        _ => None,
    };
    Abort::new(e, residual, EXIT_INVARIANT)
}

/// Parses `text` and runs the full pipeline.
pub fn run_pipeline_text(text: &str, config: &RunConfig) -> Outcome {
    let mut report = ClassificationReport::new(config);
    report.stages.push(Stage::Parse);
    let parsed = config
        .validate()
        .map_err(|e| Abort::new(e, None, EXIT_PARSE))
        .and_then(|_| RawSpec::parse(text).map_err(spec_abort));
    match parsed {
        Ok(raw) => run_pipeline_with(report, &raw, config),
        Err(a) => {
            report.failure = Some(Failure { stage: Stage::Parse, message: a.message, residual: a.residual, exit_code: a.exit_code });
            Outcome { report, artifacts: Artifacts::default() }
        }
    }
}

/// Runs the pipeline on an already parsed spec.
pub fn run_pipeline(raw: &RawSpec, config: &RunConfig) -> Outcome {
    let mut report = ClassificationReport::new(config);
    report.stages.push(Stage::Parse);
    if let Err(e) = config.validate() {
        report.failure = Some(Failure { stage: Stage::Parse, message: e.to_string(), residual: None, exit_code: EXIT_PARSE });
        return Outcome { report, artifacts: Artifacts::default() };
    }
    run_pipeline_with(report, raw, config)
}

fn run_pipeline_with(mut report: ClassificationReport, raw: &RawSpec, config: &RunConfig) -> Outcome {
    let mut art = Artifacts::default();
    report.config.name = Some(raw.name.clone());
    let mut stage = Stage::ValidateSpec;
    let result = stages(&mut report, &mut art, raw, config, &mut stage);
    if let Err(a) = result {
        report.failure = Some(Failure { stage, message: a.message, residual: a.residual, exit_code: a.exit_code });
    }
    Outcome { report, artifacts: art }
}

fn stages(
    report: &mut ClassificationReport,
    art: &mut Artifacts,
    raw: &RawSpec,
    config: &RunConfig,
    stage: &mut Stage,
) -> Result<(), Abort> {
    let mut enter = |report: &mut ClassificationReport, s: Stage| {
        *stage = s;
        report.stages.push(s);
    };

    enter(report, Stage::ValidateSpec);
    let spec = raw.build(&config.overrides).map_err(spec_abort)?;
    let mf = spec.manifold.clone();
    let tol = mf.tol();
    report.config.backend = Some(mf.backend_name());
    report.config.grid_n = mf.chart().map(|c| c.n);
    report.config.tol = Some(tol);
    art.spec = Some(spec.clone());
    let (g, r) = (&spec.metric, &spec.field);

    enter(report, Stage::CausalCharacter);
    let causal = causal_character(&mf, r, g);
    report.causal = Some(causal.character);
    if causal.character != Causal::Timelike {
        let e = ConformalError::NotTimelike { max: causal.max, at: causal.argmax };
        return Err(Abort::new(e, Some(causal.max), EXIT_HYPOTHESIS));
    }

    enter(report, Stage::ConformalFactor);
    let normalized = match normalize_conformal(&mf, g, r) {
        Ok(n) => n,
        Err(ConformalError::NotConformal(rep)) => {
            let residual = rep.residual;
            report.sigma = Some(Stats::of(&mf, &rep.sigma));
            let e = ConformalError::NotConformal(rep);
            return Err(Abort::new(e, Some(residual), EXIT_HYPOTHESIS));
        }
        Err(e @ (ConformalError::NotTimelike { .. } | ConformalError::NotLorentzian)) => {
            return Err(Abort::new(e, None, EXIT_HYPOTHESIS))
        }
        Err(e) => return Err(Abort::invariant(e)),
    };
    let crep = &normalized.report;
    report.sigma = Some(Stats::of(&mf, &crep.sigma));
    report.is_killing = Some(crep.is_killing);
    report.record(Stage::ConformalFactor, [Check::new("L_R g = sigma g", crep.residual, crep.threshold)]);

    enter(report, Stage::NormalizeConformal);
    report.record(
        Stage::NormalizeConformal,
        [
            Check::new("g~(R,R) = -1", normalized.unit_residual, tol),
            Check::new("L_R g~ = 0", normalized.killing_residual, 10.0 * tol),
        ],
    );
    let g_tilde = normalized.metric;
    art.g_tilde = Some(g_tilde.clone());

    enter(report, Stage::Riemannianize);
    let g_hat = riemannianize(&mf, &g_tilde, r).map_err(shs_abort)?;
    art.g_hat = Some(g_hat.clone());

    enter(report, Stage::GeodesicUnitCheck);
    let geo = geodesic_unit_check(&mf, &g_hat, r).map_err(shs_abort)?;
    report.record(Stage::GeodesicUnitCheck, geo.checks().into_iter().cloned());
    report.gate("geodesic", geo.passed());
    if !geo.passed() {
        let bad = geo.checks().into_iter().find(|c| !c.passed()).expect("a failing check");
        return Err(Abort::new(format!("`{}` failed", bad.name), Some(bad.residual), EXIT_INVARIANT));
    }

    enter(report, Stage::BuildThetaOmega);
    let shs = build_theta_omega(&mf, &g_hat, r, spec.orientation).map_err(shs_abort)?;
    report.tau = Some(Stats::of(&mf, &shs.tau));
    report.record(Stage::BuildThetaOmega, shs.checks.iter().cloned());
    report.gate("shs", shs.passed());
    art.shs = Some(shs.clone());

    enter(report, Stage::DecomposeBasicClass);
    let (positive, integral) = verify_nonexact_volume(&mf, &shs.theta, &shs.omega).map_err(Abort::invariant)?;
    let mut dec = decompose_basic_class(&mf, &shs.d_theta, &shs.omega, r).map_err(Abort::invariant)?;
    dec.alpha = fix_gauge(&mf, &shs.theta, r, &dec.alpha).map_err(Abort::invariant)?;
    dec.residual = (&(&shs.d_theta - &shs.omega.scale(dec.k)) - &exterior_derivative(&mf, &dec.alpha).map_err(Abort::invariant)?)
        .sup_norm();
    dec.alpha_basic = crate::basic::basic_check(&mf, &dec.alpha, r);
    report.record(
        Stage::DecomposeBasicClass,
        [
            Check::new("d theta = k Omega + d alpha", dec.residual, 10.0 * tol),
            Check::new("i_R alpha = 0", dec.alpha_basic.interior, dec.alpha_basic.tol),
            Check::new("L_R alpha = 0", dec.alpha_basic.lie, dec.alpha_basic.tol),
            Check::new("int theta ^ Omega > 0", if positive { 0.0 } else { 1.0 }, 0.0),
        ],
    );
    report.decomposition = Some(DecompositionSummary {
        k: dec.k,
        method: dec.method,
        alpha_norm: dec.alpha.sup_norm(),
        alpha: dec.alpha.comps().iter().map(|c| Stats::of(&mf, c)).collect(),
        residual: dec.residual,
        volume_integral: integral,
    });
    let dec_ok = report.checks.iter().filter(|c| c.stage == Stage::DecomposeBasicClass).all(|c| c.passed);
    report.gate("decomposition", dec_ok);
    art.decomposition = Some(dec.clone());
    if !dec_ok {
        let bad = report.checks.iter().rev().find(|c| !c.passed).expect("a failing check");
        return Err(Abort::new(format!("`{}` failed", bad.name), Some(bad.residual), EXIT_INVARIANT));
    }

    enter(report, Stage::Classify);
    let cls = classify(&mf, &shs, &dec).map_err(Abort::invariant)?;
    report.record(Stage::Classify, cls.checks.iter().cloned());
    report.gate("classification", true);
    report.case = Some(cls.case);
    report.k = Some(cls.k);
    report.certificate = cls.certificate.clone();
    art.classification = Some(cls.clone());

    enter(report, Stage::BuildAlmostContact);
    let acs = build_almost_contact(&mf, &cls.eta, r, &g_hat, &shs.theta, &shs.omega, cls.k).map_err(Abort::invariant)?;
    report.record(Stage::BuildAlmostContact, acs.checks.iter().cloned());
    report.gate("structure", true);
    report.structure = Some(StructureSummary {
        flavor: acs.flavor,
        metric_adjusted: acs.metric_adjusted,
        eta: acs.eta.comps().iter().map(|c| Stats::of(&mf, c)).collect(),
    });
    art.structure = Some(acs.clone());

    enter(report, Stage::NijenhuisNormality);
    let nij = nijenhuis_normality(&mf, &acs);
    report.nijenhuis_residual = Some(nij);
    let normal = Check::new("[phi,phi] + d eta (x) xi = 0", nij, 10.0 * tol);
    report.gate("normality", normal.passed());
    report.record(Stage::NijenhuisNormality, [normal]);

    enter(report, Stage::ChiIsomorphism);
    let chi = chi_isomorphism(&cls.eta, &shs.omega).map_err(Abort::invariant)?;
    let chi_r = (&chi.inverse_of_lambda - r).sup_norm();
    let checks = [
        Check::new("chi(chi^-1(lambda)) = lambda", chi.roundtrip, tol),
        Check::new("chi^-1(lambda) = R", chi_r, 10.0 * tol),
    ];
    report.gate("chi", checks.iter().all(Check::passed));
    report.record(Stage::ChiIsomorphism, checks);

    if let Some(scan) = &config.orbit_scan {
        enter(report, Stage::ClosedOrbitScan);
        let model = FlowModel::new(&mf, r, &g_hat).map_err(Abort::invariant)?;
        let samples = scan.samples.clone().unwrap_or_else(|| default_samples(&model));
        let result =
            closed_orbit_scan(&model, &samples, scan.horizon, scan.step, scan.threshold).map_err(Abort::invariant)?;
        // compact 3-dimensional Reeb flows carry at least two closed orbits
        let ok = match (cls.case, &result.verdict) {
            (Case::Sasakian, Verdict::OrbitsFound { distinct }) => *distinct >= 2,
            (Case::Sasakian, Verdict::NoneDetectedUpToHorizon) => false,
            (Case::CoKahler, _) => true,
        };
        report.gate("orbit_scan", ok);
        report.orbit_scan = Some(result);
        art.flow = Some(model);
    }

    if let (Some(b1), false) = (spec.metadata.b1, config.skip_betti) {
        enter(report, Stage::BettiConsistency);
        let verdict = betti_consistency(b1, cls.case).map_err(Abort::invariant)?;
        report.gate("betti", verdict.passed);
        report.betti = Some(verdict);
    }
    Ok(())
}

/// Runs independent specs in parallel; results are sorted by name.
pub fn run_batch(items: &[(String, String)], config: &RunConfig) -> Vec<(String, Outcome)> {
    use rayon::prelude::*;
    let mut out: Vec<(String, Outcome)> = items
        .par_iter()
        .map(|(name, text)| {
            let cfg = RunConfig { source: name.clone(), ..config.clone() };
            (name.clone(), run_pipeline_text(text, &cfg))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
