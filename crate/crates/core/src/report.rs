//! Text and structured (JSON) reports, and CSV plot data.
//!
//! Structured reports have sorted keys and every float written with 17
//! significant digits, so they are byte-reproducible and survive a parse and
//! re-emit unchanged.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::dynamics::{integrate_flow, FlowModel};
use crate::field::ScalarField;
use crate::manifold::Manifold;
use crate::pipeline::{ClassificationReport, Outcome};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown report format `{other}` (expected text or structured)")),
        }
    }
}

struct Canonical {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for Canonical {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// Serializes a JSON value canonically (sorted keys, fixed float format).
pub fn write_canonical(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical { pretty: PrettyFormatter::new() });
    serde::Serialize::serialize(v, &mut ser).expect("in-memory serialization");
    let mut s = String::from_utf8(buf).expect("JSON is UTF-8");
    s.push('\n');
    s
}

/// Canonical JSON for any serializable value.
pub fn emit_value<T: serde::Serialize>(v: &T) -> String {
    write_canonical(&serde_json::to_value(v).expect("value serializes"))
}

/// Parses a structured report and re-emits it canonically.
pub fn canonicalize(text: &str) -> Result<String, serde_json::Error> {
    Ok(write_canonical(&serde_json::from_str::<Value>(text)?))
}

pub fn report_value(report: &ClassificationReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    let obj = v.as_object_mut().expect("report is an object");
    obj.insert("exit_code".into(), report.exit_code().into());
    obj.insert(
        "versions".into(),
        serde_json::json!({ "reeb_core": env!("CARGO_PKG_VERSION"), "report_format": REPORT_FORMAT_VERSION }),
    );
    v
}

pub fn emit_structured(report: &ClassificationReport) -> String {
    write_canonical(&report_value(report))
}

/// Merges reports keyed by name; the map makes the order independent of the
/// order in which the runs finished.
pub fn emit_batch<'a>(reports: impl IntoIterator<Item = (&'a str, &'a ClassificationReport)>) -> String {
    let map: serde_json::Map<String, Value> =
        reports.into_iter().map(|(name, r)| (name.to_string(), report_value(r))).collect();
    write_canonical(&Value::Object(map))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

pub fn emit_text(report: &ClassificationReport) -> String {
    let mut s = String::new();
    let c = &report.config;
    let _ = writeln!(
        s,
        "spec      {} ({})",
        c.name.as_deref().unwrap_or("?"),
        c.source
    );
    let _ = writeln!(
        s,
        "backend   {}{}  tol {}",
        c.backend.unwrap_or("?"),
        c.grid_n.map(|n| format!(" N={n}")).unwrap_or_default(),
        fmt_opt(c.tol)
    );
    if let Some(sig) = &report.sigma {
        let _ = writeln!(s, "sigma     min {:.6e}  mean {:.6e}  max {:.6e}", sig.min, sig.mean, sig.max);
    }
    if let Some(t) = &report.tau {
        let _ = writeln!(s, "tau       min {:.6e}  mean {:.6e}  max {:.6e}", t.min, t.mean, t.max);
    }
    if let (Some(case), Some(k)) = (report.case, report.k) {
        let _ = writeln!(s, "case      {}  k = {k:.16e}", case.as_str());
    }
    if let Some(n) = report.nijenhuis_residual {
        let _ = writeln!(s, "normality {n:.3e}");
    }
    if let Some(scan) = &report.orbit_scan {
        let verdict = match &scan.verdict {
            crate::dynamics::Verdict::OrbitsFound { distinct } => format!("{distinct} distinct closed orbits"),
            crate::dynamics::Verdict::NoneDetectedUpToHorizon => {
                format!("none detected up to T = {}", scan.horizon)
            }
        };
        let _ = writeln!(s, "orbits    {verdict} ({} of {} samples returned)", scan.detections.len(), scan.samples.len());
    }
    if let Some(b) = &report.betti {
        let _ = writeln!(s, "betti     b1 = {} -> {} ({})", b.b1, b.case, if b.passed { "consistent" } else { "VIOLATED" });
    }
    let _ = writeln!(s, "checks");
    for ch in &report.checks {
        let _ = writeln!(
            s,
            "  [{}] {:<22} {:<44} {:.3e} <= {:.1e}",
            if ch.passed { "ok" } else { "FAIL" },
            ch.stage.name(),
            ch.name,
            ch.residual,
            ch.tol
        );
    }
    if !report.gates.is_empty() {
        let gates: Vec<String> =
            report.gates.iter().map(|(k, v)| format!("{k}={}", if *v { "pass" } else { "fail" })).collect();
        let _ = writeln!(s, "gates     {}", gates.join(" "));
    }
    if let Some(f) = &report.failure {
        let _ = writeln!(
            s,
            "FAILED at {}: {}{}",
            f.stage.name(),
            f.message,
            f.residual.map(|r| format!(" (residual {r:.6e})")).unwrap_or_default()
        );
    }
    let _ = writeln!(s, "exit      {}", report.exit_code());
    s
}

fn eval_on(mf: &Manifold, f: &ScalarField, p: [f64; 3]) -> f64 {
    match f {
        ScalarField::Const(c) => *c,
        ScalarField::Trig(poly) => poly.eval(p, mf.periods().expect("trig fields carry periods")),
        ScalarField::Samples(v) => mf.plan().expect("samples live on a grid").interpolator(v).eval(p),
    }
}

/// Writes `tau_profile.csv` (and `orbits.csv` when a scan ran) into `dir`.
pub fn write_plots(dir: &Path, outcome: &Outcome) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let art = &outcome.artifacts;
    if let (Some(spec), Some(shs)) = (&art.spec, &art.shs) {
        let mf = &spec.manifold;
        let periods = mf.periods().unwrap_or([1.0; 3]);
        let mut csv = String::from("x,y,tau\n");
        let m = 32;
        for i in 0..m {
            for j in 0..m {
                let p = [0.0, periods[1] * i as f64 / m as f64, periods[2] * j as f64 / m as f64];
                let _ = writeln!(csv, "{:.16e},{:.16e},{:.16e}", p[1], p[2], eval_on(mf, &shs.tau, p));
            }
        }
        let path = dir.join("tau_profile.csv");
        std::fs::write(&path, csv)?;
        written.push(path);
    }
    if let (Some(model), Some(scan)) = (&art.flow, &outcome.report.orbit_scan) {
        let path = dir.join("orbits.csv");
        std::fs::write(&path, orbit_csv(model, &scan.samples, scan.horizon.min(20.0), scan.step))?;
        written.push(path);
    }
    Ok(written)
}

fn orbit_csv(model: &FlowModel, samples: &[Vec<f64>], horizon: f64, step: f64) -> String {
    let dim = model.state_dim();
    let mut csv = String::from("sample,time");
    for i in 0..dim {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (n, x0) in samples.iter().enumerate() {
        let Ok(traj) = integrate_flow(model, x0, horizon, step) else { continue };
        let stride = (traj.points.len() / 2000).max(1);
        for (i, p) in traj.points.iter().enumerate().step_by(stride) {
            let _ = write!(csv, "{n},{:.16e}", i as f64 * traj.step);
            for v in p {
                let _ = write!(csv, ",{v:.16e}");
            }
            csv.push('\n');
        }
    }
    csv
}
