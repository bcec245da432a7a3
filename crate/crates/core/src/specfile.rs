//! Problem-instance files.
//!
//! ```toml
//! [manifold]
//! name = "heisenberg"
//! backend = "frame"            # or "grid"
//! structure = [[3, 1, 2, -1.0]] # c^3_{12} = -1 (1-based); partners filled in
//! periods = [1.0, 1.0, 1.0]    # abelian frames and grids
//! resolution = 32              # grid only
//!
//! [metric]
//! signature = "lorentzian"
//! g11 = 1
//! g22 = 1
//! g33 = -1
//!
//! [field]
//! r3 = 1
//!
//! [fixture-metadata]
//! b1 = 2
//! orientation = 1
//! frame_volume = 1.0
//! ```
//!
//! Components are numbers or expression strings (see [`crate::expr`]).

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::exterior::{FieldMatrix, Metric, Signature, VectorField};
use crate::expr::{Expr, ExprError};
use crate::manifold::{
    validate_frame_algebra, FixtureMetadata, GridChart, Manifold, ManifoldError, ManifoldSpec,
    Orientation,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{component}: {source}")]
    Expression {
        component: String,
        #[source]
        source: ExprError,
    },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Frame,
    Grid,
}

impl BackendKind {
    pub fn parse(s: &str) -> Result<Self, SpecError> {
        match s {
            "frame" => Ok(Self::Frame),
            "grid" => Ok(Self::Grid),
            other => Err(SpecError::Parse(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Component {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldSection {
    name: Option<String>,
    backend: String,
    #[serde(default)]
    structure: Vec<(usize, usize, usize, f64)>,
    periods: Option<[f64; 3]>,
    resolution: Option<usize>,
    #[serde(default)]
    dealias: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataSection {
    b1: Option<u32>,
    orientation: Option<i32>,
    frame_volume: Option<f64>,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLayout {
    manifold: ManifoldSection,
    metric: toml::Table,
    field: toml::Table,
    #[serde(rename = "fixture-metadata")]
    metadata: Option<MetadataSection>,
}

/// Parsed but not yet validated instance; expressions are kept symbolic so the
/// same file can be realized on either backend.
#[derive(Clone, Debug)]
pub struct RawSpec {
    pub name: String,
    pub backend: BackendKind,
    pub structure: Vec<f64>,
    pub periods: Option<[f64; 3]>,
    pub resolution: Option<usize>,
    pub dealias: bool,
    pub signature: Signature,
    pub metric: [[Expr; 3]; 3],
    pub field: [Expr; 3],
    pub b1: Option<u32>,
    pub orientation: Orientation,
    pub frame_volume: Option<f64>,
    pub description: String,
}

/// Command-line overrides applied when realizing a [`RawSpec`].
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
}

fn component_expr(v: &toml::Value, key: &str) -> Result<Expr, SpecError> {
    let c: Component = v
        .clone()
        .try_into()
        .map_err(|_| SpecError::Parse(format!("`{key}` must be a number or an expression string")))?;
    match c {
        Component::Number(x) => Ok(Expr::constant(x)),
        Component::Text(s) => Expr::parse(&s).map_err(|e| SpecError::Expression { component: key.to_string(), source: e }),
    }
}

impl RawSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let layout: FileLayout = toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        let m = layout.manifold;
        let backend = BackendKind::parse(&m.backend)?;
        let mut structure = vec![0.0; 27];
        let mut given = [false; 27];
        for &(i, j, k, v) in &m.structure {
            if !(1..=3).contains(&i) || !(1..=3).contains(&j) || !(1..=3).contains(&k) {
                return Err(SpecError::Parse(format!("structure index ({i},{j},{k}) out of range 1..=3")));
            }
            let p = ((i - 1) * 3 + (j - 1)) * 3 + (k - 1);
            structure[p] = v;
            given[p] = true;
        }
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let p = (i * 3 + j) * 3 + k;
                    let q = (i * 3 + k) * 3 + j;
                    if given[p] && !given[q] {
                        structure[q] = -structure[p];
                    }
                }
            }
        }

        let mut metric_table = layout.metric;
        let signature = match metric_table.remove("signature").as_ref().and_then(|v| v.as_str()) {
            Some("lorentzian") => Signature::Lorentzian,
            Some("riemannian") => Signature::Riemannian,
            Some(other) => return Err(SpecError::Parse(format!("unknown signature `{other}`"))),
            None => return Err(SpecError::Parse("metric.signature is required".into())),
        };
        let mut metric: [[Expr; 3]; 3] = Default::default();
        let mut seen = [[false; 3]; 3];
        for (key, v) in &metric_table {
            let b = key.as_bytes();
            if b.len() != 3 || b[0] != b'g' || !(b'1'..=b'3').contains(&b[1]) || !(b'1'..=b'3').contains(&b[2]) {
                return Err(SpecError::Parse(format!("unknown metric key `{key}`")));
            }
            let (i, j) = ((b[1] - b'1') as usize, (b[2] - b'1') as usize);
            let e = component_expr(v, key)?;
            if seen[j][i] && metric[j][i] != e {
                return Err(SpecError::Parse(format!("`{key}` disagrees with its symmetric partner")));
            }
            seen[i][j] = true;
            seen[j][i] = true;
            metric[i][j] = e.clone();
            metric[j][i] = e;
        }

        let mut field: [Expr; 3] = Default::default();
        for (key, v) in &layout.field {
            let i = match key.as_str() {
                "r1" => 0,
                "r2" => 1,
                "r3" => 2,
                other => return Err(SpecError::Parse(format!("unknown field key `{other}`"))),
            };
            field[i] = component_expr(v, key)?;
        }

        let md = layout.metadata.unwrap_or(MetadataSection {
            b1: None,
            orientation: None,
            frame_volume: None,
            description: String::new(),
        });
        let orientation = match md.orientation.unwrap_or(1) {
            1 => Orientation::Positive,
            -1 => Orientation::Negative,
            o => return Err(SpecError::Parse(format!("orientation must be 1 or -1, got {o}"))),
        };
        Ok(Self {
            name: m.name.unwrap_or_else(|| "unnamed".to_string()),
            backend,
            structure,
            periods: m.periods,
            resolution: m.resolution,
            dealias: m.dealias,
            signature,
            metric,
            field,
            b1: md.b1,
            orientation,
            frame_volume: md.frame_volume,
            description: md.description,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Realizes the instance on a backend and runs [`ManifoldSpec::validate`].
    pub fn build(&self, ov: &Overrides) -> Result<ManifoldSpec, SpecError> {
        let backend = ov.backend.unwrap_or(self.backend);
        let algebra = validate_frame_algebra(3, self.structure.clone())?;
        let manifold = match backend {
            BackendKind::Grid => {
                if !algebra.is_abelian() {
                    return Err(ManifoldError::NotRepresentable(
                        "the grid backend is a flat torus chart; structure constants must vanish".into(),
                    )
                    .into());
                }
                let n = ov.grid_n.or(self.resolution).unwrap_or(32);
                let mut chart = GridChart::new(n, self.periods.unwrap_or([1.0; 3]))?;
                chart.dealias = self.dealias;
                Manifold::grid(chart)
            }
            BackendKind::Frame => {
                let periods = if algebra.is_abelian() { Some(self.periods.unwrap_or([1.0; 3])) } else { None };
                let volume = self
                    .frame_volume
                    .unwrap_or_else(|| periods.map(|p| p[0] * p[1] * p[2]).unwrap_or(1.0));
                Manifold::frame(algebra, periods, volume)
            }
        };
        let manifold = match ov.tol {
            Some(t) => manifold.with_tol(t),
            None => manifold,
        };
        let convert = |e: &Expr| match manifold.plan() {
            Some(plan) => e.to_samples(plan),
            None => e.to_exact_field(manifold.periods()),
        };
        let conv = |e: &Expr, key: String| convert(e).map_err(|source| SpecError::Expression { component: key, source });
        let mut entries = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                entries.push(conv(&self.metric[i][j], format!("g{}{}", i + 1, j + 1))?);
            }
        }
        let tensor = FieldMatrix::from_fn(3, |i, j| entries[i * 3 + j].clone());
        let metric = Metric::new(tensor, self.signature);
        let comps = (0..3)
            .map(|i| conv(&self.field[i], format!("r{}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let metadata = FixtureMetadata { b1: self.b1, description: self.description.clone() };
        Ok(ManifoldSpec::validate(
            self.name.clone(),
            manifold,
            metric,
            VectorField::new(comps),
            self.orientation,
            metadata,
        )?)
    }
}

impl Default for Expr {
    fn default() -> Self {
        Expr::Num(0.0)
    }
}

/// Parses and realizes in one step.
pub fn validate_spec(text: &str, ov: &Overrides) -> Result<ManifoldSpec, SpecError> {
    RawSpec::parse(text)?.build(ov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::FrameAlgebra;

    const FLAT: &str = r#"
[manifold]
name = "flat"
backend = "frame"
[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1
[field]
r1 = 1
[fixture-metadata]
b1 = 3
"#;

    #[test]
    fn flat_parses_on_both_backends() {
        let raw = RawSpec::parse(FLAT).unwrap();
        let frame = raw.build(&Overrides::default()).unwrap();
        assert_eq!(frame.manifold.backend_name(), "frame");
        let grid = raw.build(&Overrides { backend: Some(BackendKind::Grid), grid_n: Some(8), tol: None }).unwrap();
        assert!(grid.manifold.is_grid());
        assert_eq!(grid.metadata.b1, Some(3));
    }

    #[test]
    fn heisenberg_structure_partner_is_filled() {
        let text = FLAT.replace("backend = \"frame\"", "backend = \"frame\"\nstructure = [[3, 1, 2, -1.0]]");
        let raw = RawSpec::parse(&text).unwrap();
        let spec = raw.build(&Overrides::default()).unwrap();
        assert_eq!(spec.manifold.algebra(), &FrameAlgebra::heisenberg());
        assert!(raw.build(&Overrides { backend: Some(BackendKind::Grid), ..Default::default() }).is_err());
    }

    #[test]
    fn vanishing_field_is_reported() {
        let text = FLAT.replace("backend = \"frame\"", "backend = \"grid\"\nresolution = 16").replace("r1 = 1", "r1 = \"sin(2*pi*x)\"");
        let err = validate_spec(&text, &Overrides::default()).unwrap_err();
        assert!(matches!(err, SpecError::Manifold(ManifoldError::VanishingField { .. })), "{err}");
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let text = FLAT.replace("g22 = 1", "g22 = 0");
        let err = validate_spec(&text, &Overrides::default()).unwrap_err();
        assert!(matches!(err, SpecError::Manifold(ManifoldError::DegenerateMetric { .. })), "{err}");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(RawSpec::parse("not toml ["), Err(SpecError::Parse(_))));
        let bad = FLAT.replace("g22 = 1", "g22 = \"1 +\"");
        assert!(matches!(RawSpec::parse(&bad), Err(SpecError::Expression { .. })));
        let asym = FLAT.replace("g22 = 1", "g22 = 1\ng12 = 0.1\ng21 = 0.2");
        assert!(matches!(RawSpec::parse(&asym), Err(SpecError::Parse(_))));
    }
}
