//! Bundled problem instances with their expected outcomes.

use std::f64::consts::PI;

use crate::classify::{mapping_torus_builder, Case};
use crate::pipeline::{Stage, EXIT_HYPOTHESIS, EXIT_OK};

#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    pub exit_code: i32,
    pub case: Option<Case>,
    /// Failing stage for negative controls.
    pub stage: Option<Stage>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub toml: String,
    pub expected: Expected,
    /// Whether the same file is also meaningful on the other backend.
    pub both_backends: bool,
}

fn ok(case: Case) -> Expected {
    Expected { exit_code: EXIT_OK, case: Some(case), stage: None }
}

fn fails(stage: Stage) -> Expected {
    Expected { exit_code: EXIT_HYPOTHESIS, case: None, stage: Some(stage) }
}

pub const FLAT_T3: &str = r#"[manifold]
name = "flat_t3"
backend = "frame"
periods = [1.0, 1.0, 1.0]

[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1

[field]
r1 = 1

[fixture-metadata]
b1 = 3
description = "flat Lorentzian 3-torus with R = d/dt"
"#;

pub const FLAT_T3_GRID: &str = r#"[manifold]
name = "flat_t3_grid"
backend = "grid"
periods = [1.0, 1.0, 1.0]
resolution = 32

[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1

[field]
r1 = 1

[fixture-metadata]
b1 = 3
description = "flat Lorentzian 3-torus on the spectral grid"
"#;

pub const WARPED_T3: &str = r#"[manifold]
name = "warped_t3"
backend = "grid"
periods = [1.0, 1.0, 1.0]
resolution = 64

[metric]
signature = "lorentzian"
g11 = "-exp(0.6*sin(2*pi*t))"
g22 = "exp(0.6*sin(2*pi*t))"
g33 = "exp(0.6*sin(2*pi*t))"

[field]
r1 = 1

[fixture-metadata]
b1 = 3
description = "conformally flat torus, e^(2h)(-dt^2+dx^2+dy^2) with h = 0.3 sin(2 pi t)"
"#;

pub const TWISTED_T3: &str = r#"[manifold]
name = "twisted_t3"
backend = "frame"
periods = [1.0, 1.0, 1.0]
resolution = 32

[metric]
signature = "lorentzian"
g11 = -1
g13 = "-0.1*cos(2*pi*x)"
g22 = 1
g33 = "1 - 0.01*cos(2*pi*x)^2"

[field]
r1 = 1

[fixture-metadata]
b1 = 3
description = "torus with theta = dt + 0.1 cos(2 pi x) dy"
"#;

pub const HEISENBERG: &str = r#"[manifold]
name = "heisenberg"
backend = "frame"
structure = [[3, 1, 2, -1.0]]

[metric]
signature = "lorentzian"
g11 = 1
g22 = 1
g33 = -1

[field]
r3 = 1

[fixture-metadata]
b1 = 2
frame_volume = 1.0
description = "Heisenberg nilmanifold, [e1,e2] = -e3, R = e3"
"#;

pub const SU2_HOPF: &str = r#"[manifold]
name = "su2_hopf"
backend = "frame"
structure = [[1, 2, 3, -1.0], [2, 3, 1, -1.0], [3, 1, 2, -1.0]]

[metric]
signature = "lorentzian"
g11 = 1
g22 = 1
g33 = -1

[field]
r3 = 1

[fixture-metadata]
b1 = 0
frame_volume = 157.91367041742973
description = "SU(2) with [e_i,e_j] = -eps_ijk e_k, R = e3 tangent to the Hopf fibres"
"#;

pub const IRRATIONAL_FLOW: &str = r#"[manifold]
name = "irrational_flow"
backend = "frame"
periods = [1.0, 1.0, 1.0]

[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1

[field]
r1 = 1
r2 = "sqrt(2) - 1"

[fixture-metadata]
b1 = 3
description = "flat torus with the Killing field d/dt + (sqrt 2 - 1) d/dx"
"#;

pub const SPACELIKE_FIELD: &str = r#"[manifold]
name = "spacelike_field"
backend = "frame"
periods = [1.0, 1.0, 1.0]

[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1

[field]
r2 = 1

[fixture-metadata]
b1 = 3
description = "negative control: R = d/dx is spacelike"
"#;

pub const NONCONFORMAL_FIELD: &str = r#"[manifold]
name = "nonconformal_field"
backend = "grid"
periods = [1.0, 1.0, 1.0]
resolution = 16

[metric]
signature = "lorentzian"
g11 = -1
g22 = 1
g33 = 1

[field]
r1 = 1
r3 = "0.2*sin(2*pi*x)"

[fixture-metadata]
b1 = 3
description = "negative control: the shear d/dt + 0.2 sin(2 pi x) d/dy is timelike but not conformal"
"#;

/// Every bundled fixture, sorted by name.
pub fn all() -> Vec<Fixture> {
    let fixed = |text: &str, expected: Expected, both_backends: bool| Fixture {
        name: crate::specfile::RawSpec::parse(text).expect("bundled fixture parses").name,
        toml: text.to_string(),
        expected,
        both_backends,
    };
    let mut out = vec![
        fixed(FLAT_T3, ok(Case::CoKahler), true),
        fixed(FLAT_T3_GRID, ok(Case::CoKahler), true),
        fixed(WARPED_T3, ok(Case::CoKahler), false),
        fixed(TWISTED_T3, ok(Case::CoKahler), true),
        fixed(HEISENBERG, ok(Case::Sasakian), false),
        fixed(SU2_HOPF, ok(Case::Sasakian), false),
        fixed(IRRATIONAL_FLOW, ok(Case::CoKahler), false),
        fixed(SPACELIKE_FIELD, fails(Stage::CausalCharacter), true),
        fixed(NONCONFORMAL_FIELD, fails(Stage::ConformalFactor), false),
    ];
    for rho in [PI, PI / 2.0] {
        let mt = mapping_torus_builder(rho, [1.0; 3], 32).expect("lattice rotation");
        out.push(Fixture { name: mt.raw.name.clone(), toml: mt.toml, expected: ok(Case::CoKahler), both_backends: false });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

pub fn find(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::FrameAlgebra;
    use crate::specfile::{Overrides, RawSpec};

    #[test]
    fn names_are_unique_and_sorted() {
        let names: Vec<String> = all().into_iter().map(|f| f.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
    }

    #[test]
    fn frame_algebras_match_constructors() {
        let su2 = RawSpec::parse(SU2_HOPF).unwrap().build(&Overrides::default()).unwrap();
        assert_eq!(su2.manifold.algebra(), &FrameAlgebra::su2());
        assert!((su2.manifold.total_volume() - 16.0 * PI * PI).abs() < 1e-12);
        let h = RawSpec::parse(HEISENBERG).unwrap().build(&Overrides::default()).unwrap();
        assert_eq!(h.manifold.algebra(), &FrameAlgebra::heisenberg());
    }

    #[test]
    fn every_fixture_validates_with_a_strong_field() {
        for f in all() {
            let spec = RawSpec::parse(&f.toml).unwrap().build(&Overrides::default()).unwrap();
            assert!(spec.min_reference_norm() > 0.5, "{}", f.name);
        }
    }
}
