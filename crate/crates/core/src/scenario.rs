//! Versioned JSON scenario files: group, drift, control vectors, constraint
//! and numeric defaults.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{ControlConstraint, SamplerOptions};
use crate::error::{Error, Result};
use crate::fixed_point::{FixedPointOptions, TheoremParams};
use crate::flow::{StepOptions, SystemSpec};
use crate::group::{AlgebraVector, GroupSpec};
use crate::lift::{ConjugacyParams, LiftParams};
use crate::reach::CloudOptions;
use crate::spectral::{split_derivation, Derivation, DynSplit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Abelian,
    Se2,
    Heisenberg,
    Nilpotent,
}

/// `dim` is required for abelian groups; `basis` (strictly upper triangular
/// matrices, row-major) for general nilpotent ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealizationName {
    /// Derivation matrix in basis coordinates, flow conjugated through `exp`.
    ExpChart,
    /// `D = ad(A)` for a matrix generator `A`.
    Inner,
    Se2Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub realization: RealizationName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintName {
    Box,
    Polytope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub kind: ConstraintName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
}

fn required<'a, T>(field: &'a Option<T>, path: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| Error::config(path, "missing field"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub samples: usize,
    pub max_switches: usize,
    pub checkpoints: usize,
    pub scales: usize,
    pub step: f64,
    pub generations: usize,
    pub generation_samples: usize,
    pub generation_switches: usize,
    pub vertex_weight: f64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        let c = CloudOptions::default();
        CloudConfig {
            samples: c.samples,
            max_switches: c.max_switches,
            checkpoints: c.checkpoints,
            scales: c.scales,
            step: c.step.step,
            generations: c.generations,
            generation_samples: c.generation_samples,
            generation_switches: c.generation_switches,
            vertex_weight: c.sampler.vertex_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub trials: usize,
    pub quick_trials: usize,
    pub period_min: f64,
    pub period_max: f64,
    pub max_switches: usize,
    pub perturbation: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        let t = TheoremParams::default();
        TheoremConfig {
            trials: t.trials,
            quick_trials: 10,
            period_min: t.period_min,
            period_max: t.period_max,
            max_switches: t.max_switches,
            perturbation: t.perturbation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugacyConfig {
    pub trials: usize,
    pub quick_trials: usize,
    pub step: f64,
    pub s_max: f64,
    pub tol: f64,
}

impl Default for ConjugacyConfig {
    fn default() -> Self {
        let c = ConjugacyParams::default();
        ConjugacyConfig {
            trials: c.trials,
            quick_trials: 20,
            step: c.step,
            s_max: c.s_max,
            tol: c.tol,
        }
    }
}

/// Numeric defaults; every field may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    /// Integration step `h` for solutions and fixed points.
    pub step: f64,
    /// Reachable-set horizon `T`.
    pub horizon: f64,
    /// Orbit window `T_b`.
    pub orbit_window: f64,
    /// Boundedness radius `R`.
    pub radius: f64,
    /// Cloud match radius `ε`; twice the nearest-neighbor spacing when absent.
    pub eps: Option<f64>,
    pub seed: u64,
    pub split_tol: f64,
    pub newton_tol: f64,
    pub cloud: CloudConfig,
    pub theorem: TheoremConfig,
    pub conjugacy: ConjugacyConfig,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            step: 1e-3,
            horizon: 5.0,
            orbit_window: 30.0,
            radius: 2.0,
            eps: None,
            seed: 0,
            split_tol: 1e-9,
            newton_tol: 1e-12,
            cloud: CloudConfig::default(),
            theorem: TheoremConfig::default(),
            conjugacy: ConjugacyConfig::default(),
        }
    }
}

/// The file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub group: GroupConfig,
    pub drift: DriftConfig,
    pub control_vectors: Vec<Vec<f64>>,
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub defaults: Defaults,
}

/// A loaded scenario with its system and dynamical split built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub system: SystemSpec,
    pub split: DynSplit,
}

fn matrix(path: &str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(Error::config(
            path,
            format!("expected a {n}x{m} row-major matrix"),
        ));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::config(path, "matrix entries must be finite"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn square(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    matrix(path, rows, rows.len(), rows.len())
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            path,
            format!("must be positive and finite (got {x})"),
        ))
    }
}

fn check_defaults(d: &Defaults) -> Result<()> {
    for (path, x) in [
        ("defaults.step", d.step),
        ("defaults.horizon", d.horizon),
        ("defaults.orbit_window", d.orbit_window),
        ("defaults.radius", d.radius),
        ("defaults.split_tol", d.split_tol),
        ("defaults.newton_tol", d.newton_tol),
        ("defaults.cloud.step", d.cloud.step),
        ("defaults.theorem.period_min", d.theorem.period_min),
        ("defaults.theorem.perturbation", d.theorem.perturbation),
        ("defaults.conjugacy.step", d.conjugacy.step),
        ("defaults.conjugacy.tol", d.conjugacy.tol),
    ] {
        positive(path, x)?;
    }
    if let Some(eps) = d.eps {
        positive("defaults.eps", eps)?;
    }
    if d.theorem.period_max < d.theorem.period_min {
        return Err(Error::config(
            "defaults.theorem.period_max",
            "must be at least period_min",
        ));
    }
    if d.cloud.samples == 0 || d.cloud.scales == 0 || d.cloud.checkpoints == 0 {
        return Err(Error::config(
            "defaults.cloud",
            "samples, scales and checkpoints must be positive",
        ));
    }
    if d.cloud.scales > 30 {
        return Err(Error::config("defaults.cloud.scales", "at most 30 scales"));
    }
    if !(0.0..=1.0).contains(&d.cloud.vertex_weight) {
        return Err(Error::config(
            "defaults.cloud.vertex_weight",
            "must lie in [0, 1]",
        ));
    }
    if d.theorem.trials == 0 || d.conjugacy.trials == 0 {
        return Err(Error::config("defaults", "trial counts must be positive"));
    }
    if !(d.conjugacy.s_max >= 0.0 && d.conjugacy.s_max.is_finite()) {
        return Err(Error::config(
            "defaults.conjugacy.s_max",
            "must be non-negative",
        ));
    }
    Ok(())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { "$".to_string() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        if file.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    file.schema
                ),
            ));
        }
        if file.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        check_defaults(&file.defaults)?;
        Ok(file)
    }

    fn build_group(&self) -> Result<GroupSpec> {
        let g = &self.group;
        match g.family {
            FamilyName::Abelian => {
                GroupSpec::abelian(*required(&g.dim, "group.dim")?).map_err(at("group.dim"))
            }
            FamilyName::Se2 => Ok(GroupSpec::se2()),
            FamilyName::Heisenberg => Ok(GroupSpec::heisenberg()),
            FamilyName::Nilpotent => {
                let mats = required(&g.basis, "group.basis")?
                    .iter()
                    .enumerate()
                    .map(|(i, b)| square(&format!("group.basis[{i}]"), b))
                    .collect::<Result<Vec<_>>>()?;
                GroupSpec::nilpotent(mats).map_err(at("group.basis"))
            }
        }
    }

    fn build_drift(&self, group: &GroupSpec) -> Result<Derivation> {
        let d = &self.drift;
        match d.realization {
            RealizationName::ExpChart => {
                let n = group.dim();
                let m = matrix("drift.matrix", required(&d.matrix, "drift.matrix")?, n, n)?;
                Derivation::exp_chart(group, m).map_err(at("drift.matrix"))
            }
            RealizationName::Inner => {
                let k = group.matrix_size();
                let a = matrix(
                    "drift.generator",
                    required(&d.generator, "drift.generator")?,
                    k,
                    k,
                )?;
                Derivation::inner(group, a).map_err(at("drift.generator"))
            }
            RealizationName::Se2Auto => {
                let alpha = *required(&d.alpha, "drift.alpha")?;
                let beta = *required(&d.beta, "drift.beta")?;
                Derivation::se2_auto(group, alpha, beta).map_err(at("drift"))
            }
        }
    }

    fn build_constraint(&self) -> Result<ControlConstraint> {
        let c = &self.constraint;
        match c.kind {
            ConstraintName::Box => ControlConstraint::new_box(
                DVector::from_column_slice(required(&c.lo, "constraint.lo")?),
                DVector::from_column_slice(required(&c.hi, "constraint.hi")?),
            )
            .map_err(at("constraint")),
            ConstraintName::Polytope => ControlConstraint::new_polytope(
                required(&c.vertices, "constraint.vertices")?
                    .iter()
                    .map(|v| DVector::from_column_slice(v))
                    .collect(),
            )
            .map_err(at("constraint.vertices")),
        }
    }

    /// Builds the system and its split, re-checking every invariant.
    pub fn build(self) -> Result<Scenario> {
        check_defaults(&self.defaults)?;
        let group = self.build_group()?;
        let drift = self.build_drift(&group)?;
        let n = group.dim();
        let mut vectors = Vec::with_capacity(self.control_vectors.len());
        for (i, v) in self.control_vectors.iter().enumerate() {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(
                    format!("control_vectors[{i}]"),
                    format!("expected {n} finite algebra coordinates"),
                ));
            }
            vectors.push(AlgebraVector::from_slice(v));
        }
        let constraint = self.build_constraint()?;
        let system =
            SystemSpec::new(group, drift, vectors, constraint).map_err(at("control_vectors"))?;
        let split = split_derivation(system.group(), system.drift(), self.defaults.split_tol)
            .map_err(at("drift"))?;
        Ok(Scenario {
            file: self,
            system,
            split,
        })
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        ScenarioFile::parse(text)?.build()
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn defaults(&self) -> &Defaults {
        &self.file.defaults
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions::with_step(self.defaults().step)
    }

    pub fn cloud_options(&self) -> CloudOptions {
        let d = self.defaults();
        CloudOptions {
            horizon: d.horizon,
            samples: d.cloud.samples,
            max_switches: d.cloud.max_switches,
            seed: d.seed,
            checkpoints: d.cloud.checkpoints,
            scales: d.cloud.scales,
            sampler: SamplerOptions {
                vertex_weight: d.cloud.vertex_weight,
            },
            step: StepOptions::with_step(d.cloud.step),
            generations: d.cloud.generations,
            generation_samples: d.cloud.generation_samples,
            generation_switches: d.cloud.generation_switches,
        }
    }

    pub fn fixed_point_options(&self) -> FixedPointOptions {
        let d = self.defaults();
        FixedPointOptions {
            step: self.step_options(),
            newton_tol: d.newton_tol,
            orbit_window: d.orbit_window,
            ..Default::default()
        }
    }

    pub fn theorem_params(&self, trials: usize) -> TheoremParams {
        let d = self.defaults();
        TheoremParams {
            trials,
            seed: d.seed,
            period_min: d.theorem.period_min,
            period_max: d.theorem.period_max,
            max_switches: d.theorem.max_switches,
            radius: d.radius,
            perturbation: d.theorem.perturbation,
            fixed_point: self.fixed_point_options(),
        }
    }

    pub fn lift_params(&self) -> LiftParams {
        let d = self.defaults();
        LiftParams {
            base: d.horizon,
            window: d.orbit_window,
            radius: d.radius,
            fixed_point: FixedPointOptions {
                compute_orbit: false,
                fiber_range: 0,
                ..self.fixed_point_options()
            },
            ..Default::default()
        }
    }

    pub fn conjugacy_params(&self, trials: usize) -> ConjugacyParams {
        let d = self.defaults();
        ConjugacyParams {
            trials,
            seed: d.seed,
            period_min: d.theorem.period_min,
            period_max: d.theorem.period_max,
            max_switches: d.theorem.max_switches,
            s_max: d.conjugacy.s_max,
            step: d.conjugacy.step,
            tol: d.conjugacy.tol,
            ..Default::default()
        }
    }
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("scalar_a1", include_str!("../scenarios/scalar_a1.json")),
    (
        "plane_hyperbolic",
        include_str!("../scenarios/plane_hyperbolic.json"),
    ),
    (
        "heis_hyperbolic",
        include_str!("../scenarios/heis_hyperbolic.json"),
    ),
    (
        "se2_compact_center",
        include_str!("../scenarios/se2_compact_center.json"),
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "schema": 1, "name": "s",
        "group": {"family": "abelian", "dim": 1},
        "drift": {"realization": "exp_chart", "matrix": [[1.0]]},
        "control_vectors": [[1.0]],
        "constraint": {"kind": "box", "lo": [-1.0], "hi": [1.0]}
    }"#;

    #[test]
    fn bundled_scenarios_load() {
        for (name, text) in BUNDLED {
            let s = Scenario::from_json(text).unwrap();
            assert_eq!(s.name(), name);
        }
    }

    #[test]
    fn minimal_file_loads_with_defaults() {
        let s = Scenario::from_json(SCALAR).unwrap();
        assert_eq!(s.system.dim(), 1);
        assert_eq!(s.defaults().step, 1e-3);
        assert!(s.split.is_hyperbolic());
    }

    #[test]
    fn errors_carry_the_json_path() {
        let bad = SCALAR.replace("\"dim\": 1", "\"dim\": \"one\"");
        match Scenario::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "group.dim"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SCALAR.replace("[[1.0]]}", "[[1.0, 2.0]]}");
        match Scenario::from_json(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "drift.matrix"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SCALAR.replace("\"schema\": 1", "\"schema\": 2");
        assert!(
            matches!(Scenario::from_json(&bad), Err(Error::Config { path, .. }) if path == "schema")
        );
        let bad = SCALAR.replace("\"name\": \"s\",", "\"name\": \"s\", \"extra\": 3,");
        assert!(matches!(
            Scenario::from_json(&bad),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn control_vector_dimension_is_checked() {
        let bad = SCALAR.replace(
            "\"control_vectors\": [[1.0]]",
            "\"control_vectors\": [[1.0, 0.0]]",
        );
        assert!(matches!(
            Scenario::from_json(&bad),
            Err(Error::Config { path, .. }) if path == "control_vectors[0]"
        ));
    }
}
