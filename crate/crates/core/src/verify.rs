//! Scenario-level reports: the split, the control-set estimate, and the
//! pass/fail checks behind `verify`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed_point::{check_hypotheses, main_theorem_check, TheoremReport};
use crate::lift::{conjugacy_sweep, ConjugacyReport, InducedSystem};
use crate::reach::{
    max_distance_from_identity, sampled_control_set, CloudOptions, SampledControlSet,
};
use crate::scenario::Scenario;
use crate::spectral::{
    check_subalgebra_closure, split_flags, ClosureReport, SplitFlags, SplitSummary,
};

/// Closure residual accepted by `verify`.
pub const CLOSURE_LIMIT: f64 = 1e-8;
/// Newton residual accepted for `x(u)`.
pub const RESIDUAL_LIMIT: f64 = 1e-8;
/// Fraction of perturbed orbits that must leave the `2R` ball.
pub const ESCAPE_FRACTION: f64 = 0.99;
pub const HALVING_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeReport {
    pub scenario: String,
    pub split: SplitSummary,
    pub closure: ClosureReport,
    pub flags: SplitFlags,
}

pub fn decompose_report(sc: &Scenario) -> Result<DecomposeReport> {
    let group = sc.system.group();
    Ok(DecomposeReport {
        scenario: sc.name().to_string(),
        split: sc.split.summary(),
        closure: check_subalgebra_closure(group, &sc.split)?,
        flags: split_flags(group, &sc.split)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSetSummary {
    pub eps: f64,
    pub forward_points: usize,
    pub backward_points: usize,
    pub count: usize,
    pub failures: usize,
    pub max_distance: f64,
    pub ball_witness: bool,
    pub ball_witness_r: f64,
    /// Coordinate-wise `[min, max]` of the estimate.
    pub extent: Vec<[f64; 2]>,
}

pub fn control_set_summary(sc: &Scenario, set: &SampledControlSet) -> Result<ControlSetSummary> {
    let est = &set.estimate;
    let points = est.cloud.points();
    let n = sc.system.dim();
    let extent = (0..n)
        .map(|i| {
            points
                .iter()
                .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], p| {
                    [lo.min(p.coords()[i]), hi.max(p.coords()[i])]
                })
        })
        .collect();
    Ok(ControlSetSummary {
        eps: est.match_radius,
        forward_points: set.forward.len(),
        backward_points: set.backward.len(),
        count: points.len(),
        failures: est.cloud.meta.failures,
        max_distance: max_distance_from_identity(sc.system.group(), points)?,
        ball_witness: est.witness.covered,
        ball_witness_r: est.witness.radius,
        extent,
    })
}

/// The control-set estimate at the scenario's settings; `quick` skips refinement rounds.
pub fn estimate_control_set(sc: &Scenario, level: Level) -> Result<SampledControlSet> {
    if !sc.system.constraint().has_interior_origin() {
        return Err(Error::precondition(
            "0 is not an interior point of the control range, so e cannot be interior to a control set",
        ));
    }
    let opts = match level {
        Level::Full => sc.cloud_options(),
        Level::Quick => CloudOptions {
            generations: 0,
            ..sc.cloud_options()
        },
    };
    sampled_control_set(&sc.system, &opts, sc.defaults().eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: &'static str,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    fn at_most(id: &'static str, value: f64, limit: f64) -> Self {
        Check {
            id,
            pass: value <= limit,
            value,
            limit,
        }
    }

    fn below(id: &'static str, value: f64, limit: f64) -> Self {
        Check {
            id,
            pass: value < limit,
            value,
            limit,
        }
    }

    fn at_least(id: &'static str, value: f64, limit: f64) -> Self {
        Check {
            id,
            pass: value >= limit,
            value,
            limit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub level: Level,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub flags: SplitFlags,
    pub closure: ClosureReport,
    pub control_set: ControlSetSummary,
    pub orbits: TheoremReport,
    pub conjugacy: ConjugacyReport,
}

impl VerifyReport {
    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Runs every check for a scenario.
///
/// Standing hypotheses (`0 ∈ int Ω`, a ball around `e` in the estimate,
/// compact `G⁰`, `G⁺,⁻` a subgroup) are reported as precondition errors
/// rather than failed checks. The quick level samples fewer trials, skips
/// cloud refinement, and leaves out the orbit-in-cloud check.
pub fn verify(sc: &Scenario, level: Level) -> Result<VerifyReport> {
    let sys = &sc.system;
    let group = sys.group();
    let closure = check_subalgebra_closure(group, &sc.split)?;
    let flags = split_flags(group, &sc.split)?;
    check_hypotheses(sys, &sc.split)?;
    let set = estimate_control_set(sc, level)?;
    let control_set = control_set_summary(sc, &set)?;
    let d = sc.defaults();
    let (trials, conj_trials) = match level {
        Level::Full => (d.theorem.trials, d.conjugacy.trials),
        Level::Quick => (
            d.theorem.quick_trials.max(1),
            d.conjugacy.quick_trials.max(1),
        ),
    };
    let params = sc.theorem_params(trials);
    let mut orbits = main_theorem_check(sys, &sc.split, &set.estimate, &params)?;
    orbits.samples.clear();
    let ind = InducedSystem::new(sys, &sc.split)?;
    let conjugacy = conjugacy_sweep(&ind, &sc.conjugacy_params(conj_trials))?;

    let closure_max = closure
        .plus
        .max(closure.zero)
        .max(closure.minus)
        .max(closure.zero_normalizes);
    let n = orbits.trials as f64;
    let mut checks = vec![
        Check::below("subalgebra_closure", closure_max, CLOSURE_LIMIT),
        Check::below("fixed_point_residual", orbits.max_residual, RESIDUAL_LIMIT),
        Check::at_most(
            "fiber_return",
            orbits.max_fiber_distance,
            params.fixed_point.fiber_tol,
        ),
        Check::at_least("bounded_orbit_fraction", orbits.bounded as f64 / n, 1.0),
    ];
    if level == Level::Full {
        checks.push(Check::at_least(
            "orbit_in_control_set_fraction",
            orbits.within_eps as f64 / n,
            1.0,
        ));
    }
    checks.extend([
        Check::at_least(
            "perturbed_orbit_escape_fraction",
            orbits.escape_fraction.unwrap_or(1.0),
            ESCAPE_FRACTION,
        ),
        Check::below(
            "lift_conjugacy_residual",
            conjugacy.max_residual,
            d.conjugacy.tol,
        ),
        Check::at_least(
            "lift_conjugacy_halving_ratio",
            conjugacy.halving_ratio,
            HALVING_RATIO,
        ),
    ]);
    Ok(VerifyReport {
        scenario: sc.name().to_string(),
        level,
        seed: d.seed,
        pass: checks.iter().all(|c| c.pass),
        checks,
        flags,
        closure,
        control_set,
        orbits,
        conjugacy,
    })
}
