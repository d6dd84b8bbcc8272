//! The lift `L(C)` through `H(u, g0) = (u, x(u)·g0)`, the induced system on
//! `G⁰`, and the numeric conjugacy check between the two control flows.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{rng_for, sample_periodic_with, PwcControl, SamplerOptions};
use crate::error::{Error, Result};
use crate::fixed_point::{
    bounded_orbit_check, sample_g0, x_of_general, x_of_periodic, BoundedOrbit, FixedPointOptions,
};
use crate::flow::{solution, StepOptions, SystemSpec};
use crate::group::{AlgebraVector, GroupElement};
use crate::reach::{ControlSetEstimate, SpatialIndex};
use crate::spectral::{decompose_element, g0_is_compact, gpm_is_subgroup, DynSplit, SubspaceClass};

/// The system induced on `G⁰ ≅ G/G⁺,⁻`: same drift, control vectors `P⁰Yʲ`.
#[derive(Debug, Clone)]
pub struct InducedSystem {
    base: SystemSpec,
    split: DynSplit,
    induced: SystemSpec,
}

impl InducedSystem {
    /// Requires `G⁺,⁻` to be a subgroup, so that `G → G⁰` is well defined.
    pub fn new(base: &SystemSpec, split: &DynSplit) -> Result<Self> {
        if !gpm_is_subgroup(base.group(), split)? {
            return Err(Error::precondition("G⁺G⁻ is not a subgroup"));
        }
        let p0 = split.projection(SubspaceClass::Zero);
        let vectors = base
            .control_vectors()
            .iter()
            .map(|y| AlgebraVector::new(p0 * y.coeffs()))
            .collect();
        Ok(InducedSystem {
            base: base.clone(),
            split: split.clone(),
            induced: base.with_control_vectors(vectors)?,
        })
    }

    pub fn base(&self) -> &SystemSpec {
        &self.base
    }

    pub fn split(&self) -> &DynSplit {
        &self.split
    }

    /// The induced system as a system on `G` whose solutions from `G⁰` stay in `G⁰`.
    pub fn system(&self) -> &SystemSpec {
        &self.induced
    }

    pub fn control_vectors(&self) -> &[AlgebraVector] {
        self.induced.control_vectors()
    }

    /// The `G⁰` factor of `g = x·y`.
    pub fn projection(&self, g: &GroupElement) -> Result<GroupElement> {
        Ok(decompose_element(self.base.group(), &self.split, g)?.1)
    }

    /// `distance(π(g·h), π(g)·π(h))`.
    pub fn homomorphism_residual(&self, g: &GroupElement, h: &GroupElement) -> Result<f64> {
        let group = self.base.group();
        let lhs = self.projection(&group.multiply(g, h)?)?;
        let rhs = group.multiply(&self.projection(g)?, &self.projection(h)?)?;
        group.distance_total(&lhs, &rhs)
    }
}

/// `φ⁰_{t,u}(g0)` for the induced system.
pub fn induced_solution(
    ind: &InducedSystem,
    u: &PwcControl,
    t: f64,
    g0: &GroupElement,
    opts: &StepOptions,
) -> Result<GroupElement> {
    if t == 0.0 {
        return Ok(g0.clone());
    }
    solution(&ind.induced, u, t, g0, opts)
}

/// How `x(u)` is computed for non-periodic controls, and the orbit test applied to lifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftParams {
    pub k_max: usize,
    /// Base length `T` of the periodic truncations.
    pub base: f64,
    /// Orbit window `T_b`.
    pub window: f64,
    /// Boundedness radius `R`.
    pub radius: f64,
    pub fixed_point: FixedPointOptions,
}

impl Default for LiftParams {
    fn default() -> Self {
        LiftParams {
            k_max: 8,
            base: 5.0,
            window: 30.0,
            radius: 2.0,
            fixed_point: FixedPointOptions {
                compute_orbit: false,
                fiber_range: 0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftSample {
    pub u: PwcControl,
    pub g0: GroupElement,
    pub x_u: GroupElement,
    /// `x(u)·g0`.
    pub lifted: GroupElement,
    pub orbit: BoundedOrbit,
}

impl LiftSample {
    /// Flagged samples failed the bounded-orbit validation.
    pub fn flagged(&self) -> bool {
        !self.orbit.bounded
    }
}

fn g0_residual(ind: &InducedSystem, g0: &GroupElement) -> Result<f64> {
    let group = ind.base.group();
    group.distance_total(&ind.projection(g0)?, g0)
}

/// `x(u)`: the periodic solver for periodic `u`, the truncation limit otherwise.
fn x_of(
    sys: &SystemSpec,
    split: &DynSplit,
    u: &PwcControl,
    params: &LiftParams,
) -> Result<GroupElement> {
    let fp = FixedPointOptions {
        compute_orbit: false,
        fiber_range: 0,
        ..params.fixed_point
    };
    let r = match u.period() {
        Some(_) => x_of_periodic(sys, u, split, &fp)?,
        None => x_of_general(sys, u, split, params.k_max, params.base, &fp)?,
    };
    Ok(r.x_u)
}

/// `H(u, g0) = (u, x(u)·g0)`, with the orbit of the lifted point validated.
pub fn h_map(
    ind: &InducedSystem,
    u: &PwcControl,
    g0: &GroupElement,
    params: &LiftParams,
) -> Result<LiftSample> {
    let (sys, split) = (&ind.base, &ind.split);
    if !g0_is_compact(sys.group(), split)? {
        return Err(Error::precondition("G⁰ is not compact"));
    }
    let r = g0_residual(ind, g0)?;
    if r > 1e-10 {
        return Err(Error::domain(format!(
            "g0 is not in G⁰ (projection residual {r:e})"
        )));
    }
    let x_u = x_of(sys, split, u, params)?;
    let lifted = sys.group().multiply(&x_u, g0)?;
    let orbit = bounded_orbit_check(
        sys,
        Some(split),
        &lifted,
        u,
        params.window,
        params.radius,
        &params.fixed_point,
    )?;
    Ok(LiftSample {
        u: u.clone(),
        g0: g0.clone(),
        x_u,
        lifted,
        orbit,
    })
}

/// `distance(x(θ_s u)·φ⁰_{s,u}(g0), φ_{s,u}(x(u)·g0))`.
pub fn conjugacy_residual(
    ind: &InducedSystem,
    u: &PwcControl,
    g0: &GroupElement,
    s: f64,
    params: &LiftParams,
) -> Result<f64> {
    let (sys, split) = (&ind.base, &ind.split);
    let group = sys.group();
    let step = &params.fixed_point.step;
    let x_u = x_of(sys, split, u, params)?;
    let rhs = solution(sys, u, s, &group.multiply(&x_u, g0)?, step)?;
    let g0_s = induced_solution(ind, u, s, g0, step)?;
    let x_shift = x_of(sys, split, &u.shift(s), params)?;
    let lhs = group.multiply(&x_shift, &g0_s)?;
    group.distance_total(&lhs, &rhs)
}

/// Sweep settings; the step is deliberately coarse so that the residual is
/// dominated by integration error and the halving ratio is observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyParams {
    pub trials: usize,
    pub seed: u64,
    pub period_min: f64,
    pub period_max: f64,
    pub max_switches: usize,
    pub s_max: f64,
    pub step: f64,
    pub tol: f64,
    pub min_ratio: f64,
}

impl Default for ConjugacyParams {
    fn default() -> Self {
        ConjugacyParams {
            trials: 100,
            seed: 0,
            period_min: 1.0,
            period_max: 3.0,
            max_switches: 4,
            s_max: 3.0,
            step: 0.02,
            tol: 1e-4,
            min_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyReport {
    pub trials: usize,
    pub max_residual: f64,
    pub step_size: f64,
    pub residual_at_half_step: f64,
    /// `max_residual / residual_at_half_step`.
    pub halving_ratio: f64,
    pub pass: bool,
}

fn fixed_step(step: f64) -> StepOptions {
    // the local error test would refine the coarse step and mask the halving ratio
    StepOptions {
        step,
        local_tol: 1e-3,
        max_halvings: 0,
        ..Default::default()
    }
}

/// Max conjugacy residual over random `(u, g0, s)`, at `step` and at `step / 2`.
pub fn conjugacy_sweep(ind: &InducedSystem, params: &ConjugacyParams) -> Result<ConjugacyReport> {
    if params.trials == 0 || !(params.step > 0.0) || !(params.s_max >= 0.0) {
        return Err(Error::argument("invalid conjugacy sweep parameters"));
    }
    if !(params.period_min > 0.0 && params.period_max >= params.period_min) {
        return Err(Error::argument("invalid period range"));
    }
    let sys = &ind.base;
    let samples: Vec<(PwcControl, GroupElement, f64)> = (0..params.trials as u64)
        .map(|i| {
            let mut rng = rng_for(params.seed, i);
            let tau = rng.gen_range(params.period_min..=params.period_max);
            let u = sample_periodic_with(
                sys.constraint(),
                tau,
                params.max_switches,
                &SamplerOptions::default(),
                &mut rng,
            )?;
            let g0 = sample_g0(sys.group(), &ind.split, &mut rng)?;
            let s = rng.gen_range(-params.s_max..=params.s_max);
            Ok((u, g0, s))
        })
        .collect::<Result<_>>()?;
    let sweep = |step: f64| -> Result<f64> {
        let lp = LiftParams {
            fixed_point: FixedPointOptions {
                step: fixed_step(step),
                ..LiftParams::default().fixed_point
            },
            ..LiftParams::default()
        };
        let residuals = samples
            .par_iter()
            .map(|(u, g0, s)| conjugacy_residual(ind, u, g0, *s, &lp))
            .collect::<Result<Vec<f64>>>()?;
        Ok(residuals.into_iter().fold(0.0, f64::max))
    };
    let coarse = sweep(params.step)?;
    let fine = sweep(0.5 * params.step)?;
    let ratio = if fine > 0.0 {
        coarse / fine
    } else {
        f64::INFINITY
    };
    Ok(ConjugacyReport {
        trials: params.trials,
        max_residual: coarse,
        step_size: params.step,
        residual_at_half_step: fine,
        halving_ratio: ratio,
        pass: coarse < params.tol && ratio >= params.min_ratio,
    })
}

/// The `L(C)` membership proxy: bounded orbit, and every orbit sample within
/// `ε` of the control-set cloud.
pub fn in_lift(
    ind: &InducedSystem,
    sample: &LiftSample,
    estimate: &ControlSetEstimate,
    params: &LiftParams,
) -> Result<bool> {
    if sample.flagged() {
        return Ok(false);
    }
    let sys = &ind.base;
    let eps = estimate.match_radius;
    let index = SpatialIndex::new(sys.group(), estimate.cloud.points(), eps)?;
    let steps = (params.window / params.fixed_point.orbit_grid)
        .round()
        .max(1.0) as i64;
    let times: Vec<f64> = (-steps..=steps)
        .map(|i| params.window * i as f64 / steps as f64)
        .collect();
    for t in times {
        let p = solution(sys, &sample.u, t, &sample.lifted, &params.fixed_point.step)?;
        if !index.any_within(&p, eps)? {
            return Ok(false);
        }
    }
    Ok(true)
}
