//! The hyperbolic automorphism `ψ = C_y ∘ φ_τ` on `G⁺,⁻`, inversion of
//! `f_ψ(g) = g·ψ(g⁻¹)`, the bounded-orbit basepoint `x(u)`, and the sampled
//! check that bounded orbits live in the control set.
//!
//! Orbits of periodic controls are sampled through period anchoring: if
//! `φ_{nτ,u}(x(u)k) = x(u)·w_n` then `w_{n+1} = y·φ_τ(w_n)` exactly, and for
//! `t = nτ + r` with `0 ≤ r < τ`,
//! `φ_{t,u}(x(u)k) = φ_{r,u}(e)·φ_r(x(u)·w_n)`.
//! Only `φ_{r,u}(e)` on one period is integrated, so long windows do not
//! amplify integration error through the unstable directions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{rng_for, sample_periodic_with, PwcControl, SamplerOptions};
use crate::error::{Error, Result};
use crate::flow::{
    automorphism_flow, flow_of, identity_solution_at, solution, StepOptions, SystemSpec,
};
use crate::group::{AlgebraVector, GroupElement, GroupSpec};
use crate::linalg::RealSchur;
use crate::reach::{ControlSetEstimate, SpatialIndex};
use crate::spectral::{
    decompose_element, g0_is_compact, gpm_from_coords, gpm_is_subgroup, Derivation, DynSplit,
    GpmCoords, SubspaceClass,
};

const NEWTON_ITERATIONS: usize = 200;
const FD_STEP: f64 = 1e-6;
const HYPERBOLICITY_MARGIN: f64 = 1e-6;
/// Largest `‖e^{tD}‖` tolerated when products cancel growing factors.
const AMPLIFICATION_LIMIT: f64 = 1e8;

/// `ψ = C_y ∘ φ_τ` restricted to `G⁺,⁻`.
#[derive(Debug, Clone)]
pub struct HyperbolicAuto {
    group: GroupSpec,
    drift: Derivation,
    split: DynSplit,
    tau: f64,
    y: GroupElement,
    y_inv: GroupElement,
    /// Rows of the inverse change of basis for `g⁺` then `g⁻`.
    coords_map: DMatrix<f64>,
    differential: DMatrix<f64>,
}

fn gpm_rows(split: &DynSplit) -> DMatrix<f64> {
    let n = split.algebra_dim();
    let p = split.dim(SubspaceClass::Plus);
    let m = split.dim(SubspaceClass::Minus);
    let inv = split
        .change_of_basis()
        .clone()
        .try_inverse()
        .expect("split bases are invertible");
    let mut rows = DMatrix::zeros(p + m, n);
    rows.rows_mut(0, p).copy_from(&inv.rows(0, p));
    rows.rows_mut(p, m).copy_from(&inv.rows(n - m, m));
    rows
}

fn gpm_columns(split: &DynSplit) -> DMatrix<f64> {
    let bp = split.basis_matrix(SubspaceClass::Plus);
    let bm = split.basis_matrix(SubspaceClass::Minus);
    let mut cols = DMatrix::zeros(split.algebra_dim(), bp.ncols() + bm.ncols());
    cols.columns_mut(0, bp.ncols()).copy_from(&bp);
    cols.columns_mut(bp.ncols(), bm.ncols()).copy_from(&bm);
    cols
}

impl HyperbolicAuto {
    /// Builds `ψ` and checks that its differential on `g⁺ ⊕ g⁻` is hyperbolic.
    pub fn new(sys: &SystemSpec, split: &DynSplit, tau: f64, y: GroupElement) -> Result<Self> {
        Self::from_parts(sys.group(), sys.drift(), split, tau, y)
    }

    pub fn from_parts(
        group: &GroupSpec,
        drift: &Derivation,
        split: &DynSplit,
        tau: f64,
        y: GroupElement,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::argument("ψ needs a positive finite τ"));
        }
        if !gpm_is_subgroup(group, split)? {
            return Err(Error::precondition(
                "G⁺,⁻ is not a subgroup; the quotient construction is not supported",
            ));
        }
        let (x_part, _) = decompose_element(group, split, &y)?;
        if group.norm_from_identity(&x_part)? > 1e-9 {
            return Err(Error::domain("conjugating element is not in G⁰"));
        }
        let coords_map = gpm_rows(split);
        let cols = gpm_columns(split);
        let differential = &coords_map * group.adjoint(&y)? * (drift.matrix() * tau).exp() * &cols;
        if differential.nrows() > 0 {
            let moduli: Vec<f64> = RealSchur::new(&differential)?
                .eigenvalues()
                .iter()
                .map(|e| e.re.hypot(e.im))
                .collect();
            if let Some(m) = moduli
                .iter()
                .find(|m| (*m - 1.0).abs() < HYPERBOLICITY_MARGIN)
            {
                return Err(Error::precondition(format!(
                    "ψ is not hyperbolic: its differential has an eigenvalue of modulus {m}"
                )));
            }
        }
        let y_inv = group.inverse(&y)?;
        Ok(HyperbolicAuto {
            group: group.clone(),
            drift: drift.clone(),
            split: split.clone(),
            tau,
            y,
            y_inv,
            coords_map,
            differential,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn y(&self) -> &GroupElement {
        &self.y
    }

    /// `(dψ)_e` in the `(g⁺, g⁻)` split coordinates.
    pub fn differential_at_e(&self) -> &DMatrix<f64> {
        &self.differential
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    /// `ψ(g) = y·φ_τ(g)·y⁻¹`.
    pub fn apply(&self, g: &GroupElement) -> Result<GroupElement> {
        let f = flow_of(&self.group, &self.drift, self.tau, g)?;
        self.group
            .multiply(&self.group.multiply(&self.y, &f)?, &self.y_inv)
    }

    /// `ψ⁻¹(g) = φ_{−τ}(y⁻¹·g·y)`.
    pub fn apply_inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        let c = self
            .group
            .multiply(&self.group.multiply(&self.y_inv, g)?, &self.y)?;
        flow_of(&self.group, &self.drift, -self.tau, &c)
    }

    /// Point of `G⁺,⁻` with split coordinates `ζ = (ζ⁺, ζ⁻)`.
    pub fn chart(&self, zeta: &DVector<f64>) -> Result<GroupElement> {
        gpm_from_coords(
            &self.group,
            &self.split,
            &GpmCoords::from_stacked(&self.split, zeta),
        )
    }

    /// Split coordinates of `log g` on `g⁺ ⊕ g⁻`.
    fn log_coords(&self, g: &GroupElement) -> Result<DVector<f64>> {
        Ok(&self.coords_map * self.group.log_chart(g)?.coeffs())
    }

    /// Finite-difference Jacobian of `ζ ↦ log_coords(f_ψ(chart(ζ)))` at `ζ`.
    pub fn f_psi_jacobian_fd(&self, zeta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = zeta.len();
        let map = |z: &DVector<f64>| -> Result<DVector<f64>> {
            self.log_coords(&f_psi(self, &self.chart(z)?)?)
        };
        let mut jac = DMatrix::zeros(k, k);
        for j in 0..k {
            let h = FD_STEP * (1.0 + zeta[j].abs());
            let mut zp = zeta.clone();
            let mut zm = zeta.clone();
            zp[j] += h;
            zm[j] -= h;
            jac.set_column(j, &((map(&zp)? - map(&zm)?) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// `f_ψ(g) = g·ψ(g⁻¹)`.
pub fn f_psi(psi: &HyperbolicAuto, g: &GroupElement) -> Result<GroupElement> {
    let group = &psi.group;
    group.multiply(g, &psi.apply(&group.inverse(g)?)?)
}

/// Solves `f_ψ(z) = x` for `z ∈ G⁺,⁻` to `distance(f_ψ(z), x) < tol`.
///
/// Newton's method on the split coordinates of the `G⁺G⁻` chart, started at
/// the linearized solution `(I − (dψ)_e)⁻¹ log x` with central-difference
/// Jacobians and a backtracking line search.
pub fn f_psi_inverse(psi: &HyperbolicAuto, x: &GroupElement, tol: f64) -> Result<GroupElement> {
    if !(tol > 0.0) {
        return Err(Error::argument("tolerance must be positive"));
    }
    let group = &psi.group;
    let k = psi.differential.nrows();
    let target = psi.log_coords(x)?;
    if k == 0 {
        return Ok(group.identity());
    }
    let x_inv = group.inverse(x)?;
    let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let fz = f_psi(psi, &psi.chart(z)?)?;
        psi.log_coords(&group.multiply(&x_inv, &fz)?)
    };
    let linear = DMatrix::identity(k, k) - &psi.differential;
    let lu = linear.clone().lu();
    let mut z = lu
        .solve(&target)
        .ok_or_else(|| Error::precondition("I − (dψ)_e is singular"))?;
    let mut r = residual(&z)?;
    let mut iterations = 0;
    while iterations < NEWTON_ITERATIONS {
        let dist = group.distance(x, &f_psi(psi, &psi.chart(&z)?)?)?;
        if dist < 1e-3 * tol || !r.norm().is_finite() {
            break;
        }
        iterations += 1;
        let jac = if iterations == 1 && z.norm() < 1e-12 {
            linear.clone()
        } else {
            let mut jac = DMatrix::zeros(k, k);
            for j in 0..k {
                let h = FD_STEP * (1.0 + z[j].abs());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                jac.set_column(j, &((residual(&zp)? - residual(&zm)?) / (2.0 * h)));
            }
            jac
        };
        let step = jac.lu().solve(&r).ok_or_else(|| Error::Convergence {
            context: "f_ψ inversion (singular Jacobian)".into(),
            iterations,
            residual: r.norm(),
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &z - &step * lambda;
            let rc = residual(&cand)?;
            if rc.norm() < r.norm() {
                z = cand;
                r = rc;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let out = psi.chart(&z)?;
    let dist = group.distance(x, &f_psi(psi, &out)?)?;
    if !(dist < tol) {
        return Err(Error::Convergence {
            context: "f_ψ inversion".into(),
            iterations,
            residual: dist,
        });
    }
    Ok(out)
}

/// Knobs shared by the fixed-point routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub step: StepOptions,
    /// Newton tolerance relative to `1 + ‖log x‖`.
    pub newton_tol: f64,
    pub fiber_tol: f64,
    /// Return-to-fiber checks run for `|n| ≤ fiber_range`.
    pub fiber_range: i32,
    /// Orbit window `T_b`.
    pub orbit_window: f64,
    pub orbit_grid: f64,
    pub compute_orbit: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            step: StepOptions::default(),
            newton_tol: 1e-12,
            fiber_tol: 1e-6,
            fiber_range: 3,
            orbit_window: 30.0,
            orbit_grid: 0.05,
            compute_orbit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixedPointSource {
    Periodic {
        tau: f64,
    },
    /// Periodic truncations `k = 1..=k_max` with the successive distances.
    Limit {
        k_max: usize,
        base: f64,
        steps: Vec<f64>,
    },
}

/// One return-to-fiber test at time `nτ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberCheck {
    pub n: i32,
    /// Distance of the `G⁺,⁻` part of `φ_{nτ,u}(x(u))` to `x(u)`; `None` if skipped.
    pub distance: Option<f64>,
    /// Step-halving estimate of the numerical error of that component.
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitMode {
    Anchored,
    Direct,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub x_u: GroupElement,
    /// `distance(f_ψ(x(u)), x) / (1 + ‖log x‖)`.
    pub residual: f64,
    pub orbit_bound: Option<f64>,
    pub orbit_window: f64,
    pub orbit_mode: Option<OrbitMode>,
    pub source: FixedPointSource,
    pub fiber_checks: Vec<FiberCheck>,
    /// `y` of the factorization `φ_{τ,u}(e) = x·y`.
    pub y: GroupElement,
}

impl FixedPointResult {
    /// True when every performed fiber check is within `tol`.
    pub fn fiber_ok(&self, tol: f64) -> bool {
        self.fiber_checks
            .iter()
            .all(|c| c.distance.is_none_or(|d| d <= tol))
    }

    pub fn report(&self) -> FixedPointReport {
        FixedPointReport {
            x_u: self.x_u.coords().iter().copied().collect(),
            residual: self.residual,
            orbit_bound: self.orbit_bound,
            orbit_window: self.orbit_window,
            orbit_mode: self.orbit_mode.clone(),
            source: self.source.clone(),
            fiber_checks: self.fiber_checks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub x_u: Vec<f64>,
    pub residual: f64,
    pub orbit_bound: Option<f64>,
    pub orbit_window: f64,
    pub orbit_mode: Option<OrbitMode>,
    pub source: FixedPointSource,
    pub fiber_checks: Vec<FiberCheck>,
}

/// `G⁰` compact and `G⁺,⁻` a subgroup.
pub fn check_hypotheses(sys: &SystemSpec, split: &DynSplit) -> Result<()> {
    if !g0_is_compact(sys.group(), split)? {
        return Err(Error::precondition("G⁰ is not compact"));
    }
    if !gpm_is_subgroup(sys.group(), split)? {
        return Err(Error::precondition(
            "G⁺,⁻ is not a subgroup; the quotient construction is not supported",
        ));
    }
    Ok(())
}

/// `‖e^{tD}‖₂`, infinite on overflow.
fn amplification(sys: &SystemSpec, t: f64) -> f64 {
    let m = (sys.drift().matrix() * t).exp();
    if m.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    m.singular_values().max()
}

/// The data needed to sample orbits of a periodic control by period anchoring.
#[derive(Debug, Clone)]
pub struct PeriodicAnchor {
    u: PwcControl,
    tau: f64,
    x_u: GroupElement,
    y: GroupElement,
}

impl PeriodicAnchor {
    pub fn x_u(&self) -> &GroupElement {
        &self.x_u
    }

    /// `φ_{t,u}(x(u)·k)` at each of `times`.
    pub fn orbit(
        &self,
        sys: &SystemSpec,
        k: &GroupElement,
        times: &[f64],
        opts: &StepOptions,
    ) -> Result<Vec<GroupElement>> {
        let group = sys.group();
        let split_time = |t: f64| -> (i64, f64) {
            let n = (t / self.tau).floor();
            let r = (t - n * self.tau).clamp(0.0, self.tau);
            (n as i64, r)
        };
        let parts: Vec<(i64, f64)> = times.iter().map(|&t| split_time(t)).collect();
        let rs: Vec<f64> = parts.iter().map(|p| p.1).collect();
        let starts = identity_solution_at(sys, &self.u, &rs, opts)?;
        let n_min = parts.iter().map(|p| p.0).min().unwrap_or(0).min(0);
        let n_max = parts.iter().map(|p| p.0).max().unwrap_or(0).max(0);
        // w[n − n_min] = w_n
        let mut w: Vec<Option<GroupElement>> = vec![None; (n_max - n_min + 1) as usize];
        w[(-n_min) as usize] = Some(k.clone());
        let y_inv = group.inverse(&self.y)?;
        for n in 1..=n_max {
            let prev = w[(n - 1 - n_min) as usize]
                .as_ref()
                .expect("filled in order");
            let next = group.multiply(&self.y, &automorphism_flow(sys, self.tau, prev)?)?;
            w[(n - n_min) as usize] = Some(next);
        }
        for n in (n_min..0).rev() {
            let prev = w[(n + 1 - n_min) as usize]
                .as_ref()
                .expect("filled in order");
            let next = automorphism_flow(sys, -self.tau, &group.multiply(&y_inv, prev)?)?;
            w[(n - n_min) as usize] = Some(next);
        }
        parts
            .iter()
            .zip(&starts.states)
            .map(|(&(n, r), e_r)| {
                let wn = w[(n - n_min) as usize].as_ref().expect("filled");
                let base = group.multiply(&self.x_u, wn)?;
                group.multiply(e_r, &automorphism_flow(sys, r, &base)?)
            })
            .collect()
    }
}

fn orbit_grid(window: f64, grid: f64) -> Vec<f64> {
    let steps = (window / grid).round().max(1.0) as i64;
    (-steps..=steps)
        .map(|i| window * i as f64 / steps as f64)
        .collect()
}

/// `φ_{t,u}(g) = φ_{t,u}(e)·φ_t(g)` at each of `times`.
fn direct_orbit(
    sys: &SystemSpec,
    u: &PwcControl,
    g: &GroupElement,
    times: &[f64],
    opts: &StepOptions,
) -> Result<Vec<GroupElement>> {
    let starts = identity_solution_at(sys, u, times, opts)?;
    times
        .iter()
        .zip(&starts.states)
        .map(|(&t, e_t)| sys.group().multiply(e_t, &automorphism_flow(sys, t, g)?))
        .collect()
}

fn sup_from_identity(group: &GroupSpec, points: &[GroupElement]) -> Result<f64> {
    let d = group.distance_from(&group.identity())?;
    Ok(points.iter().map(|p| d.to(p)).fold(0.0, f64::max))
}

/// Fiber part of `φ_{nτ,u}(x(u))` at two step sizes.
fn fiber_check(
    sys: &SystemSpec,
    split: &DynSplit,
    u: &PwcControl,
    x_u: &GroupElement,
    t: f64,
    n: i32,
    opts: &FixedPointOptions,
) -> Result<FiberCheck> {
    let group = sys.group();
    let skipped = |estimate| FiberCheck {
        n,
        distance: None,
        error_estimate: estimate,
    };
    if amplification(sys, t) > AMPLIFICATION_LIMIT {
        return Ok(skipped(f64::INFINITY));
    }
    let mut half = opts.step;
    half.step *= 0.5;
    let coarse = decompose_element(group, split, &solution(sys, u, t, x_u, &opts.step)?)?.0;
    let fine = decompose_element(group, split, &solution(sys, u, t, x_u, &half)?)?.0;
    let estimate = group.distance_total(&coarse, &fine)?;
    if estimate > 0.1 * opts.fiber_tol {
        return Ok(skipped(estimate));
    }
    Ok(FiberCheck {
        n,
        distance: Some(group.distance_total(&fine, x_u)?),
        error_estimate: estimate,
    })
}

fn periodic_core(
    sys: &SystemSpec,
    u: &PwcControl,
    split: &DynSplit,
    opts: &FixedPointOptions,
) -> Result<(FixedPointResult, PeriodicAnchor)> {
    let tau = u
        .period()
        .ok_or_else(|| Error::argument("x(u) for a periodic control needs a period"))?;
    check_hypotheses(sys, split)?;
    if u.dim() != sys.control_vectors().len() {
        return Err(Error::structural(
            "control dimension does not match the system",
        ));
    }
    let group = sys.group();
    let g_tau = identity_solution_at(sys, u, &[tau], &opts.step)?
        .last()
        .clone();
    let (x, y) = decompose_element(group, split, &g_tau)?;
    let psi = HyperbolicAuto::new(sys, split, tau, y.clone())?;
    let scale = 1.0 + group.log_chart(&x)?.norm();
    let x_u = f_psi_inverse(&psi, &x, opts.newton_tol * scale)?;
    let residual = group.distance(&x, &f_psi(&psi, &x_u)?)? / scale;
    let mut fiber_checks = Vec::new();
    for n in -opts.fiber_range..=opts.fiber_range {
        if n != 0 {
            fiber_checks.push(fiber_check(sys, split, u, &x_u, n as f64 * tau, n, opts)?);
        }
    }
    let anchor = PeriodicAnchor {
        u: u.clone(),
        tau,
        x_u: x_u.clone(),
        y: y.clone(),
    };
    let mut result = FixedPointResult {
        x_u,
        residual,
        orbit_bound: None,
        orbit_window: opts.orbit_window,
        orbit_mode: None,
        source: FixedPointSource::Periodic { tau },
        fiber_checks,
        y,
    };
    if opts.compute_orbit {
        let times = orbit_grid(opts.orbit_window, opts.orbit_grid);
        let (points, mode) = if amplification(sys, tau) <= AMPLIFICATION_LIMIT {
            (
                anchor.orbit(sys, &group.identity(), &times, &opts.step)?,
                OrbitMode::Anchored,
            )
        } else {
            let window = capped_window(sys, opts.orbit_window);
            result.orbit_window = window;
            let times = orbit_grid(window, opts.orbit_grid);
            (
                direct_orbit(sys, u, &result.x_u, &times, &opts.step)?,
                OrbitMode::Direct,
            )
        };
        result.orbit_bound = Some(sup_from_identity(group, &points)?);
        result.orbit_mode = Some(mode);
    }
    Ok((result, anchor))
}

/// Window on which a direct orbit from a computed `x(u)` is still meaningful:
/// errors grow like `e^{λ_max t}`, so `t ≤ 20/λ_max`.
fn capped_window(sys: &SystemSpec, window: f64) -> f64 {
    let rate = RealSchur::new(sys.drift().matrix())
        .map(|s| {
            s.eigenvalues()
                .iter()
                .map(|e| e.re.abs())
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);
    if rate > 0.0 {
        window.min(20.0 / rate)
    } else {
        window
    }
}

/// `x(u)` for a periodic control.
pub fn x_of_periodic(
    sys: &SystemSpec,
    u: &PwcControl,
    split: &DynSplit,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    Ok(periodic_core(sys, u, split, opts)?.0)
}

/// `x(u)` together with the anchor for sampling orbits through `x(u)G⁰`.
pub fn periodic_anchor(
    sys: &SystemSpec,
    u: &PwcControl,
    split: &DynSplit,
    opts: &FixedPointOptions,
) -> Result<(FixedPointResult, PeriodicAnchor)> {
    periodic_core(sys, u, split, opts)
}

/// Cauchy steps above this are checked for monotone growth.
const CAUCHY_THRESHOLD: f64 = 1e-6;

/// `x(u)` as the limit of `x(u_k)` over periodic truncations on `[−kT, kT)`.
pub fn x_of_general(
    sys: &SystemSpec,
    u: &PwcControl,
    split: &DynSplit,
    k_max: usize,
    base: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if k_max == 0 {
        return Err(Error::argument("k_max must be at least 1"));
    }
    let inner = FixedPointOptions {
        compute_orbit: false,
        fiber_range: 0,
        ..*opts
    };
    let mut steps: Vec<f64> = Vec::new();
    let mut last: Option<FixedPointResult> = None;
    for k in 1..=k_max {
        let uk = u.periodic_truncation(k, base)?;
        let r = x_of_periodic(sys, &uk, split, &inner)?;
        if let Some(prev) = &last {
            steps.push(sys.group().distance_total(&prev.x_u, &r.x_u)?);
            let n = steps.len();
            if n >= 3
                && steps[n - 1] > CAUCHY_THRESHOLD
                && steps[n - 1] > steps[n - 2]
                && steps[n - 2] > steps[n - 3]
            {
                return Err(Error::Convergence {
                    context: "periodic approximation of x(u)".into(),
                    iterations: k,
                    residual: steps[n - 1],
                });
            }
        }
        last = Some(r);
    }
    let mut result = last.expect("k_max ≥ 1");
    result.source = FixedPointSource::Limit { k_max, base, steps };
    if opts.compute_orbit {
        let window = capped_window(sys, opts.orbit_window);
        let times = orbit_grid(window, opts.orbit_grid);
        let points = direct_orbit(sys, u, &result.x_u, &times, &opts.step)?;
        result.orbit_bound = Some(sup_from_identity(sys.group(), &points)?);
        result.orbit_window = window;
        result.orbit_mode = Some(OrbitMode::Direct);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedOrbit {
    pub bounded: bool,
    pub sup_distance: f64,
    pub mode: OrbitMode,
}

/// Sup of `distance(e, φ_{t,u}(g))` over a grid on `[−T_b, T_b]`, compared with `R`.
///
/// With a split whose hypotheses hold and a periodic control the orbit is
/// period-anchored; otherwise it is the translated identity solution, and
/// when a split is given the window is capped as for a computed `x(u)`.
pub fn bounded_orbit_check(
    sys: &SystemSpec,
    split: Option<&DynSplit>,
    g: &GroupElement,
    u: &PwcControl,
    window: f64,
    radius: f64,
    opts: &FixedPointOptions,
) -> Result<BoundedOrbit> {
    if !(window > 0.0 && radius > 0.0) {
        return Err(Error::argument("orbit window and radius must be positive"));
    }
    let group = sys.group();
    let times = orbit_grid(window, opts.orbit_grid);
    let anchored = match (split, u.period()) {
        (Some(split), Some(tau))
            if check_hypotheses(sys, split).is_ok()
                && amplification(sys, tau) <= AMPLIFICATION_LIMIT =>
        {
            let inner = FixedPointOptions {
                compute_orbit: false,
                fiber_range: 0,
                ..*opts
            };
            let (fp, anchor) = periodic_core(sys, u, split, &inner)?;
            let k = group.multiply(&group.inverse(&fp.x_u)?, g)?;
            Some(anchor.orbit(sys, &k, &times, &opts.step)?)
        }
        _ => None,
    };
    let (points, mode) = match anchored {
        Some(p) => (p, OrbitMode::Anchored),
        None => {
            let times = match split {
                Some(_) => orbit_grid(capped_window(sys, window), opts.orbit_grid),
                None => times,
            };
            (
                direct_orbit(sys, u, g, &times, &opts.step)?,
                OrbitMode::Direct,
            )
        }
    };
    let sup = sup_from_identity(group, &points)?;
    Ok(BoundedOrbit {
        bounded: sup <= radius,
        sup_distance: sup,
        mode,
    })
}

/// Random element of `G⁰`; rotations about the centre for SE(2).
pub fn sample_g0<R: Rng>(group: &GroupSpec, split: &DynSplit, rng: &mut R) -> Result<GroupElement> {
    let k = split.dim(SubspaceClass::Zero);
    if k == 0 {
        return Ok(group.identity());
    }
    let b = split.basis_matrix(SubspaceClass::Zero);
    let coeffs = match group.family() {
        crate::group::Family::Se2 if k == 1 && b[(2, 0)].abs() > 1e-10 => {
            let s = (rng.gen::<f64>() * 2.0 - 1.0) * std::f64::consts::PI / b[(2, 0)].abs();
            DVector::from_element(1, s)
        }
        _ => return Err(Error::precondition("G⁰ is not compact")),
    };
    group.exp_chart(&AlgebraVector::new(b * coeffs))
}

/// Random `v ∈ g⁺ ⊕ g⁻` with `‖v‖ = norm`.
pub fn sample_gpm_vector<R: Rng>(split: &DynSplit, norm: f64, rng: &mut R) -> AlgebraVector {
    let cols = gpm_columns(split);
    loop {
        let xi = DVector::from_fn(cols.ncols(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        if xi.norm() > 1e-3 {
            return AlgebraVector::new(&cols * xi.normalize() * norm);
        }
    }
}

/// Smallest rung of `ε/8, ε/4, ε/2, ε, 2ε` bounding the distance from `p` to
/// the cloud, or the exact capped distance beyond `ε`.
fn cloud_distance_bound(index: &SpatialIndex<'_>, p: &GroupElement, eps: f64) -> Result<f64> {
    for r in [eps / 8.0, eps / 4.0, eps / 2.0, eps] {
        if index.any_within(p, r)? {
            return Ok(r);
        }
    }
    index.nearest_capped(p, 2.0 * eps)
}

/// Parameters of the sampled bounded-orbit check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    pub trials: usize,
    pub seed: u64,
    pub period_min: f64,
    pub period_max: f64,
    pub max_switches: usize,
    /// Boundedness radius `R`.
    pub radius: f64,
    pub perturbation: f64,
    pub fixed_point: FixedPointOptions,
}

impl Default for TheoremParams {
    fn default() -> Self {
        TheoremParams {
            trials: 100,
            seed: 0,
            period_min: 1.0,
            period_max: 3.0,
            max_switches: 4,
            radius: 2.0,
            perturbation: 0.01,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremTrial {
    pub period: f64,
    pub x_u: Vec<f64>,
    pub g0: Vec<f64>,
    pub residual: f64,
    /// Sup distance from `e` over the orbits of `x(u)` and `x(u)·g0`.
    pub orbit_radius: f64,
    /// Upper bound on the largest distance from an orbit sample to the
    /// control-set cloud, on the ladder `ε/8, …, ε`; exact in `(ε, 2ε]`.
    pub orbit_to_cloud: f64,
    /// Sup distance from `e` of the orbit of `x(u)·g0·exp(v)`.
    pub perturbed_sup: f64,
    pub perturbed_escaped: bool,
    pub fiber_max: Option<f64>,
    pub fiber_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub trials: usize,
    pub radius: f64,
    pub eps: f64,
    pub window: f64,
    pub bounded: usize,
    pub within_eps: usize,
    pub escaped: usize,
    pub escape_fraction: Option<f64>,
    pub max_orbit_radius: f64,
    pub max_orbit_to_cloud: f64,
    pub max_residual: f64,
    pub fiber_checks_performed: usize,
    pub fiber_checks_skipped: usize,
    pub max_fiber_distance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<TheoremTrial>,
}

/// Samples periodic controls `u` and `g0 ∈ G⁰`, and checks that the orbit of
/// `x(u)·g0` is bounded and stays within `ε` of the control-set cloud while
/// orbits from `x(u)·g0·exp(v)`, `v ∈ g⁺ ⊕ g⁻`, leave the `2R` ball.
pub fn main_theorem_check(
    sys: &SystemSpec,
    split: &DynSplit,
    estimate: &ControlSetEstimate,
    params: &TheoremParams,
) -> Result<TheoremReport> {
    if !estimate.contains_identity_ball() {
        return Err(Error::precondition(
            "the control-set estimate has no ball witness around e",
        ));
    }
    check_hypotheses(sys, split)?;
    if !(params.period_min > 0.0 && params.period_max >= params.period_min) {
        return Err(Error::argument("invalid period range"));
    }
    let group = sys.group();
    let eps = estimate.match_radius;
    let index = SpatialIndex::new(group, estimate.cloud.points(), eps)?;
    let fp_opts = FixedPointOptions {
        compute_orbit: false,
        ..params.fixed_point
    };
    let window = params.fixed_point.orbit_window;
    let times = orbit_grid(window, params.fixed_point.orbit_grid);
    let trials: Vec<TheoremTrial> = (0..params.trials)
        .into_par_iter()
        .map(|i| -> Result<TheoremTrial> {
            let mut rng = rng_for(params.seed, i as u64);
            let period =
                params.period_min + (params.period_max - params.period_min) * rng.gen::<f64>();
            let u = sample_periodic_with(
                sys.constraint(),
                period,
                params.max_switches,
                &SamplerOptions::default(),
                &mut rng,
            )?;
            let g0 = sample_g0(group, split, &mut rng)?;
            let v = sample_gpm_vector(split, params.perturbation, &mut rng);
            let (fp, anchor) = periodic_core(sys, &u, split, &fp_opts)?;
            let mut orbit =
                anchor.orbit(sys, &group.identity(), &times, &params.fixed_point.step)?;
            if group.norm_from_identity(&g0)? > 0.0 {
                orbit.extend(anchor.orbit(sys, &g0, &times, &params.fixed_point.step)?);
            }
            let orbit_radius = sup_from_identity(group, &orbit)?;
            let mut orbit_to_cloud: f64 = 0.0;
            for p in &orbit {
                orbit_to_cloud = orbit_to_cloud.max(cloud_distance_bound(&index, p, eps)?);
            }
            let k = group.multiply(&g0, &group.exp_chart(&v)?)?;
            let perturbed = anchor.orbit(sys, &k, &times, &params.fixed_point.step)?;
            let perturbed_sup = sup_from_identity(group, &perturbed)?;
            let performed: Vec<f64> = fp.fiber_checks.iter().filter_map(|c| c.distance).collect();
            Ok(TheoremTrial {
                period,
                x_u: fp.x_u.coords().iter().copied().collect(),
                g0: g0.coords().iter().copied().collect(),
                residual: fp.residual,
                orbit_radius,
                orbit_to_cloud,
                perturbed_sup,
                perturbed_escaped: perturbed_sup > 2.0 * params.radius,
                fiber_max: performed.iter().copied().reduce(f64::max),
                fiber_skipped: fp.fiber_checks.len() - performed.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bounded = trials
        .iter()
        .filter(|t| t.orbit_radius <= params.radius)
        .count();
    let within_eps = trials.iter().filter(|t| t.orbit_to_cloud <= eps).count();
    let escaped = trials.iter().filter(|t| t.perturbed_escaped).count();
    let escape_fraction = (!trials.is_empty()).then(|| escaped as f64 / trials.len() as f64);
    let fiber_checks_performed = trials
        .iter()
        .map(|t| 2 * params.fixed_point.fiber_range.max(0) as usize - t.fiber_skipped)
        .sum();
    let fiber_checks_skipped = trials.iter().map(|t| t.fiber_skipped).sum();
    let max_fiber_distance = trials
        .iter()
        .filter_map(|t| t.fiber_max)
        .fold(0.0, f64::max);
    let max_residual = trials.iter().map(|t| t.residual).fold(0.0, f64::max);
    let pass = bounded == trials.len()
        && within_eps == trials.len()
        && escape_fraction.is_none_or(|f| f >= 0.99)
        && max_fiber_distance <= params.fixed_point.fiber_tol
        && max_residual < 1e-8;
    Ok(TheoremReport {
        trials: trials.len(),
        radius: params.radius,
        eps,
        window,
        bounded,
        within_eps,
        escaped,
        escape_fraction,
        max_orbit_radius: trials.iter().map(|t| t.orbit_radius).fold(0.0, f64::max),
        max_orbit_to_cloud: trials.iter().map(|t| t.orbit_to_cloud).fold(0.0, f64::max),
        max_residual,
        fiber_checks_performed,
        fiber_checks_skipped,
        max_fiber_distance,
        pass,
        samples: trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlConstraint;
    use crate::spectral::split_derivation;
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64) -> (SystemSpec, DynSplit) {
        let g = GroupSpec::abelian(1).unwrap();
        let d = Derivation::exp_chart(&g, DMatrix::from_element(1, 1, a)).unwrap();
        let omega = ControlConstraint::new_box(
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let sys = SystemSpec::new(
            g.clone(),
            d.clone(),
            vec![AlgebraVector::from_slice(&[1.0])],
            omega,
        )
        .unwrap();
        let split = split_derivation(&g, &d, 1e-9).unwrap();
        (sys, split)
    }

    #[test]
    fn scaling_automorphism_inverts_in_closed_form() {
        let (sys, split) = scalar(2f64.ln());
        let g = sys.group();
        let psi = HyperbolicAuto::new(&sys, &split, 1.0, g.identity()).unwrap();
        let fx = f_psi(&psi, &g.element(&[3.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(fx.coords()[0], -3.0, epsilon = 1e-12);
        let z = f_psi_inverse(&psi, &g.element(&[-3.0]).unwrap(), 1e-12).unwrap();
        assert_abs_diff_eq!(z.coords()[0], 3.0, epsilon = 1e-12);
        assert_eq!(f_psi(&psi, &g.identity()).unwrap(), g.identity());
    }

    #[test]
    fn constant_control_gives_equilibrium() {
        let (sys, split) = scalar(1.0);
        for c in [-0.8, -0.4, 0.0, 0.4, 0.8] {
            let u = PwcControl::constant(DVector::from_element(1, c), 1.0).unwrap();
            let r = x_of_periodic(&sys, &u, &split, &FixedPointOptions::default()).unwrap();
            assert_abs_diff_eq!(r.x_u.coords()[0], -c, epsilon = 1e-9);
            assert!(r.fiber_ok(1e-6));
            assert!(r.orbit_bound.unwrap() <= c.abs() + 1e-9);
        }
    }

    #[test]
    fn perturbed_equilibrium_escapes() {
        let (sys, _) = scalar(1.0);
        let u = PwcControl::constant(DVector::from_element(1, 0.4), 1.0).unwrap();
        let g = sys.group().element(&[-0.39]).unwrap();
        let opts = FixedPointOptions::default();
        let r = bounded_orbit_check(&sys, None, &g, &u, 10.0, 1.0, &opts).unwrap();
        assert!(!r.bounded);
        // (x₀ + c)e^t − c at t = 10
        assert_abs_diff_eq!(r.sup_distance, 0.01 * 10f64.exp() - 0.4, epsilon = 1e-5);
        let g = sys.group().element(&[-0.4]).unwrap();
        let r = bounded_orbit_check(&sys, None, &g, &u, 10.0, 1.0, &opts).unwrap();
        assert!(r.bounded);
        assert_abs_diff_eq!(r.sup_distance, 0.4, epsilon = 1e-9);
    }

    #[test]
    fn non_hyperbolic_psi_is_rejected() {
        let g = GroupSpec::abelian(1).unwrap();
        let d = Derivation::exp_chart(&g, DMatrix::from_element(1, 1, 1e-9)).unwrap();
        let split = split_derivation(&g, &d, 1e-12).unwrap();
        let err = HyperbolicAuto::from_parts(&g, &d, &split, 1.0, g.identity()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
