//! Drift flows, the control ODE on the group, and solutions through the
//! right-translation identity `φ_{t,u}(g) = φ_{t,u}(e)·φ_t(g)`.

use nalgebra::DMatrix;

use crate::control::{ControlConstraint, PwcControl};
use crate::error::{Error, Result};
use crate::group::{wrap_angle, AlgebraVector, Family, GroupElement, GroupSpec};
use crate::spectral::{Derivation, Realization};

/// `B_k / k!` for `k = 0..=6`; the series `ad/(e^{ad} − 1)` on a nilpotent algebra.
const BERNOULLI_OVER_FACTORIAL: [f64; 7] =
    [1.0, -0.5, 1.0 / 12.0, 0.0, -1.0 / 720.0, 0.0, 1.0 / 30240.0];

/// Step control for the fixed-step RK4 integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Nominal step size (positive, time units).
    pub step: f64,
    /// Run a step-doubling local error estimate every this many steps.
    pub check_every: usize,
    /// Accepted local error per step, relative to `1 + ‖state‖`.
    pub local_tol: f64,
    /// Number of step halvings allowed on one subinterval before failing.
    pub max_halvings: u32,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            step: 1e-3,
            check_every: 64,
            local_tol: 1e-9,
            max_halvings: 8,
        }
    }
}

impl StepOptions {
    pub fn with_step(step: f64) -> Self {
        StepOptions {
            step,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::argument("integration step must be positive"));
        }
        if self.check_every == 0 || !(self.local_tol > 0.0) {
            return Err(Error::argument("invalid local error control settings"));
        }
        Ok(())
    }
}

/// Counters collected during an integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejections: usize,
    pub max_local_error: f64,
}

impl IntegratorStats {
    fn merge(&mut self, other: &IntegratorStats) {
        self.steps += other.steps;
        self.rejections += other.rejections;
        self.max_local_error = self.max_local_error.max(other.max_local_error);
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GroupElement>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn last(&self) -> &GroupElement {
        self.states.last().expect("trajectories are non-empty")
    }
}

/// Family-specific right-hand side in chart coordinates.
#[derive(Debug, Clone)]
enum Kernel {
    Abelian,
    Nilpotent {
        order: usize,
    },
    /// `v̇ = (A₁₁ − cI)v + (I − R)a + y + y_θ J v`, `φ̇ = y_θ` for `A = [[A₁₁, a], [0, c]]`.
    Se2 {
        m: [f64; 4],
        a: [f64; 2],
    },
}

/// A linear control system on one of the supported groups.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    group: GroupSpec,
    drift: Derivation,
    control_vectors: Vec<AlgebraVector>,
    constraint: ControlConstraint,
    kernel: Kernel,
    /// Row-major `D`.
    d: Vec<f64>,
    /// Row-major `m × n` control vectors.
    ys: Vec<f64>,
    /// `c[i][j][k]` flattened.
    structure: Vec<f64>,
}

impl SystemSpec {
    pub fn new(
        group: GroupSpec,
        drift: Derivation,
        control_vectors: Vec<AlgebraVector>,
        constraint: ControlConstraint,
    ) -> Result<Self> {
        let n = group.dim();
        if drift.matrix().nrows() != n {
            return Err(Error::structural(
                "drift derivation does not match the group dimension",
            ));
        }
        if control_vectors.len() != constraint.dim() {
            return Err(Error::structural(format!(
                "{} control vectors but the constraint set lives in ℝ^{}",
                control_vectors.len(),
                constraint.dim()
            )));
        }
        if control_vectors
            .iter()
            .any(|y| y.len() != n || !y.is_finite())
        {
            return Err(Error::structural(
                "control vectors must be finite elements of the algebra",
            ));
        }
        let kernel = match (group.family(), drift.realization()) {
            (Family::Se2, Realization::Se2Auto { alpha, beta }) => Kernel::Se2 {
                m: [*alpha, -*beta, *beta, *alpha],
                a: [0.0, 0.0],
            },
            (Family::Se2, Realization::Inner(a)) => {
                let c = a[(2, 2)];
                Kernel::Se2 {
                    m: [a[(0, 0)] - c, a[(0, 1)], a[(1, 0)], a[(1, 1)] - c],
                    a: [a[(0, 2)], a[(1, 2)]],
                }
            }
            (Family::Se2, Realization::ExpChartConjugate) => {
                return Err(Error::structural("SE(2) has no global exponential chart"))
            }
            (Family::Abelian { .. }, _) => Kernel::Abelian,
            (Family::NilpotentExpChart { step }, _) => {
                if step > BERNOULLI_OVER_FACTORIAL.len() {
                    return Err(Error::structural(format!(
                        "nilpotency step {step} is not supported"
                    )));
                }
                Kernel::Nilpotent { order: step }
            }
        };
        let dm = drift.matrix();
        let d = (0..n * n).map(|idx| dm[(idx / n, idx % n)]).collect();
        let ys = control_vectors
            .iter()
            .flat_map(|y| y.coeffs().iter().copied())
            .collect();
        let mut structure = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    structure[(i * n + j) * n + k] = group.structure_constant(i, j, k);
                }
            }
        }
        Ok(SystemSpec {
            group,
            drift,
            control_vectors,
            constraint,
            kernel,
            d,
            ys,
            structure,
        })
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn drift(&self) -> &Derivation {
        &self.drift
    }

    pub fn control_vectors(&self) -> &[AlgebraVector] {
        &self.control_vectors
    }

    pub fn constraint(&self) -> &ControlConstraint {
        &self.constraint
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    /// Same drift and constraint with different control vectors.
    pub fn with_control_vectors(&self, control_vectors: Vec<AlgebraVector>) -> Result<Self> {
        SystemSpec::new(
            self.group.clone(),
            self.drift.clone(),
            control_vectors,
            self.constraint.clone(),
        )
    }

    /// `ẇ = f(w, u)` in chart coordinates.
    fn rhs(&self, w: &[f64], u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = w.len();
        // y = Σ u_j Y_j
        let (y, rest) = scratch.split_at_mut(n);
        y.fill(0.0);
        for (j, uj) in u.iter().enumerate() {
            if *uj != 0.0 {
                for k in 0..n {
                    y[k] += uj * self.ys[j * n + k];
                }
            }
        }
        match &self.kernel {
            Kernel::Abelian => {
                for k in 0..n {
                    let mut acc = y[k];
                    for j in 0..n {
                        acc += self.d[k * n + j] * w[j];
                    }
                    out[k] = acc;
                }
            }
            Kernel::Nilpotent { order } => {
                let (term, rest) = rest.split_at_mut(n);
                let next = &mut rest[..n];
                term.copy_from_slice(y);
                out.copy_from_slice(y);
                for coeff in BERNOULLI_OVER_FACTORIAL.iter().take(*order).skip(1) {
                    // next = ad_w(term)
                    next.fill(0.0);
                    for i in 0..n {
                        if w[i] == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            let p = w[i] * term[j];
                            if p == 0.0 {
                                continue;
                            }
                            let base = (i * n + j) * n;
                            for k in 0..n {
                                next[k] += p * self.structure[base + k];
                            }
                        }
                    }
                    term.copy_from_slice(next);
                    if *coeff != 0.0 {
                        for k in 0..n {
                            out[k] += coeff * term[k];
                        }
                    }
                }
                for k in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += self.d[k * n + j] * w[j];
                    }
                    out[k] += acc;
                }
            }
            Kernel::Se2 { m, a } => {
                let (s, c) = w[2].sin_cos();
                let (v1, v2) = (w[0], w[1]);
                let ra1 = c * a[0] - s * a[1];
                let ra2 = s * a[0] + c * a[1];
                out[0] = m[0] * v1 + m[1] * v2 + a[0] - ra1 + y[0] - y[2] * v2;
                out[1] = m[2] * v1 + m[3] * v2 + a[1] - ra2 + y[1] + y[2] * v1;
                out[2] = y[2];
            }
        }
    }

    fn reproject(&self, w: &mut [f64]) {
        if let Kernel::Se2 { .. } = self.kernel {
            w[2] = wrap_angle(w[2]);
        }
    }
}

/// Scratch buffers for allocation-free stepping.
struct Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    half: Vec<f64>,
    full: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            half: vec![0.0; n],
            full: vec![0.0; n],
            scratch: vec![0.0; 3 * n],
        }
    }
}

fn rk4_step(sys: &SystemSpec, w: &[f64], u: &[f64], h: f64, out: &mut [f64], ws: &mut Workspace) {
    let n = w.len();
    let [k1, k2, k3, k4] = &mut ws.k;
    sys.rhs(w, u, k1, &mut ws.scratch);
    for i in 0..n {
        ws.tmp[i] = w[i] + 0.5 * h * k1[i];
    }
    sys.rhs(&ws.tmp, u, k2, &mut ws.scratch);
    for i in 0..n {
        ws.tmp[i] = w[i] + 0.5 * h * k2[i];
    }
    sys.rhs(&ws.tmp, u, k3, &mut ws.scratch);
    for i in 0..n {
        ws.tmp[i] = w[i] + h * k3[i];
    }
    sys.rhs(&ws.tmp, u, k4, &mut ws.scratch);
    for i in 0..n {
        out[i] = w[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn sup_diff(a: &[f64], b: &[f64], angle_index: Option<usize>) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            if Some(i) == angle_index {
                wrap_angle(x - y).abs()
            } else {
                (x - y).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Integrates one control-constant subinterval `[t0, t1]` (either direction).
fn integrate_segment(
    sys: &SystemSpec,
    u: &[f64],
    t0: f64,
    t1: f64,
    w: &mut [f64],
    opts: &StepOptions,
    ws: &mut Workspace,
    step_counter: &mut usize,
) -> Result<IntegratorStats> {
    let len = t1 - t0;
    if len == 0.0 {
        return Ok(IntegratorStats::default());
    }
    let n = w.len();
    let angle = matches!(sys.kernel, Kernel::Se2 { .. }).then_some(2);
    let start = w.to_vec();
    let mut stats = IntegratorStats::default();
    let base_steps = (len.abs() / opts.step).ceil().max(1.0) as usize;
    'attempt: for halving in 0..=opts.max_halvings {
        let nsteps = base_steps << halving;
        let h = len / nsteps as f64;
        w.copy_from_slice(&start);
        let mut counter = *step_counter;
        let mut local = IntegratorStats::default();
        for _ in 0..nsteps {
            counter += 1;
            let mut full = std::mem::take(&mut ws.full);
            rk4_step(sys, w, u, h, &mut full, ws);
            if counter % opts.check_every == 0 {
                let mut half = std::mem::take(&mut ws.half);
                let mut mid = vec![0.0; n];
                rk4_step(sys, w, u, 0.5 * h, &mut mid, ws);
                rk4_step(sys, &mid, u, 0.5 * h, &mut half, ws);
                let scale = 1.0 + w.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let err = sup_diff(&full, &half, angle) / 15.0;
                ws.half = half;
                local.max_local_error = local.max_local_error.max(err / scale);
                if !err.is_finite() || err > opts.local_tol * scale {
                    ws.full = full;
                    stats.rejections += 1;
                    continue 'attempt;
                }
            }
            if full.iter().any(|x| !x.is_finite()) {
                ws.full = full;
                return Err(Error::Integration {
                    time: t0,
                    reason: "state became non-finite".into(),
                });
            }
            w.copy_from_slice(&full);
            sys.reproject(w);
            ws.full = full;
            local.steps += 1;
        }
        *step_counter = counter;
        stats.steps += local.steps;
        stats.max_local_error = stats.max_local_error.max(local.max_local_error);
        return Ok(stats);
    }
    Err(Error::Integration {
        time: t0,
        reason: format!(
            "local error above {:e} after {} step halvings on [{t0}, {t1}] ({} rejections)",
            opts.local_tol, opts.max_halvings, stats.rejections
        ),
    })
}

/// Integrates the control ODE from chart coordinates `w0` at `t0`, returning
/// the state at each of `times` (all on the same side of `t0`, monotone away from it).
pub fn propagate_coords(
    sys: &SystemSpec,
    u: &PwcControl,
    t0: f64,
    w0: &[f64],
    times: &[f64],
    opts: &StepOptions,
) -> Result<(Vec<Vec<f64>>, IntegratorStats)> {
    opts.validate()?;
    let n = sys.dim();
    if w0.len() != n || u.dim() != sys.control_vectors.len() {
        return Err(Error::structural("state or control dimension mismatch"));
    }
    let forward = times.iter().all(|t| *t >= t0);
    let backward = times.iter().all(|t| *t <= t0);
    if !(forward || backward) {
        return Err(Error::argument(
            "output times must lie on one side of the start time",
        ));
    }
    if times
        .windows(2)
        .any(|w| if forward { w[1] < w[0] } else { w[1] > w[0] })
    {
        return Err(Error::argument(
            "output times must move monotonically away from the start",
        ));
    }
    let mut ws = Workspace::new(n);
    let mut w = w0.to_vec();
    let mut stats = IntegratorStats::default();
    let mut out = Vec::with_capacity(times.len());
    let mut current = t0;
    let mut counter = 0usize;
    for &target in times {
        let (lo, hi) = if forward {
            (current, target)
        } else {
            (target, current)
        };
        let mut cuts = u.breakpoints_in(lo, hi);
        if !forward {
            cuts.reverse();
        }
        cuts.push(target);
        for cut in cuts {
            let mid = 0.5 * (current + cut);
            let value = u.evaluate(mid).clone();
            let s = integrate_segment(
                sys,
                value.as_slice(),
                current,
                cut,
                &mut w,
                opts,
                &mut ws,
                &mut counter,
            )
            .map_err(|e| match e {
                Error::Integration { reason, .. } => Error::Integration {
                    time: current,
                    reason,
                },
                other => other,
            })?;
            stats.merge(&s);
            current = cut;
        }
        out.push(w.clone());
    }
    Ok((out, stats))
}

/// The drift flow `φ_t` on group elements.
pub fn automorphism_flow(sys: &SystemSpec, t: f64, g: &GroupElement) -> Result<GroupElement> {
    flow_of(&sys.group, &sys.drift, t, g)
}

/// Drift flow for an explicit derivation.
pub fn flow_of(
    group: &GroupSpec,
    drift: &Derivation,
    t: f64,
    g: &GroupElement,
) -> Result<GroupElement> {
    if g.group_fingerprint() != group.fingerprint() {
        return Err(Error::structural("element belongs to a different group"));
    }
    if t == 0.0 {
        return Ok(g.clone());
    }
    match drift.realization() {
        Realization::ExpChartConjugate => {
            let v = group.log_chart(g)?;
            let etd = (drift.matrix() * t).exp();
            group.exp_chart(&AlgebraVector::new(etd * v.coeffs()))
        }
        Realization::Se2Auto { alpha, beta } => {
            let c = g.coords();
            let scale = (alpha * t).exp();
            let (s, co) = (beta * t).sin_cos();
            group.element(&[
                scale * (co * c[0] - s * c[1]),
                scale * (s * c[0] + co * c[1]),
                c[2],
            ])
        }
        Realization::Inner(a) => {
            let e = (a * t).exp();
            let e_inv = (a * (-t)).exp();
            group.from_matrix(&(&e * g.matrix() * e_inv))
        }
    }
}

/// `φ_{t,u}(e)` at each of `times` (either sign, any order).
pub fn identity_solution_at(
    sys: &SystemSpec,
    u: &PwcControl,
    times: &[f64],
    opts: &StepOptions,
) -> Result<Trajectory> {
    let n = sys.dim();
    let zero = vec![0.0; n];
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let fwd: Vec<usize> = idx.iter().copied().filter(|&i| times[i] >= 0.0).collect();
    let mut bwd: Vec<usize> = idx.iter().copied().filter(|&i| times[i] < 0.0).collect();
    bwd.reverse();
    let mut states: Vec<Option<GroupElement>> = vec![None; times.len()];
    let mut stats = IntegratorStats::default();
    for group in [fwd, bwd] {
        if group.is_empty() {
            continue;
        }
        let ts: Vec<f64> = group.iter().map(|&i| times[i]).collect();
        let (coords, s) = propagate_coords(sys, u, 0.0, &zero, &ts, opts)?;
        stats.merge(&s);
        for (k, &i) in group.iter().enumerate() {
            states[i] = Some(sys.group.element(&coords[k])?);
        }
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states: states
            .into_iter()
            .map(|s| s.expect("every time is assigned"))
            .collect(),
        stats,
    })
}

/// The identity orbit `φ_{t,u}(e)` on `[0, t]` sampled at each integration output.
pub fn identity_solution(
    sys: &SystemSpec,
    u: &PwcControl,
    t: f64,
    opts: &StepOptions,
) -> Result<Trajectory> {
    if !t.is_finite() {
        return Err(Error::argument("final time must be finite"));
    }
    let samples = ((t.abs() / opts.step).ceil() as usize).clamp(1, 10_000);
    let mut times: Vec<f64> = (0..=samples)
        .map(|i| t * i as f64 / samples as f64)
        .collect();
    times[samples] = t;
    identity_solution_at(sys, u, &times, opts)
}

/// `φ_{t,u}(g) = φ_{t,u}(e)·φ_t(g)`.
pub fn solution(
    sys: &SystemSpec,
    u: &PwcControl,
    t: f64,
    g: &GroupElement,
    opts: &StepOptions,
) -> Result<GroupElement> {
    let e_t = identity_solution_at(sys, u, &[t], opts)?;
    sys.group
        .multiply(e_t.last(), &automorphism_flow(sys, t, g)?)
}

/// Direct integration of the control ODE from `g`; an oracle for [`solution`].
pub fn direct_solution(
    sys: &SystemSpec,
    u: &PwcControl,
    t: f64,
    g: &GroupElement,
    opts: &StepOptions,
) -> Result<GroupElement> {
    let (coords, _) = propagate_coords(sys, u, 0.0, g.coords().as_slice(), &[t], opts)?;
    sys.group.element(&coords[0])
}

/// One step `Φ_s(u, ·) = (θ_s u, φ_{s,u}(·))` of the control flow.
#[derive(Debug, Clone)]
pub struct ControlFlowStep {
    pub s: f64,
    pub shifted: PwcControl,
    /// `φ_{s,u}(e)`.
    pub endpoint: GroupElement,
}

impl ControlFlowStep {
    pub fn apply(&self, sys: &SystemSpec, g: &GroupElement) -> Result<GroupElement> {
        sys.group
            .multiply(&self.endpoint, &automorphism_flow(sys, self.s, g)?)
    }
}

pub fn control_flow_step(
    sys: &SystemSpec,
    u: &PwcControl,
    s: f64,
    opts: &StepOptions,
) -> Result<ControlFlowStep> {
    let endpoint = if s == 0.0 {
        sys.group.identity()
    } else {
        identity_solution_at(sys, u, &[s], opts)?.last().clone()
    };
    Ok(ControlFlowStep {
        s,
        shifted: u.shift(s),
        endpoint,
    })
}

/// `(dφ_t)_e = e^{tD}`.
pub fn flow_differential(sys: &SystemSpec, t: f64) -> DMatrix<f64> {
    (sys.drift.matrix() * t).exp()
}
