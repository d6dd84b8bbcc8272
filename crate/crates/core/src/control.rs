//! Admissible controls: compact convex constraint sets and piecewise-constant
//! control functions with the shift flow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Polytope { vertices: Vec<DVector<f64>> },
}

/// A compact convex set `Ω ⊂ ℝᵐ` containing the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConstraint {
    kind: ConstraintKind,
    dim: usize,
    /// Half-spaces `a·u ≤ b` (polytopes only).
    halfspaces: Vec<(DVector<f64>, f64)>,
    /// Strictly positive convex weights with `Σ wᵢ vᵢ = 0` (polytopes), or the
    /// constant 1 for boxes; `None` when the origin is not interior.
    interior_witness: Option<Vec<f64>>,
}

impl ControlConstraint {
    /// `Π [loᵢ, hiᵢ]`; must contain the origin.
    pub fn new_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::argument(
                "box bounds must be non-empty and of equal length",
            ));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite()) || lo[i] > hi[i] {
                return Err(Error::argument(format!(
                    "invalid box bounds in component {i}"
                )));
            }
            if lo[i] > 0.0 || hi[i] < 0.0 {
                return Err(Error::argument(format!(
                    "box does not contain 0 in component {i}"
                )));
            }
        }
        let interior = (0..lo.len()).all(|i| lo[i] < 0.0 && hi[i] > 0.0);
        Ok(ControlConstraint {
            dim: lo.len(),
            kind: ConstraintKind::Box { lo, hi },
            halfspaces: Vec::new(),
            interior_witness: interior.then(|| vec![1.0]),
        })
    }

    /// Convex hull of `vertices`; must be full-dimensional or the single point 0.
    pub fn new_polytope(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::argument("polytope needs at least one vertex"));
        };
        let dim = first.len();
        if dim == 0
            || vertices
                .iter()
                .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::argument(
                "polytope vertices must be finite and of equal dimension",
            ));
        }
        if vertices.iter().all(|v| v.norm() == 0.0) {
            return Ok(ControlConstraint {
                dim,
                kind: ConstraintKind::Polytope { vertices },
                halfspaces: Vec::new(),
                interior_witness: None,
            });
        }
        let halfspaces = facet_enumeration(&vertices, dim)?;
        let min_slack = halfspaces
            .iter()
            .map(|(_, b)| *b)
            .fold(f64::INFINITY, f64::min);
        if min_slack < -MEMBERSHIP_TOL {
            return Err(Error::argument("polytope does not contain 0"));
        }
        let witness = if min_slack > MEMBERSHIP_TOL {
            Some(strict_convex_witness(&vertices, &halfspaces, dim)?)
        } else {
            None
        };
        Ok(ControlConstraint {
            dim,
            kind: ConstraintKind::Polytope { vertices },
            halfspaces,
            interior_witness: witness,
        })
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[(DVector<f64>, f64)] {
        &self.halfspaces
    }

    pub fn interior_witness(&self) -> Option<&[f64]> {
        self.interior_witness.as_deref()
    }

    /// Whether `0 ∈ int Ω`.
    pub fn has_interior_origin(&self) -> bool {
        self.interior_witness.is_some()
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        if u.len() != self.dim {
            return false;
        }
        match &self.kind {
            ConstraintKind::Box { lo, hi } => (0..self.dim)
                .all(|i| u[i] >= lo[i] - MEMBERSHIP_TOL && u[i] <= hi[i] + MEMBERSHIP_TOL),
            ConstraintKind::Polytope { .. } if self.halfspaces.is_empty() => {
                u.iter().all(|x| x.abs() <= MEMBERSHIP_TOL)
            }
            ConstraintKind::Polytope { .. } => self
                .halfspaces
                .iter()
                .all(|(a, b)| a.dot(u) <= b + MEMBERSHIP_TOL),
        }
    }

    /// Box corners or polytope vertices.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        match &self.kind {
            ConstraintKind::Box { lo, hi } => (0..1usize << self.dim)
                .map(|mask| {
                    DVector::from_fn(
                        self.dim,
                        |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] },
                    )
                })
                .collect(),
            ConstraintKind::Polytope { vertices } => vertices.clone(),
        }
    }
}

/// Outward unit normals `a` and offsets `b` of all facets of the hull, by
/// testing every affinely independent `m`-subset of vertices.
fn facet_enumeration(vertices: &[DVector<f64>], dim: usize) -> Result<Vec<(DVector<f64>, f64)>> {
    let scale = vertices.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::new();
    let n = vertices.len();
    let mut subset: Vec<usize> = (0..dim).collect();
    if n < dim + 1 {
        return Err(Error::argument("polytope is not full-dimensional"));
    }
    loop {
        let base = &vertices[subset[0]];
        let mut diffs = DMatrix::zeros(dim.max(1), dim);
        for (r, &idx) in subset.iter().enumerate().skip(1) {
            let d = &vertices[idx] - base;
            diffs.row_mut(r - 1).copy_from(&d.transpose());
        }
        let normal = if dim == 1 {
            Some(DVector::from_element(1, 1.0))
        } else {
            let svd = diffs.svd(false, true);
            let v_t = svd.v_t.expect("requested right singular vectors");
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
            let rank_ok = order.iter().skip(1).all(|&i| svd.singular_values[i] > tol);
            rank_ok.then(|| v_t.row(order[0]).transpose().into_owned())
        };
        if let Some(a) = normal {
            let b = a.dot(base);
            let above = vertices.iter().any(|v| a.dot(v) > b + tol);
            let below = vertices.iter().any(|v| a.dot(v) < b - tol);
            let oriented = match (above, below) {
                (false, _) => Some((a.clone(), b)),
                (true, false) => Some((-&a, -b)),
                _ => None,
            };
            if let Some((a, b)) = oriented {
                if !facets
                    .iter()
                    .any(|(fa, fb)| (fa - &a).norm() < 1e-9 && (fb - b).abs() < tol)
                {
                    facets.push((a, b));
                }
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                if facets.len() < dim + 1 {
                    return Err(Error::argument("polytope is not full-dimensional"));
                }
                return Ok(facets);
            }
            i -= 1;
            if subset[i] < n - dim + i {
                subset[i] += 1;
                for j in i + 1..dim {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Lawson–Hanson non-negative least squares: `min ‖A x − b‖`, `x ≥ 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm().max(1.0);
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z_sub = sub
                .svd(true, true)
                .solve(b, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if z_sub.iter().all(|v| *v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z_sub[k];
                }
                break;
            }
            let mut alpha = 1.0_f64;
            for (k, &j) in idx.iter().enumerate() {
                if z_sub[k] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z_sub[k]));
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_sub[k] - x[j]);
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

/// Strictly positive convex weights representing the origin: mix the
/// centroid with a convex representation of a point beyond the origin.
fn strict_convex_witness(
    vertices: &[DVector<f64>],
    halfspaces: &[(DVector<f64>, f64)],
    dim: usize,
) -> Result<Vec<f64>> {
    let n = vertices.len();
    let centroid = vertices.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / n as f64;
    // largest δ ≤ 1 with −δ·centroid inside every half-space (halved for margin)
    let mut delta = 1.0_f64;
    for (a, b) in halfspaces {
        let s = -a.dot(&centroid);
        if s > 0.0 {
            delta = delta.min(b / s);
        }
    }
    delta *= 0.5;
    let p = -&centroid * delta;
    let mut a = DMatrix::zeros(dim + 1, n);
    for (j, v) in vertices.iter().enumerate() {
        a.view_mut((0, j), (dim, 1)).copy_from(v);
        a[(dim, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(dim + 1);
    rhs.rows_mut(0, dim).copy_from(&p);
    rhs[dim] = 1.0;
    let mu = nnls(&a, &rhs);
    let resid = (&a * &mu - &rhs).norm();
    if resid > 1e-9 {
        return Err(Error::argument(format!(
            "could not represent an interior point as a convex combination (residual {resid:e})"
        )));
    }
    // 0 = δ/(1+δ)·centroid + 1/(1+δ)·p
    let w: Vec<f64> = (0..n)
        .map(|j| (delta / n as f64 + mu[j]) / (1.0 + delta))
        .collect();
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    PeriodicWrap,
    HoldEnds,
}

/// A right-continuous piecewise-constant control.
#[derive(Debug, Clone, PartialEq)]
pub struct PwcControl {
    breakpoints: Vec<f64>,
    values: Vec<DVector<f64>>,
    period: Option<f64>,
    extension: Extension,
}

impl PwcControl {
    /// `values[i]` holds on `[breakpoints[i], breakpoints[i+1])`. A period, if
    /// given, must equal the window length and selects periodic extension.
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<DVector<f64>>,
        period: Option<f64>,
    ) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::argument(
                "need N + 1 breakpoints for N values (N ≥ 1)",
            ));
        }
        if breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::argument(
                "breakpoints must be finite and strictly increasing",
            ));
        }
        let m = values[0].len();
        if m == 0
            || values
                .iter()
                .any(|v| v.len() != m || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::argument(
                "control values must be finite and of equal dimension",
            ));
        }
        let extension = match period {
            Some(tau) => {
                let span = breakpoints[breakpoints.len() - 1] - breakpoints[0];
                if !(tau > 0.0) || (span - tau).abs() > 1e-12 * tau.max(1.0) {
                    return Err(Error::argument(format!(
                        "period {tau} must equal the breakpoint window length {span}"
                    )));
                }
                Extension::PeriodicWrap
            }
            None => Extension::HoldEnds,
        };
        Ok(PwcControl {
            breakpoints,
            values,
            period,
            extension,
        })
    }

    /// `u ≡ c`, represented as a `τ`-periodic control on `[0, τ)`.
    pub fn constant(value: DVector<f64>, period: f64) -> Result<Self> {
        Self::new(vec![0.0, period], vec![value], Some(period))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn is_admissible(&self, omega: &ControlConstraint) -> bool {
        self.values.iter().all(|v| omega.contains(v))
    }

    /// Index of the segment holding `t` after reduction into the window.
    fn segment(&self, t: f64) -> usize {
        let n = self.values.len();
        let s = match self.extension {
            Extension::HoldEnds => {
                if t < self.start() {
                    return 0;
                }
                if t >= self.end() {
                    return n - 1;
                }
                t
            }
            Extension::PeriodicWrap => {
                let tau = self.period.expect("periodic controls carry a period");
                let s = self.start() + (t - self.start()).rem_euclid(tau);
                if s >= self.end() {
                    return 0;
                }
                s
            }
        };
        // last i with breakpoints[i] ≤ s
        self.breakpoints[..n]
            .partition_point(|b| *b <= s)
            .saturating_sub(1)
    }

    pub fn evaluate(&self, t: f64) -> &DVector<f64> {
        &self.values[self.segment(t)]
    }

    /// Switching times strictly inside `(a, b)`, sorted.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let inner = &self.breakpoints[1..self.breakpoints.len() - 1];
        let mut out = Vec::new();
        match self.extension {
            Extension::HoldEnds => out.extend(inner.iter().copied().filter(|t| *t > a && *t < b)),
            Extension::PeriodicWrap => {
                let tau = self.period.expect("periodic controls carry a period");
                let k0 = ((a - self.start()) / tau).floor() as i64 - 1;
                let k1 = ((b - self.start()) / tau).ceil() as i64 + 1;
                for k in k0..=k1 {
                    let shift = k as f64 * tau;
                    // the window start is a switching time of the periodic extension
                    for t in std::iter::once(&self.breakpoints[0]).chain(inner) {
                        let s = t + shift;
                        if s > a && s < b {
                            out.push(s);
                        }
                    }
                }
                out.sort_by(f64::total_cmp);
                out.dedup();
            }
        }
        out
    }

    /// `θ_s u = u(· + s)`. Periodic controls are re-expressed on their original window.
    pub fn shift(&self, s: f64) -> PwcControl {
        match self.extension {
            Extension::HoldEnds => PwcControl {
                breakpoints: self.breakpoints.iter().map(|b| b - s).collect(),
                values: self.values.clone(),
                period: None,
                extension: Extension::HoldEnds,
            },
            Extension::PeriodicWrap => {
                let tau = self.period.expect("periodic controls carry a period");
                let r = s.rem_euclid(tau);
                if r == 0.0 || r == tau {
                    return self.clone();
                }
                let (t0, t1) = (self.start(), self.end());
                let sliver = 1e-12 * tau.max(1.0);
                let mut segs: Vec<(f64, f64, usize)> = Vec::new();
                for (i, w) in self.breakpoints.windows(2).enumerate() {
                    for offset in [-r, tau - r] {
                        let a = (w[0] + offset).max(t0);
                        let b = (w[1] + offset).min(t1);
                        if b - a > sliver {
                            segs.push((a, b, i));
                        }
                    }
                }
                segs.sort_by(|x, y| x.0.total_cmp(&y.0));
                let mut breakpoints = vec![t0];
                let mut values = Vec::new();
                for (k, (_, b, i)) in segs.iter().enumerate() {
                    values.push(self.values[*i].clone());
                    breakpoints.push(if k + 1 == segs.len() { t1 } else { *b });
                }
                PwcControl {
                    breakpoints,
                    values,
                    period: Some(tau),
                    extension: Extension::PeriodicWrap,
                }
            }
        }
    }

    /// The `2kT`-periodic control agreeing with `u` on `[−kT, kT)`.
    pub fn periodic_truncation(&self, k: usize, base: f64) -> Result<PwcControl> {
        if k < 1 || !(base > 0.0) {
            return Err(Error::argument("periodic truncation needs k ≥ 1 and T > 0"));
        }
        let half = k as f64 * base;
        let mut breakpoints = vec![-half];
        breakpoints.extend(self.breakpoints_in(-half, half));
        breakpoints.push(half);
        let values = breakpoints[..breakpoints.len() - 1]
            .iter()
            .map(|t| self.evaluate(*t).clone())
            .collect();
        PwcControl::new(breakpoints, values, Some(2.0 * half))
    }

    /// `sup_{t ∈ [a, b)} ‖u(t) − v(t)‖₂`, exact for piecewise-constant controls.
    pub fn sup_distance(&self, other: &PwcControl, a: f64, b: f64) -> f64 {
        let mut times = vec![a];
        times.extend(self.breakpoints_in(a, b));
        times.extend(other.breakpoints_in(a, b));
        times.sort_by(f64::total_cmp);
        times
            .iter()
            .map(|t| (self.evaluate(*t) - other.evaluate(*t)).norm())
            .fold(0.0, f64::max)
    }
}

/// Serialized control file `{breakpoints, values, period}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlFile {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub period: Option<f64>,
}

impl ControlFile {
    pub fn to_control(&self) -> Result<PwcControl> {
        PwcControl::new(
            self.breakpoints.clone(),
            self.values
                .iter()
                .map(|v| DVector::from_column_slice(v))
                .collect(),
            self.period,
        )
    }

    pub fn from_control(u: &PwcControl) -> Self {
        ControlFile {
            breakpoints: u.breakpoints.clone(),
            values: u
                .values
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            period: u.period,
        }
    }
}

/// Sampler knobs for random bang-bang controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    /// Box constraints: probability of a corner value instead of a uniform interior sample.
    pub vertex_weight: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { vertex_weight: 0.5 }
    }
}

/// The deterministic generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_value(
    omega: &ControlConstraint,
    opts: &SamplerOptions,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    match omega.kind() {
        ConstraintKind::Box { lo, hi } => {
            if rng.gen::<f64>() < opts.vertex_weight {
                DVector::from_fn(
                    omega.dim(),
                    |i, _| if rng.gen::<bool>() { hi[i] } else { lo[i] },
                )
            } else {
                DVector::from_fn(omega.dim(), |i, _| {
                    lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>()
                })
            }
        }
        ConstraintKind::Polytope { vertices } => vertices[rng.gen_range(0..vertices.len())].clone(),
    }
}

fn sample_segments(
    omega: &ControlConstraint,
    t0: f64,
    t1: f64,
    max_switches: usize,
    opts: &SamplerOptions,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let switches = rng.gen_range(0..=max_switches);
    let mut times: Vec<f64> = (0..switches)
        .map(|_| t0 + (t1 - t0) * rng.gen::<f64>())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.retain(|t| *t > t0 && *t < t1);
    let mut breakpoints = vec![t0];
    breakpoints.extend(times);
    breakpoints.push(t1);
    let values = (0..breakpoints.len() - 1)
        .map(|_| sample_value(omega, opts, rng))
        .collect();
    (breakpoints, values)
}

/// Random bang-bang control on `[t0, t1)` held constant outside.
pub fn sample_bangbang_with(
    omega: &ControlConstraint,
    t0: f64,
    t1: f64,
    max_switches: usize,
    opts: &SamplerOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PwcControl> {
    if !(t1 > t0) {
        return Err(Error::argument("sampling window must have positive length"));
    }
    let (b, v) = sample_segments(omega, t0, t1, max_switches, opts, rng);
    PwcControl::new(b, v, None)
}

/// Random `τ`-periodic bang-bang control on `[0, τ)`.
pub fn sample_periodic_with(
    omega: &ControlConstraint,
    period: f64,
    max_switches: usize,
    opts: &SamplerOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PwcControl> {
    if !(period > 0.0) {
        return Err(Error::argument("period must be positive"));
    }
    let (b, v) = sample_segments(omega, 0.0, period, max_switches, opts, rng);
    PwcControl::new(b, v, Some(period))
}

/// Random bang-bang control on `[0, T)` from a seed.
pub fn sample_bangbang(
    omega: &ControlConstraint,
    horizon: f64,
    max_switches: i64,
    rng_seed: u64,
) -> Result<PwcControl> {
    if max_switches < 0 {
        return Err(Error::argument("max_switches must be non-negative"));
    }
    if !(horizon > 0.0) {
        return Err(Error::argument("horizon must be positive"));
    }
    let mut rng = rng_for(rng_seed, 0);
    sample_bangbang_with(
        omega,
        0.0,
        horizon,
        max_switches as usize,
        &SamplerOptions::default(),
        &mut rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn bang() -> PwcControl {
        PwcControl::new(vec![0.0, 1.0, 2.0], vec![v(&[1.0]), v(&[-1.0])], Some(2.0)).unwrap()
    }

    #[test]
    fn evaluation_conventions() {
        let u = bang();
        assert_eq!(u.evaluate(3.5)[0], -1.0);
        assert_eq!(u.evaluate(1.0)[0], -1.0);
        assert_eq!(u.evaluate(2.0)[0], 1.0);
        assert_eq!(u.evaluate(-0.5)[0], -1.0);
        let c = PwcControl::new(vec![0.0, 1.0], vec![v(&[0.3])], None).unwrap();
        assert_eq!(c.evaluate(-7.0)[0], 0.3);
        assert_eq!(c.evaluate(7.0)[0], 0.3);
    }

    #[test]
    fn shifted_bang_bang() {
        let s = bang().shift(1.0);
        assert_eq!(s.breakpoints(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.values()[0][0], -1.0);
        assert_eq!(s.values()[1][0], 1.0);
        assert_eq!(bang().shift(0.0), bang());
        assert_eq!(bang().shift(2.0), bang());
    }

    #[test]
    fn truncation_agrees_on_window() {
        let u = PwcControl::new(
            vec![0.0, 0.7, 1.9, 3.0],
            vec![v(&[1.0]), v(&[0.2]), v(&[-1.0])],
            None,
        )
        .unwrap();
        let w = u.periodic_truncation(2, 1.0).unwrap();
        assert_eq!(w.period(), Some(4.0));
        assert_eq!(u.sup_distance(&w, -2.0, 2.0), 0.0);
        assert_eq!(w.evaluate(2.5), u.evaluate(-1.5));
    }

    #[test]
    fn constraint_membership_and_witness() {
        let b = ControlConstraint::new_box(v(&[-1.0, -2.0]), v(&[1.0, 0.5])).unwrap();
        assert!(b.has_interior_origin());
        assert!(b.contains(&v(&[1.0, -2.0])));
        assert!(!b.contains(&v(&[1.0, 0.6])));
        let degenerate = ControlConstraint::new_box(v(&[0.0]), v(&[0.0])).unwrap();
        assert!(!degenerate.has_interior_origin());
        assert!(ControlConstraint::new_box(v(&[0.5]), v(&[1.0])).is_err());

        let tri = ControlConstraint::new_polytope(vec![
            v(&[2.0, -1.0]),
            v(&[-1.0, 2.0]),
            v(&[-1.0, -1.0]),
        ])
        .unwrap();
        assert_eq!(tri.halfspaces().len(), 3);
        let w = tri.interior_witness().unwrap();
        assert!(w.iter().all(|x| *x > 0.0));
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let combo = tri
            .vertices()
            .iter()
            .zip(w)
            .fold(v(&[0.0, 0.0]), |acc, (p, wi)| acc + p * *wi);
        assert_abs_diff_eq!(combo.norm(), 0.0, epsilon = 1e-12);
        assert!(tri.contains(&v(&[0.5, 0.5])));
        assert!(!tri.contains(&v(&[1.0, 1.0])));
        let edge =
            ControlConstraint::new_polytope(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])])
                .unwrap();
        assert!(!edge.has_interior_origin());
    }

    #[test]
    fn sampler_contract() {
        let omega = ControlConstraint::new_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let c = sample_bangbang(&omega, 3.0, 0, 7).unwrap();
        assert_eq!(c.values().len(), 1);
        assert!(c.is_admissible(&omega));
        assert_eq!(
            sample_bangbang(&omega, 3.0, 5, 11).unwrap(),
            sample_bangbang(&omega, 3.0, 5, 11).unwrap()
        );
        assert!(sample_bangbang(&omega, 3.0, -1, 0).is_err());
    }
}
