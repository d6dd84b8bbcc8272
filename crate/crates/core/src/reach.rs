//! Sampled reachable sets, the control set estimate `cl A(e) ∩ A*(e)`, and
//! boundedness diagnostics.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{rng_for, sample_bangbang_with, SamplerOptions};
use crate::error::{Error, Result};
use crate::flow::{propagate_coords, StepOptions, SystemSpec};
use crate::group::{AlgebraVector, GroupElement, GroupSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudMeta {
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
    pub direction: Option<Direction>,
    pub failures: usize,
}

/// A finite sample of group elements.
#[derive(Debug, Clone)]
pub struct PointCloud {
    group: u64,
    points: Vec<GroupElement>,
    pub meta: CloudMeta,
}

impl PointCloud {
    pub fn new(group: &GroupSpec, points: Vec<GroupElement>, meta: CloudMeta) -> Result<Self> {
        if points
            .iter()
            .any(|p| p.group_fingerprint() != group.fingerprint())
        {
            return Err(Error::structural("cloud points belong to different groups"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("cloud contains non-finite coordinates"));
        }
        Ok(PointCloud {
            group: group.fingerprint(),
            points,
            meta,
        })
    }

    pub fn points(&self) -> &[GroupElement] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn group_fingerprint(&self) -> u64 {
        self.group
    }
}

/// Sampling parameters for reachable clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudOptions {
    pub horizon: f64,
    pub samples: usize,
    pub max_switches: usize,
    pub seed: u64,
    /// Points kept per trajectory, at evenly spaced times in `(0, T]`.
    pub checkpoints: usize,
    /// Sample `i` uses horizon `T·2^{−(i mod scales)}`, refining the cloud near `e`.
    pub scales: usize,
    pub sampler: SamplerOptions,
    pub step: StepOptions,
    /// Refinement rounds of [`sampled_control_set`].
    pub generations: usize,
    /// Extension solutions per cloud and round, with horizon `T·2^{1−scales}`.
    pub generation_samples: usize,
    /// Switch budget of extension solutions.
    pub generation_switches: usize,
}

impl Default for CloudOptions {
    fn default() -> Self {
        CloudOptions {
            horizon: 5.0,
            samples: 4000,
            max_switches: 6,
            seed: 0,
            checkpoints: 16,
            scales: 1,
            sampler: SamplerOptions::default(),
            step: StepOptions::with_step(1e-2),
            generations: 0,
            generation_samples: 2000,
            generation_switches: 2,
        }
    }
}

fn direction_sign(direction: Direction) -> f64 {
    match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    }
}

/// Checkpoints of random bang-bang solutions, trajectory `i` starting from
/// `starts[i]` with horizon `horizons[i]` and RNG stream `stream_base + i`.
fn sample_trajectories(
    sys: &SystemSpec,
    opts: &CloudOptions,
    direction: Direction,
    starts: &[&[f64]],
    horizons: &[f64],
    switches: usize,
    stream_base: u64,
) -> Result<(Vec<GroupElement>, usize)> {
    let sign = direction_sign(direction);
    let results: Vec<Result<Vec<Vec<f64>>>> = (0..starts.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(opts.seed, stream_base + i as u64);
            let horizon = horizons[i];
            let times: Vec<f64> = (1..=opts.checkpoints)
                .map(|k| sign * horizon * k as f64 / opts.checkpoints as f64)
                .collect();
            let (t0, t1) = match direction {
                Direction::Forward => (0.0, horizon),
                Direction::Backward => (-horizon, 0.0),
            };
            let u =
                sample_bangbang_with(sys.constraint(), t0, t1, switches, &opts.sampler, &mut rng)?;
            propagate_coords(sys, &u, 0.0, starts[i], &times, &opts.step).map(|(c, _)| c)
        })
        .collect();
    let mut points = Vec::with_capacity(starts.len() * opts.checkpoints);
    let mut failures = 0;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(coords) => {
                for c in coords {
                    points.push(sys.group().element(&c)?);
                }
            }
            Err(e @ Error::Integration { .. }) => {
                failures += 1;
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if failures * 100 > starts.len() {
        return Err(last_err.expect("failures were recorded"));
    }
    Ok((points, failures))
}

fn stream_base(direction: Direction, generation: u64) -> u64 {
    let dir = match direction {
        Direction::Forward => 0u64,
        Direction::Backward => 1u64 << 40,
    };
    (generation << 41) | dir
}

fn check_cloud_options(opts: &CloudOptions) -> Result<()> {
    if !(opts.horizon > 0.0) || opts.samples == 0 || opts.checkpoints == 0 || opts.scales == 0 {
        return Err(Error::argument(
            "cloud needs T > 0 and at least one sample, checkpoint and scale",
        ));
    }
    Ok(())
}

/// Endpoints of random bang-bang solutions from `e`, forward in time for
/// `A(e)` or backward for `A*(e)`.
pub fn reachable_cloud(
    sys: &SystemSpec,
    opts: &CloudOptions,
    direction: Direction,
) -> Result<PointCloud> {
    check_cloud_options(opts)?;
    let zero = vec![0.0; sys.dim()];
    let starts: Vec<&[f64]> = vec![zero.as_slice(); opts.samples];
    let horizons: Vec<f64> = (0..opts.samples)
        .map(|i| opts.horizon / (1u64 << (i % opts.scales)) as f64)
        .collect();
    let (mut sampled, failures) = sample_trajectories(
        sys,
        opts,
        direction,
        &starts,
        &horizons,
        opts.max_switches,
        stream_base(direction, 0),
    )?;
    let mut points = Vec::with_capacity(sampled.len() + 1);
    points.push(sys.group().identity());
    points.append(&mut sampled);
    PointCloud::new(
        sys.group(),
        points,
        CloudMeta {
            horizon: opts.horizon,
            samples: opts.samples,
            seed: opts.seed,
            direction: Some(direction),
            failures,
        },
    )
}

/// Embedding cell of `key` at edge length `cell`.
fn cell_of(key: &DVector<f64>, cell: f64) -> Vec<i64> {
    key.iter().map(|x| (x / cell).floor() as i64).collect()
}

/// Grid over lower-bound embedding keys; the points themselves live elsewhere.
#[derive(Debug, Clone)]
struct GridIndex {
    cell: f64,
    keys: Vec<DVector<f64>>,
    grid: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    fn new(cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::argument("index cell size must be positive"));
        }
        Ok(GridIndex {
            cell,
            keys: Vec::new(),
            grid: HashMap::new(),
        })
    }

    fn push(&mut self, key: DVector<f64>) {
        let id = self.keys.len();
        self.grid
            .entry(cell_of(&key, self.cell))
            .or_default()
            .push(id);
        self.keys.push(key);
    }

    /// Calls `visit` on every cell at Chebyshev distance exactly `ring`; stops early on `true`.
    fn visit_ring(
        &self,
        center: &[i64],
        ring: i64,
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        let d = center.len();
        if d == 0 {
            return ring == 0 && self.grid.get(&Vec::new()).is_some_and(|v| visit(v));
        }
        let width = (2 * ring + 1) as usize;
        let total = width.pow(d as u32);
        let mut key = vec![0i64; d];
        for idx in 0..total {
            let mut rem = idx;
            let mut on_ring = false;
            for j in 0..d {
                let off = (rem % width) as i64 - ring;
                rem /= width;
                key[j] = center[j] + off;
                if off.abs() == ring {
                    on_ring = true;
                }
            }
            if !on_ring && ring > 0 {
                continue;
            }
            if let Some(v) = self.grid.get(&key) {
                if visit(v) {
                    return true;
                }
            }
        }
        false
    }

    /// Calls `hit` on each point within `radius` of `q` until it returns `true`.
    fn scan_within(
        &self,
        group: &GroupSpec,
        points: &[GroupElement],
        q: &GroupElement,
        radius: f64,
        hit: &mut dyn FnMut(usize) -> bool,
    ) -> Result<bool> {
        let dq = group.distance_from(q)?;
        let kq = group.lower_bound_embedding(q);
        let center = cell_of(&kq, self.cell);
        let rings = (radius / self.cell).ceil() as i64;
        for ring in 0..=rings {
            let mut visit = |ids: &[usize]| {
                ids.iter().any(|&i| {
                    (&self.keys[i] - &kq).norm() <= radius && dq.to(&points[i]) <= radius && hit(i)
                })
            };
            if self.visit_ring(&center, ring, &mut visit) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// `min(nearest distance, cap)` over the points whose index passes `keep`.
    fn nearest_capped(
        &self,
        group: &GroupSpec,
        points: &[GroupElement],
        q: &GroupElement,
        cap: f64,
        keep: &dyn Fn(usize) -> bool,
    ) -> Result<f64> {
        let dq = group.distance_from(q)?;
        let kq = group.lower_bound_embedding(q);
        let center = cell_of(&kq, self.cell);
        let rings = if cap.is_finite() {
            (cap / self.cell).ceil() as i64 + 1
        } else {
            self.grid
                .keys()
                .flat_map(|k| k.iter().zip(&center).map(|(a, b)| (a - b).abs()))
                .max()
                .unwrap_or(0)
        };
        let mut best = cap;
        for ring in 0..=rings {
            let mut visit = |ids: &[usize]| {
                for &i in ids {
                    if keep(i) && (&self.keys[i] - &kq).norm() < best {
                        best = best.min(dq.to(&points[i]));
                    }
                }
                false
            };
            self.visit_ring(&center, ring, &mut visit);
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        Ok(best)
    }
}

/// Uniform grid over the distance-lower-bound embedding of a cloud.
pub struct SpatialIndex<'a> {
    group: &'a GroupSpec,
    points: &'a [GroupElement],
    grid: GridIndex,
}

impl<'a> SpatialIndex<'a> {
    pub fn new(group: &'a GroupSpec, points: &'a [GroupElement], cell: f64) -> Result<Self> {
        let mut grid = GridIndex::new(cell)?;
        for p in points {
            grid.push(group.lower_bound_embedding(p));
        }
        Ok(SpatialIndex {
            group,
            points,
            grid,
        })
    }

    /// Whether some point lies within group distance `radius` of `q`.
    pub fn any_within(&self, q: &GroupElement, radius: f64) -> Result<bool> {
        self.grid
            .scan_within(self.group, self.points, q, radius, &mut |_| true)
    }

    /// Distance to the nearest point, skipping index `skip`.
    pub fn nearest(&self, q: &GroupElement, skip: Option<usize>) -> Result<f64> {
        if self.points.is_empty() {
            return Ok(f64::INFINITY);
        }
        self.grid
            .nearest_capped(self.group, self.points, q, f64::INFINITY, &|i| {
                Some(i) != skip
            })
    }

    /// `min(nearest distance, cap)`, searching only cells that can beat `cap`.
    pub fn nearest_capped(&self, q: &GroupElement, cap: f64) -> Result<f64> {
        self.grid
            .nearest_capped(self.group, self.points, q, cap, &|_| true)
    }
}

/// One growing cloud of the refinement, with its index and match flags.
struct Side {
    direction: Direction,
    cloud: PointCloud,
    grid: GridIndex,
    matched: Vec<bool>,
    /// Matched points by embedding cell of edge `2ε`, ordered for determinism.
    seed_cells: BTreeMap<Vec<i64>, Vec<usize>>,
    seed_cell: f64,
}

impl Side {
    fn new(group: &GroupSpec, cloud: PointCloud, eps: f64) -> Result<Self> {
        let mut side = Side {
            direction: cloud.meta.direction.unwrap_or(Direction::Forward),
            grid: GridIndex::new(eps)?,
            matched: Vec::new(),
            seed_cells: BTreeMap::new(),
            seed_cell: 2.0 * eps,
            cloud: PointCloud {
                group: cloud.group,
                points: Vec::new(),
                meta: cloud.meta.clone(),
            },
        };
        side.append(group, cloud.points);
        Ok(side)
    }

    fn append(&mut self, group: &GroupSpec, points: Vec<GroupElement>) {
        for p in points {
            self.grid.push(group.lower_bound_embedding(&p));
            self.cloud.points.push(p);
            self.matched.push(false);
        }
    }

    fn mark(&mut self, i: usize) {
        if !self.matched[i] {
            self.matched[i] = true;
            let key = cell_of(&self.grid.keys[i], self.seed_cell);
            self.seed_cells.entry(key).or_default().push(i);
        }
    }

    /// `count` seeds spread uniformly over occupied cells; odd draws take the
    /// member extreme along a random direction, pushing extensions outward.
    fn seeds(&self, count: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
        let cells: Vec<&Vec<usize>> = self.seed_cells.values().collect();
        if cells.is_empty() {
            return Vec::new();
        }
        let dim = self.grid.keys.first().map_or(0, |k| k.len());
        (0..count)
            .map(|k| {
                let members = cells[rng.gen_range(0..cells.len())];
                if k % 2 == 0 {
                    return members[rng.gen_range(0..members.len())];
                }
                let dir = DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
                *members
                    .iter()
                    .max_by(|&&a, &&b| {
                        self.grid.keys[a]
                            .dot(&dir)
                            .total_cmp(&self.grid.keys[b].dot(&dir))
                    })
                    .expect("cells are non-empty")
            })
            .collect()
    }
}

/// Marks the unmatched points of `a` that now lie within `eps` of `b`.
///
/// Flags only ever turn on, so rescanning the unmatched points after each
/// round gives the same flags as matching the full clouds from scratch.
fn match_pending(group: &GroupSpec, a: &mut Side, b: &Side, eps: f64) -> Result<()> {
    let pending: Vec<usize> = (0..a.matched.len()).filter(|&i| !a.matched[i]).collect();
    let hits: Vec<bool> = pending
        .par_iter()
        .map(|&i| {
            b.grid
                .scan_within(group, &b.cloud.points, &a.cloud.points[i], eps, &mut |_| {
                    true
                })
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, hit) in pending.into_iter().zip(hits) {
        if hit {
            a.mark(i);
        }
    }
    Ok(())
}

/// Forward and backward clouds refined by extension, with the resulting estimate.
#[derive(Debug, Clone)]
pub struct SampledControlSet {
    pub forward: PointCloud,
    pub backward: PointCloud,
    pub estimate: ControlSetEstimate,
}

/// Samples `cl A(e) ∩ A*(e)` and refines it over `opts.generations` rounds.
///
/// Each round continues random solutions from points of each cloud that
/// already match the opposite cloud. Forward extensions of points of `A(e)`
/// stay in `A(e)` and backward extensions of points of `A*(e)` stay in
/// `A*(e)`, so the refinement only changes where samples concentrate. The
/// result equals [`control_set_estimate`] on the final clouds.
///
/// Without an explicit `eps` the match radius is twice the nearest-neighbor
/// spacing of the initial forward cloud.
pub fn sampled_control_set(
    sys: &SystemSpec,
    opts: &CloudOptions,
    eps: Option<f64>,
) -> Result<SampledControlSet> {
    check_cloud_options(opts)?;
    let group = sys.group();
    let forward = reachable_cloud(sys, opts, Direction::Forward)?;
    let eps = match eps {
        Some(eps) => eps,
        None => 2.0 * nearest_neighbor_spacing(group, &forward)?,
    };
    if !(eps > 0.0) {
        return Err(Error::argument("match radius must be positive"));
    }
    let mut fwd = Side::new(group, forward, eps)?;
    let mut bwd = Side::new(group, reachable_cloud(sys, opts, Direction::Backward)?, eps)?;
    match_pending(group, &mut fwd, &bwd, eps)?;
    match_pending(group, &mut bwd, &fwd, eps)?;
    let horizon = opts.horizon / (1u64 << (opts.scales - 1)) as f64;
    for generation in 1..=opts.generations as u64 {
        let mut rng = rng_for(opts.seed, (generation << 41) | (1 << 39));
        let f_seeds = fwd.seeds(opts.generation_samples, &mut rng);
        let b_seeds = bwd.seeds(opts.generation_samples, &mut rng);
        for (side, seeds) in [(&mut fwd, f_seeds), (&mut bwd, b_seeds)] {
            if seeds.is_empty() {
                continue;
            }
            let starts: Vec<&[f64]> = seeds
                .iter()
                .map(|&i| side.cloud.points[i].coords().as_slice())
                .collect();
            let horizons = vec![horizon; starts.len()];
            let (new_points, failures) = sample_trajectories(
                sys,
                opts,
                side.direction,
                &starts,
                &horizons,
                opts.generation_switches,
                stream_base(side.direction, generation),
            )?;
            side.cloud.meta.failures += failures;
            side.append(group, new_points);
        }
        match_pending(group, &mut fwd, &bwd, eps)?;
        match_pending(group, &mut bwd, &fwd, eps)?;
    }
    let points: Vec<GroupElement> = fwd
        .cloud
        .points
        .iter()
        .zip(&fwd.matched)
        .filter(|(_, m)| **m)
        .map(|(p, _)| p.clone())
        .collect();
    let cloud = PointCloud::new(
        group,
        points,
        CloudMeta {
            horizon: opts.horizon,
            samples: opts.samples,
            seed: opts.seed,
            direction: None,
            failures: fwd.cloud.meta.failures + bwd.cloud.meta.failures,
        },
    )?;
    let witness = ball_witness(group, &cloud, eps)?;
    Ok(SampledControlSet {
        forward: fwd.cloud,
        backward: bwd.cloud,
        estimate: ControlSetEstimate {
            cloud,
            match_radius: eps,
            witness,
        },
    })
}

/// Median nearest-neighbor distance over a deterministic subsample.
pub fn nearest_neighbor_spacing(group: &GroupSpec, cloud: &PointCloud) -> Result<f64> {
    let pts = cloud.points();
    if pts.len() < 2 {
        return Ok(0.0);
    }
    let keys: Vec<DVector<f64>> = pts.iter().map(|p| group.lower_bound_embedding(p)).collect();
    let dim = keys[0].len().max(1);
    let extent = (0..keys[0].len())
        .map(|j| {
            let (lo, hi) = keys
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                    (lo.min(k[j]), hi.max(k[j]))
                });
            hi - lo
        })
        .fold(0.0, f64::max);
    let cell = (extent / (pts.len() as f64).powf(1.0 / dim as f64)).max(1e-9);
    let index = SpatialIndex::new(group, pts, cell)?;
    let stride = (pts.len() / 512).max(1);
    let mut d: Vec<f64> = (0..pts.len())
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| index.nearest(&pts[i], Some(i)))
        .collect::<Result<Vec<_>>>()?;
    d.sort_by(f64::total_cmp);
    Ok(d[d.len() / 2])
}

/// `0.5·d(e, ·)`-ladder witness that a ball around `e` is covered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallWitness {
    pub covered: bool,
    /// Largest radius of the ladder `2ε, 4ε, 8ε, …` whose probe points all match.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct ControlSetEstimate {
    pub cloud: PointCloud,
    pub match_radius: f64,
    pub witness: BallWitness,
}

impl ControlSetEstimate {
    pub fn contains_identity_ball(&self) -> bool {
        self.witness.covered
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Probe points `exp(v)` with `‖v‖ ≤ r`: the centre, ± axis points and
/// seeded directions at several radii.
fn ball_probes(group: &GroupSpec, r: f64) -> Result<Vec<GroupElement>> {
    use rand::Rng;
    let n = group.dim();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            dirs.push(DVector::from_fn(n, |k, _| if k == i { s } else { 0.0 }));
        }
    }
    let mut rng = rng_for(0x62616c6c, 0);
    for _ in 0..48 {
        let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        if v.norm() > 1e-3 {
            dirs.push(v.normalize());
        }
    }
    let mut out = vec![group.identity()];
    for frac in [0.25, 0.5, 0.75, 1.0] {
        for d in &dirs {
            out.push(group.exp_chart(&AlgebraVector::new(d * (r * frac)))?);
        }
    }
    Ok(out)
}

/// Keeps forward points within `eps` of some backward point and probes a ball around `e`.
pub fn control_set_estimate(
    group: &GroupSpec,
    fwd: &PointCloud,
    bwd: &PointCloud,
    eps: f64,
) -> Result<ControlSetEstimate> {
    if fwd.group_fingerprint() != group.fingerprint()
        || bwd.group_fingerprint() != group.fingerprint()
    {
        return Err(Error::structural("clouds belong to different groups"));
    }
    if !(eps > 0.0) {
        return Err(Error::argument("match radius must be positive"));
    }
    let bindex = SpatialIndex::new(group, bwd.points(), eps)?;
    let keep: Vec<bool> = fwd
        .points()
        .par_iter()
        .map(|p| bindex.any_within(p, eps))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<GroupElement> = fwd
        .points()
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| p.clone())
        .collect();
    let cloud = PointCloud::new(
        group,
        points,
        CloudMeta {
            horizon: fwd.meta.horizon,
            samples: fwd.meta.samples,
            seed: fwd.meta.seed,
            direction: None,
            failures: fwd.meta.failures + bwd.meta.failures,
        },
    )?;
    let witness = ball_witness(group, &cloud, eps)?;
    Ok(ControlSetEstimate {
        cloud,
        match_radius: eps,
        witness,
    })
}

/// Climbs the radius ladder `2ε, 4ε, …` while every probe has an estimate point within `ε`.
pub fn ball_witness(group: &GroupSpec, cloud: &PointCloud, eps: f64) -> Result<BallWitness> {
    if cloud.is_empty() {
        return Ok(BallWitness {
            covered: false,
            radius: 0.0,
        });
    }
    let index = SpatialIndex::new(group, cloud.points(), eps)?;
    let mut radius = 0.0;
    let mut r = 2.0 * eps;
    for _ in 0..12 {
        let probes = ball_probes(group, r)?;
        let ok = probes
            .par_iter()
            .map(|p| index.any_within(p, eps))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .all(|b| b);
        if !ok {
            break;
        }
        radius = r;
        r *= 2.0;
    }
    Ok(BallWitness {
        covered: radius >= 2.0 * eps,
        radius,
    })
}

/// Whether every point lies within `radius` of `e`, and the largest such distance.
pub fn boundedness_check(
    group: &GroupSpec,
    cloud: &PointCloud,
    radius: f64,
) -> Result<(bool, f64)> {
    let max = max_distance_from_identity(group, cloud.points())?;
    Ok((max <= radius, max))
}

pub fn max_distance_from_identity(group: &GroupSpec, points: &[GroupElement]) -> Result<f64> {
    let e = group.distance_from(&group.identity())?;
    Ok(points.iter().map(|p| e.to(p)).fold(0.0, f64::max))
}

/// Summary record for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudSummary {
    pub count: usize,
    pub max_distance: f64,
    pub ball_witness_r: f64,
}

impl ControlSetEstimate {
    pub fn summary(&self, group: &GroupSpec) -> Result<CloudSummary> {
        Ok(CloudSummary {
            count: self.cloud.len(),
            max_distance: max_distance_from_identity(group, self.cloud.points())?,
            ball_witness_r: self.witness.radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlConstraint;
    use crate::spectral::Derivation;
    use nalgebra::DMatrix;

    fn scalar(lo: f64, hi: f64) -> SystemSpec {
        let g = GroupSpec::abelian(1).unwrap();
        let d = Derivation::exp_chart(&g, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let omega =
            ControlConstraint::new_box(DVector::from_element(1, lo), DVector::from_element(1, hi))
                .unwrap();
        SystemSpec::new(g, d, vec![AlgebraVector::from_slice(&[1.0])], omega).unwrap()
    }

    #[test]
    fn degenerate_constraint_collapses_to_identity() {
        let sys = scalar(0.0, 0.0);
        let opts = CloudOptions {
            samples: 20,
            ..Default::default()
        };
        let f = reachable_cloud(&sys, &opts, Direction::Forward).unwrap();
        assert!(f.points().iter().all(|p| p.coords()[0] == 0.0));
        let b = reachable_cloud(&sys, &opts, Direction::Backward).unwrap();
        let est = control_set_estimate(sys.group(), &f, &b, 0.02).unwrap();
        assert!(est.cloud.points().iter().all(|p| p.coords()[0] == 0.0));
        assert!(!est.contains_identity_ball());
    }

    #[test]
    fn index_queries_match_brute_force() {
        let g = GroupSpec::se2();
        let pts: Vec<GroupElement> = (0..300)
            .map(|i| {
                let t = i as f64 * 0.37;
                g.element(&[t.sin() * 2.0, (1.3 * t).cos(), (0.7 * t).sin() * 3.0])
                    .unwrap()
            })
            .collect();
        let index = SpatialIndex::new(&g, &pts, 0.1).unwrap();
        let q = g.element(&[0.3, 0.2, 1.0]).unwrap();
        let brute = pts
            .iter()
            .map(|p| g.distance(&q, p).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((index.nearest(&q, None).unwrap() - brute).abs() < 1e-12);
        assert!(index.any_within(&q, brute + 1e-9).unwrap());
        assert!(!index.any_within(&q, brute - 1e-9).unwrap());
    }

    #[test]
    fn boundedness_of_single_identity() {
        let g = GroupSpec::abelian(2).unwrap();
        let cloud = PointCloud::new(
            &g,
            vec![g.identity()],
            CloudMeta {
                horizon: 0.0,
                samples: 1,
                seed: 0,
                direction: None,
                failures: 0,
            },
        )
        .unwrap();
        assert_eq!(boundedness_check(&g, &cloud, 1e-3).unwrap(), (true, 0.0));
    }
}
