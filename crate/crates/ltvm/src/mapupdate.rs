//! Persistent vector map maintenance.
//!
//! Each deployment contributes freshly extracted lines. Existing map lines
//! are first pruned against the long-term SDF (regions whose long-term
//! presence fraction has decayed lose their line coverage, with partial
//! survivors re-established as shorter sub-lines), then each new line either
//! fuses into a statistically compatible map line or enters the map on its
//! own, and finally pairwise fusion runs to a fixpoint so no two remaining
//! lines are mutually compatible.

use crate::config::{child_seed, Config};
use crate::extract::{
    dominant_eigenvector, fit_segment, match_endpoints, project_param_t, LineFeature,
};
use crate::sdf::SdfGrid;
use crate::SensorModel;
use nalgebra::{Matrix2, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapUpdateError {
    #[error("long-term grid must have normalized weights")]
    NotNormalized,
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("fused scatter has no dominant direction")]
    IsotropicScatter,
}

/// The persistent line map carried across deployments.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMap {
    pub lines: Vec<LineFeature>,
    pub deployment_count: u32,
    pub config_snapshot: Config,
}

impl VectorMap {
    pub fn new(config: Config) -> Self {
        VectorMap {
            lines: Vec::new(),
            deployment_count: 0,
            config_snapshot: config,
        }
    }

    pub fn total_mass(&self) -> f64 {
        // Not `.sum()`: the empty f64 sum is IEEE's additive identity -0.0,
        // which would print as "-0" in metrics.
        self.lines.iter().fold(0.0, |acc, l| acc + l.mass)
    }
}

/// Counts reported by one map update, for per-deployment metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    /// Map lines that survived pruning unchanged.
    pub lines_kept: usize,
    /// Map lines deleted outright by pruning.
    pub lines_deleted: usize,
    /// Map lines split or shortened by pruning (counted once per source line).
    pub lines_split: usize,
    /// New lines fused into an existing map line.
    pub merges_into_existing: usize,
    /// New lines inserted as their own map lines.
    pub lines_inserted: usize,
    /// Pairwise fusions performed by the fixpoint pass.
    pub fixpoint_merges: usize,
}

/// Per-endpoint squared Mahalanobis distances of `new_line` against
/// `map_line`: each endpoint of the new line is projected onto the map
/// segment (clamped to it, so displacement past an end counts in full),
/// the map line's endpoint covariance is interpolated at the projection,
/// and the displacement is measured against the combined covariance.
/// `None` if the projection or the (regularized) inverse is unavailable.
pub(crate) fn endpoint_chi_sq(
    new_line: &LineFeature,
    map_line: &LineFeature,
) -> Option<(f64, f64)> {
    let mut out = [0.0; 2];
    for (slot, (p, qp)) in [(new_line.p1, new_line.q1), (new_line.p2, new_line.q2)]
        .into_iter()
        .enumerate()
    {
        let t = project_param_t(p, map_line.p1, map_line.p2).ok()?;
        let u = t.clamp(0.0, 1.0);
        let proj = map_line.p1 + (map_line.p2 - map_line.p1) * u;
        let delta = p - proj;
        let q_int = map_line.q1 * (1.0 - u) + map_line.q2 * u;
        let combined = q_int + qp + Matrix2::identity() * 1e-12;
        let inv = combined.try_inverse()?;
        out[slot] = (delta.transpose() * inv * delta)[(0, 0)];
    }
    Some((out[0], out[1]))
}

/// Statistical compatibility test for fusing `new_line` into `map_line`:
/// both of the new line's endpoints must lie within `t_chi` squared
/// Mahalanobis distance of their clamped projections onto the map line.
pub fn chi_sq_gate(new_line: &LineFeature, map_line: &LineFeature, t_chi: f64) -> bool {
    match endpoint_chi_sq(new_line, map_line) {
        Some((c1, c2)) => c1 < t_chi && c2 < t_chi,
        None => false,
    }
}

/// Fuse two lines by pooling their support statistics.
///
/// Mass and centroid pool exactly; the fused scatter adds the two centered
/// scatters plus the parallel-axis term for the centroid separation, so it
/// equals the scatter of the pooled raw supports. The fused direction is
/// the dominant eigenvector of that scatter; the fused endpoints are the
/// extrema of the four original endpoints projected onto the fused axis.
/// Each fused endpoint inherits the covariance of the endpoint that
/// projected to it, inflated by the outer product of the projection
/// displacement. A fused scatter with no dominant direction rejects the
/// merge (the pair stays separate).
pub fn merge_lines(a: &LineFeature, b: &LineFeature) -> Result<LineFeature, MergeError> {
    let mass = a.mass + b.mass;
    let centroid =
        Point2::from((a.centroid.coords * a.mass + b.centroid.coords * b.mass) / mass);
    let dc = a.centroid - b.centroid;
    let scatter = a.scatter + b.scatter + dc * dc.transpose() * (a.mass * b.mass / mass);

    let (axis, l1, l2) = dominant_eigenvector(&scatter);
    // No dominant direction: the spread along the two principal axes is
    // indistinguishable, so a fused line orientation would be arbitrary.
    if l1 <= 0.0 || l1 - l2 <= 1e-9 * l1 {
        return Err(MergeError::IsotropicScatter);
    }

    // Project all four endpoints onto the fused axis through the fused
    // centroid. The extrema become the fused endpoints. Sorting the
    // candidates by every field makes tie-breaking independent of the
    // argument order, which keeps the merge commutative.
    let mut candidates: Vec<(f64, Point2<f64>, Matrix2<f64>)> = [
        (a.p1, a.q1),
        (a.p2, a.q2),
        (b.p1, b.q1),
        (b.p2, b.q2),
    ]
    .into_iter()
    .map(|(p, q)| ((p - centroid).dot(&axis), p, q))
    .collect();
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then_with(|| x.1.x.total_cmp(&y.1.x))
            .then_with(|| x.1.y.total_cmp(&y.1.y))
            .then_with(|| x.2.as_slice().iter().zip(y.2.as_slice()).fold(
                std::cmp::Ordering::Equal,
                |ord, (p, q)| ord.then_with(|| p.total_cmp(q)),
            ))
    });
    let (s_min, p_min, q_min) = candidates[0];
    let (s_max, p_max, q_max) = candidates[3];
    if s_max - s_min <= 0.0 {
        return Err(MergeError::IsotropicScatter);
    }
    let e1 = centroid + axis * s_min;
    let e2 = centroid + axis * s_max;
    let d1 = e1 - p_min;
    let d2 = e2 - p_max;

    // The axis carries the canonical sign, so e1 -> e2 is already in
    // canonical endpoint order.
    Ok(LineFeature {
        p1: e1,
        p2: e2,
        q1: q_min + d1 * d1.transpose(),
        q2: q_max + d2 * d2.transpose(),
        centroid,
        mass,
        scatter,
    })
}

/// Covariance of refit endpoints over `k` rounds of regenerated noisy
/// points. Rounds run in parallel with per-round child seeds and reduce in
/// round order; a failed fit is retried once with fresh noise and then the
/// round is skipped. `None` if fewer than two rounds survive.
fn refit_covariance<G>(
    generate: G,
    init_p1: Point2<f64>,
    init_p2: Point2<f64>,
    k: u32,
    motion_tol: f64,
    seed: u64,
) -> Option<(Matrix2<f64>, Matrix2<f64>)>
where
    G: Fn(u64) -> Vec<Point2<f64>> + Sync,
{
    let rounds: Vec<Option<(Point2<f64>, Point2<f64>)>> = (0..k)
        .into_par_iter()
        .map(|round| {
            let round_seed = child_seed(seed, round as u64);
            for attempt_seed in [round_seed, child_seed(round_seed, 1)] {
                let points = generate(attempt_seed);
                if let Ok((a, b)) = fit_segment(&points, init_p1, init_p2, motion_tol) {
                    // Match the refit endpoints to the sub-line's endpoints;
                    // the fit's own ordering can flip between rounds for
                    // near-vertical segments.
                    return Some(match_endpoints(a, b, init_p1, init_p2));
                }
            }
            None
        })
        .collect();
    let samples: Vec<&(Point2<f64>, Point2<f64>)> = rounds.iter().flatten().collect();
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let mut mean1 = Vector2::zeros();
    let mut mean2 = Vector2::zeros();
    for (p, q) in samples.iter() {
        mean1 += p.coords * inv_n;
        mean2 += q.coords * inv_n;
    }
    let mut c1 = Matrix2::zeros();
    let mut c2 = Matrix2::zeros();
    for (p, q) in samples.iter() {
        let d1 = p.coords - mean1;
        let d2 = q.coords - mean2;
        c1 += d1 * d1.transpose();
        c2 += d2 * d2.transpose();
    }
    let denom = (n - 1) as f64;
    Some((c1 / denom, c2 / denom))
}

/// Outcome of pruning a single line.
enum Pruned {
    Kept,
    Deleted,
    Split(Vec<LineFeature>),
}

/// Prune one line against the long-term presence field. The line's pixel
/// trace is partitioned into surviving spans (presence fraction at or above
/// `t2_stf`) and decayed spans; full survival keeps the line bitwise, full
/// decay deletes it, and each surviving sub-span at least two pixels long
/// is re-established as a sub-line: mass scales by the length ratio, the
/// support statistics are those of a uniform segment of that mass, and the
/// endpoint covariances come from refitting regenerated noisy points.
fn prune_line(
    line: &LineFeature,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    seed: u64,
) -> Pruned {
    let mut intervals: Vec<(f64, f64, bool)> = Vec::new();
    lt.trace_segment(line.p1, line.p2, |ix, iy, t0, t1| {
        let survive = lt.weight_fraction_at(ix, iy) >= config.t2_stf;
        intervals.push((t0, t1, survive));
    });
    if intervals.is_empty() {
        return Pruned::Deleted;
    }

    // Merge consecutive surviving pixel intervals into spans. Pixels the
    // trace never visited (outside the grid) count as decayed.
    const T_EPS: f64 = 1e-9;
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for &(t0, t1, survive) in &intervals {
        match (survive, current) {
            (true, Some((s0, s1))) if t0 <= s1 + T_EPS => current = Some((s0, t1.max(s1))),
            (true, _) => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
                current = Some((t0, t1));
            }
            (false, _) => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
            }
        }
    }
    if let Some(span) = current.take() {
        spans.push(span);
    }

    if spans.is_empty() {
        return Pruned::Deleted;
    }
    let full_trace = intervals.first().unwrap().0 <= T_EPS
        && intervals.last().unwrap().1 >= 1.0 - T_EPS;
    if spans.len() == 1 && full_trace && spans[0].0 <= T_EPS && spans[0].1 >= 1.0 - T_EPS {
        return Pruned::Kept;
    }

    let d = line.p2 - line.p1;
    let length = d.norm();
    let axis = d / length;
    let mut sub_lines = Vec::new();
    for (span_idx, &(ts, te)) in spans.iter().enumerate() {
        let sub_len = (te - ts) * length;
        // Sub-spans shorter than two pixels are numerical slivers.
        if sub_len < 2.0 * config.grid_resolution_q {
            continue;
        }
        let p1 = line.p1 + d * ts;
        let p2 = line.p1 + d * te;
        let sub_mass = line.mass * (te - ts);
        let count = sub_mass.ceil().max(2.0) as usize;

        // Evenly spaced positions along the sub-span with perpendicular
        // Gaussian noise at the sensor's range deviation; refitting these
        // k times yields the endpoint covariances of the re-established
        // sub-line.
        let perp = Vector2::new(-axis.y, axis.x);
        let sigma = sensor.sigma_rho;
        let generate = |round_seed: u64| -> Vec<Point2<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
            (0..count)
                .map(|i| {
                    let u = (i as f64 + 0.5) / count as f64;
                    let e: f64 = rng.sample(StandardNormal);
                    p1 + (p2 - p1) * u + perp * (sigma * e)
                })
                .collect()
        };
        let span_seed = child_seed(seed, span_idx as u64);
        let (q1, q2) = refit_covariance(generate, p1, p2, config.mc_samples_k, config.t_c, span_seed)
            .unwrap_or((Matrix2::zeros(), Matrix2::zeros()));

        // Support statistics of an idealized uniform segment: centroid at
        // the midpoint, second moment M * len^2 / 12 along the axis.
        let centroid = Point2::from((p1.coords + p2.coords) * 0.5);
        let scatter = axis * axis.transpose() * (sub_mass * sub_len * sub_len / 12.0);
        sub_lines.push(LineFeature {
            p1,
            p2,
            q1,
            q2,
            centroid,
            mass: sub_mass,
            scatter,
        });
    }
    if sub_lines.is_empty() {
        Pruned::Deleted
    } else {
        Pruned::Split(sub_lines)
    }
}

/// Remove or shorten map lines that the long-term presence field no longer
/// supports. Lines fully covered by high-presence pixels pass through
/// unchanged; see [`prune_line`] for the partial cases.
pub fn prune_against_sdf(
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    seed: u64,
) -> Result<VectorMap, MapUpdateError> {
    prune_with_stats(map, lt, config, sensor, seed).map(|(m, _)| m)
}

fn prune_with_stats(
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    seed: u64,
) -> Result<(VectorMap, UpdateStats), MapUpdateError> {
    if !lt.normalized() {
        return Err(MapUpdateError::NotNormalized);
    }
    let mut stats = UpdateStats::default();
    let mut lines = Vec::with_capacity(map.lines.len());
    for (li, line) in map.lines.iter().enumerate() {
        match prune_line(line, lt, config, sensor, child_seed(seed, li as u64)) {
            Pruned::Kept => {
                stats.lines_kept += 1;
                lines.push(line.clone());
            }
            Pruned::Deleted => stats.lines_deleted += 1,
            Pruned::Split(subs) => {
                stats.lines_split += 1;
                lines.extend(subs);
            }
        }
    }
    Ok((
        VectorMap {
            lines,
            deployment_count: map.deployment_count,
            config_snapshot: map.config_snapshot.clone(),
        },
        stats,
    ))
}

/// Merge mutually compatible lines until no pair passes the gate in either
/// direction. Pairs whose fusion is rejected (isotropic scatter) are left
/// separate and not retried until a successful merge changes the map.
fn merge_to_fixpoint(lines: &mut Vec<LineFeature>, t_chi: f64) -> usize {
    let mut merges = 0;
    let mut rejected: HashSet<(usize, usize)> = HashSet::new();
    'scan: loop {
        for i in 0..lines.len() {
            for j in (i + 1)..lines.len() {
                if rejected.contains(&(i, j)) {
                    continue;
                }
                if chi_sq_gate(&lines[j], &lines[i], t_chi)
                    || chi_sq_gate(&lines[i], &lines[j], t_chi)
                {
                    match merge_lines(&lines[i], &lines[j]) {
                        Ok(m) => {
                            lines[i] = m;
                            lines.remove(j);
                            rejected.clear();
                            merges += 1;
                            continue 'scan;
                        }
                        Err(MergeError::IsotropicScatter) => {
                            rejected.insert((i, j));
                        }
                    }
                }
            }
        }
        return merges;
    }
}

/// Apply one deployment's extracted lines to the map: prune the existing
/// lines against the already-updated long-term field, fuse each new line
/// into the first compatible map line (or insert it), run fusion to a
/// fixpoint, and advance the deployment counter.
pub fn update_map(
    new_lines: &[LineFeature],
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    seed: u64,
) -> Result<VectorMap, MapUpdateError> {
    update_map_with_stats(new_lines, map, lt, config, sensor, seed).map(|(m, _)| m)
}

pub fn update_map_with_stats(
    new_lines: &[LineFeature],
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    seed: u64,
) -> Result<(VectorMap, UpdateStats), MapUpdateError> {
    let (pruned, mut stats) = prune_with_stats(map, lt, config, sensor, seed)?;
    let mut lines = pruned.lines;

    for new_line in new_lines {
        let target = lines
            .iter()
            .position(|map_line| chi_sq_gate(new_line, map_line, config.t_chi));
        match target {
            Some(i) => match merge_lines(new_line, &lines[i]) {
                Ok(m) => {
                    lines[i] = m;
                    stats.merges_into_existing += 1;
                }
                Err(MergeError::IsotropicScatter) => {
                    lines.push(new_line.clone());
                    stats.lines_inserted += 1;
                }
            },
            None => {
                lines.push(new_line.clone());
                stats.lines_inserted += 1;
            }
        }
    }

    stats.fixpoint_merges = merge_to_fixpoint(&mut lines, config.t_chi);

    Ok((
        VectorMap {
            lines,
            deployment_count: map.deployment_count + 1,
            config_snapshot: map.config_snapshot.clone(),
        },
        stats,
    ))
}
