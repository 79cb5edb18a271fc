//! Line segment extraction from filtered scans.
//!
//! Extraction is greedy: a local RANSAC proposes a segment from a random
//! point and a random neighbor within a small radius, the best hypothesis is
//! refined by alternating inlier reassignment with a nonlinear segment fit,
//! and the refined line's inliers are removed from the working set before
//! the next line is sought. The fit minimizes the sum of squared
//! point-to-segment distances plus a shrink term that pulls the endpoints
//! toward the inlier centroid, so endpoints settle just inside the extreme
//! supporting points instead of running away.

use crate::config::{child_seed, streams, Config};
use crate::geometry::CompositeScan;
use nalgebra::{Matrix2, Matrix4, Point2, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("segment endpoints coincide")]
    DegenerateSegment,
    #[error("empty point set")]
    NoPoints,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("all points coincide")]
    CoincidentPoints,
}

/// A fitted line segment together with its sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFeature {
    /// Endpoints in canonical order: p2 - p1 has positive x, or zero x and
    /// positive y.
    pub p1: Point2<f64>,
    pub p2: Point2<f64>,
    /// Endpoint position covariances (filled in by uncertainty estimation;
    /// zero until then).
    pub q1: Matrix2<f64>,
    pub q2: Matrix2<f64>,
    /// Centroid of the supporting points.
    pub centroid: Point2<f64>,
    /// Number of supporting observations (fractional after pruning).
    pub mass: f64,
    /// Second-moment matrix of the supporting points about the centroid
    /// (unnormalized, so merging two supports is exact).
    pub scatter: Matrix2<f64>,
}

impl LineFeature {
    /// Build a feature from fitted endpoints and its supporting points.
    /// Endpoint covariances start at zero.
    pub fn from_support(p1: Point2<f64>, p2: Point2<f64>, support: &[Point2<f64>]) -> Self {
        let (p1, p2) = canonical_order(p1, p2);
        let (centroid, scatter) = sample_stats(support);
        LineFeature {
            p1,
            p2,
            q1: Matrix2::zeros(),
            q2: Matrix2::zeros(),
            centroid,
            mass: support.len() as f64,
            scatter,
        }
    }

    pub fn length(&self) -> f64 {
        (self.p2 - self.p1).norm()
    }

    pub fn direction(&self) -> Vector2<f64> {
        (self.p2 - self.p1).normalize()
    }
}

/// Centroid and unnormalized second-moment matrix of a point set.
pub(crate) fn sample_stats(points: &[Point2<f64>]) -> (Point2<f64>, Matrix2<f64>) {
    let n = points.len().max(1) as f64;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for p in points {
        cx += p.x;
        cy += p.y;
    }
    let centroid = Point2::new(cx / n, cy / n);
    let mut scatter = Matrix2::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    (centroid, scatter)
}

/// Unit eigenvector of the larger eigenvalue of a symmetric 2x2 matrix,
/// with canonical sign (positive x, or zero x and positive y), plus both
/// eigenvalues (larger first).
pub(crate) fn dominant_eigenvector(m: &Matrix2<f64>) -> (Vector2<f64>, f64, f64) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let half_trace = 0.5 * (a + c);
    let det_root = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_trace + det_root;
    let l2 = half_trace - det_root;
    let v = if b == 0.0 {
        if a >= c {
            Vector2::new(1.0, 0.0)
        } else {
            Vector2::new(0.0, 1.0)
        }
    } else {
        // Pick the better-conditioned of the two equivalent forms.
        let v1 = Vector2::new(b, l1 - a);
        let v2 = Vector2::new(l1 - c, b);
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        v.normalize()
    };
    let v = if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    };
    (v, l1, l2)
}

/// Order endpoints so the segment direction has positive x (ties broken by
/// positive y).
pub fn canonical_order(a: Point2<f64>, b: Point2<f64>) -> (Point2<f64>, Point2<f64>) {
    let d = b - a;
    if d.x < 0.0 || (d.x == 0.0 && d.y < 0.0) {
        (b, a)
    } else {
        (a, b)
    }
}

/// Order the endpoint pair `(a, b)` so that it corresponds to the
/// reference pair `(to1, to2)` by nearest assignment. Canonical ordering is
/// unstable for near-vertical segments (a hair of jitter flips which
/// endpoint is "first"), so resampled refits of the same segment must be
/// matched to the original endpoints before their spread is measured.
pub(crate) fn match_endpoints(
    a: Point2<f64>,
    b: Point2<f64>,
    to1: Point2<f64>,
    to2: Point2<f64>,
) -> (Point2<f64>, Point2<f64>) {
    let keep = (a - to1).norm_squared() + (b - to2).norm_squared();
    let swap = (a - to2).norm_squared() + (b - to1).norm_squared();
    if swap < keep {
        (b, a)
    } else {
        (a, b)
    }
}

/// Parameter of the orthogonal projection of `p` onto the line through
/// `a` and `b` (0 at `a`, 1 at `b`).
pub fn project_param_t(
    p: Point2<f64>,
    a: Point2<f64>,
    b: Point2<f64>,
) -> Result<f64, ExtractError> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return Err(ExtractError::DegenerateSegment);
    }
    Ok((p - a).dot(&ab) / len2)
}

/// Euclidean distance from `p` to the segment [a, b]: perpendicular inside
/// the segment's span, distance to the nearer endpoint outside it.
pub fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Segment fitting objective: squared point-to-segment residuals plus a
/// per-point-normalized shrink term that pulls the endpoints toward the
/// point centroid.
pub fn segment_cost(
    p1: Point2<f64>,
    p2: Point2<f64>,
    points: &[Point2<f64>],
) -> Result<f64, ExtractError> {
    if points.is_empty() {
        return Err(ExtractError::NoPoints);
    }
    let (centroid, _) = sample_stats(points);
    Ok(cost_with_centroid(p1, p2, points, centroid))
}

fn cost_with_centroid(
    p1: Point2<f64>,
    p2: Point2<f64>,
    points: &[Point2<f64>],
    centroid: Point2<f64>,
) -> f64 {
    let shrink = ((centroid - p1).norm() + (centroid - p2).norm()) / points.len() as f64;
    let residuals: f64 = points
        .iter()
        .map(|p| {
            let d = point_segment_distance(*p, p1, p2);
            d * d
        })
        .sum();
    shrink + residuals
}

/// Indices of the points strictly closer than `t_r` to the segment [a, b],
/// in ascending input order.
pub fn find_inliers(points: &[Point2<f64>], a: Point2<f64>, b: Point2<f64>, t_r: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| point_segment_distance(**p, a, b) < t_r)
        .map(|(i, _)| i)
        .collect()
}

/// Residual vector of the fitting objective: the square root of the shrink
/// term followed by the unsquared point-to-segment distances, so that the
/// sum of squares equals [`segment_cost`].
fn residuals(
    x: &Vector4<f64>,
    points: &[Point2<f64>],
    centroid: Point2<f64>,
    out: &mut Vec<f64>,
) -> f64 {
    let p1 = Point2::new(x[0], x[1]);
    let p2 = Point2::new(x[2], x[3]);
    out.clear();
    if (p2 - p1).norm_squared() < 1e-24 {
        // Collapsed segment: reject by making the step look terrible.
        out.push(f64::INFINITY);
        return f64::INFINITY;
    }
    let shrink = ((centroid - p1).norm() + (centroid - p2).norm()) / points.len() as f64;
    out.push(shrink.max(0.0).sqrt());
    let mut cost = shrink;
    for p in points {
        let d = point_segment_distance(*p, p1, p2);
        out.push(d);
        cost += d * d;
    }
    cost
}

/// Refine segment endpoints by damped Gauss-Newton on the fitting objective.
///
/// Jacobians are evaluated by central differences; a step is accepted only
/// if it lowers the objective, the damping factor adapts accordingly, and
/// iteration stops when the summed endpoint motion of an accepted step
/// falls below `motion_tol` (the configured convergence threshold; pass
/// something near machine precision to drive the fit to the numerical
/// optimum), when no improving step can be found, or after 100 iterations.
pub fn fit_segment(
    points: &[Point2<f64>],
    init_p1: Point2<f64>,
    init_p2: Point2<f64>,
    motion_tol: f64,
) -> Result<(Point2<f64>, Point2<f64>), ExtractError> {
    if points.len() < 2 {
        return Err(ExtractError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let (centroid, scatter) = sample_stats(points);
    if scatter[(0, 0)] + scatter[(1, 1)] < 1e-20 {
        return Err(ExtractError::CoincidentPoints);
    }
    if (init_p2 - init_p1).norm_squared() == 0.0 {
        return Err(ExtractError::DegenerateSegment);
    }

    const MAX_ITERS: usize = 100;
    const FD_STEP: f64 = 1e-6;

    let mut x = Vector4::new(init_p1.x, init_p1.y, init_p2.x, init_p2.y);
    let mut scratch = Vec::with_capacity(points.len() + 1);
    let mut current = Vec::with_capacity(points.len() + 1);
    let mut cost = residuals(&x, points, centroid, &mut current);
    let mut lambda = 1e-4;

    // Accumulate one residual row into the normal equations: `tri` holds the
    // upper triangle of J^T J row-major, `grad` holds J^T r.
    #[inline(always)]
    fn accumulate(tri: &mut [f64; 10], grad: &mut [f64; 4], j: [f64; 4], r: f64) {
        tri[0] += j[0] * j[0];
        tri[1] += j[0] * j[1];
        tri[2] += j[0] * j[2];
        tri[3] += j[0] * j[3];
        tri[4] += j[1] * j[1];
        tri[5] += j[1] * j[2];
        tri[6] += j[1] * j[3];
        tri[7] += j[2] * j[2];
        tri[8] += j[2] * j[3];
        tri[9] += j[3] * j[3];
        grad[0] += j[0] * r;
        grad[1] += j[1] * r;
        grad[2] += j[2] * r;
        grad[3] += j[3] * r;
    }

    for _ in 0..MAX_ITERS {
        // Central-difference Jacobian, one column per endpoint coordinate,
        // folded straight into J^T J and J^T r so no Jacobian or perturbed
        // residual vector is ever materialized. Slot 2c holds the geometry
        // for +h on coordinate c, slot 2c + 1 for -h.
        let mut pax = [0.0; 8];
        let mut pay = [0.0; 8];
        let mut pabx = [0.0; 8];
        let mut paby = [0.0; 8];
        let mut plen2 = [0.0; 8];
        let mut collapsed = [false; 8];
        let mut shrink_row = [0.0; 8];
        for slot in 0..8 {
            let mut v = x;
            v[slot / 2] += if slot % 2 == 0 { FD_STEP } else { -FD_STEP };
            let abx = v[2] - v[0];
            let aby = v[3] - v[1];
            let len2 = abx * abx + aby * aby;
            pax[slot] = v[0];
            pay[slot] = v[1];
            pabx[slot] = abx;
            paby[slot] = aby;
            plen2[slot] = len2;
            // A perturbation that collapses the segment poisons its column
            // with infinities; the damped solve then fails or the step is
            // rejected, mirroring the infinite objective of the collapsed
            // geometry.
            collapsed[slot] = len2 < 1e-24;
            shrink_row[slot] = if collapsed[slot] {
                f64::INFINITY
            } else {
                let da = ((centroid.x - v[0]) * (centroid.x - v[0])
                    + (centroid.y - v[1]) * (centroid.y - v[1]))
                    .sqrt();
                let db = ((centroid.x - v[2]) * (centroid.x - v[2])
                    + (centroid.y - v[3]) * (centroid.y - v[3]))
                    .sqrt();
                ((da + db) / points.len() as f64).max(0.0).sqrt()
            };
        }

        let mut tri = [0.0; 10];
        let mut grad = [0.0; 4];
        accumulate(
            &mut tri,
            &mut grad,
            [
                (shrink_row[0] - shrink_row[1]) / (2.0 * FD_STEP),
                (shrink_row[2] - shrink_row[3]) / (2.0 * FD_STEP),
                (shrink_row[4] - shrink_row[5]) / (2.0 * FD_STEP),
                (shrink_row[6] - shrink_row[7]) / (2.0 * FD_STEP),
            ],
            current[0],
        );
        for (p, &r) in points.iter().zip(&current[1..]) {
            let mut d = [0.0; 8];
            for slot in 0..8 {
                d[slot] = if collapsed[slot] {
                    f64::INFINITY
                } else {
                    let t = (((p.x - pax[slot]) * pabx[slot]
                        + (p.y - pay[slot]) * paby[slot])
                        / plen2[slot])
                        .clamp(0.0, 1.0);
                    let dx = p.x - (pax[slot] + pabx[slot] * t);
                    let dy = p.y - (pay[slot] + paby[slot] * t);
                    (dx * dx + dy * dy).sqrt()
                };
            }
            accumulate(
                &mut tri,
                &mut grad,
                [
                    (d[0] - d[1]) / (2.0 * FD_STEP),
                    (d[2] - d[3]) / (2.0 * FD_STEP),
                    (d[4] - d[5]) / (2.0 * FD_STEP),
                    (d[6] - d[7]) / (2.0 * FD_STEP),
                ],
                r,
            );
        }
        #[rustfmt::skip]
        let jtj = Matrix4::new(
            tri[0], tri[1], tri[2], tri[3],
            tri[1], tri[4], tri[5], tri[6],
            tri[2], tri[5], tri[7], tri[8],
            tri[3], tri[6], tri[8], tri[9],
        );
        let jtr = Vector4::new(grad[0], grad[1], grad[2], grad[3]);

        let mut accepted = false;
        let mut motion = 0.0;
        while lambda < 1e12 {
            let damped = jtj + Matrix4::identity() * lambda;
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = x + step;
            let candidate_cost = residuals(&candidate, points, centroid, &mut scratch);
            if candidate_cost < cost {
                motion = (step.xy()).norm() + Vector2::new(step[2], step[3]).norm();
                x = candidate;
                cost = candidate_cost;
                std::mem::swap(&mut current, &mut scratch);
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || motion < motion_tol {
            break;
        }
    }

    let p1 = Point2::new(x[0], x[1]);
    let p2 = Point2::new(x[2], x[3]);
    if (p2 - p1).norm_squared() == 0.0 {
        return Err(ExtractError::DegenerateSegment);
    }
    Ok(canonical_order(p1, p2))
}

/// Uniform bin index over the working point set, for radius and
/// segment-band queries. Rebuilt whenever points are claimed.
struct SpatialIndex {
    cell: f64,
    min: Point2<f64>,
    cols: usize,
    rows: usize,
    bins: Vec<Vec<u32>>,
}

impl SpatialIndex {
    fn build(points: &[Point2<f64>], alive: &[bool], cell: f64) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (idx, p) in points.iter().enumerate() {
            if alive[idx] {
                min.x = min.x.min(p.x);
                min.y = min.y.min(p.y);
                max.x = max.x.max(p.x);
                max.y = max.y.max(p.y);
            }
        }
        if !min.x.is_finite() {
            min = Point2::origin();
            max = Point2::origin();
        }
        let cols = (((max.x - min.x) / cell).floor() as usize + 1).max(1);
        let rows = (((max.y - min.y) / cell).floor() as usize + 1).max(1);
        let mut bins = vec![Vec::new(); cols * rows];
        for (idx, p) in points.iter().enumerate() {
            if alive[idx] {
                let cx = (((p.x - min.x) / cell).floor() as usize).min(cols - 1);
                let cy = (((p.y - min.y) / cell).floor() as usize).min(rows - 1);
                bins[cy * cols + cx].push(idx as u32);
            }
        }
        SpatialIndex {
            cell,
            min,
            cols,
            rows,
            bins,
        }
    }

    fn cell_range(&self, lo: f64, hi: f64, min: f64, count: usize) -> (usize, usize) {
        let a = ((lo - min) / self.cell).floor().max(0.0) as usize;
        let b = ((hi - min) / self.cell).floor().max(0.0) as usize;
        (a.min(count - 1), b.min(count - 1))
    }

    /// Indices (ascending) of alive points within `radius` of `center`.
    fn in_radius(&self, points: &[Point2<f64>], center: Point2<f64>, radius: f64) -> Vec<u32> {
        let (cx0, cx1) = self.cell_range(center.x - radius, center.x + radius, self.min.x, self.cols);
        let (cy0, cy1) = self.cell_range(center.y - radius, center.y + radius, self.min.y, self.rows);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                for &idx in &self.bins[cy * self.cols + cx] {
                    if (points[idx as usize] - center).norm_squared() <= r2 {
                        out.push(idx);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Indices (ascending) of alive points strictly within `t_r` of the
    /// segment [a, b].
    fn in_band(&self, points: &[Point2<f64>], a: Point2<f64>, b: Point2<f64>, t_r: f64) -> Vec<u32> {
        let lo_x = a.x.min(b.x) - t_r;
        let hi_x = a.x.max(b.x) + t_r;
        let lo_y = a.y.min(b.y) - t_r;
        let hi_y = a.y.max(b.y) + t_r;
        let (cx0, cx1) = self.cell_range(lo_x, hi_x, self.min.x, self.cols);
        let (cy0, cy1) = self.cell_range(lo_y, hi_y, self.min.y, self.rows);
        // Skip whole cells that cannot contain band points.
        let reject = t_r + self.cell * std::f64::consts::SQRT_2;
        let mut out = Vec::new();
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let bin = &self.bins[cy * self.cols + cx];
                if bin.is_empty() {
                    continue;
                }
                let center = Point2::new(
                    self.min.x + (cx as f64 + 0.5) * self.cell,
                    self.min.y + (cy as f64 + 0.5) * self.cell,
                );
                if point_segment_distance(center, a, b) > reject {
                    continue;
                }
                for &idx in bin {
                    if point_segment_distance(points[idx as usize], a, b) < t_r {
                        out.push(idx);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// One extracted line plus the indices of the scan observations it claimed.
#[derive(Debug, Clone)]
pub struct ExtractedLine {
    pub feature: LineFeature,
    /// Indices into the input scan's observation list.
    pub inliers: Vec<usize>,
}

/// Result of greedy extraction: emitted lines with their supporting
/// observation indices, plus the observations no line claimed.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub lines: Vec<ExtractedLine>,
    pub unclaimed: Vec<usize>,
}

/// Extract line features from a filtered scan. See [`extract_lines_detailed`]
/// for the variant that also reports the supporting observation indices.
pub fn extract_lines(scan: &CompositeScan, config: &Config) -> Vec<LineFeature> {
    extract_lines_detailed(scan, config)
        .lines
        .into_iter()
        .map(|l| l.feature)
        .collect()
}

/// Greedy sequential extraction: propose with local RANSAC, refine by
/// alternating inlier reassignment and segment fitting until endpoint motion
/// falls below `t_c`, claim the final inliers, repeat until no hypothesis
/// reaches `min_inliers`.
/// Clamp a fitted segment to the extent of its supporting points: keep the
/// line through `a` and `b` but move the endpoints to the extreme support
/// projections. Degenerate segments are returned unchanged.
fn snap_to_support_extent(
    a: Point2<f64>,
    b: Point2<f64>,
    support: &[Point2<f64>],
) -> (Point2<f64>, Point2<f64>) {
    let d = b - a;
    let len = d.norm();
    if len < 1e-12 || support.is_empty() {
        return (a, b);
    }
    let u = d / len;
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for p in support {
        let t = (p - a).dot(&u);
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    (a + u * t_min, a + u * t_max)
}

pub fn extract_lines_detailed(scan: &CompositeScan, config: &Config) -> Extraction {
    let points: Vec<Point2<f64>> = scan.observations.iter().map(|o| o.world_point()).collect();
    let mut alive = vec![true; points.len()];
    let mut alive_count = points.len();
    let min_inliers = config.min_inliers as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(
        child_seed(config.rng_seed, streams::RANSAC),
        scan.deployment_id as u64,
    ));
    let cell = (config.local_radius * 0.5).max(config.t_r);
    let mut result = Extraction::default();
    // A refined hypothesis can end below the inlier floor; after a few such
    // dead ends in a row there is nothing left worth proposing.
    const MAX_FAILED_REFINEMENTS: u32 = 25;
    let mut failed_refinements = 0;

    while alive_count >= min_inliers.max(2) {
        let index = SpatialIndex::build(&points, &alive, cell);
        let alive_indices: Vec<u32> = (0..points.len() as u32)
            .filter(|&i| alive[i as usize])
            .collect();

        // Hypothesis search: best of `ransac_iters` local pairs.
        let mut best: Option<(Point2<f64>, Point2<f64>, usize)> = None;
        for _ in 0..config.ransac_iters {
            let anchor = alive_indices[rng.random_range(0..alive_indices.len())] as usize;
            let neighbors = index.in_radius(&points, points[anchor], config.local_radius);
            let candidates: Vec<u32> = neighbors
                .into_iter()
                .filter(|&j| j as usize != anchor && points[j as usize] != points[anchor])
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let partner = candidates[rng.random_range(0..candidates.len())] as usize;
            let (a, b) = canonical_order(points[anchor], points[partner]);
            let count = index.in_band(&points, a, b, config.t_r).len();
            if best.as_ref().is_none_or(|(_, _, c)| count > *c) {
                best = Some((a, b, count));
            }
        }
        let Some((mut a, mut b, count)) = best else {
            break;
        };
        if count < min_inliers {
            break;
        }

        // Refinement: reassign inliers and refit until the endpoints settle.
        let mut inliers = index.in_band(&points, a, b, config.t_r);
        let support: Vec<Point2<f64>> = inliers.iter().map(|&i| points[i as usize]).collect();
        let Ok((mut fa, mut fb)) = fit_segment(&support, a, b, config.t_c) else {
            failed_refinements += 1;
            if failed_refinements >= MAX_FAILED_REFINEMENTS {
                break;
            }
            continue;
        };
        for _ in 0..100 {
            let motion = (fa - a).norm() + (fb - b).norm();
            if motion <= config.t_c {
                break;
            }
            a = fa;
            b = fb;
            inliers = index.in_band(&points, a, b, config.t_r);
            if inliers.len() < 2 {
                break;
            }
            let support: Vec<Point2<f64>> = inliers.iter().map(|&i| points[i as usize]).collect();
            match fit_segment(&support, a, b, config.t_c) {
                Ok((na, nb)) => {
                    fa = na;
                    fb = nb;
                }
                Err(_) => break,
            }
        }

        if inliers.len() < min_inliers {
            failed_refinements += 1;
            if failed_refinements >= MAX_FAILED_REFINEMENTS {
                break;
            }
            continue;
        }
        failed_refinements = 0;

        let support: Vec<Point2<f64>> = inliers.iter().map(|&i| points[i as usize]).collect();
        // The solver fixes the line's direction and offset, but a large
        // accepted step can leave an endpoint stranded past the data, where
        // the weak per-point shrink force cannot move it back above the
        // motion tolerance. The segment's extent is the support's business:
        // clamp the endpoints to the extreme inlier projections.
        let (fa, fb) = snap_to_support_extent(fa, fb, &support);
        let feature = LineFeature::from_support(fa, fb, &support);
        for &i in &inliers {
            alive[i as usize] = false;
        }
        alive_count -= inliers.len();
        result.lines.push(ExtractedLine {
            feature,
            inliers: inliers.iter().map(|&i| i as usize).collect(),
        });
    }

    result.unclaimed = (0..points.len()).filter(|&i| alive[i]).collect();
    result
}
