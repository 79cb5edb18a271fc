//! Truncated signed distance fields over a fixed-resolution pixel grid.
//!
//! Each deployment's composite scan is fused into a short-term SDF: every
//! ray updates the pixels it crosses with a truncated signed distance to the
//! hit point and a confidence weight that is 1 near the hit and falls off to
//! 0 within the truncation band. Per-deployment weights are then normalized
//! to {0, 1} against the deployment's maximum (which suppresses dynamic
//! objects seen in only a few scans), and accumulated into a long-term SDF
//! whose weight plane holds, per pixel, the number of deployments that
//! confidently observed it. Observation filtering interpolates the long-term
//! planes bicubically at each observed point and keeps the observation only
//! where persistent structure was seen at a consistent position.
//!
//! Grids are anchored on a global lattice (origins are integer multiples of
//! the resolution), so grids from different deployments align pixel-for-pixel
//! and growing a grid is an exact re-embedding.

use crate::config::{Config, SensorModel};
use crate::geometry::CompositeScan;
use nalgebra::Point2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("composite scan has no observations")]
    EmptyScan,
    #[error("observation {index} has range {range} outside (0, {max_range}]")]
    RangeOutOfBounds {
        index: usize,
        range: f64,
        max_range: f64,
    },
    #[error("observation {index} has a non-finite field")]
    NonFinite { index: usize },
    #[error("grid is already normalized")]
    AlreadyNormalized,
    #[error("grid is not normalized")]
    NotNormalized,
    #[error("all pixel weights are zero")]
    AllZeroWeights,
    #[error("grid resolutions differ: {0} vs {1}")]
    ResolutionMismatch(f64, f64),
    #[error("sample point ({0}, {1}) is outside the grid interior")]
    OutsideInterior(f64, f64),
    #[error("grid is empty")]
    EmptyGrid,
}

/// Which plane of the grid to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// Truncated signed distance values.
    Value,
    /// Confidence weights; for accumulated grids this is the fraction of
    /// deployments that confidently observed the pixel.
    Weight,
}

/// A truncated signed distance field with a per-pixel weight plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    /// Lattice coordinates of pixel (0, 0)'s center, in units of `resolution`.
    origin_ix: i64,
    origin_iy: i64,
    resolution: f64,
    width: usize,
    height: usize,
    /// Row-major truncated signed distances, clamped to [-delta, delta].
    values: Vec<f64>,
    /// Row-major weights. Unnormalized grids accumulate raw ray weights;
    /// normalized short-term grids hold {0, 1}; accumulated long-term grids
    /// hold the sum of the per-deployment binary weights.
    weights: Vec<f64>,
    normalized: bool,
    /// Number of deployments fused into this grid (1 for short-term grids).
    deployment_count: u32,
}

impl SdfGrid {
    /// The empty sentinel used as the long-term SDF before any deployment.
    pub fn empty() -> Self {
        SdfGrid {
            origin_ix: 0,
            origin_iy: 0,
            resolution: 0.0,
            width: 0,
            height: 0,
            values: Vec::new(),
            weights: Vec::new(),
            normalized: true,
            deployment_count: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn deployment_count(&self) -> u32 {
        self.deployment_count
    }

    /// World coordinates of pixel (0, 0)'s center.
    pub fn origin(&self) -> Point2<f64> {
        Point2::new(
            self.origin_ix as f64 * self.resolution,
            self.origin_iy as f64 * self.resolution,
        )
    }

    pub fn pixel_center(&self, ix: usize, iy: usize) -> Point2<f64> {
        Point2::new(
            (self.origin_ix + ix as i64) as f64 * self.resolution,
            (self.origin_iy + iy as i64) as f64 * self.resolution,
        )
    }

    /// The pixel whose cell contains the world point, if inside the grid.
    pub fn pixel_at(&self, p: Point2<f64>) -> Option<(usize, usize)> {
        let gx = (p.x / self.resolution - self.origin_ix as f64).round();
        let gy = (p.y / self.resolution - self.origin_iy as f64).round();
        if gx < 0.0 || gy < 0.0 || gx >= self.width as f64 || gy >= self.height as f64 {
            return None;
        }
        Some((gx as usize, gy as usize))
    }

    fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.width && iy < self.height);
        iy * self.width + ix
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.idx(ix, iy)]
    }

    /// Raw weight plane entry (accumulated weight, binary weight, or binary
    /// weight sum depending on the grid's state).
    pub fn weight_sum_at(&self, ix: usize, iy: usize) -> f64 {
        self.weights[self.idx(ix, iy)]
    }

    /// Weight normalized by the number of contributing deployments.
    pub fn weight_fraction_at(&self, ix: usize, iy: usize) -> f64 {
        self.weights[self.idx(ix, iy)] / self.deployment_count.max(1) as f64
    }

    pub(crate) fn value_plane(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn weight_plane(&self) -> &[f64] {
        &self.weights
    }

    /// Rebuild a grid from previously serialized parts. The origin must lie
    /// on the lattice of the given resolution.
    pub(crate) fn from_raw_parts(
        origin: Point2<f64>,
        resolution: f64,
        width: usize,
        height: usize,
        values: Vec<f64>,
        weights: Vec<f64>,
        normalized: bool,
        deployment_count: u32,
    ) -> Self {
        assert_eq!(values.len(), width * height);
        assert_eq!(weights.len(), width * height);
        let grid = SdfGrid {
            origin_ix: (origin.x / resolution).round() as i64,
            origin_iy: (origin.y / resolution).round() as i64,
            resolution,
            width,
            height,
            values,
            weights,
            normalized,
            deployment_count,
        };
        debug_assert!((grid.origin().x - origin.x).abs() < resolution * 1e-6);
        debug_assert!((grid.origin().y - origin.y).abs() < resolution * 1e-6);
        grid
    }

    /// Pass both planes through f32 precision, matching what a round trip
    /// through the on-disk format produces. The pipeline checkpoints the
    /// long-term SDF this way so that in-memory runs and runs composed from
    /// the standalone subcommands produce identical bytes.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
        for w in &mut self.weights {
            *w = *w as f32 as f64;
        }
    }

    /// Zero every weight at or below `t1_df` times the maximum weight and
    /// set the rest to one. Values are left untouched.
    pub fn normalize_weights(mut self, t1_df: f64) -> Result<SdfGrid, SdfError> {
        if self.normalized {
            return Err(SdfError::AlreadyNormalized);
        }
        let w_max = self.weights.iter().cloned().fold(0.0_f64, f64::max);
        if w_max <= 0.0 {
            return Err(SdfError::AllZeroWeights);
        }
        for w in &mut self.weights {
            *w = if *w / w_max <= t1_df { 0.0 } else { 1.0 };
        }
        self.normalized = true;
        Ok(self)
    }

    /// Interpolate one plane with a Catmull-Rom bicubic patch on the 4x4
    /// pixel neighborhood of `p`. Errors if `p` is closer than two pixels to
    /// the grid border.
    pub fn bicubic_sample(&self, p: Point2<f64>, field: Field) -> Result<f64, SdfError> {
        if self.is_empty() {
            return Err(SdfError::EmptyGrid);
        }
        let gx = p.x / self.resolution - self.origin_ix as f64;
        let gy = p.y / self.resolution - self.origin_iy as f64;
        let bx = gx.floor();
        let by = gy.floor();
        if bx < 1.0
            || by < 1.0
            || bx + 2.0 > (self.width - 1) as f64
            || by + 2.0 > (self.height - 1) as f64
        {
            return Err(SdfError::OutsideInterior(p.x, p.y));
        }
        let (ix, iy) = (bx as usize, by as usize);
        let (tx, ty) = (gx - bx, gy - by);
        let plane: &[f64] = match field {
            Field::Value => &self.values,
            Field::Weight => &self.weights,
        };
        let mut rows = [0.0_f64; 4];
        for (row, slot) in rows.iter_mut().enumerate() {
            let base = (iy + row - 1) * self.width + (ix - 1);
            *slot = catmull_rom(
                plane[base],
                plane[base + 1],
                plane[base + 2],
                plane[base + 3],
                tx,
            );
        }
        let sample = catmull_rom(rows[0], rows[1], rows[2], rows[3], ty);
        Ok(match field {
            Field::Value => sample,
            Field::Weight => sample / self.deployment_count.max(1) as f64,
        })
    }

    /// Whether `p` is far enough from the border for [`Self::bicubic_sample`].
    pub fn in_sample_interior(&self, p: Point2<f64>) -> bool {
        if self.is_empty() {
            return false;
        }
        let bx = (p.x / self.resolution - self.origin_ix as f64).floor();
        let by = (p.y / self.resolution - self.origin_iy as f64).floor();
        bx >= 1.0
            && by >= 1.0
            && bx + 2.0 <= (self.width - 1) as f64
            && by + 2.0 <= (self.height - 1) as f64
    }

    /// Visit every pixel the segment [a, b] crosses, in order, with the
    /// segment parameter interval spent inside each pixel. Pixels outside
    /// the grid are skipped.
    pub(crate) fn trace_segment<F: FnMut(usize, usize, f64, f64)>(
        &self,
        a: Point2<f64>,
        b: Point2<f64>,
        mut visit: F,
    ) {
        let inv_q = 1.0 / self.resolution;
        let ua = (
            a.x * inv_q - self.origin_ix as f64 + 0.5,
            a.y * inv_q - self.origin_iy as f64 + 0.5,
        );
        let ub = (
            b.x * inv_q - self.origin_ix as f64 + 0.5,
            b.y * inv_q - self.origin_iy as f64 + 0.5,
        );
        let d = (ub.0 - ua.0, ub.1 - ua.1);
        let mut cell = (ua.0.floor() as i64, ua.1.floor() as i64);

        let emit = |cell: (i64, i64), t0: f64, t1: f64, visit: &mut F| {
            if cell.0 >= 0
                && cell.1 >= 0
                && (cell.0 as usize) < self.width
                && (cell.1 as usize) < self.height
            {
                visit(cell.0 as usize, cell.1 as usize, t0, t1);
            }
        };

        if d.0 == 0.0 && d.1 == 0.0 {
            emit(cell, 0.0, 1.0, &mut visit);
            return;
        }

        let step = (signum_i64(d.0), signum_i64(d.1));
        let t_delta = (
            if d.0 != 0.0 { (1.0 / d.0).abs() } else { f64::INFINITY },
            if d.1 != 0.0 { (1.0 / d.1).abs() } else { f64::INFINITY },
        );
        let mut t_max = (
            axis_boundary_t(ua.0, d.0, cell.0, step.0),
            axis_boundary_t(ua.1, d.1, cell.1, step.1),
        );

        let mut t_entry = 0.0;
        loop {
            let t_exit = t_max.0.min(t_max.1).min(1.0);
            if t_exit > t_entry {
                emit(cell, t_entry, t_exit, &mut visit);
            }
            if t_max.0.min(t_max.1) >= 1.0 {
                break;
            }
            if t_max.0 < t_max.1 {
                cell.0 += step.0;
                t_entry = t_max.0;
                t_max.0 += t_delta.0;
            } else if t_max.1 < t_max.0 {
                cell.1 += step.1;
                t_entry = t_max.1;
                t_max.1 += t_delta.1;
            } else {
                // Exact corner crossing: step both axes at once.
                cell.0 += step.0;
                cell.1 += step.1;
                t_entry = t_max.0;
                t_max.0 += t_delta.0;
                t_max.1 += t_delta.1;
            }
        }
    }
}

fn signum_i64(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn axis_boundary_t(u: f64, d: f64, cell: i64, step: i64) -> f64 {
    match step {
        1 => ((cell + 1) as f64 - u) / d,
        -1 => (cell as f64 - u) / d,
        _ => f64::INFINITY,
    }
}

/// Catmull-Rom interpolation of four equally spaced samples at offset
/// `t` in [0, 1] between the middle two. Reproduces linear data exactly.
fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = -0.5 * p0 + 0.5 * p2;
    ((a * t + b) * t + c) * t + p1
}

/// Truncate a signed distance to the band [-delta, delta].
pub fn truncate_distance(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// Observation weight at signed distance `r` from the hit: full confidence
/// inside the sensor's inlier band, Gaussian falloff out to the truncation
/// distance, zero beyond it.
pub fn ray_weight(r: f64, sensor: &SensorModel, delta: f64) -> f64 {
    let m = r.abs();
    if m < sensor.epsilon {
        1.0
    } else if m <= delta {
        (-sensor.sigma_w * (m - sensor.epsilon).powi(2)).exp()
    } else {
        0.0
    }
}

/// Fuse one deployment's composite scan into a fresh short-term SDF.
///
/// The grid covers the bounding box of all sensor origins and hit points
/// plus a three-truncation-distance margin. Every ray updates the pixels it
/// crosses from the sensor origin to one truncation distance beyond the hit
/// with the running weighted mean of the truncated distance. Pixels crossed
/// only outside the truncation band (free space) keep zero weight but record
/// the truncation distance as their value.
pub fn build_st_sdf(
    scan: &CompositeScan,
    config: &Config,
    sensor: &SensorModel,
) -> Result<SdfGrid, SdfError> {
    if scan.observations.is_empty() {
        return Err(SdfError::EmptyScan);
    }
    let q = config.grid_resolution_q;
    let delta = config.delta;

    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (index, obs) in scan.observations.iter().enumerate() {
        if !(obs.range.is_finite()
            && obs.bearing.is_finite()
            && obs.pose.x.is_finite()
            && obs.pose.y.is_finite()
            && obs.pose.theta.is_finite())
        {
            return Err(SdfError::NonFinite { index });
        }
        if obs.range <= 0.0 || obs.range > sensor.max_range {
            return Err(SdfError::RangeOutOfBounds {
                index,
                range: obs.range,
                max_range: sensor.max_range,
            });
        }
        let hit = obs.world_point();
        for p in [obs.pose.position(), hit] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
    }

    let margin = 3.0 * delta;
    let origin_ix = ((min.x - margin) / q).floor() as i64;
    let origin_iy = ((min.y - margin) / q).floor() as i64;
    let end_ix = ((max.x + margin) / q).ceil() as i64;
    let end_iy = ((max.y + margin) / q).ceil() as i64;
    let width = (end_ix - origin_ix + 1) as usize;
    let height = (end_iy - origin_iy + 1) as usize;

    let mut grid = SdfGrid {
        origin_ix,
        origin_iy,
        resolution: q,
        width,
        height,
        values: vec![0.0; width * height],
        weights: vec![0.0; width * height],
        normalized: false,
        deployment_count: 1,
    };

    for obs in &scan.observations {
        let a = obs.pose.position();
        let heading = obs.pose.theta + obs.bearing;
        let dir = Point2::new(heading.cos(), heading.sin());
        let reach = obs.range + delta;
        let b = Point2::new(a.x + reach * dir.x, a.y + reach * dir.y);
        let mut updates: Vec<(usize, f64, f64)> = Vec::new();
        grid.trace_segment(a, b, |ix, iy, _, _| {
            let center = grid.pixel_center(ix, iy);
            let r = obs.range - (center - a).norm();
            if r < -delta {
                return; // beyond the truncation band behind the hit
            }
            let w = ray_weight(r, sensor, delta);
            let d = truncate_distance(r, delta);
            updates.push((iy * grid.width + ix, d, w));
        });
        for (idx, d, w) in updates {
            if w > 0.0 {
                let w0 = grid.weights[idx];
                grid.values[idx] = (w0 * grid.values[idx] + w * d) / (w0 + w);
                grid.weights[idx] += w;
            } else if grid.weights[idx] == 0.0 {
                // Seen only as free space so far: record the truncation
                // distance so the pixel is distinguishable from never-seen.
                grid.values[idx] = delta;
            }
        }
    }
    Ok(grid)
}

/// Fold one deployment's normalized short-term SDF into the long-term SDF.
///
/// The result covers the union of both extents; the weight plane accumulates
/// the per-deployment binary weights and the value plane holds their
/// weight-weighted running mean. An empty long-term grid adopts the
/// short-term grid unchanged.
pub fn update_lt_sdf(lt: &SdfGrid, st: &SdfGrid) -> Result<SdfGrid, SdfError> {
    if !st.normalized {
        return Err(SdfError::NotNormalized);
    }
    if st.is_empty() {
        return Err(SdfError::EmptyGrid);
    }
    if lt.deployment_count == 0 || lt.is_empty() {
        return Ok(st.clone());
    }
    if !lt.normalized {
        return Err(SdfError::NotNormalized);
    }
    if lt.resolution != st.resolution {
        return Err(SdfError::ResolutionMismatch(lt.resolution, st.resolution));
    }

    let origin_ix = lt.origin_ix.min(st.origin_ix);
    let origin_iy = lt.origin_iy.min(st.origin_iy);
    let end_ix = (lt.origin_ix + lt.width as i64 - 1).max(st.origin_ix + st.width as i64 - 1);
    let end_iy = (lt.origin_iy + lt.height as i64 - 1).max(st.origin_iy + st.height as i64 - 1);
    let width = (end_ix - origin_ix + 1) as usize;
    let height = (end_iy - origin_iy + 1) as usize;

    let mut out = SdfGrid {
        origin_ix,
        origin_iy,
        resolution: lt.resolution,
        width,
        height,
        values: vec![0.0; width * height],
        weights: vec![0.0; width * height],
        normalized: true,
        deployment_count: lt.deployment_count + 1,
    };

    let off = |grid: &SdfGrid| {
        (
            (grid.origin_ix - origin_ix) as usize,
            (grid.origin_iy - origin_iy) as usize,
        )
    };
    let (lt_ox, lt_oy) = off(lt);
    let (st_ox, st_oy) = off(st);

    for iy in 0..height {
        for ix in 0..width {
            let lt_in = ix >= lt_ox && ix - lt_ox < lt.width && iy >= lt_oy && iy - lt_oy < lt.height;
            let st_in = ix >= st_ox && ix - st_ox < st.width && iy >= st_oy && iy - st_oy < st.height;
            let (lw, lv) = if lt_in {
                let i = (iy - lt_oy) * lt.width + (ix - lt_ox);
                (lt.weights[i], lt.values[i])
            } else {
                (0.0, 0.0)
            };
            let (sw, sv) = if st_in {
                let i = (iy - st_oy) * st.width + (ix - st_ox);
                (st.weights[i], st.values[i])
            } else {
                (0.0, 0.0)
            };
            let idx = iy * width + ix;
            out.weights[idx] = lw + sw;
            out.values[idx] = if lw + sw > 0.0 {
                (lw * lv + sw * sv) / (lw + sw)
            } else if lv != 0.0 {
                lv // keep the free-space marker
            } else {
                sv
            };
        }
    }
    Ok(out)
}

/// Keep only observations confirmed by the long-term SDF: the interpolated
/// weight fraction must exceed `t2_stf` and the interpolated value magnitude
/// must stay below `t_d`. Observations too close to the grid border to
/// interpolate are dropped. Input order is preserved.
pub fn filter_scan(
    scan: &CompositeScan,
    lt: &SdfGrid,
    config: &Config,
) -> Result<CompositeScan, SdfError> {
    if !lt.normalized {
        return Err(SdfError::NotNormalized);
    }
    if lt.is_empty() {
        return Err(SdfError::EmptyGrid);
    }
    let mut kept = Vec::new();
    for obs in &scan.observations {
        let p = obs.world_point();
        if !lt.in_sample_interior(p) {
            continue;
        }
        let weight = lt.bicubic_sample(p, Field::Weight)?;
        let value = lt.bicubic_sample(p, Field::Value)?;
        if weight > config.t2_stf && value.abs() < config.t_d {
            kept.push(*obs);
        }
    }
    Ok(CompositeScan::new(kept, scan.deployment_id))
}
