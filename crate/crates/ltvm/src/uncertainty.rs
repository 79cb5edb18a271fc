//! Observation noise covariances and Monte Carlo endpoint uncertainty.
//!
//! Each range/bearing observation carries a world-frame noise covariance
//! determined by the sensor model (radial variance from the range noise,
//! tangential variance from the bearing noise scaled by range). Endpoint
//! covariances of a fitted line have no closed form, so they are estimated
//! by resampling the supporting observations from those covariances and
//! refitting: the scatter of the refit endpoints is the estimate.

use crate::config::child_seed;
use crate::extract::{fit_segment, match_endpoints, LineFeature};
use crate::geometry::Observation;
use crate::SensorModel;
use nalgebra::{Matrix2, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("need at least 2 resample rounds, got {got}")]
    TooFewRounds { got: u32 },
    #[error("need at least 2 supporting observations, got {got}")]
    TooFewInliers { got: usize },
    #[error("only {succeeded} of {attempted} resample rounds produced a fit; need at least 2")]
    TooFewSuccesses { succeeded: usize, attempted: u32 },
}

/// World-frame position covariance of a single observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationCovariance {
    pub q: Matrix2<f64>,
}

/// Noise covariance of an observation's world point: the range noise acts
/// along the beam direction and the bearing noise acts tangentially with
/// lever arm equal to the range. With beam angle b (pose heading plus
/// bearing) this is R(b) * diag(sigma_rho^2, rho^2 sigma_alpha^2) * R(b)^T.
pub fn sensor_covariance(c: &Observation, sensor: &SensorModel) -> ObservationCovariance {
    let beam = c.pose.theta + c.bearing;
    let (s, co) = beam.sin_cos();
    let radial = sensor.sigma_rho * sensor.sigma_rho;
    let tangential = c.range * sensor.sigma_alpha * c.range * sensor.sigma_alpha;
    let q = Matrix2::new(
        co * co * radial + s * s * tangential,
        co * s * (radial - tangential),
        co * s * (radial - tangential),
        s * s * radial + co * co * tangential,
    );
    ObservationCovariance { q }
}

/// Draw one perturbed world point per observation, each from a Gaussian
/// centered at the observation's world point with its sensor covariance.
/// Sampling happens in the beam-aligned frame (radial and tangential
/// standard normals scaled by the respective deviations), which realizes
/// that covariance exactly.
pub fn resample_inliers(
    inliers: &[Observation],
    sensor: &SensorModel,
    seed: u64,
) -> Vec<Point2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inliers
        .iter()
        .map(|c| {
            let beam = c.pose.theta + c.bearing;
            let (s, co) = beam.sin_cos();
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            let radial = sensor.sigma_rho * u;
            let tangential = c.range * sensor.sigma_alpha * v;
            let offset = Vector2::new(co * radial - s * tangential, s * radial + co * tangential);
            c.world_point() + offset
        })
        .collect()
}

/// Estimate the endpoint covariances of a fitted line by `k` rounds of
/// resample-and-refit. Rounds run in parallel with per-round child seeds
/// and are reduced in round order, so the result is deterministic for a
/// fixed seed. A round whose fit fails is retried once with a fresh
/// perturbation and then skipped; fewer than two surviving rounds is an
/// error. The returned matrices are the sample covariances of the refit
/// endpoints, matched to p1/p2 by the canonical endpoint ordering.
pub fn estimate_endpoint_covariance(
    line: &LineFeature,
    inliers: &[Observation],
    k: u32,
    sensor: &SensorModel,
    motion_tol: f64,
    seed: u64,
) -> Result<(Matrix2<f64>, Matrix2<f64>), UncertaintyError> {
    if k < 2 {
        return Err(UncertaintyError::TooFewRounds { got: k });
    }
    if inliers.len() < 2 {
        return Err(UncertaintyError::TooFewInliers {
            got: inliers.len(),
        });
    }

    let rounds: Vec<Option<(Point2<f64>, Point2<f64>)>> = (0..k)
        .into_par_iter()
        .map(|round| {
            let round_seed = child_seed(seed, round as u64);
            for attempt_seed in [round_seed, child_seed(round_seed, 1)] {
                let points = resample_inliers(inliers, sensor, attempt_seed);
                if let Ok((a, b)) = fit_segment(&points, line.p1, line.p2, motion_tol) {
                    // Keep the refit endpoints matched to the input line's
                    // endpoints; the fit's own ordering can flip between
                    // rounds for near-vertical segments.
                    return Some(match_endpoints(a, b, line.p1, line.p2));
                }
            }
            None
        })
        .collect();

    let samples: Vec<&(Point2<f64>, Point2<f64>)> = rounds.iter().flatten().collect();
    let n = samples.len();
    if n < 2 {
        return Err(UncertaintyError::TooFewSuccesses {
            succeeded: n,
            attempted: k,
        });
    }

    let inv_n = 1.0 / n as f64;
    let mut mean1 = Vector2::zeros();
    let mut mean2 = Vector2::zeros();
    for (a, b) in samples.iter() {
        mean1 += a.coords * inv_n;
        mean2 += b.coords * inv_n;
    }
    let mut q1 = Matrix2::zeros();
    let mut q2 = Matrix2::zeros();
    for (a, b) in samples.iter() {
        let d1 = a.coords - mean1;
        let d2 = b.coords - mean2;
        q1 += d1 * d1.transpose();
        q2 += d2 * d2.transpose();
    }
    let denom = (n - 1) as f64;
    Ok((q1 / denom, q2 / denom))
}
