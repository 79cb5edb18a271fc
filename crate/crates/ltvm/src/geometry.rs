//! Poses, range-bearing observations and composite scans.
//!
//! A composite scan is the union of all observations collected during one
//! deployment, each tagged with the pose it was taken from. Poses are assumed
//! to be globally registered; this crate does not perform scan matching.

use nalgebra::Point2;

/// A 2D robot pose (position plus heading).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, normalized to (-pi, pi].
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut a = theta.rem_euclid(tau);
    if a > std::f64::consts::PI {
        a -= tau;
    }
    a
}

/// A single range-bearing return and the pose it was observed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Measured range in meters; must be positive and at most the sensor's
    /// maximum range (enforced where the sensor model is available).
    pub range: f64,
    /// Bearing in radians relative to the robot heading.
    pub bearing: f64,
    pub pose: Pose,
}

impl Observation {
    pub fn new(range: f64, bearing: f64, pose: Pose) -> Self {
        Observation {
            range,
            bearing,
            pose,
        }
    }

    /// The observed hit point in world coordinates.
    pub fn world_point(&self) -> Point2<f64> {
        let heading = self.pose.theta + self.bearing;
        Point2::new(
            self.pose.x + self.range * heading.cos(),
            self.pose.y + self.range * heading.sin(),
        )
    }
}

/// All observations of one deployment, in acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeScan {
    pub observations: Vec<Observation>,
    pub deployment_id: u32,
}

impl CompositeScan {
    pub fn new(observations: Vec<Observation>, deployment_id: u32) -> Self {
        CompositeScan {
            observations,
            deployment_id,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}
