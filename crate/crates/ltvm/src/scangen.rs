//! Synthetic environment simulation with ground-truth labels.
//!
//! Test scenarios describe an environment as permanent walls (optionally
//! containing door intervals that are open in a random subset of
//! deployments), semi-permanent convex obstacles that appear with some
//! probability and positional jitter, and moving disk agents following
//! waypoint loops. Each deployment realizes the random elements from a
//! deployment-indexed seed and ray-casts a scan along a fixed robot path,
//! labeling every return by the class of surface it came from. The labels
//! are the ground truth that end-to-end tests measure the pipeline against.

use crate::config::{child_seed, streams};
use crate::geometry::{CompositeScan, Observation, Pose};
use crate::SensorModel;
use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanGenError {
    #[error("failed to read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(
        "could not place obstacle {stf_index} in deployment {deployment_index} \
         without overlap after 100 attempts"
    )]
    StfPlacementFailed {
        stf_index: usize,
        deployment_index: u32,
    },
    #[error("pose {index} lies outside the environment")]
    PoseOutsideEnvironment { index: usize },
}

/// Ground-truth class of the surface a return came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureClass {
    /// Permanent wall.
    Ltf,
    /// Semi-permanent surface: an obstacle, or a door in its closed state.
    Stf,
    /// Moving agent.
    Df,
}

impl FeatureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureClass::Ltf => "LTF",
            FeatureClass::Stf => "STF",
            FeatureClass::Df => "DF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LTF" => Some(FeatureClass::Ltf),
            "STF" => Some(FeatureClass::Stf),
            "DF" => Some(FeatureClass::Df),
            _ => None,
        }
    }
}

/// A door interval within a wall: parameters along the wall segment plus
/// the per-deployment probability of being open (absent).
#[derive(Debug, Clone, PartialEq)]
pub struct Door {
    pub t0: f64,
    pub t1: f64,
    pub open_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
    pub doors: Vec<Door>,
}

/// A convex polygonal obstacle present in a random subset of deployments,
/// re-placed with uniform positional jitter each time it appears.
#[derive(Debug, Clone, PartialEq)]
pub struct StfSpec {
    pub polygon: Vec<Point2<f64>>,
    pub presence_probability: f64,
    pub jitter: f64,
}

/// A moving disk agent looping along a waypoint path at constant speed,
/// with a random starting phase per deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct DfSpec {
    pub radius: f64,
    pub speed: f64,
    pub waypoints: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub walls: Vec<Wall>,
    pub stfs: Vec<StfSpec>,
    pub dfs: Vec<DfSpec>,
    pub seed: u64,
}

/// A full test scenario: the environment plus the fixed robot path along
/// which every deployment scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub env: EnvironmentSpec,
    pub path: Vec<Pose>,
    pub rays_per_pose: u32,
}

/// A moving agent with its per-deployment phase and precomputed path
/// geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedDf {
    pub radius: f64,
    pub speed: f64,
    pub waypoints: Vec<Point2<f64>>,
    /// Starting offset as a fraction of the path length.
    pub phase: f64,
    cumulative: Vec<f64>,
    total_length: f64,
}

impl RealizedDf {
    fn new(spec: &DfSpec, phase: f64) -> Self {
        let mut cumulative = vec![0.0];
        let mut total = 0.0;
        for w in spec.waypoints.windows(2) {
            total += (w[1] - w[0]).norm();
            cumulative.push(total);
        }
        RealizedDf {
            radius: spec.radius,
            speed: spec.speed,
            waypoints: spec.waypoints.clone(),
            phase,
            cumulative,
            total_length: total,
        }
    }

    /// Agent center at the given time (in pose-index units), looping along
    /// the waypoint path. A zero-length path is a stationary agent.
    pub fn position_at(&self, time: f64) -> Point2<f64> {
        if self.total_length == 0.0 {
            return self.waypoints[0];
        }
        let s = (self.phase * self.total_length + self.speed * time).rem_euclid(self.total_length);
        // Find the segment containing arc length s.
        let seg = match self
            .cumulative
            .binary_search_by(|c| c.total_cmp(&s))
        {
            Ok(i) => i.min(self.waypoints.len() - 2),
            Err(i) => i - 1,
        };
        let local = s - self.cumulative[seg];
        let d = self.waypoints[seg + 1] - self.waypoints[seg];
        let len = d.norm();
        if len == 0.0 {
            self.waypoints[seg]
        } else {
            self.waypoints[seg] + d * (local / len)
        }
    }
}

/// One deployment's concrete world: which doors are open, where the
/// present obstacles ended up, and the moving agents' phases. Carries the
/// geometry it needs, so scan simulation is self-contained.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedScene {
    pub deployment_index: u32,
    pub walls: Vec<Wall>,
    /// Parallel to `walls[i].doors`: true = open (absent) this deployment.
    pub open_doors: Vec<Vec<bool>>,
    /// Jittered polygons of the obstacles present this deployment, with
    /// their indices in the spec.
    pub stf_polygons: Vec<(usize, Vec<Point2<f64>>)>,
    pub dfs: Vec<RealizedDf>,
    /// Seed for the measurement noise of this deployment's scan.
    pub noise_seed: u64,
}

/// A simulated scan plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScan {
    pub scan: CompositeScan,
    pub labels: Vec<FeatureClass>,
    pub truth: RealizedScene,
}

impl EnvironmentSpec {
    /// Check the structural invariants of the specification.
    pub fn validate(&self) -> Result<(), ScanGenError> {
        let err = |m: String| Err(ScanGenError::Invalid(m));
        if self.walls.is_empty() {
            return err("environment has no walls".into());
        }
        for (i, w) in self.walls.iter().enumerate() {
            if (w.b - w.a).norm() == 0.0 {
                return err(format!("wall {i} has zero length"));
            }
            for (j, d) in w.doors.iter().enumerate() {
                if !(d.t0 > 0.0 && d.t0 < d.t1 && d.t1 < 1.0) {
                    return err(format!(
                        "door {j} of wall {i} must lie strictly inside the wall with t0 < t1"
                    ));
                }
                if !(0.0..=1.0).contains(&d.open_probability) {
                    return err(format!("door {j} of wall {i}: probability outside [0, 1]"));
                }
            }
        }
        for (i, s) in self.stfs.iter().enumerate() {
            if s.polygon.len() < 3 {
                return err(format!("obstacle {i} needs at least 3 vertices"));
            }
            if !is_convex(&s.polygon) {
                return err(format!("obstacle {i} polygon is not convex"));
            }
            if !(0.0..=1.0).contains(&s.presence_probability) {
                return err(format!("obstacle {i}: probability outside [0, 1]"));
            }
            if !(s.jitter >= 0.0) {
                return err(format!("obstacle {i}: jitter must be nonnegative"));
            }
        }
        for (i, d) in self.dfs.iter().enumerate() {
            if !(d.radius > 0.0) {
                return err(format!("agent {i}: radius must be positive"));
            }
            if !(d.speed >= 0.0) {
                return err(format!("agent {i}: speed must be nonnegative"));
            }
            if d.waypoints.len() < 2 {
                return err(format!("agent {i} needs at least 2 waypoints"));
            }
        }
        Ok(())
    }
}

/// Strict convexity check: all consecutive edge cross products share a sign.
fn is_convex(polygon: &[Point2<f64>]) -> bool {
    let n = polygon.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let c = polygon[(i + 2) % n];
        let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if cross == 0.0 {
            return false;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn point_in_convex_polygon(p: Point2<f64>, polygon: &[Point2<f64>]) -> bool {
    let n = polygon.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Separating-axis overlap test for two convex polygons (true when their
/// interiors intersect).
fn convex_polygons_overlap(a: &[Point2<f64>], b: &[Point2<f64>]) -> bool {
    for (first, second) in [(a, b), (b, a)] {
        let n = first.len();
        for i in 0..n {
            let edge = first[(i + 1) % n] - first[i];
            let axis = Vector2::new(-edge.y, edge.x);
            let project = |poly: &[Point2<f64>]| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in poly {
                    let v = axis.dot(&p.coords);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            };
            let (a_lo, a_hi) = project(first);
            let (b_lo, b_hi) = project(second);
            if a_hi <= b_lo || b_hi <= a_lo {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(
    a1: Point2<f64>,
    a2: Point2<f64>,
    b1: Point2<f64>,
    b2: Point2<f64>,
) -> bool {
    let d1 = a2 - a1;
    let d2 = b2 - b1;
    let denom = d1.x * d2.y - d1.y * d2.x;
    if denom == 0.0 {
        return false;
    }
    let w = b1 - a1;
    let t = (w.x * d2.y - w.y * d2.x) / denom;
    let s = (w.x * d1.y - w.y * d1.x) / denom;
    (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s)
}

fn polygon_touches_segment(polygon: &[Point2<f64>], a: Point2<f64>, b: Point2<f64>) -> bool {
    let n = polygon.len();
    for i in 0..n {
        if segments_intersect(polygon[i], polygon[(i + 1) % n], a, b) {
            return true;
        }
    }
    point_in_convex_polygon(a, polygon) || point_in_convex_polygon(b, polygon)
}

/// Sample this deployment's door states, obstacle placements, and agent
/// phases. Deterministic per (environment seed, deployment index). Jittered
/// obstacles are rejection-sampled away from walls and from one another.
pub fn realize_deployment(
    env: &EnvironmentSpec,
    deployment_index: u32,
) -> Result<RealizedScene, ScanGenError> {
    env.validate()?;
    let scene_seed = child_seed(child_seed(env.seed, streams::SCENE), deployment_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);

    let open_doors: Vec<Vec<bool>> = env
        .walls
        .iter()
        .map(|w| {
            w.doors
                .iter()
                .map(|d| rng.random_range(0.0..1.0) < d.open_probability)
                .collect()
        })
        .collect();

    let mut stf_polygons: Vec<(usize, Vec<Point2<f64>>)> = Vec::new();
    for (i, spec) in env.stfs.iter().enumerate() {
        if rng.random_range(0.0..1.0) >= spec.presence_probability {
            continue;
        }
        let mut placed = None;
        for _ in 0..100 {
            let dx = rng.random_range(-spec.jitter..=spec.jitter);
            let dy = rng.random_range(-spec.jitter..=spec.jitter);
            let offset = Vector2::new(dx, dy);
            let polygon: Vec<Point2<f64>> =
                spec.polygon.iter().map(|p| p + offset).collect();
            let hits_wall = env
                .walls
                .iter()
                .any(|w| polygon_touches_segment(&polygon, w.a, w.b));
            let hits_other = stf_polygons
                .iter()
                .any(|(_, other)| convex_polygons_overlap(&polygon, other));
            if !hits_wall && !hits_other {
                placed = Some(polygon);
                break;
            }
        }
        match placed {
            Some(polygon) => stf_polygons.push((i, polygon)),
            None => {
                return Err(ScanGenError::StfPlacementFailed {
                    stf_index: i,
                    deployment_index,
                })
            }
        }
    }

    let dfs: Vec<RealizedDf> = env
        .dfs
        .iter()
        .map(|spec| RealizedDf::new(spec, rng.random_range(0.0..1.0)))
        .collect();

    Ok(RealizedScene {
        deployment_index,
        walls: env.walls.clone(),
        open_doors,
        stf_polygons,
        dfs,
        noise_seed: child_seed(
            child_seed(env.seed, streams::SCAN_NOISE),
            deployment_index as u64,
        ),
    })
}

/// Ray-segment intersection: distance along the ray, and the parameter
/// along the segment.
fn ray_segment(
    origin: Point2<f64>,
    dir: Vector2<f64>,
    a: Point2<f64>,
    b: Point2<f64>,
) -> Option<(f64, f64)> {
    let seg = b - a;
    let denom = dir.x * seg.y - dir.y * seg.x;
    if denom == 0.0 {
        return None;
    }
    let w = a - origin;
    let r = (w.x * seg.y - w.y * seg.x) / denom;
    let s = (w.x * dir.y - w.y * dir.x) / denom;
    if r > 1e-9 && (0.0..=1.0).contains(&s) {
        Some((r, s))
    } else {
        None
    }
}

/// Nearest entry distance of a ray into a disk.
fn ray_disk(origin: Point2<f64>, dir: Vector2<f64>, center: Point2<f64>, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(&dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let r1 = -b - root;
    let r2 = -b + root;
    if r1 > 1e-9 {
        Some(r1)
    } else if r2 > 1e-9 {
        Some(r2)
    } else {
        None
    }
}

/// Cast one noiseless ray; returns the nearest hit distance and its class.
fn cast_ray(
    scene: &RealizedScene,
    origin: Point2<f64>,
    dir: Vector2<f64>,
    time: f64,
) -> Option<(f64, FeatureClass)> {
    let mut best: Option<(f64, FeatureClass)> = None;
    let mut consider = |r: f64, class: FeatureClass| {
        if best.map_or(true, |(br, _)| r < br) {
            best = Some((r, class));
        }
    };

    for (wi, wall) in scene.walls.iter().enumerate() {
        if let Some((r, s)) = ray_segment(origin, dir, wall.a, wall.b) {
            let mut in_open_door = false;
            let mut in_closed_door = false;
            for (di, door) in wall.doors.iter().enumerate() {
                if s >= door.t0 && s <= door.t1 {
                    if scene.open_doors[wi][di] {
                        in_open_door = true;
                    } else {
                        in_closed_door = true;
                    }
                }
            }
            if in_open_door {
                continue; // the ray passes through the opening
            }
            // A door surface only exists while closed: semi-permanent.
            let class = if in_closed_door {
                FeatureClass::Stf
            } else {
                FeatureClass::Ltf
            };
            consider(r, class);
        }
    }

    for (_, polygon) in &scene.stf_polygons {
        let n = polygon.len();
        for i in 0..n {
            if let Some((r, _)) = ray_segment(origin, dir, polygon[i], polygon[(i + 1) % n]) {
                consider(r, FeatureClass::Stf);
            }
        }
    }

    for df in &scene.dfs {
        if let Some(r) = ray_disk(origin, dir, df.position_at(time), df.radius) {
            consider(r, FeatureClass::Df);
        }
    }

    best
}

/// Simulate the deployment's scan: from each pose, evenly spaced beams are
/// cast at the realized scene (the pose index is the timestamp that places
/// the moving agents), the nearest surface within range returns a hit, and
/// Gaussian range/bearing noise is applied afterwards. Returns whose noisy
/// range leaves (0, max_range) are dropped, like a scanner's no-return.
pub fn simulate_scan(
    scene: &RealizedScene,
    robot_path: &[Pose],
    sensor: &SensorModel,
    rays_per_pose: u32,
) -> Result<LabeledScan, ScanGenError> {
    // Free-space check: inside the environment's extent and outside every
    // present obstacle.
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for w in &scene.walls {
        for p in [w.a, w.b] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
    }
    for (index, pose) in robot_path.iter().enumerate() {
        let p = Point2::new(pose.x, pose.y);
        let inside_extent =
            p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
        let inside_obstacle = scene
            .stf_polygons
            .iter()
            .any(|(_, poly)| point_in_convex_polygon(p, poly));
        if !inside_extent || inside_obstacle {
            return Err(ScanGenError::PoseOutsideEnvironment { index });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scene.noise_seed);
    let mut observations = Vec::new();
    let mut labels = Vec::new();
    for (pose_index, pose) in robot_path.iter().enumerate() {
        let origin = Point2::new(pose.x, pose.y);
        let time = pose_index as f64;
        for ray in 0..rays_per_pose {
            let bearing = -std::f64::consts::PI
                + (ray as f64 + 0.5) * std::f64::consts::TAU / rays_per_pose as f64;
            let angle = pose.theta + bearing;
            let dir = Vector2::new(angle.cos(), angle.sin());
            let Some((rho, class)) = cast_ray(scene, origin, dir, time) else {
                continue;
            };
            if rho >= sensor.max_range {
                continue;
            }
            let e_rho: f64 = rng.sample(StandardNormal);
            let e_alpha: f64 = rng.sample(StandardNormal);
            let noisy_rho = rho + sensor.sigma_rho * e_rho;
            let noisy_bearing = bearing + sensor.sigma_alpha * e_alpha;
            if noisy_rho <= 0.0 || noisy_rho >= sensor.max_range {
                continue;
            }
            observations.push(Observation::new(noisy_rho, noisy_bearing, *pose));
            labels.push(class);
        }
    }

    Ok(LabeledScan {
        scan: CompositeScan::new(observations, scene.deployment_index),
        labels,
        truth: scene.clone(),
    })
}

/// Parse a scenario from its text form. The format is line-based with `#`
/// comments:
///
/// ```text
/// seed 42
/// rays 360
/// wall x1 y1 x2 y2
/// door WALL_INDEX T0 T1 OPEN_PROBABILITY
/// stf PRESENCE_PROB JITTER x1 y1 x2 y2 x3 y3 [more vertices]
/// df RADIUS SPEED x1 y1 x2 y2 [more waypoints]
/// path x y theta
/// ```
///
/// `door` attaches to the most recently declared walls by index; `path`
/// lines accumulate in order.
pub fn parse_scenario_text(text: &str) -> Result<Scenario, ScanGenError> {
    let mut walls: Vec<Wall> = Vec::new();
    let mut stfs = Vec::new();
    let mut dfs = Vec::new();
    let mut path = Vec::new();
    let mut seed = 0u64;
    let mut rays_per_pose = 360u32;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        let fail = |message: String| ScanGenError::Parse {
            line: line_no,
            message,
        };
        let floats = |expected_at_least: usize| -> Result<Vec<f64>, ScanGenError> {
            if rest.len() < expected_at_least {
                return Err(fail(format!(
                    "expected at least {expected_at_least} values after '{key}', got {}",
                    rest.len()
                )));
            }
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| fail(format!("invalid number '{t}'")))
                })
                .collect()
        };
        match key {
            "seed" => {
                if rest.len() != 1 {
                    return Err(fail("expected one value after 'seed'".into()));
                }
                seed = rest[0]
                    .parse()
                    .map_err(|_| fail(format!("invalid seed '{}'", rest[0])))?;
            }
            "rays" => {
                if rest.len() != 1 {
                    return Err(fail("expected one value after 'rays'".into()));
                }
                rays_per_pose = rest[0]
                    .parse()
                    .map_err(|_| fail(format!("invalid ray count '{}'", rest[0])))?;
                if rays_per_pose == 0 {
                    return Err(fail("ray count must be positive".into()));
                }
            }
            "wall" => {
                let v = floats(4)?;
                if v.len() != 4 {
                    return Err(fail("expected 'wall x1 y1 x2 y2'".into()));
                }
                walls.push(Wall {
                    a: Point2::new(v[0], v[1]),
                    b: Point2::new(v[2], v[3]),
                    doors: Vec::new(),
                });
            }
            "door" => {
                if rest.len() != 4 {
                    return Err(fail("expected 'door wall_index t0 t1 open_prob'".into()));
                }
                let wall_index: usize = rest[0]
                    .parse()
                    .map_err(|_| fail(format!("invalid wall index '{}'", rest[0])))?;
                if wall_index >= walls.len() {
                    return Err(fail(format!(
                        "door references wall {wall_index}, but only {} walls are declared",
                        walls.len()
                    )));
                }
                let nums: Result<Vec<f64>, _> = rest[1..]
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| fail(format!("invalid number '{t}'")))
                    })
                    .collect();
                let nums = nums?;
                walls[wall_index].doors.push(Door {
                    t0: nums[0],
                    t1: nums[1],
                    open_probability: nums[2],
                });
            }
            "stf" => {
                let v = floats(8)?;
                if (v.len() - 2) % 2 != 0 {
                    return Err(fail("obstacle vertices must come in x y pairs".into()));
                }
                let polygon = v[2..]
                    .chunks(2)
                    .map(|c| Point2::new(c[0], c[1]))
                    .collect();
                stfs.push(StfSpec {
                    presence_probability: v[0],
                    jitter: v[1],
                    polygon,
                });
            }
            "df" => {
                let v = floats(6)?;
                if (v.len() - 2) % 2 != 0 {
                    return Err(fail("agent waypoints must come in x y pairs".into()));
                }
                let waypoints = v[2..]
                    .chunks(2)
                    .map(|c| Point2::new(c[0], c[1]))
                    .collect();
                dfs.push(DfSpec {
                    radius: v[0],
                    speed: v[1],
                    waypoints,
                });
            }
            "path" => {
                let v = floats(3)?;
                if v.len() != 3 {
                    return Err(fail("expected 'path x y theta'".into()));
                }
                path.push(Pose::new(v[0], v[1], v[2]));
            }
            other => {
                return Err(fail(format!("unknown directive '{other}'")));
            }
        }
    }

    if path.is_empty() {
        return Err(ScanGenError::Invalid(
            "scenario declares no robot path".into(),
        ));
    }
    let env = EnvironmentSpec {
        walls,
        stfs,
        dfs,
        seed,
    };
    env.validate()?;
    Ok(Scenario {
        env,
        path,
        rays_per_pose,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScanGenError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_text(&text)
}
