//! End-to-end acceptance scorecard for the mapping pipeline.
//!
//! Each test prints exactly one `criterion N ...: PASS/FAIL — details` line
//! (run with `cargo test --test acceptance -- --show-output` to see the lines
//! for passing tests) and then asserts, so the suite doubles as a
//! human-readable scorecard. Every tolerance is pinned as a named constant.
//!
//! Expensive scenario runs are shared between criteria through `OnceLock`s:
//! the doorway run backs criteria 1 and 5, and the L-shaped-room run backs
//! criteria 3, 4, and 6.

use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{Point2, Vector2};

use ltvm::config::{Config, SensorModel};
use ltvm::extract::{
    extract_lines_detailed, fit_segment, point_segment_distance, segment_cost, LineFeature,
};
use ltvm::geometry::{CompositeScan, Observation, Pose};
use ltvm::mapupdate::{merge_lines, update_map, VectorMap};
use ltvm::persistence;
use ltvm::pipeline::{
    extract_deployment, filter_deployment, run_deployments, step_deployment, RunOutcome,
};
use ltvm::scangen::{
    parse_scenario_text, realize_deployment, simulate_scan, EnvironmentSpec, FeatureClass,
    LabeledScan, Scenario, StfSpec, Wall,
};
use ltvm::sdf::{build_st_sdf, filter_scan, SdfGrid};
use ltvm::uncertainty::{estimate_endpoint_covariance, sensor_covariance};

// ---------------------------------------------------------------------------
// Pinned tolerances.
// ---------------------------------------------------------------------------

/// Door-incursion allowance: twice the grid resolution of the default
/// configuration (2 * 0.05 m).
const DOOR_INCURSION_TOL: f64 = 0.10;
/// A wall fragment must sit within this distance of a flank probe point for
/// the flank to count as mapped (same 2q allowance as above).
const FLANK_PRESENCE_TOL: f64 = 0.10;
/// Wall-clock budget for the mapping pipeline on the heavy scenarios.
const RUNTIME_BUDGET: Duration = Duration::from_secs(60);
/// Mean absolute pairwise-separation disagreement versus ground truth.
const SEPARATION_TOL: f64 = 0.025;
/// Mean squared perpendicular residual of static-surface observations.
const STATIC_MSE_TOL: f64 = 3.0e-4;
/// Final-map segment budget for the room-scale scenario.
const MAP_SEGMENT_BUDGET: usize = 40;
/// Final-map file-size budget in bytes.
const MAP_FILE_BUDGET: u64 = 16 * 1024;
/// Allowed drift of the separation metric between deployments 2 and 12.
const STABILITY_TOL: f64 = 0.010;

// ---------------------------------------------------------------------------
// Shared fixtures.
// ---------------------------------------------------------------------------

fn sensor() -> SensorModel {
    SensorModel {
        sigma_rho: 0.01,
        sigma_alpha: 0.001,
        epsilon: 0.02,
        sigma_w: 150.0,
        max_range: 30.0,
    }
}

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {name}: {verdict} — {detail}");
    assert!(pass, "criterion {name} failed — {detail}");
}

fn p(x: f64, y: f64) -> Point2<f64> {
    Point2::new(x, y)
}

/// Simulate `deployments` scans of `scenario` with the standard sensor.
fn simulate_run(scenario: &Scenario, deployments: u32) -> Vec<LabeledScan> {
    let sensor = sensor();
    (0..deployments)
        .map(|d| {
            let scene = realize_deployment(&scenario.env, d).expect("scene realization");
            simulate_scan(&scene, &scenario.path, &sensor, scenario.rays_per_pose)
                .expect("scan simulation")
        })
        .collect()
}

fn scans_of(labeled: &[LabeledScan]) -> Vec<CompositeScan> {
    labeled.iter().map(|l| l.scan.clone()).collect()
}

// ---------------------------------------------------------------------------
// Small geometry helpers for the checks.
// ---------------------------------------------------------------------------

/// Distance from `pt` to the infinite line through `a` and `b`.
fn line_distance(pt: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let d = b - a;
    let n = Vector2::new(-d.y, d.x).normalize();
    (pt - a).dot(&n).abs()
}

/// Length of the part of segment `e0`-`e1` inside the axis-aligned box of the
/// wall frame of `a`-`b`: along-wall coordinate in `[s0, s1]`, perpendicular
/// offset in `[-band, band]`. Standard parametric clipping.
fn length_inside_wall_box(
    e0: Point2<f64>,
    e1: Point2<f64>,
    a: Point2<f64>,
    b: Point2<f64>,
    s0: f64,
    s1: f64,
    band: f64,
) -> f64 {
    let u = (b - a).normalize();
    let n = Vector2::new(-u.y, u.x);
    let to_frame = |pt: Point2<f64>| {
        let r = pt - a;
        (r.dot(&u), r.dot(&n))
    };
    let (sa, va) = to_frame(e0);
    let (sb, vb) = to_frame(e1);
    let (ds, dv) = (sb - sa, vb - va);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    // Clip t against p + t*d >= lo and <= hi for both frame axes.
    for (pos, delta, lo, hi) in [(sa, ds, s0, s1), (va, dv, -band, band)] {
        if delta.abs() < 1e-15 {
            if pos < lo || pos > hi {
                return 0.0;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - pos) / delta, (hi - pos) / delta);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 >= t1 {
            return 0.0;
        }
    }
    (e1 - e0).norm() * (t1 - t0)
}

/// Index of the map segment that best matches the ground-truth wall `a`-`b`:
/// nearly parallel, close to the wall's line, with the longest overlap when
/// projected onto the wall. `None` when nothing qualifies.
fn match_wall(map: &VectorMap, a: Point2<f64>, b: Point2<f64>) -> Option<usize> {
    const ANGLE_TOL: f64 = 10.0 * std::f64::consts::PI / 180.0;
    const LATERAL_TOL: f64 = 0.3;
    const MIN_OVERLAP: f64 = 0.3;
    let u = (b - a).normalize();
    let len = (b - a).norm();
    let mut best: Option<(usize, f64)> = None;
    for (i, line) in map.lines.iter().enumerate() {
        let v = line.direction();
        let angle = u.dot(&v).abs().clamp(-1.0, 1.0).acos();
        if angle > ANGLE_TOL {
            continue;
        }
        if line_distance(line.p1, a, b).max(line_distance(line.p2, a, b)) > LATERAL_TOL {
            continue;
        }
        let s1 = (line.p1 - a).dot(&u);
        let s2 = (line.p2 - a).dot(&u);
        let overlap = s1.max(s2).min(len) - s1.min(s2).max(0.0);
        if overlap < MIN_OVERLAP {
            continue;
        }
        if best.map_or(true, |(_, o)| overlap > o) {
            best = Some((i, overlap));
        }
    }
    best.map(|(i, _)| i)
}

/// Pairwise-separation disagreement between the map and the ground-truth
/// walls, evaluated at fixed points: for every ordered wall pair (i, j) the
/// distance from wall i's midpoint to wall j's line is compared between
/// ground truth and the matched map lines. Returns (mean, max, pair count),
/// or an error naming the first unmatched wall.
fn separation_metric(
    map: &VectorMap,
    walls: &[(Point2<f64>, Point2<f64>)],
) -> Result<(f64, f64, usize), String> {
    let matched: Vec<&LineFeature> = walls
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            match_wall(map, a, b)
                .map(|i| &map.lines[i])
                .ok_or_else(|| format!("wall {k} ({a:?} -> {b:?}) has no map match"))
        })
        .collect::<Result<_, _>>()?;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut pairs = 0usize;
    for (i, &(a_i, b_i)) in walls.iter().enumerate() {
        let mid = nalgebra::center(&a_i, &b_i);
        for (j, &(a_j, b_j)) in walls.iter().enumerate() {
            if i == j {
                continue;
            }
            let d_truth = line_distance(mid, a_j, b_j);
            let d_map = line_distance(mid, matched[j].p1, matched[j].p2);
            let err = (d_map - d_truth).abs();
            sum += err;
            max = max.max(err);
            pairs += 1;
        }
    }
    Ok((sum / pairs as f64, max, pairs))
}

// ---------------------------------------------------------------------------
// Doorway scenario: two rooms, four doors, shared by criteria 1 and 5.
// ---------------------------------------------------------------------------

/// Two 6 x 6 m rooms inside a 12 x 6 m shell, divided at x = 6. Four 0.9 m
/// doors: two in the south wall, one in the north wall, one in the divider.
/// Six poses per room, all at least 1 m from every wall.
const DOORWAY_SCENARIO: &str = "\
rays 9000
wall 0 0 12 0     # south; doors at x in [1.8, 2.7] and [7.8, 8.7]
wall 12 0 12 6    # east
wall 0 6 12 6     # north; door at x in [3.6, 4.5]
wall 0 0 0 6      # west
wall 6 0 6 6      # divider; door at y in [2.4, 3.3]
door 0 0.15 0.225 0.45
door 0 0.65 0.725 0.45
door 2 0.30 0.375 0.45
door 4 0.40 0.55 0.45
path 1.5 1.5 0.5
path 3.0 3.0 -1.2
path 4.5 4.5 2.4
path 1.5 4.5 -0.6
path 4.5 1.5 1.8
path 2.5 2.2 3.0
path 7.5 1.5 0.9
path 9.0 3.0 -2.0
path 10.5 4.5 0.2
path 7.5 4.5 -1.5
path 10.5 1.5 2.7
path 9.5 2.2 -0.3
";

const DOORWAY_DEPLOYMENTS: u32 = 12;

/// Door rectangles as (wall a, wall b, along-wall start, along-wall end).
fn doorway_door_spans(env: &EnvironmentSpec) -> Vec<(Point2<f64>, Point2<f64>, f64, f64)> {
    let mut spans = Vec::new();
    for wall in &env.walls {
        let len = (wall.b - wall.a).norm();
        for door in &wall.doors {
            spans.push((wall.a, wall.b, door.t0 * len, door.t1 * len));
        }
    }
    spans
}

/// Pick the smallest environment seed under which every door is both open in
/// at least `min_open` and closed in at least `min_open` of the deployments.
fn find_door_seed(env: &EnvironmentSpec, deployments: u32, min_open: u32) -> (u64, Vec<u32>) {
    let door_count: usize = env.walls.iter().map(|w| w.doors.len()).sum();
    let mut env = env.clone();
    for seed in 0..10_000u64 {
        env.seed = seed;
        let mut opens = vec![0u32; door_count];
        for d in 0..deployments {
            let scene = realize_deployment(&env, d).expect("scene realization");
            let mut k = 0;
            for wall_doors in &scene.open_doors {
                for &open in wall_doors {
                    if open {
                        opens[k] += 1;
                    }
                    k += 1;
                }
            }
        }
        if opens
            .iter()
            .all(|&o| o >= min_open && deployments - o >= min_open)
        {
            return (seed, opens);
        }
    }
    panic!("no door seed found in 10000 candidates");
}

struct DoorwayRun {
    scenario: Scenario,
    scans: Vec<LabeledScan>,
    outcome: RunOutcome,
    mapping_time: Duration,
    door_open_counts: Vec<u32>,
}

fn doorway_run() -> &'static DoorwayRun {
    static RUN: OnceLock<DoorwayRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut scenario = parse_scenario_text(DOORWAY_SCENARIO).expect("scenario parse");
        let (seed, door_open_counts) =
            find_door_seed(&scenario.env, DOORWAY_DEPLOYMENTS, 2);
        scenario.env.seed = seed;
        let scans = simulate_run(&scenario, DOORWAY_DEPLOYMENTS);
        let composite = scans_of(&scans);
        let config = Config::default();
        let started = Instant::now();
        let outcome = run_deployments(&composite, &config, &sensor()).expect("pipeline run");
        let mapping_time = started.elapsed();
        DoorwayRun {
            scenario,
            scans,
            outcome,
            mapping_time,
            door_open_counts,
        }
    })
}

#[test]
fn criterion_1_doorway_detection() {
    let run = doorway_run();

    // Scenario preconditions: every door open in >= 2 of 12 deployments and
    // at least 1e5 observations per deployment.
    for (k, &opens) in run.door_open_counts.iter().enumerate() {
        assert!(
            (2..=DOORWAY_DEPLOYMENTS - 2).contains(&opens),
            "door {k} open in {opens} of {DOORWAY_DEPLOYMENTS} deployments"
        );
    }
    let min_obs = run
        .scans
        .iter()
        .map(|s| s.scan.observations.len())
        .min()
        .unwrap();
    assert!(
        min_obs >= 100_000,
        "smallest deployment has {min_obs} observations, wanted >= 1e5"
    );

    // No final-map segment may reach deeper than 2q into any door interval.
    // The door box extends 0.25 m to both sides of the wall so detached
    // door-bridging segments are caught too, not only collinear overshoot.
    let spans = doorway_door_spans(&run.scenario.env);
    let map = &run.outcome.map;
    let mut worst_incursion = 0.0f64;
    for &(a, b, s0, s1) in &spans {
        for line in &map.lines {
            let inside = length_inside_wall_box(line.p1, line.p2, a, b, s0, s1, 0.25);
            worst_incursion = worst_incursion.max(inside);
        }
    }

    // Every door must keep its flanking wall pieces: probe the wall line
    // 0.35 m outside both door edges and require a nearby map segment.
    let mut flanks_present = 0;
    let mut flank_total = 0;
    let mut worst_flank = 0.0f64;
    for &(a, b, s0, s1) in &spans {
        let u = (b - a).normalize();
        for probe_s in [s0 - 0.35, s1 + 0.35] {
            let probe = a + u * probe_s;
            let nearest = map
                .lines
                .iter()
                .map(|l| point_segment_distance(probe, l.p1, l.p2))
                .fold(f64::INFINITY, f64::min);
            flank_total += 1;
            if nearest <= FLANK_PRESENCE_TOL {
                flanks_present += 1;
            }
            worst_flank = worst_flank.max(nearest);
        }
    }

    let within_budget = run.mapping_time < RUNTIME_BUDGET;
    let pass = worst_incursion <= DOOR_INCURSION_TOL
        && flanks_present == flank_total
        && within_budget;
    report(
        "1 doorway detection",
        pass,
        &format!(
            "4 doors, max incursion {:.3} m (tol {:.2} m), flanks {}/{} within {:.2} m \
             (worst {:.3} m), {} deployments x >= {} obs, mapping {:.1} s (budget 60 s)",
            worst_incursion,
            DOOR_INCURSION_TOL,
            flanks_present,
            flank_total,
            FLANK_PRESENCE_TOL,
            worst_flank,
            DOORWAY_DEPLOYMENTS,
            min_obs,
            run.mapping_time.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Movable-obstacle scenario: 20 boxes on a grid, criterion 2.
// ---------------------------------------------------------------------------

const BOX_DEPLOYMENTS: u32 = 10;

/// A 20 x 12 m hall with twenty 0.7 m square boxes on a 5 x 4 grid, presence
/// probabilities spanning 0.2..=0.8, re-placed with ±0.08 m jitter whenever
/// present. Poses sweep the corridors between box rows.
fn box_grid_scenario() -> Scenario {
    let wall = |ax, ay, bx, by| Wall {
        a: p(ax, ay),
        b: p(bx, by),
        doors: Vec::new(),
    };
    let walls = vec![
        wall(0.0, 0.0, 20.0, 0.0),
        wall(20.0, 0.0, 20.0, 12.0),
        wall(20.0, 12.0, 0.0, 12.0),
        wall(0.0, 12.0, 0.0, 0.0),
    ];
    let mut stfs = Vec::new();
    for k in 0..20usize {
        let (i, j) = (k % 5, k / 5);
        let (cx, cy) = (2.8 + 3.6 * i as f64, 2.4 + 2.4 * j as f64);
        let h = 0.35;
        stfs.push(StfSpec {
            polygon: vec![
                p(cx - h, cy - h),
                p(cx + h, cy - h),
                p(cx + h, cy + h),
                p(cx - h, cy + h),
            ],
            presence_probability: 0.2 + 0.6 * k as f64 / 19.0,
            jitter: 0.08,
        });
    }
    let path = [
        (4.6, 3.6, 0.5),
        (8.2, 3.6, -1.1),
        (11.8, 3.6, 2.2),
        (15.4, 3.6, -0.3),
        (15.4, 6.0, 1.7),
        (11.8, 6.0, -2.5),
        (8.2, 6.0, 0.8),
        (4.6, 6.0, 2.9),
        (4.6, 8.4, -1.9),
        (8.2, 8.4, 1.3),
        (11.8, 8.4, -0.6),
        (15.4, 8.4, 2.0),
    ]
    .into_iter()
    .map(|(x, y, t)| Pose::new(x, y, t))
    .collect();
    Scenario {
        env: EnvironmentSpec {
            walls,
            stfs,
            dfs: Vec::new(),
            seed: 0,
        },
        path,
        rays_per_pose: 2500,
    }
}

/// Pick the smallest seed under which every box is present in at least one
/// and absent in at least one of the deployments.
fn find_box_seed(env: &EnvironmentSpec, deployments: u32) -> (u64, Vec<u32>) {
    let mut env = env.clone();
    for seed in 0..10_000u64 {
        env.seed = seed;
        let mut present = vec![0u32; env.stfs.len()];
        for d in 0..deployments {
            let scene = realize_deployment(&env, d).expect("scene realization");
            for (index, _) in &scene.stf_polygons {
                present[*index] += 1;
            }
        }
        if present.iter().all(|&c| c >= 1 && c < deployments) {
            return (seed, present);
        }
    }
    panic!("no box seed found in 10000 candidates");
}

#[test]
fn criterion_2_movable_obstacle_rejection() {
    let mut scenario = box_grid_scenario();
    let (seed, present_counts) = find_box_seed(&scenario.env, BOX_DEPLOYMENTS);
    scenario.env.seed = seed;
    for (k, &c) in present_counts.iter().enumerate() {
        assert!(
            c >= 1 && c < BOX_DEPLOYMENTS,
            "box {k} present in {c} of {BOX_DEPLOYMENTS} deployments"
        );
    }

    let scans = simulate_run(&scenario, BOX_DEPLOYMENTS);
    let composite = scans_of(&scans);
    let config = Config::default();
    let started = Instant::now();
    let outcome = run_deployments(&composite, &config, &sensor()).expect("pipeline run");
    let mapping_time = started.elapsed();
    let map = &outcome.map;

    // Sanity: the four hall walls must be mapped, otherwise the obstacle
    // check below would pass vacuously on an empty map.
    let walls_matched = scenario
        .env
        .walls
        .iter()
        .filter(|w| match_wall(map, w.a, w.b).is_some())
        .count();

    // No final-map segment may come within t_r of any realized box edge
    // (skipping edge points that sit within t_r of a wall, where a map
    // segment legitimately belongs — none do on this layout).
    let t_r = config.t_r;
    let mut min_clearance = f64::INFINITY;
    let mut samples = 0usize;
    for scan in &scans {
        for (_, polygon) in &scan.truth.stf_polygons {
            for e in 0..polygon.len() {
                let (a, b) = (polygon[e], polygon[(e + 1) % polygon.len()]);
                let len = (b - a).norm();
                let steps = (len / 0.05).ceil() as usize;
                for s in 0..=steps {
                    let pt = a + (b - a) * (s as f64 / steps as f64);
                    let wall_dist = scenario
                        .env
                        .walls
                        .iter()
                        .map(|w| point_segment_distance(pt, w.a, w.b))
                        .fold(f64::INFINITY, f64::min);
                    if wall_dist <= t_r {
                        continue;
                    }
                    samples += 1;
                    let map_dist = map
                        .lines
                        .iter()
                        .map(|l| point_segment_distance(pt, l.p1, l.p2))
                        .fold(f64::INFINITY, f64::min);
                    min_clearance = min_clearance.min(map_dist);
                }
            }
        }
    }

    let within_budget = mapping_time < RUNTIME_BUDGET;
    let pass = min_clearance > t_r && walls_matched == 4 && within_budget && samples > 0;
    report(
        "2 movable-obstacle rejection",
        pass,
        &format!(
            "min map clearance to {} realized box-edge points {:.2} m (must exceed t_r {:.2} m), \
             {}/4 walls mapped, {} segments, mapping {:.1} s (budget 60 s)",
            samples,
            min_clearance,
            t_r,
            walls_matched,
            map.lines.len(),
            mapping_time.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// L-shaped room: six walls, shared by criteria 3, 4, and 6.
// ---------------------------------------------------------------------------

/// Static six-wall L-shaped room, 1 cm range noise, no movable content.
const LROOM_SCENARIO: &str = "\
seed 31
rays 2000
wall 0 0 8 0
wall 8 0 8 5
wall 8 5 5 5
wall 5 5 5 7
wall 5 7 0 7
wall 0 7 0 0
path 1.5 1.5 0.3
path 4.0 1.2 1.7
path 6.5 1.5 -0.9
path 6.8 3.5 2.5
path 4.0 3.8 -2.2
path 1.5 3.5 1.1
path 1.3 5.2 0.0
path 3.5 5.8 -1.4
path 2.0 6.0 2.9
path 3.8 5.2 0.6
";

const LROOM_DEPLOYMENTS: u32 = 12;

struct LRoomRun {
    scans: Vec<LabeledScan>,
    /// Map state after each deployment (index d = after deployment d + 1).
    maps: Vec<VectorMap>,
    walls: Vec<(Point2<f64>, Point2<f64>)>,
}

fn lroom_run() -> &'static LRoomRun {
    static RUN: OnceLock<LRoomRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let scenario = parse_scenario_text(LROOM_SCENARIO).expect("scenario parse");
        let scans = simulate_run(&scenario, LROOM_DEPLOYMENTS);
        let config = Config::default();
        let sensor = sensor();
        let mut map = VectorMap::new(config.clone());
        let mut lt = SdfGrid::empty();
        let mut maps = Vec::with_capacity(scans.len());
        for labeled in &scans {
            let step =
                step_deployment(&labeled.scan, &map, &lt, &config, &sensor).expect("step");
            map = step.map;
            lt = step.filter.lt;
            maps.push(map.clone());
        }
        let walls = scenario.env.walls.iter().map(|w| (w.a, w.b)).collect();
        LRoomRun { scans, maps, walls }
    })
}

#[test]
fn criterion_3_pairwise_feature_separation() {
    let run = lroom_run();
    let final_map = run.maps.last().unwrap();
    match separation_metric(final_map, &run.walls) {
        Ok((mean, max, pairs)) => report(
            "3 pairwise feature separation",
            mean <= SEPARATION_TOL,
            &format!(
                "mean |map − truth| separation {:.4} m (tol {:.3} m), max {:.4} m \
                 over {pairs} ordered wall pairs",
                mean, SEPARATION_TOL, max
            ),
        ),
        Err(why) => report("3 pairwise feature separation", false, &why),
    }
}

#[test]
fn criterion_4_static_surface_residuals() {
    let run = lroom_run();
    let final_map = run.maps.last().unwrap();
    let last = run.scans.last().unwrap();

    // Perpendicular residual of every static-labeled observation of the
    // final deployment against the line of its nearest map segment.
    let mut sum_sq = 0.0;
    let mut matched = 0usize;
    let mut total = 0usize;
    for (obs, label) in last.scan.observations.iter().zip(&last.labels) {
        if *label != FeatureClass::Ltf {
            continue;
        }
        total += 1;
        let pt = obs.world_point();
        let nearest = final_map
            .lines
            .iter()
            .min_by(|a, b| {
                point_segment_distance(pt, a.p1, a.p2)
                    .total_cmp(&point_segment_distance(pt, b.p1, b.p2))
            })
            .expect("non-empty map");
        if point_segment_distance(pt, nearest.p1, nearest.p2) > 0.5 {
            continue;
        }
        matched += 1;
        sum_sq += line_distance(pt, nearest.p1, nearest.p2).powi(2);
    }
    let mse = sum_sq / matched as f64;
    let match_rate = matched as f64 / total as f64;
    let pass = mse <= STATIC_MSE_TOL && match_rate >= 0.95;
    report(
        "4 static-surface residual MSE",
        pass,
        &format!(
            "MSE {:.2e} m^2 (tol {:.1e} m^2) over {matched}/{total} static observations \
             ({:.1}% matched)",
            mse,
            STATIC_MSE_TOL,
            100.0 * match_rate
        ),
    );
}

#[test]
fn criterion_5_map_compactness() {
    let run = doorway_run();
    let map = &run.outcome.map;
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("final_map.txt");
    persistence::write_map(&path, map).expect("write map");
    let bytes = std::fs::metadata(&path).expect("map metadata").len();
    let pass = map.lines.len() <= MAP_SEGMENT_BUDGET && bytes < MAP_FILE_BUDGET;
    report(
        "5 map compactness",
        pass,
        &format!(
            "{} segments (budget {MAP_SEGMENT_BUDGET}), map file {} B (budget {MAP_FILE_BUDGET} B)",
            map.lines.len(),
            bytes
        ),
    );
}

#[test]
fn criterion_6_no_degradation_over_deployments() {
    let run = lroom_run();
    let early = separation_metric(&run.maps[1], &run.walls);
    let late = separation_metric(run.maps.last().unwrap(), &run.walls);
    match (early, late) {
        (Ok((mean_2, _, _)), Ok((mean_12, _, _))) => {
            let drift = (mean_12 - mean_2).abs();
            report(
                "6 no degradation over deployments",
                drift <= STABILITY_TOL,
                &format!(
                    "separation metric {:.4} m after deployment 2 vs {:.4} m after \
                     deployment {LROOM_DEPLOYMENTS}, drift {:.4} m (tol {:.3} m)",
                    mean_2, mean_12, drift, STABILITY_TOL
                ),
            );
        }
        (Err(why), _) | (_, Err(why)) => {
            report("6 no degradation over deployments", false, &why)
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: property suite. Thirteen invariants, one verdict line.
// ---------------------------------------------------------------------------

/// One-pose scan of a small closed room, the shared fixture for the grid and
/// filter properties.
const SMALL_ROOM_SCENARIO: &str = "\
seed 5
rays 600
wall 0 0 6 0
wall 6 0 6 4
wall 6 4 0 4
wall 0 4 0 0
path 2.0 1.5 0.7
path 4.0 2.5 -2.1
";

fn small_room_scans() -> &'static Vec<LabeledScan> {
    static SCANS: OnceLock<Vec<LabeledScan>> = OnceLock::new();
    SCANS.get_or_init(|| {
        let scenario = parse_scenario_text(SMALL_ROOM_SCENARIO).expect("scenario parse");
        simulate_run(&scenario, 2)
    })
}

fn check(ok: bool, why: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why)
    }
}

fn grids_close(a: &SdfGrid, b: &SdfGrid, tol: f64) -> Result<(), String> {
    check(
        a.width() == b.width() && a.height() == b.height() && a.origin() == b.origin(),
        format!(
            "grid shapes differ: {}x{} at {:?} vs {}x{} at {:?}",
            a.width(),
            a.height(),
            a.origin(),
            b.width(),
            b.height(),
            b.origin()
        ),
    )?;
    for iy in 0..a.height() {
        for ix in 0..a.width() {
            let dv = (a.value_at(ix, iy) - b.value_at(ix, iy)).abs();
            let dw = (a.weight_sum_at(ix, iy) - b.weight_sum_at(ix, iy)).abs();
            if dv > tol || dw > tol {
                return Err(format!(
                    "pixel ({ix}, {iy}) differs: value by {dv:.2e}, weight by {dw:.2e}"
                ));
            }
        }
    }
    Ok(())
}

/// Building the short-term grid must not depend on observation order.
fn prop_sdf_permutation_invariance() -> Result<(), String> {
    let scan = &small_room_scans()[0].scan;
    let mut reversed = scan.clone();
    reversed.observations.reverse();
    let a = build_st_sdf(scan, &Config::default(), &sensor()).map_err(|e| e.to_string())?;
    let b = build_st_sdf(&reversed, &Config::default(), &sensor()).map_err(|e| e.to_string())?;
    grids_close(&a, &b, 1e-6)
}

/// Grid values are truncated signed distances: |V| <= delta everywhere.
fn prop_truncation_bound() -> Result<(), String> {
    let config = Config::default();
    let scans = small_room_scans();
    let st = build_st_sdf(&scans[0].scan, &config, &sensor()).map_err(|e| e.to_string())?;
    let f0 = filter_deployment(&scans[0].scan, None, &config, &sensor())
        .map_err(|e| e.to_string())?;
    let f1 = filter_deployment(&scans[1].scan, Some(&f0.lt), &config, &sensor())
        .map_err(|e| e.to_string())?;
    // Long-term grids are pinned to file precision (f32), so the bound gets
    // one single-precision ulp of slack.
    let bound = config.delta * (1.0 + 2.0 * f32::EPSILON as f64);
    for grid in [&st, &f0.lt, &f1.lt] {
        for iy in 0..grid.height() {
            for ix in 0..grid.width() {
                let v = grid.value_at(ix, iy);
                if v.abs() > bound {
                    return Err(format!(
                        "pixel ({ix}, {iy}) holds {v}, beyond delta {}",
                        config.delta
                    ));
                }
            }
        }
    }
    Ok(())
}

fn obs_key(o: &Observation) -> [u64; 5] {
    [
        o.range.to_bits(),
        o.bearing.to_bits(),
        o.pose.x.to_bits(),
        o.pose.y.to_bits(),
        o.pose.theta.to_bits(),
    ]
}

/// Raising the persistence threshold can only shrink the filtered scan.
fn prop_filter_monotone() -> Result<(), String> {
    let config = Config::default();
    let scans = small_room_scans();
    let f0 = filter_deployment(&scans[0].scan, None, &config, &sensor())
        .map_err(|e| e.to_string())?;
    let f1 = filter_deployment(&scans[1].scan, Some(&f0.lt), &config, &sensor())
        .map_err(|e| e.to_string())?;
    let mut previous: Option<(f64, HashSet<[u64; 5]>)> = None;
    for t2 in [0.9, 0.6, 0.3] {
        let mut cfg = config.clone();
        cfg.t2_stf = t2;
        let kept = filter_scan(&scans[1].scan, &f1.lt, &cfg).map_err(|e| e.to_string())?;
        let keys: HashSet<[u64; 5]> = kept.observations.iter().map(obs_key).collect();
        if let Some((prev_t2, prev_keys)) = &previous {
            if !prev_keys.is_subset(&keys) {
                return Err(format!(
                    "scan filtered at t2 = {prev_t2} is not a subset of t2 = {t2} \
                     ({} vs {} observations)",
                    prev_keys.len(),
                    keys.len()
                ));
            }
        }
        previous = Some((t2, keys));
    }
    Ok(())
}

/// Extraction partitions the scan: claimed inlier sets are disjoint and,
/// together with the unclaimed list, cover every observation exactly once.
fn prop_extract_partition() -> Result<(), String> {
    let config = Config::default();
    let scan = &small_room_scans()[0].scan;
    let extraction = extract_lines_detailed(scan, &config);
    let mut seen = HashSet::new();
    let mut claimed = 0usize;
    for line in &extraction.lines {
        for &i in &line.inliers {
            if !seen.insert(i) {
                return Err(format!("observation {i} claimed twice"));
            }
            claimed += 1;
        }
    }
    for &i in &extraction.unclaimed {
        if !seen.insert(i) {
            return Err(format!("observation {i} both claimed and unclaimed"));
        }
    }
    check(
        seen.len() == scan.observations.len(),
        format!(
            "{} observations covered ({claimed} claimed + {} unclaimed) of {}",
            seen.len(),
            extraction.unclaimed.len(),
            scan.observations.len()
        ),
    )
}

/// On small instances the solver must beat an endpoint grid search.
fn prop_fit_beats_grid_oracle() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    for instance in 0..10 {
        let n = rng.random_range(4..=12);
        let points: Vec<Point2<f64>> = (0..n)
            .map(|_| p(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        // Initialize from the most separated pair.
        let (mut a, mut b, mut best) = (points[0], points[1], 0.0);
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = (points[i] - points[j]).norm_squared();
                if d > best {
                    best = d;
                    a = points[i];
                    b = points[j];
                }
            }
        }
        let (f1, f2) = fit_segment(&points, a, b, 1e-9).map_err(|e| e.to_string())?;
        let fitted = segment_cost(f1, f2, &points).map_err(|e| e.to_string())?;
        let (lo_x, hi_x) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                (lo.min(q.x), hi.max(q.x))
            });
        let (lo_y, hi_y) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                (lo.min(q.y), hi.max(q.y))
            });
        let steps = 8;
        let coord = |lo: f64, hi: f64, i: usize| {
            lo - 0.15 + (hi - lo + 0.3) * i as f64 / steps as f64
        };
        let mut oracle = f64::INFINITY;
        for i1 in 0..=steps {
            for j1 in 0..=steps {
                for i2 in 0..=steps {
                    for j2 in 0..=steps {
                        let g1 = p(coord(lo_x, hi_x, i1), coord(lo_y, hi_y, j1));
                        let g2 = p(coord(lo_x, hi_x, i2), coord(lo_y, hi_y, j2));
                        let c = segment_cost(g1, g2, &points).map_err(|e| e.to_string())?;
                        oracle = oracle.min(c);
                    }
                }
            }
        }
        if fitted > oracle + 1e-9 {
            return Err(format!(
                "instance {instance} (n = {n}): fitted cost {fitted:.9} exceeds \
                 grid-search cost {oracle:.9}"
            ));
        }
    }
    Ok(())
}

/// The observation covariance has trace sigma_rho^2 + rho^2 sigma_alpha^2 and
/// determinant sigma_rho^2 * rho^2 sigma_alpha^2 regardless of pose, because
/// the world-frame matrix is a rotation of the sensor-frame diagonal.
fn prop_sensor_covariance_identities() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let s = sensor();
    for _ in 0..100 {
        let rho = rng.random_range(0.5..20.0);
        let obs = Observation::new(
            rho,
            rng.random_range(-3.0..3.0),
            Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
            ),
        );
        let q = sensor_covariance(&obs, &s).q;
        let radial = s.sigma_rho * s.sigma_rho;
        let tangential = rho * rho * s.sigma_alpha * s.sigma_alpha;
        let trace = q[(0, 0)] + q[(1, 1)];
        let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
        let trace_err = (trace - (radial + tangential)).abs() / (radial + tangential);
        let det_err = (det - radial * tangential).abs() / (radial * tangential);
        if trace_err > 1e-12 || det_err > 1e-12 {
            return Err(format!(
                "rho = {rho:.3}: relative trace error {trace_err:.2e}, \
                 determinant error {det_err:.2e}"
            ));
        }
    }
    Ok(())
}

/// A clean wall viewed from one pose, as observations plus the fitted line.
fn synthetic_wall() -> (LineFeature, Vec<Observation>) {
    let pose = Pose::new(2.0, 1.5, 0.0);
    let observations: Vec<Observation> = (0..80)
        .map(|i| {
            let target = p(4.0 * i as f64 / 79.0, 0.0);
            let dx = target.x - pose.x;
            let dy = target.y - pose.y;
            Observation::new(dx.hypot(dy), dy.atan2(dx) - pose.theta, pose)
        })
        .collect();
    let points: Vec<Point2<f64>> = observations.iter().map(|o| o.world_point()).collect();
    let line = LineFeature::from_support(p(0.0, 0.0), p(4.0, 0.0), &points);
    (line, observations)
}

/// Endpoint covariance estimates are symmetric positive semi-definite and
/// identical for identical seeds.
fn prop_mc_spd_and_deterministic() -> Result<(), String> {
    let (line, observations) = synthetic_wall();
    let run = |seed| {
        estimate_endpoint_covariance(&line, &observations, 40, &sensor(), 0.05, seed)
            .map_err(|e| e.to_string())
    };
    let (a1, a2) = run(77)?;
    let (b1, b2) = run(77)?;
    check(
        a1 == b1 && a2 == b2,
        "same seed produced different covariance estimates".into(),
    )?;
    let (c1, _) = run(78)?;
    check(
        a1 != c1,
        "different seeds produced bit-identical covariance estimates".into(),
    )?;
    for (name, q) in [("q1", a1), ("q2", a2)] {
        let symmetry = (q[(0, 1)] - q[(1, 0)]).abs();
        let eigen = q.symmetric_eigen().eigenvalues;
        let min_eig = eigen[0].min(eigen[1]);
        if symmetry > 1e-15 || min_eig < -1e-15 {
            return Err(format!(
                "{name} not SPD: asymmetry {symmetry:.2e}, smallest eigenvalue {min_eig:.2e}"
            ));
        }
    }
    Ok(())
}

/// Points with a deterministic perpendicular wobble along y = 0.
fn wobbled_points(x0: f64, x1: f64, n: usize) -> Vec<Point2<f64>> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            p(x0 + (x1 - x0) * t, 0.01 * (7.0 * t).sin())
        })
        .collect()
}

/// Merging two features must reproduce the scatter of pooling their
/// supporting points directly.
fn prop_scatter_merge_oracle() -> Result<(), String> {
    let pts_a = wobbled_points(0.0, 2.0, 40);
    let pts_b = wobbled_points(2.05, 4.0, 30);
    let la = LineFeature::from_support(p(0.0, 0.0), p(2.0, 0.0), &pts_a);
    let lb = LineFeature::from_support(p(2.05, 0.0), p(4.0, 0.0), &pts_b);
    let merged = merge_lines(&la, &lb).map_err(|e| format!("merge failed: {e}"))?;
    let pooled_points: Vec<Point2<f64>> = pts_a.iter().chain(&pts_b).copied().collect();
    let pooled = LineFeature::from_support(merged.p1, merged.p2, &pooled_points);
    check(
        merged.mass == pooled.mass,
        format!("mass {} vs pooled {}", merged.mass, pooled.mass),
    )?;
    check(
        (merged.centroid - pooled.centroid).norm() < 1e-12,
        format!(
            "centroid off by {:.2e}",
            (merged.centroid - pooled.centroid).norm()
        ),
    )?;
    check(
        (merged.scatter - pooled.scatter).norm() < 1e-9,
        format!(
            "scatter off by {:.2e} (Frobenius)",
            (merged.scatter - pooled.scatter).norm()
        ),
    )
}

/// Merging is commutative in its inputs.
fn prop_merge_commutative() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for trial in 0..10 {
        let mut random_feature = |shift: f64| {
            let x0 = rng.random_range(-1.0..1.0) + shift;
            let len = rng.random_range(0.5..2.0);
            let n = rng.random_range(12..60);
            let points: Vec<Point2<f64>> = (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    p(
                        x0 + len * t,
                        rng.random_range(-0.02..0.02),
                    )
                })
                .collect();
            LineFeature::from_support(points[0], points[n - 1], &points)
        };
        let a = random_feature(0.0);
        let b = random_feature(1.0);
        match (merge_lines(&a, &b), merge_lines(&b, &a)) {
            (Ok(ab), Ok(ba)) => {
                let close = ab.mass == ba.mass
                    && (ab.centroid - ba.centroid).norm() < 1e-12
                    && (ab.scatter - ba.scatter).norm() < 1e-12
                    && (ab.p1 - ba.p1).norm() < 1e-12
                    && (ab.p2 - ba.p2).norm() < 1e-12;
                check(close, format!("trial {trial}: merge orders disagree"))?;
            }
            (Err(_), Err(_)) => {}
            _ => return Err(format!("trial {trial}: merge succeeded in one order only")),
        }
    }
    Ok(())
}

/// Re-presenting the same lines must fuse into the existing features rather
/// than grow the map.
fn prop_merge_fixpoint() -> Result<(), String> {
    let config = Config::default();
    let s = sensor();
    let scans = small_room_scans();
    let f0 = filter_deployment(&scans[0].scan, None, &config, &s).map_err(|e| e.to_string())?;
    let extraction =
        extract_deployment(&f0.filtered, &config, &s).map_err(|e| e.to_string())?;
    check(
        !extraction.lines.is_empty(),
        "extraction produced no lines".into(),
    )?;
    let empty = VectorMap::new(config.clone());
    let once = update_map(&extraction.lines, &empty, &f0.lt, &config, &s, 7)
        .map_err(|e| e.to_string())?;
    let twice = update_map(&extraction.lines, &once, &f0.lt, &config, &s, 8)
        .map_err(|e| e.to_string())?;
    check(
        twice.lines.len() == once.lines.len(),
        format!(
            "map grew from {} to {} lines on identical input",
            once.lines.len(),
            twice.lines.len()
        ),
    )
}

/// Fused features carry the exact sum of their parents' observation masses.
fn prop_mass_conservation() -> Result<(), String> {
    let pts_a = wobbled_points(0.0, 1.5, 25);
    let pts_b = wobbled_points(1.4, 3.0, 35);
    let la = LineFeature::from_support(p(0.0, 0.0), p(1.5, 0.0), &pts_a);
    let lb = LineFeature::from_support(p(1.4, 0.0), p(3.0, 0.0), &pts_b);
    let merged = merge_lines(&la, &lb).map_err(|e| format!("merge failed: {e}"))?;
    check(
        merged.mass == la.mass + lb.mass,
        format!(
            "merged mass {} != {} + {}",
            merged.mass, la.mass, lb.mass
        ),
    )
}

/// Write -> read -> write must be byte-identical for every artifact kind.
fn prop_persistence_roundtrip() -> Result<(), String> {
    let config = Config::default();
    let s = sensor();
    let scans = small_room_scans();
    let f0 = filter_deployment(&scans[0].scan, None, &config, &s).map_err(|e| e.to_string())?;
    let extraction =
        extract_deployment(&f0.filtered, &config, &s).map_err(|e| e.to_string())?;
    let map = update_map(
        &extraction.lines,
        &VectorMap::new(config.clone()),
        &f0.lt,
        &config,
        &s,
        3,
    )
    .map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let roundtrip = |name: &str,
                     write: &dyn Fn(&std::path::Path) -> Result<(), String>,
                     rewrite: &dyn Fn(&std::path::Path, &std::path::Path) -> Result<(), String>|
     -> Result<(), String> {
        let first = dir.path().join(format!("{name}.txt"));
        let second = dir.path().join(format!("{name}_again.txt"));
        write(&first)?;
        rewrite(&first, &second)?;
        let a = std::fs::read(&first).map_err(|e| e.to_string())?;
        let b = std::fs::read(&second).map_err(|e| e.to_string())?;
        check(a == b, format!("{name} round trip changed the file"))
    };

    roundtrip(
        "scan",
        &|path| {
            persistence::write_scan(path, &scans[0].scan.observations).map_err(|e| e.to_string())
        },
        &|src, dst| {
            let obs = persistence::read_scan(src).map_err(|e| e.to_string())?;
            persistence::write_scan(dst, &obs).map_err(|e| e.to_string())
        },
    )?;
    let lines: Vec<LineFeature> = extraction.lines.clone();
    roundtrip(
        "lines",
        &|path| persistence::write_lines(path, &lines).map_err(|e| e.to_string()),
        &|src, dst| {
            let l = persistence::read_lines(src).map_err(|e| e.to_string())?;
            persistence::write_lines(dst, &l).map_err(|e| e.to_string())
        },
    )?;
    roundtrip(
        "map",
        &|path| persistence::write_map(path, &map).map_err(|e| e.to_string()),
        &|src, dst| {
            let m = persistence::read_map(src).map_err(|e| e.to_string())?;
            persistence::write_map(dst, &m).map_err(|e| e.to_string())
        },
    )?;
    roundtrip(
        "grid",
        &|path| persistence::write_sdf(path, &f0.lt).map_err(|e| e.to_string()),
        &|src, dst| {
            let g = persistence::read_sdf(src).map_err(|e| e.to_string())?;
            persistence::write_sdf(dst, &g).map_err(|e| e.to_string())
        },
    )
}

/// Two full pipeline runs from the same scenario produce byte-identical
/// artifacts.
fn prop_end_to_end_reproducible() -> Result<(), String> {
    let scenario = parse_scenario_text(LROOM_SCENARIO).map_err(|e| e.to_string())?;
    let config = Config::default();
    let s = sensor();
    let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let scans = scans_of(&simulate_run(&scenario, 2));
        let outcome = run_deployments(&scans, &config, &s).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let map_path = dir.path().join("map.txt");
        let grid_path = dir.path().join("grid.txt");
        persistence::write_map(&map_path, &outcome.map).map_err(|e| e.to_string())?;
        persistence::write_sdf(&grid_path, &outcome.lt).map_err(|e| e.to_string())?;
        Ok((
            std::fs::read(&map_path).map_err(|e| e.to_string())?,
            std::fs::read(&grid_path).map_err(|e| e.to_string())?,
        ))
    };
    let (map_a, grid_a) = run()?;
    let (map_b, grid_b) = run()?;
    check(map_a == map_b, "map files differ between runs".into())?;
    check(grid_a == grid_b, "grid files differ between runs".into())
}

#[test]
fn criterion_7_property_suite() {
    let properties: [(&str, fn() -> Result<(), String>); 13] = [
        ("sdf-permutation-invariance", prop_sdf_permutation_invariance),
        ("sdf-truncation-bound", prop_truncation_bound),
        ("filter-monotone-in-t2", prop_filter_monotone),
        ("extract-partition", prop_extract_partition),
        ("fit-beats-grid-oracle", prop_fit_beats_grid_oracle),
        ("sensor-covariance-identities", prop_sensor_covariance_identities),
        ("mc-spd-deterministic", prop_mc_spd_and_deterministic),
        ("scatter-merge-oracle", prop_scatter_merge_oracle),
        ("merge-commutative", prop_merge_commutative),
        ("merge-fixpoint", prop_merge_fixpoint),
        ("mass-conservation", prop_mass_conservation),
        ("persistence-roundtrip", prop_persistence_roundtrip),
        ("end-to-end-reproducible", prop_end_to_end_reproducible),
    ];
    let mut failures = Vec::new();
    for (name, property) in properties {
        if let Err(why) = property() {
            failures.push(format!("{name}: {why}"));
        }
    }
    report(
        "7 property suite",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("{}/{} properties hold", properties.len(), properties.len())
        } else {
            format!(
                "{}/{} properties hold; failed — {}",
                properties.len() - failures.len(),
                properties.len(),
                failures.join("; ")
            )
        },
    );
}
