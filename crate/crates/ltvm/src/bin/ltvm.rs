//! Command-line front end for the long-term vector mapping pipeline.
//!
//! Exit codes: 0 success, 2 usage errors, 3 input parse/validation errors,
//! 4 pipeline or I/O failures.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ltvm::config::parse_config_text;
use ltvm::extract::LineFeature;
use ltvm::mapupdate::VectorMap;
use ltvm::persistence::{self, PersistError};
use ltvm::pipeline::{
    extract_deployment, filter_deployment, format_metrics, step_deployment, DeploymentMetrics,
};
use ltvm::render::{render_map_svg, render_sdf_image};
use ltvm::scangen::{load_scenario_file, realize_deployment, simulate_scan, ScanGenError};
use ltvm::sdf::{Field, SdfGrid};
use ltvm::{Config, SensorModel};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ltvm",
    version,
    about = "Long-term vector mapping for 2D lidar: fuse deployments of \
             range scans into a persistent line-segment map."
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Configuration file of `key value` lines (pipeline parameters plus
    /// the five sensor parameters).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: all available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Root random seed (same as --rng_seed).
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    #[command(flatten)]
    overrides: Overrides,
}

/// Individual parameter overrides, named after the configuration keys.
/// Each takes precedence over the configuration file.
#[derive(Args)]
struct Overrides {
    #[arg(long = "t1_df", global = true, value_name = "FRACTION")]
    t1_df: Option<f64>,
    #[arg(long = "t2_stf", global = true, value_name = "FRACTION")]
    t2_stf: Option<f64>,
    #[arg(long = "t_chi", global = true, value_name = "CHI2")]
    t_chi: Option<f64>,
    #[arg(long = "t_d", global = true, value_name = "METERS")]
    t_d: Option<f64>,
    #[arg(long = "t_r", global = true, value_name = "METERS")]
    t_r: Option<f64>,
    #[arg(long = "t_c", global = true, value_name = "METERS")]
    t_c: Option<f64>,
    #[arg(long = "delta", global = true, value_name = "METERS")]
    delta: Option<f64>,
    #[arg(long = "grid_resolution_q", global = true, value_name = "METERS")]
    grid_resolution_q: Option<f64>,
    #[arg(long = "mc_samples_k", global = true, value_name = "COUNT")]
    mc_samples_k: Option<u32>,
    #[arg(long = "ransac_iters", global = true, value_name = "COUNT")]
    ransac_iters: Option<u32>,
    #[arg(long = "min_inliers", global = true, value_name = "COUNT")]
    min_inliers: Option<u32>,
    #[arg(long = "rng_seed", global = true, value_name = "SEED")]
    rng_seed: Option<u64>,
    #[arg(long = "local_radius", global = true, value_name = "METERS")]
    local_radius: Option<f64>,
    #[arg(long = "sigma_rho", global = true, value_name = "METERS")]
    sigma_rho: Option<f64>,
    #[arg(long = "sigma_alpha", global = true, value_name = "RADIANS")]
    sigma_alpha: Option<f64>,
    #[arg(long = "epsilon", global = true, value_name = "METERS")]
    epsilon: Option<f64>,
    #[arg(long = "sigma_w", global = true, value_name = "WEIGHT")]
    sigma_w: Option<f64>,
    #[arg(long = "max_range", global = true, value_name = "METERS")]
    max_range: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled scans for every deployment of a scenario.
    Gen {
        /// Scenario description file.
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Number of deployments to simulate.
        #[arg(long, value_name = "N")]
        deployments: u32,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Run the full pipeline over a manifest of scan files.
    Run {
        /// Manifest listing one scan file per deployment.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Fuse one scan into the long-term grid and filter it.
    Filter {
        /// Scan file for this deployment.
        #[arg(long, value_name = "FILE")]
        scan: PathBuf,
        /// Deployment index of the scan.
        #[arg(long, value_name = "N")]
        deployment: u32,
        /// Long-term grid from the previous deployment (omit on the first).
        #[arg(long, value_name = "FILE")]
        lt_in: Option<PathBuf>,
        /// Where to write the updated long-term grid.
        #[arg(long, value_name = "FILE")]
        lt_out: PathBuf,
        /// Where to write the filtered scan.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Extract uncertain line segments from a filtered scan.
    Extract {
        /// Filtered scan file.
        #[arg(long, value_name = "FILE")]
        scan: PathBuf,
        /// Deployment index of the scan.
        #[arg(long, value_name = "N")]
        deployment: u32,
        /// Where to write the extracted lines.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Integrate extracted lines into the vector map.
    Update {
        /// Extracted lines for this deployment.
        #[arg(long, value_name = "FILE")]
        lines: PathBuf,
        /// Deployment index being integrated.
        #[arg(long, value_name = "N")]
        deployment: u32,
        /// Map from the previous deployment (omit to start fresh).
        #[arg(long, value_name = "FILE")]
        map_in: Option<PathBuf>,
        /// Long-term grid after this deployment's filter stage.
        #[arg(long, value_name = "FILE")]
        lt: PathBuf,
        /// Where to write the updated map.
        #[arg(long, value_name = "FILE")]
        map_out: PathBuf,
    },
    /// Render a map to SVG or a grid plane to PNG.
    Render {
        /// Vector map to draw as SVG.
        #[arg(long, value_name = "FILE", conflicts_with = "sdf")]
        map: Option<PathBuf>,
        /// Grid whose plane to draw as PNG.
        #[arg(long, value_name = "FILE")]
        sdf: Option<PathBuf>,
        /// Which grid plane to draw.
        #[arg(long, value_enum, default_value_t = FieldArg::Weight)]
        field: FieldArg,
        /// Output file (.svg for maps, .png for grids).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Value,
    Weight,
}

/// A failed run, carrying which exit code it deserves.
enum Failure {
    /// Bad input content: configuration, scenario, scan, map, grid parses
    /// and validation.
    Validation(String),
    /// Pipeline or I/O failure.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn persist_failure(e: PersistError) -> Failure {
    match e {
        PersistError::Io { .. } => Failure::Runtime(e.to_string()),
        _ => Failure::Validation(e.to_string()),
    }
}

fn scangen_failure(e: ScanGenError) -> Failure {
    match e {
        ScanGenError::Io(_) => Failure::Runtime(e.to_string()),
        ScanGenError::Parse { .. } | ScanGenError::Invalid(_) => {
            Failure::Validation(e.to_string())
        }
        _ => Failure::Runtime(e.to_string()),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Resolve the effective configuration: file values (or defaults), then
/// flag overrides. Without a configuration file the five sensor
/// parameters must all be given as flags.
fn effective_config(common: &CommonOpts) -> Result<(Config, SensorModel), Failure> {
    let o = &common.overrides;
    let (mut config, mut sensor) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            parse_config_text(&text)
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        }
        None => {
            let all_given = [
                o.sigma_rho,
                o.sigma_alpha,
                o.epsilon,
                o.sigma_w,
                o.max_range,
            ]
            .iter()
            .all(Option::is_some);
            if !all_given {
                return Err(Failure::Validation(
                    "no --config given: the sensor parameters --sigma_rho, \
                     --sigma_alpha, --epsilon, --sigma_w and --max_range are \
                     all required"
                        .to_string(),
                ));
            }
            (
                Config::default(),
                SensorModel {
                    sigma_rho: 0.0,
                    sigma_alpha: 0.0,
                    epsilon: 0.0,
                    sigma_w: 0.0,
                    max_range: 0.0,
                },
            )
        }
    };

    if let Some(v) = o.t1_df {
        config.t1_df = v;
    }
    if let Some(v) = o.t2_stf {
        config.t2_stf = v;
    }
    if let Some(v) = o.t_chi {
        config.t_chi = v;
    }
    if let Some(v) = o.t_d {
        config.t_d = v;
    }
    if let Some(v) = o.t_r {
        config.t_r = v;
    }
    if let Some(v) = o.t_c {
        config.t_c = v;
    }
    if let Some(v) = o.delta {
        config.delta = v;
    }
    if let Some(v) = o.grid_resolution_q {
        config.grid_resolution_q = v;
    }
    if let Some(v) = o.mc_samples_k {
        config.mc_samples_k = v;
    }
    if let Some(v) = o.ransac_iters {
        config.ransac_iters = v;
    }
    if let Some(v) = o.min_inliers {
        config.min_inliers = v;
    }
    if let Some(v) = o.rng_seed {
        config.rng_seed = v;
    }
    if let Some(v) = common.seed {
        config.rng_seed = v;
    }
    if let Some(v) = o.local_radius {
        config.local_radius = v;
    }
    if let Some(v) = o.sigma_rho {
        sensor.sigma_rho = v;
    }
    if let Some(v) = o.sigma_alpha {
        sensor.sigma_alpha = v;
    }
    if let Some(v) = o.epsilon {
        sensor.epsilon = v;
    }
    if let Some(v) = o.sigma_w {
        sensor.sigma_w = v;
    }
    if let Some(v) = o.max_range {
        sensor.max_range = v;
    }

    config
        .validate()
        .map_err(|e| Failure::Validation(e.to_string()))?;
    sensor
        .validate(config.delta)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    Ok((config, sensor))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn cmd_gen(
    scenario_path: &Path,
    deployments: u32,
    out_dir: &Path,
    sensor: &SensorModel,
) -> Result<(), Failure> {
    let scenario = load_scenario_file(scenario_path).map_err(scangen_failure)?;
    ensure_dir(out_dir)?;
    let mut manifest = Vec::with_capacity(deployments as usize);
    for d in 0..deployments {
        let scene = realize_deployment(&scenario.env, d).map_err(scangen_failure)?;
        let labeled = simulate_scan(&scene, &scenario.path, sensor, scenario.rays_per_pose)
            .map_err(scangen_failure)?;
        let scan_name = format!("scan_{d:03}.txt");
        persistence::write_scan(
            &out_dir.join(&scan_name),
            &labeled.scan.observations,
        )
        .map_err(persist_failure)?;
        persistence::write_labels(&out_dir.join(format!("labels_{d:03}.txt")), &labeled.labels)
            .map_err(persist_failure)?;
        manifest.push(PathBuf::from(scan_name));
    }
    persistence::write_manifest(&out_dir.join("run.manifest"), &manifest)
        .map_err(persist_failure)?;
    println!(
        "generated {deployments} deployments in {}",
        out_dir.display()
    );
    Ok(())
}

fn cmd_run(
    manifest: &Path,
    out_dir: &Path,
    config: &Config,
    sensor: &SensorModel,
) -> Result<(), Failure> {
    let scan_paths = persistence::read_manifest(manifest).map_err(persist_failure)?;
    if scan_paths.is_empty() {
        return Err(Failure::Validation(format!(
            "{}: manifest lists no scan files",
            manifest.display()
        )));
    }
    ensure_dir(out_dir)?;

    let mut map = VectorMap::new(config.clone());
    let mut lt = SdfGrid::empty();
    let mut metrics: Vec<DeploymentMetrics> = Vec::with_capacity(scan_paths.len());
    for (i, scan_path) in scan_paths.iter().enumerate() {
        let d = i as u32;
        let scan = persistence::read_scan_as_deployment(scan_path, d).map_err(persist_failure)?;
        let step = step_deployment(&scan, &map, &lt, config, sensor).map_err(runtime)?;
        map = step.map;
        lt = step.filter.lt;

        // Checkpoint each deployment's intermediate products; they are
        // byte-equal to what the filter/extract/update subcommands produce.
        persistence::write_sdf(&out_dir.join(format!("lt_{d:03}.sdf")), &lt)
            .map_err(persist_failure)?;
        persistence::write_scan(
            &out_dir.join(format!("filtered_{d:03}.txt")),
            &step.filter.filtered.observations,
        )
        .map_err(persist_failure)?;
        persistence::write_lines(&out_dir.join(format!("lines_{d:03}.txt")), &step.lines)
            .map_err(persist_failure)?;
        persistence::write_map(&out_dir.join(format!("map_{d:03}.txt")), &map)
            .map_err(persist_failure)?;
        metrics.push(step.metrics);
        eprintln!(
            "deployment {d}: {} lines in map after update",
            map.lines.len()
        );
    }

    persistence::write_map(&out_dir.join("map.txt"), &map).map_err(persist_failure)?;
    persistence::write_sdf(&out_dir.join("lt.sdf"), &lt).map_err(persist_failure)?;
    std::fs::write(out_dir.join("metrics.txt"), format_metrics(&metrics))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", out_dir.display())))?;
    println!(
        "mapped {} deployments: {} lines, outputs in {}",
        scan_paths.len(),
        map.lines.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_filter(
    scan_path: &Path,
    deployment: u32,
    lt_in: Option<&PathBuf>,
    lt_out: &Path,
    out: &Path,
    config: &Config,
    sensor: &SensorModel,
) -> Result<(), Failure> {
    let scan =
        persistence::read_scan_as_deployment(scan_path, deployment).map_err(persist_failure)?;
    let lt_prev = match lt_in {
        Some(p) => Some(persistence::read_sdf(p).map_err(persist_failure)?),
        None => None,
    };
    let outcome =
        filter_deployment(&scan, lt_prev.as_ref(), config, sensor).map_err(runtime)?;
    persistence::write_sdf(lt_out, &outcome.lt).map_err(persist_failure)?;
    persistence::write_scan(out, &outcome.filtered.observations).map_err(persist_failure)?;
    println!(
        "kept {} of {} observations",
        outcome.filtered.observations.len(),
        outcome.total_observations
    );
    Ok(())
}

fn cmd_extract(
    scan_path: &Path,
    deployment: u32,
    out: &Path,
    config: &Config,
    sensor: &SensorModel,
) -> Result<(), Failure> {
    let scan =
        persistence::read_scan_as_deployment(scan_path, deployment).map_err(persist_failure)?;
    let outcome = extract_deployment(&scan, config, sensor).map_err(runtime)?;
    persistence::write_lines(out, &outcome.lines).map_err(persist_failure)?;
    println!(
        "extracted {} lines ({} observations claimed, {} lines skipped)",
        outcome.lines.len(),
        outcome.claimed_observations,
        outcome.skipped_lines
    );
    Ok(())
}

fn cmd_update(
    lines_path: &Path,
    deployment: u32,
    map_in: Option<&PathBuf>,
    lt_path: &Path,
    map_out: &Path,
    config: &Config,
    sensor: &SensorModel,
) -> Result<(), Failure> {
    let lines: Vec<LineFeature> = persistence::read_lines(lines_path).map_err(persist_failure)?;
    let map = match map_in {
        Some(p) => persistence::read_map(p).map_err(persist_failure)?,
        None => VectorMap::new(config.clone()),
    };
    let lt = persistence::read_sdf(lt_path).map_err(persist_failure)?;
    let (new_map, stats) =
        ltvm::pipeline::update_deployment(&lines, &map, &lt, config, sensor, deployment)
            .map_err(runtime)?;
    persistence::write_map(map_out, &new_map).map_err(persist_failure)?;
    println!(
        "map has {} lines ({} merged, {} inserted, {} deleted)",
        new_map.lines.len(),
        stats.merges_into_existing,
        stats.lines_inserted,
        stats.lines_deleted
    );
    Ok(())
}

fn cmd_render(
    map: Option<&PathBuf>,
    sdf: Option<&PathBuf>,
    field: FieldArg,
    out: &Path,
    config: &Config,
) -> Result<(), Failure> {
    match (map, sdf) {
        (Some(map_path), None) => {
            let map = persistence::read_map(map_path).map_err(persist_failure)?;
            let svg = render_map_svg(&map);
            std::fs::write(out, svg)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        }
        (None, Some(sdf_path)) => {
            let grid = persistence::read_sdf(sdf_path).map_err(persist_failure)?;
            let plane = match field {
                FieldArg::Value => Field::Value,
                FieldArg::Weight => Field::Weight,
            };
            let img = render_sdf_image(&grid, plane, config.delta);
            img.save(out)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        }
        _ => {
            return Err(Failure::Validation(
                "render needs exactly one of --map or --sdf".to_string(),
            ));
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Validation(format!("--threads: {e}")))?;
    }
    let (config, sensor) = effective_config(&cli.common)?;
    match &cli.command {
        Command::Gen {
            scenario,
            deployments,
            out_dir,
        } => cmd_gen(scenario, *deployments, out_dir, &sensor),
        Command::Run { manifest, out_dir } => cmd_run(manifest, out_dir, &config, &sensor),
        Command::Filter {
            scan,
            deployment,
            lt_in,
            lt_out,
            out,
        } => cmd_filter(
            scan,
            *deployment,
            lt_in.as_ref(),
            lt_out,
            out,
            &config,
            &sensor,
        ),
        Command::Extract {
            scan,
            deployment,
            out,
        } => cmd_extract(scan, *deployment, out, &config, &sensor),
        Command::Update {
            lines,
            deployment,
            map_in,
            lt,
            map_out,
        } => cmd_update(
            lines,
            *deployment,
            map_in.as_ref(),
            lt,
            map_out,
            &config,
            &sensor,
        ),
        Command::Render {
            map,
            sdf,
            field,
            out,
        } => cmd_render(map.as_ref(), sdf.as_ref(), *field, out, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Clap handles --help/--version (exit 0) and usage errors (exit 2).
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
