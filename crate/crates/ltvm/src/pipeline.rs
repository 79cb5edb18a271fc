//! Per-deployment orchestration: grid fusion, scan filtering, line
//! extraction with endpoint uncertainty, and map integration.
//!
//! Each stage is exposed on its own so callers can checkpoint the
//! intermediate products to files; [`run_deployments`] chains them fully in
//! memory. Both paths produce bit-identical results because every
//! intermediate type round-trips its on-disk format losslessly (the
//! long-term grid is quantized to f32 precision right where the file format
//! would quantize it).

use crate::config::{child_seed, format_f64, streams, Config, SensorModel};
use crate::extract::{extract_lines_detailed, LineFeature};
use crate::geometry::CompositeScan;
use crate::mapupdate::{update_map_with_stats, UpdateStats, VectorMap};
use crate::sdf::{build_st_sdf, filter_scan, update_lt_sdf, SdfGrid};
use crate::uncertainty::estimate_endpoint_covariance;
use std::fmt::Write as _;
use thiserror::Error;

/// An error from one pipeline stage, tagged with the deployment and stage
/// it happened in.
#[derive(Debug, Error)]
#[error("deployment {deployment}, stage {stage}: {source}")]
pub struct PipelineError {
    pub deployment: u32,
    pub stage: &'static str,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    fn new(
        deployment: u32,
        stage: &'static str,
        source: impl std::error::Error + Send + Sync + 'static,
    ) -> Self {
        PipelineError {
            deployment,
            stage,
            source: Box::new(source),
        }
    }
}

/// Grid work for one deployment: the updated long-term grid and the scan
/// restricted to observations of long-term structure.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub lt: SdfGrid,
    pub filtered: CompositeScan,
    pub total_observations: usize,
}

/// Fuse one scan into the long-term grid and filter the scan against the
/// result. `lt_prev` is the grid after the previous deployment; pass `None`
/// (or an empty grid) on the first one.
pub fn filter_deployment(
    scan: &CompositeScan,
    lt_prev: Option<&SdfGrid>,
    config: &Config,
    sensor: &SensorModel,
) -> Result<FilterOutcome, PipelineError> {
    let d = scan.deployment_id;
    let st = build_st_sdf(scan, config, sensor).map_err(|e| PipelineError::new(d, "st-grid", e))?;
    let st = st
        .normalize_weights(config.t1_df)
        .map_err(|e| PipelineError::new(d, "normalize", e))?;
    let empty = SdfGrid::empty();
    let mut lt = update_lt_sdf(lt_prev.unwrap_or(&empty), &st)
        .map_err(|e| PipelineError::new(d, "lt-update", e))?;
    // Pin the grid to file precision so in-memory and checkpointed runs
    // agree bit for bit.
    lt.quantize_f32();
    let filtered =
        filter_scan(scan, &lt, config).map_err(|e| PipelineError::new(d, "filter", e))?;
    Ok(FilterOutcome {
        lt,
        filtered,
        total_observations: scan.observations.len(),
    })
}

/// Extraction plus endpoint-uncertainty estimation for one deployment.
#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    /// Lines with Monte Carlo endpoint covariances filled in.
    pub lines: Vec<LineFeature>,
    /// Observations claimed by some line during extraction.
    pub claimed_observations: usize,
    /// Lines dropped because their endpoint covariance could not be
    /// estimated.
    pub skipped_lines: usize,
}

/// Extract lines from a filtered scan and attach Monte Carlo endpoint
/// covariances. Lines whose covariance estimation fails (degenerate
/// support) are dropped and counted rather than failing the deployment.
pub fn extract_deployment(
    filtered: &CompositeScan,
    config: &Config,
    sensor: &SensorModel,
) -> Result<ExtractionOutcome, PipelineError> {
    let d = filtered.deployment_id;
    let extraction = extract_lines_detailed(filtered, config);
    let claimed_observations = filtered.observations.len() - extraction.unclaimed.len();
    let mc_deployment = child_seed(
        child_seed(config.rng_seed, streams::MONTE_CARLO),
        d as u64,
    );
    let mut lines = Vec::with_capacity(extraction.lines.len());
    let mut skipped_lines = 0usize;
    for (index, extracted) in extraction.lines.into_iter().enumerate() {
        let inliers: Vec<_> = extracted
            .inliers
            .iter()
            .map(|&i| filtered.observations[i])
            .collect();
        let seed = child_seed(mc_deployment, index as u64);
        match estimate_endpoint_covariance(
            &extracted.feature,
            &inliers,
            config.mc_samples_k,
            sensor,
            config.t_c,
            seed,
        ) {
            Ok((q1, q2)) => {
                let mut feature = extracted.feature;
                feature.q1 = q1;
                feature.q2 = q2;
                lines.push(feature);
            }
            Err(_) => skipped_lines += 1,
        }
    }
    Ok(ExtractionOutcome {
        lines,
        claimed_observations,
        skipped_lines,
    })
}

/// Prune the map against the long-term grid and integrate one deployment's
/// lines. `deployment` is the deployment being integrated and seeds the
/// prune resampling.
pub fn update_deployment(
    lines: &[LineFeature],
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
    deployment: u32,
) -> Result<(VectorMap, UpdateStats), PipelineError> {
    let seed = child_seed(
        child_seed(config.rng_seed, streams::PRUNE),
        deployment as u64,
    );
    update_map_with_stats(lines, map, lt, config, sensor, seed)
        .map_err(|e| PipelineError::new(deployment, "map-update", e))
}

/// Everything the metrics report records about one deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentMetrics {
    pub deployment: u32,
    pub observations: usize,
    pub long_term_observations: usize,
    pub extracted_lines: usize,
    pub skipped_lines: usize,
    pub claimed_observations: usize,
    pub update: UpdateStats,
    pub map_lines: usize,
    pub map_mass: f64,
}

/// Render metrics as stable `key value` blocks, one per deployment,
/// separated by blank lines.
pub fn format_metrics(metrics: &[DeploymentMetrics]) -> String {
    let mut out = String::new();
    for (i, m) in metrics.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "deployment {}", m.deployment);
        let _ = writeln!(out, "observations {}", m.observations);
        let _ = writeln!(out, "long_term_observations {}", m.long_term_observations);
        let _ = writeln!(out, "extracted_lines {}", m.extracted_lines);
        let _ = writeln!(out, "skipped_lines {}", m.skipped_lines);
        let _ = writeln!(out, "claimed_observations {}", m.claimed_observations);
        let _ = writeln!(out, "lines_kept {}", m.update.lines_kept);
        let _ = writeln!(out, "lines_deleted {}", m.update.lines_deleted);
        let _ = writeln!(out, "lines_split {}", m.update.lines_split);
        let _ = writeln!(out, "merges_into_existing {}", m.update.merges_into_existing);
        let _ = writeln!(out, "lines_inserted {}", m.update.lines_inserted);
        let _ = writeln!(out, "fixpoint_merges {}", m.update.fixpoint_merges);
        let _ = writeln!(out, "map_lines {}", m.map_lines);
        let _ = writeln!(out, "map_mass {}", format_f64(m.map_mass));
    }
    out
}

/// The full in-memory product of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub map: VectorMap,
    pub lt: SdfGrid,
    pub metrics: Vec<DeploymentMetrics>,
}

/// Run the whole pipeline over a deployment sequence in memory.
pub fn run_deployments(
    scans: &[CompositeScan],
    config: &Config,
    sensor: &SensorModel,
) -> Result<RunOutcome, PipelineError> {
    let mut map = VectorMap::new(config.clone());
    let mut lt = SdfGrid::empty();
    let mut metrics = Vec::with_capacity(scans.len());
    for scan in scans {
        let step = step_deployment(scan, &map, &lt, config, sensor)?;
        map = step.map;
        lt = step.filter.lt;
        metrics.push(step.metrics);
    }
    Ok(RunOutcome { map, lt, metrics })
}

/// One deployment of [`run_deployments`], keeping every intermediate
/// product so callers can checkpoint them.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub filter: FilterOutcome,
    pub lines: Vec<LineFeature>,
    pub map: VectorMap,
    pub metrics: DeploymentMetrics,
}

/// Advance the map and grid by one deployment.
pub fn step_deployment(
    scan: &CompositeScan,
    map: &VectorMap,
    lt: &SdfGrid,
    config: &Config,
    sensor: &SensorModel,
) -> Result<StepOutcome, PipelineError> {
    let lt_prev = if lt.is_empty() { None } else { Some(lt) };
    let filter = filter_deployment(scan, lt_prev, config, sensor)?;
    let extraction = extract_deployment(&filter.filtered, config, sensor)?;
    let (map, stats) = update_deployment(
        &extraction.lines,
        map,
        &filter.lt,
        config,
        sensor,
        scan.deployment_id,
    )?;
    let metrics = DeploymentMetrics {
        deployment: scan.deployment_id,
        observations: filter.total_observations,
        long_term_observations: filter.filtered.observations.len(),
        extracted_lines: extraction.lines.len(),
        skipped_lines: extraction.skipped_lines,
        claimed_observations: extraction.claimed_observations,
        update: stats,
        map_lines: map.lines.len(),
        map_mass: map.total_mass(),
    };
    Ok(StepOutcome {
        filter,
        lines: extraction.lines,
        map,
        metrics,
    })
}
