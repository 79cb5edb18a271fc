//! Long-term vector mapping from repeated 2D laser deployments.
//!
//! The pipeline turns raw range scans into a compact line-segment map that
//! survives across deployments of a robot in the same environment:
//!
//! 1. every deployment's scans are fused into a truncated signed distance
//!    field (SDF), which is accumulated into a long-term SDF across
//!    deployments ([`sdf`]),
//! 2. observations that the long-term SDF does not confirm as persistent
//!    structure are filtered out ([`sdf::filter_scan`]),
//! 3. line segments are extracted from the surviving points by greedy local
//!    RANSAC plus nonlinear refinement ([`extract`]),
//! 4. endpoint covariances are estimated by Monte Carlo resampling of the
//!    supporting observations ([`uncertainty`]),
//! 5. the vector map is pruned against the long-term SDF and the new lines
//!    are merged into it ([`mapupdate`]).
//!
//! [`scangen`] provides a deterministic scenario simulator used by the test
//! suite and the `gen` CLI subcommand, [`persistence`] the on-disk formats,
//! [`pipeline`] the per-deployment orchestration behind the `run` subcommand,
//! and [`render`] SVG/PNG debug exports.

pub mod config;
pub mod extract;
pub mod geometry;
pub mod mapupdate;
pub mod persistence;
pub mod pipeline;
pub mod render;
pub mod scangen;
pub mod sdf;
pub mod uncertainty;

pub use config::{Config, SensorModel};
pub use extract::LineFeature;
pub use mapupdate::VectorMap;
pub use geometry::{CompositeScan, Observation, Pose};
pub use sdf::SdfGrid;
