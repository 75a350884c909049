//! Range ambiguity statistics for mechanically rotating lidar.
//!
//! A spinning lidar samples a fixed grid of raypaths once per revolution.
//! When a beam's divergence cone straddles more than one surface, the
//! reported range jitters between clusters from frame to frame. This crate
//! provides the pieces needed to measure, model, and stress-test that
//! behavior:
//!
//! - [`frames`]: range-image sequences, the RIF text format, spherical
//!   projection, and pixel neighborhoods
//! - [`ecdf`]: temporal and spatial empirical CDFs over range, stats, and
//!   Kolmogorov–Smirnov comparison
//! - [`mocomp`]: patch-based motion compensation for handheld jitter
//! - [`mixture`]: descriptive Gaussian mixture fits via CDF-threshold
//!   segmentation
//! - [`monitor`]: instantaneous multi-return detection from spatial CDFs
//! - [`beamsim`]: a conical-beam simulator with ground-truth labels, used
//!   as the verification oracle throughout
//! - [`regimpact`]: desk-scale ICP / NDT-lite experiments quantifying the
//!   registration bias induced by two-cluster raypaths

pub mod beamsim;
pub mod ecdf;
pub mod frames;
pub mod mixture;
pub mod mocomp;
pub mod monitor;
pub mod regimpact;

pub use ecdf::{spatial_cdf, temporal_cdf, CdfStats, EmpiricalCdf};
pub use frames::{
    neighborhood, parse_frames, to_point_cloud, write_frames, Calibration, FrameSequence,
    NeighborhoodSpec, RangeImage, RaypathId, Return,
};
pub use mixture::GaussianMixture;
