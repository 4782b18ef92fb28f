//! Voltage-island design flow for FPGA-hosted systolic arrays.
//!
//! The flow runs in stages, each backed by one module:
//!
//! * [`report_ingest`] parses synthesis timing reports into [`TimingPath`] rows and
//!   attributes each path to the MAC that captures it.
//! * [`slack_model`] reduces paths to a per-MAC minimum slack table, or synthesizes one.
//! * [`clustering`] groups MACs with similar minimum slack (hierarchical, k-means,
//!   mean-shift, DBSCAN).
//! * [`voltage_plan`] computes static per-partition bias voltages and maps clusters onto them.
//! * [`floorplan`] lays partitions out as rectangular slice-grid islands and emits constraints.
//! * [`systolic_sim`] runs a cycle-level weight-stationary array with Razor error detection.
//! * [`calibrate`] tunes partition voltages at runtime from the Razor flags.
//! * [`power_report`] compares dynamic power across voltage-island variants.

pub mod calibrate;
pub mod clustering;
pub mod floorplan;
pub mod matrix;
pub mod power_report;
pub mod report_ingest;
pub mod slack_model;
pub mod systolic_sim;
pub mod voltage_plan;

pub use clustering::{Algorithm, ClusterAssignment, ClusterParams, Dendrogram, Linkage};
pub use matrix::Matrix;
pub use report_ingest::{MacId, ReportFormat, TimingPath};
pub use slack_model::MacSlackTable;
pub use voltage_plan::{Technology, VoltagePlan, VoltageRegions};

/// Six-row synthesis timing report fragment for a 100 MHz systolic array, delimited format.
pub const TIMING_FRAGMENT: &str = include_str!("../data/timing_fragment.csv");
