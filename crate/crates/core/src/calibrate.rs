//! Runtime voltage calibration driven by per-partition Razor flags.
//!
//! Each epoch replays the calibration workload once, raises every partition whose MACs
//! reported a timing error by one step and lowers every quiet partition by one step.
//! Voltages are tracked as integer step counts `C_i` from the static plan, so
//! `v_i = clamp(v0_i + C_i * v_s, v_floor, v_ceil)` holds exactly.
//!
//! A partition stops moving once it has settled: it sits at the floor without errors, at the
//! ceiling with errors, or its last three flags alternate (two-level dithering). A dithering
//! partition is parked on the upper of its two levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::slack_model::MacSlackTable;
use crate::systolic_sim::{flags_for, simulate_matmul, DelayModel, SimError, SimRunResult};
use crate::voltage_plan::{format_volts, MacVoltages, VoltagePlan};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrateError {
    #[error("invalid calibration parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Smallest physical supply increment, V.
pub const SUPPLY_STEP: f64 = 0.1;

/// One step of the runtime rule: up on a flag, down otherwise, clamped.
pub fn runtime_step(v: &[f64], flags: &[bool], v_s: f64, v_floor: f64, v_ceil: f64) -> Vec<f64> {
    v.iter()
        .zip(flags)
        .map(|(&v, &f)| {
            let next = if f { v + v_s } else { v - v_s };
            next.clamp(v_floor, v_ceil)
        })
        .collect()
}

/// Weights preloaded into the array plus the activation batches replayed every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub weights: Matrix<i8>,
    pub batches: Vec<Matrix<i8>>,
}

impl Workload {
    /// Worst-case toggling: activations alternate between all-ones and zero bit patterns and
    /// the first weight row forwards them, so every partial-sum bus below row 0 flips all
    /// 32 bits on every operation.
    pub fn max_toggle(rows: usize, cols: usize, batch_rows: usize) -> Self {
        let weights = Matrix::from_fn(rows, cols, |r, _| (r == 0) as i8);
        let a = Matrix::from_fn(batch_rows, rows, |m, _| if m % 2 == 0 { -1 } else { 0 });
        Self {
            weights,
            batches: vec![a],
        }
    }

    /// Uniform random int8 weights and activations.
    pub fn random(rows: usize, cols: usize, batch_rows: usize, batches: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Matrix::from_fn(rows, cols, |_, _| rng.random::<i8>());
        let batches = (0..batches)
            .map(|_| Matrix::from_fn(batch_rows, rows, |_, _| rng.random::<i8>()))
            .collect();
        Self { weights, batches }
    }

    /// Runs every batch and sums the error counters.
    pub fn run(
        &self,
        table: &MacSlackTable,
        voltages: &MacVoltages,
        model: &DelayModel,
    ) -> Result<SimRunResult, SimError> {
        let mut total: Option<SimRunResult> = None;
        for a in &self.batches {
            let r = simulate_matmul(a, &self.weights, table, voltages, model, false)?;
            match total.as_mut() {
                Some(t) => t.accumulate(&r),
                None => total = Some(r),
            }
        }
        total.ok_or_else(|| SimError::Dimension("workload has no batches".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub v_floor: f64,
    pub v_ceil: f64,
    /// Round the step up to a multiple of [`SUPPLY_STEP`].
    pub quantize_supply: bool,
    pub max_epochs: usize,
}

impl CalibrationConfig {
    /// Clamp range `[v_threshold + 0.05, v_nom]`, 200 epochs, unquantized step.
    pub fn for_model(model: &DelayModel) -> Self {
        Self {
            v_floor: model.v_threshold + 0.05,
            v_ceil: model.v_nom,
            quantize_supply: false,
            max_epochs: 200,
        }
    }

    pub fn effective_step(&self, v_s: f64) -> f64 {
        if self.quantize_supply {
            ((v_s / SUPPLY_STEP - 1e-9).ceil().max(1.0)) * SUPPLY_STEP
        } else {
            v_s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStatus {
    /// Still stepping when the epoch budget ran out.
    Active,
    /// Dithering between two adjacent levels; parked on the upper one.
    Oscillating,
    /// Error-free at the lowest allowed voltage.
    AtFloor,
    /// Still failing at the highest allowed voltage.
    AtCeiling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub voltages: Vec<f64>,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub initial_v: Vec<f64>,
    pub v_s: f64,
    pub final_v: Vec<f64>,
    pub step_counts: Vec<i64>,
    pub status: Vec<PartitionStatus>,
    pub epochs: usize,
    pub trajectory: Vec<EpochRecord>,
    pub converged: bool,
}

impl CalibrationResult {
    /// `epoch,partition,v_volts,flag` with a header line.
    pub fn trajectory_delimited(&self) -> String {
        let mut out = String::from("epoch,partition,v_volts,flag\n");
        for (e, rec) in self.trajectory.iter().enumerate() {
            for (p, (v, f)) in rec.voltages.iter().zip(&rec.flags).enumerate() {
                out.push_str(&format!("{e},{p},{},{}\n", format_volts(*v), *f as u8));
            }
        }
        out
    }

    /// `partition,initial_v,final_v,step_count,status` with a header line.
    pub fn summary_delimited(&self) -> String {
        let mut out = String::from("partition,initial_v,final_v,step_count,status\n");
        for p in 0..self.final_v.len() {
            let status = match self.status[p] {
                PartitionStatus::Active => "active",
                PartitionStatus::Oscillating => "oscillating",
                PartitionStatus::AtFloor => "floor",
                PartitionStatus::AtCeiling => "ceiling",
            };
            out.push_str(&format!(
                "{p},{},{},{},{status}\n",
                format_volts(self.initial_v[p]),
                format_volts(self.final_v[p]),
                self.step_counts[p]
            ));
        }
        out
    }
}

/// Calibrates the partition voltages of `plan`. `macs` supplies the MAC-to-partition map.
pub fn calibrate(
    plan: &VoltagePlan,
    macs: &MacVoltages,
    table: &MacSlackTable,
    workload: &Workload,
    model: &DelayModel,
    config: &CalibrationConfig,
) -> Result<CalibrationResult, CalibrateError> {
    let n = plan.n();
    if config.max_epochs == 0 {
        return Err(CalibrateError::Parameter("max_epochs must be at least 1".into()));
    }
    if !(config.v_floor < config.v_ceil) {
        return Err(CalibrateError::Parameter(format!(
            "v_floor {} must lie below v_ceil {}",
            config.v_floor, config.v_ceil
        )));
    }
    if !(plan.v_step > 0.0) {
        return Err(CalibrateError::Parameter(format!("step {} must be positive", plan.v_step)));
    }
    if let Some(v) = plan.v.iter().find(|v| !(config.v_floor..=config.v_ceil).contains(*v)) {
        return Err(CalibrateError::Parameter(format!(
            "plan voltage {v} lies outside [{}, {}]",
            config.v_floor, config.v_ceil
        )));
    }
    if macs.partition.iter().any(|&p| p >= n) {
        return Err(CalibrateError::Parameter("MAC partition index outside the plan".into()));
    }
    let v_s = config.effective_step(plan.v_step);
    let v0 = plan.v.clone();
    let level = |p: usize, c: i64| (v0[p] + c as f64 * v_s).clamp(config.v_floor, config.v_ceil);
    // Step counts beyond these only repeat a clamped voltage.
    let c_min: Vec<i64> = v0
        .iter()
        .map(|v| ((config.v_floor - v) / v_s + 1e-9).floor() as i64)
        .collect();
    let c_max: Vec<i64> = v0
        .iter()
        .map(|v| ((config.v_ceil - v) / v_s - 1e-9).ceil() as i64)
        .collect();

    let mut c = vec![0i64; n];
    let mut status = vec![PartitionStatus::Active; n];
    let mut trajectory: Vec<EpochRecord> = Vec::new();

    for _ in 0..config.max_epochs {
        let voltages: Vec<f64> = (0..n).map(|p| level(p, c[p])).collect();
        let run = workload.run(table, &macs.with_partition_voltages(&voltages), model)?;
        let flags = flags_for(&run, &macs.partition, n);
        trajectory.push(EpochRecord {
            voltages: voltages.clone(),
            flags: flags.clone(),
        });

        for p in 0..n {
            if status[p] != PartitionStatus::Active {
                continue;
            }
            if !flags[p] && c[p] <= c_min[p] {
                status[p] = PartitionStatus::AtFloor;
                continue;
            }
            if flags[p] && c[p] >= c_max[p] {
                status[p] = PartitionStatus::AtCeiling;
                continue;
            }
            let e = trajectory.len();
            if e >= 3 {
                let f: Vec<bool> = trajectory[e - 3..].iter().map(|r| r.flags[p]).collect();
                if f[0] != f[1] && f[1] != f[2] {
                    // Last two levels differ by one step; keep the higher, error-free one.
                    status[p] = PartitionStatus::Oscillating;
                    if flags[p] {
                        c[p] += 1;
                    }
                    continue;
                }
            }
            c[p] = if flags[p] { c[p] + 1 } else { c[p] - 1 }.clamp(c_min[p], c_max[p]);
        }
        if status.iter().all(|s| *s != PartitionStatus::Active) {
            break;
        }
    }

    let converged = status.iter().all(|s| *s != PartitionStatus::Active);
    Ok(CalibrationResult {
        final_v: (0..n).map(|p| level(p, c[p])).collect(),
        initial_v: v0,
        v_s,
        step_counts: c,
        status,
        epochs: trajectory.len(),
        trajectory,
        converged,
    })
}
