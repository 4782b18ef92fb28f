//! Cycle-level weight-stationary systolic array with Razor timing-error detection.
//!
//! MAC `(i, j)` holds weight `B[i][j]`. Row `m` of the activation matrix enters array row `i`
//! with an `i`-cycle skew and moves right one column per cycle; partial sums move down one
//! row per cycle, so MAC `(i, j)` works on activation row `m` at cycle `m + i + j` and the
//! bottom row emits `C[m][j]`.
//!
//! The capture path of every MAC arrives at
//!
//! ```text
//! arrival = base_delay * voltage_delay_factor(v) * (1 + kappa * h)
//! ```
//!
//! where `h` is the fraction of the 40 input bits (8-bit activation, 32-bit partial sum) that
//! toggled since the previous operation. Up to `t_clk` the main register samples correctly;
//! up to `t_clk + t_del` the shadow register still catches the value, the error flag is raised
//! and the main register is repaired at the cost of one stall cycle; later arrivals are missed
//! by both registers, which keep their previous contents.
//!
//! Inside [`simulate_matmul`] the activity `h` is taken from the fault-free operand stream, so
//! whether a MAC fails depends only on its own voltage and the workload, never on corrupted
//! values produced elsewhere in the array.

use std::fmt;

use thiserror::Error;

use crate::floorplan::PartitionLayout;
use crate::matrix::Matrix;
use crate::slack_model::MacSlackTable;
use crate::voltage_plan::MacVoltages;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("below threshold: {v} V is not above the {v_threshold} V threshold")]
    BelowThreshold { v: f64, v_threshold: f64 },
    #[error("invalid delay model: {0}")]
    Model(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("MAC ({row},{col}) has slack {slack} ns, more than the {t_clk} ns clock period")]
    SlackExceedsPeriod {
        row: usize,
        col: usize,
        slack: f64,
        t_clk: f64,
    },
}

/// Alpha-power delay-voltage model and Razor clocking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub alpha: f64,
    pub v_threshold: f64,
    pub v_nom: f64,
    /// Extra delay per unit of input toggle activity.
    pub kappa: f64,
    /// Clock period, ns. Also the timing requirement of every MAC capture path.
    pub t_clk: f64,
    /// Shadow-clock lag, ns.
    pub t_del: f64,
}

impl DelayModel {
    /// Defaults: `alpha = 1.3`, `kappa = 0.1`, `t_del = t_clk / 2`.
    pub fn new(v_threshold: f64, v_nom: f64, t_clk: f64) -> Result<Self, SimError> {
        let m = Self {
            alpha: 1.3,
            v_threshold,
            v_nom,
            kappa: 0.1,
            t_clk,
            t_del: t_clk / 2.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.alpha > 0.0) {
            return Err(SimError::Model(format!("alpha {} must be positive", self.alpha)));
        }
        if !(self.kappa >= 0.0) {
            return Err(SimError::Model(format!("kappa {} must be non-negative", self.kappa)));
        }
        if !(self.t_clk > 0.0 && self.t_del > 0.0 && self.t_del < self.t_clk) {
            return Err(SimError::Model(format!(
                "need 0 < t_del ({}) < t_clk ({})",
                self.t_del, self.t_clk
            )));
        }
        if !(self.v_threshold < self.v_nom) {
            return Err(SimError::Model(format!(
                "threshold {} V must lie below nominal {} V",
                self.v_threshold, self.v_nom
            )));
        }
        Ok(())
    }
}

/// Delay multiplier relative to nominal voltage; 1 at `v_nom`, diverging toward threshold.
pub fn voltage_delay_factor(v: f64, model: &DelayModel) -> Result<f64, SimError> {
    if !(v > model.v_threshold) {
        return Err(SimError::BelowThreshold {
            v,
            v_threshold: model.v_threshold,
        });
    }
    Ok((v / model.v_nom)
        * ((model.v_nom - model.v_threshold) / (v - model.v_threshold)).powf(model.alpha))
}

pub fn arrival_time(
    base_delay: f64,
    v: f64,
    activity: f64,
    model: &DelayModel,
) -> Result<f64, SimError> {
    Ok(base_delay * voltage_delay_factor(v, model)? * (1.0 + model.kappa * activity))
}

/// Fraction of toggled bits between two `(activation, partial sum)` input pairs.
pub fn hamming_activity(prev: (i8, i32), next: (i8, i32)) -> f64 {
    let bits = ((prev.0 ^ next.0) as u8).count_ones() + ((prev.1 ^ next.1) as u32).count_ones();
    bits as f64 / 40.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RazorOutcome {
    Clean,
    Detected,
    Undetected,
}

impl RazorOutcome {
    pub fn classify(arrival: f64, model: &DelayModel) -> Self {
        if arrival <= model.t_clk {
            RazorOutcome::Clean
        } else if arrival <= model.t_clk + model.t_del {
            RazorOutcome::Detected
        } else {
            RazorOutcome::Undetected
        }
    }
}

impl fmt::Display for RazorOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RazorOutcome::Clean => "clean",
            RazorOutcome::Detected => "detected",
            RazorOutcome::Undetected => "undetected",
        })
    }
}

/// Registers of one MAC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacState {
    pub weight: i8,
    pub activation_in: i8,
    pub psum_in: i32,
    /// Main register `R`.
    pub main_reg: i32,
    /// Shadow register `S`.
    pub shadow_reg: i32,
    /// Razor error flag `F`.
    pub error_flag: bool,
    /// Inputs of the previous operation, for toggle activity.
    pub prev_inputs: (i8, i32),
}

impl MacState {
    pub fn with_weight(weight: i8) -> Self {
        Self {
            weight,
            ..Self::default()
        }
    }

    fn latch(&self, activation: i8, psum: i32, activity_inputs: (i8, i32), arrival: f64, model: &DelayModel) -> (Self, RazorOutcome) {
        let outcome = RazorOutcome::classify(arrival, model);
        let result = (self.weight as i32)
            .wrapping_mul(activation as i32)
            .wrapping_add(psum);
        let mut next = *self;
        next.activation_in = activation;
        next.psum_in = psum;
        next.prev_inputs = activity_inputs;
        match outcome {
            RazorOutcome::Clean => {
                next.main_reg = result;
                next.shadow_reg = result;
                next.error_flag = false;
            }
            RazorOutcome::Detected => {
                // S caught the late value; R is restored from S during the stall.
                next.shadow_reg = result;
                next.main_reg = result;
                next.error_flag = true;
            }
            RazorOutcome::Undetected => {
                next.main_reg = self.main_reg;
                next.shadow_reg = self.main_reg;
                next.error_flag = false;
            }
        }
        (next, outcome)
    }
}

/// One MAC operation at voltage `v`. Activity is measured on the given inputs.
pub fn mac_cycle(
    state: &MacState,
    activation: i8,
    psum: i32,
    v: f64,
    base_delay: f64,
    model: &DelayModel,
) -> Result<(MacState, RazorOutcome), SimError> {
    let h = hamming_activity(state.prev_inputs, (activation, psum));
    let arrival = arrival_time(base_delay, v, h, model)?;
    Ok(state.latch(activation, psum, (activation, psum), arrival, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub row: usize,
    pub col: usize,
    pub outcome: RazorOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRunResult {
    pub rows: usize,
    pub cols: usize,
    pub output: Matrix<i32>,
    /// Detected errors per MAC, row-major.
    pub detected: Vec<u64>,
    /// Undetected errors per MAC, row-major.
    pub undetected: Vec<u64>,
    pub stall_cycles: u64,
    pub cycles: u64,
    /// Non-clean outcomes, when tracing was requested.
    pub trace: Vec<TraceEvent>,
}

impl SimRunResult {
    pub fn total_detected(&self) -> u64 {
        self.detected.iter().sum()
    }

    pub fn total_undetected(&self) -> u64 {
        self.undetected.iter().sum()
    }

    /// `(detected, undetected)` summed per partition.
    pub fn partition_errors(&self, mac_partition: &[usize], partitions: usize) -> Vec<(u64, u64)> {
        let mut out = vec![(0, 0); partitions];
        for (i, &p) in mac_partition.iter().enumerate() {
            out[p].0 += self.detected[i];
            out[p].1 += self.undetected[i];
        }
        out
    }

    /// Adds another run's counters into this one. Outputs and traces are left untouched.
    pub fn accumulate(&mut self, other: &SimRunResult) {
        for (a, b) in self.detected.iter_mut().zip(&other.detected) {
            *a += b;
        }
        for (a, b) in self.undetected.iter_mut().zip(&other.undetected) {
            *a += b;
        }
        self.stall_cycles += other.stall_cycles;
        self.cycles += other.cycles;
    }

    /// Per-MAC counters as `row,col,detected,undetected` with a header line.
    pub fn counts_delimited(&self) -> String {
        let mut out = String::from("row,col,detected,undetected\n");
        for i in 0..self.detected.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i / self.cols,
                i % self.cols,
                self.detected[i],
                self.undetected[i]
            ));
        }
        out
    }

    /// `cycle,row,col,outcome` with a header line.
    pub fn trace_delimited(&self) -> String {
        let mut out = String::from("cycle,row,col,outcome\n");
        for e in &self.trace {
            out.push_str(&format!("{},{},{},{}\n", e.cycle, e.row, e.col, e.outcome));
        }
        out
    }
}

/// Multiplies `a` (`M x rows`) by the preloaded weights `b` (`rows x cols`).
///
/// The base delay of each MAC is `t_clk - min_slack`.
pub fn simulate_matmul(
    a: &Matrix<i8>,
    b: &Matrix<i8>,
    slack: &MacSlackTable,
    voltages: &MacVoltages,
    model: &DelayModel,
    trace: bool,
) -> Result<SimRunResult, SimError> {
    model.validate()?;
    let (rows, cols) = (slack.rows(), slack.cols());
    if b.rows() != rows || b.cols() != cols {
        return Err(SimError::Dimension(format!(
            "weights are {}x{}, array is {rows}x{cols}",
            b.rows(),
            b.cols()
        )));
    }
    if a.cols() != rows {
        return Err(SimError::Dimension(format!(
            "activations have {} columns, array has {rows} rows",
            a.cols()
        )));
    }
    if voltages.rows != rows || voltages.cols != cols {
        return Err(SimError::Dimension(format!(
            "voltage map is {}x{}, array is {rows}x{cols}",
            voltages.rows, voltages.cols
        )));
    }
    let n = rows * cols;
    // base_delay * voltage factor, per MAC
    let mut scaled = Vec::with_capacity(n);
    for i in 0..n {
        let s = slack.slacks()[i];
        let base = model.t_clk - s;
        if base < 0.0 {
            return Err(SimError::SlackExceedsPeriod {
                row: i / cols,
                col: i % cols,
                slack: s,
                t_clk: model.t_clk,
            });
        }
        scaled.push(base * voltage_delay_factor(voltages.volts[i], model)?);
    }

    let m_rows = a.rows();
    let mut state: Vec<MacState> = (0..n)
        .map(|i| MacState::with_weight(b.get(i / cols, i % cols)))
        .collect();
    let mut golden = vec![0i32; n];
    let mut output = Matrix::zeros(m_rows, cols);
    let mut detected = vec![0u64; n];
    let mut undetected = vec![0u64; n];
    let mut events = Vec::new();
    let mut stalls = 0u64;

    let base_cycles = if m_rows == 0 { 0 } else { m_rows + rows + cols - 2 };
    for t in 0..base_cycles {
        let prev_state = state.clone();
        let prev_golden = golden.clone();
        let mut stalls_now = 0u64;
        for i in 0..rows {
            for j in 0..cols {
                let Some(m) = t.checked_sub(i + j).filter(|&m| m < m_rows) else {
                    continue;
                };
                let idx = i * cols + j;
                let activation = if j == 0 {
                    a.get(m, i)
                } else {
                    prev_state[idx - 1].activation_in
                };
                let (psum, golden_in) = if i == 0 {
                    (0, 0)
                } else {
                    (prev_state[idx - cols].main_reg, prev_golden[idx - cols])
                };
                let h = hamming_activity(prev_state[idx].prev_inputs, (activation, golden_in));
                let arrival = scaled[idx] * (1.0 + model.kappa * h);
                let (next, outcome) =
                    prev_state[idx].latch(activation, psum, (activation, golden_in), arrival, model);
                state[idx] = next;
                golden[idx] = (next.weight as i32)
                    .wrapping_mul(activation as i32)
                    .wrapping_add(golden_in);
                match outcome {
                    RazorOutcome::Clean => {}
                    RazorOutcome::Detected => {
                        detected[idx] += 1;
                        stalls_now += 1;
                    }
                    RazorOutcome::Undetected => undetected[idx] += 1,
                }
                if trace && outcome != RazorOutcome::Clean {
                    events.push(TraceEvent {
                        cycle: t as u64 + stalls,
                        row: i,
                        col: j,
                        outcome,
                    });
                }
                if i == rows - 1 {
                    output.set(m, j, next.main_reg);
                }
            }
        }
        stalls += stalls_now;
    }

    Ok(SimRunResult {
        rows,
        cols,
        output,
        detected,
        undetected,
        stall_cycles: stalls,
        cycles: base_cycles as u64 + stalls,
        trace: events,
    })
}

/// One flag per partition: set when any of its MACs saw a detected or undetected error.
pub fn partition_flags(result: &SimRunResult, layout: &PartitionLayout) -> Vec<bool> {
    flags_for(result, &layout.mac_partition, layout.islands.len())
}

pub(crate) fn flags_for(result: &SimRunResult, mac_partition: &[usize], partitions: usize) -> Vec<bool> {
    let mut flags = vec![false; partitions];
    for (i, &p) in mac_partition.iter().enumerate() {
        if result.detected[i] + result.undetected[i] > 0 {
            flags[p] = true;
        }
    }
    flags
}
