//! Dynamic power of voltage-island variants under quadratic voltage scaling.
//!
//! Each partition draws `baseline * fraction * (v / v_ref)^2`, where `fraction` is its share
//! of the array area and `v_ref` the voltage at which the baseline was measured. Static power,
//! clock trees, I/O and the extra Razor flops are not modeled, so the figures are not
//! expected to match measured tool reports; [`compare_with_reference`] puts both side by side.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::voltage_plan::{format_volts, island_shape, variant_label, Technology};

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("invalid power parameter: {0}")]
    Parameter(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Measured array power and the published voltage-island results, keyed by array and technology.
pub const REFERENCE_POWER: &str = include_str!("../data/reference_power.csv");

/// Margin, in percentage points, beyond which model and reference reductions are flagged.
pub const GAP_TOLERANCE_PCT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub baseline_mw: f64,
    pub v_ref: f64,
    pub per_partition_mw: Vec<f64>,
    pub scaled_total_mw: f64,
    pub reduction_pct: f64,
    pub variant_label: String,
}

pub fn dynamic_power(
    baseline_mw: f64,
    fractions: &[f64],
    voltages: &[f64],
    v_ref: f64,
) -> Result<PowerReport, PowerError> {
    if fractions.len() != voltages.len() || fractions.is_empty() {
        return Err(PowerError::Parameter(format!(
            "{} fractions for {} voltages",
            fractions.len(),
            voltages.len()
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(PowerError::Parameter(format!(
            "partition fractions must be non-negative and sum to 1, got {sum}"
        )));
    }
    if voltages.iter().any(|v| !(*v > 0.0)) || !(v_ref > 0.0) {
        return Err(PowerError::Parameter("voltages must be positive".into()));
    }
    if !(baseline_mw >= 0.0) {
        return Err(PowerError::Parameter(format!("baseline {baseline_mw} mW is negative")));
    }
    let per_partition_mw: Vec<f64> = fractions
        .iter()
        .zip(voltages)
        .map(|(f, v)| baseline_mw * f * (v / v_ref).powi(2))
        .collect();
    let scaled_total_mw: f64 = per_partition_mw.iter().sum();
    let reduction_pct = if baseline_mw > 0.0 {
        100.0 * (1.0 - scaled_total_mw / baseline_mw)
    } else {
        0.0
    };
    Ok(PowerReport {
        baseline_mw,
        v_ref,
        per_partition_mw,
        scaled_total_mw,
        reduction_pct,
        variant_label: variant_label(voltages.len(), None, voltages),
    })
}

/// `P` equal islands of `island` MACs each, one voltage per island.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub partitions: usize,
    pub island: (usize, usize),
    pub voltages: Vec<f64>,
}

impl Variant {
    pub fn label(&self) -> String {
        variant_label(self.partitions, Some(self.island), &self.voltages)
    }

    /// Equal islands for `voltages.len()` partitions of a `rows x cols` array.
    pub fn equal(rows: usize, cols: usize, voltages: Vec<f64>) -> Result<Self, PowerError> {
        let p = voltages.len();
        let island = island_shape(rows, cols, p).ok_or_else(|| {
            PowerError::Shape(format!("{p} equal islands cannot tile a {rows}x{cols} array"))
        })?;
        Ok(Self {
            partitions: p,
            island,
            voltages,
        })
    }

    pub fn check_tiling(&self, rows: usize, cols: usize) -> Result<(), PowerError> {
        let (h, w) = self.island;
        let tiles = h > 0 && w > 0 && rows % h == 0 && cols % w == 0;
        if !tiles || (rows / h) * (cols / w) != self.partitions {
            return Err(PowerError::Shape(format!(
                "{} does not tile a {rows}x{cols} array",
                self.label()
            )));
        }
        if self.voltages.len() != self.partitions {
            return Err(PowerError::Shape(format!(
                "{} partitions but {} voltages",
                self.partitions,
                self.voltages.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts `4x(32x32){0.8,1.0,1.2,1.3}`; `×` may replace `x` and spaces are ignored.
impl FromStr for Variant {
    type Err = PowerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PowerError::Parameter(format!("cannot parse variant {s:?}; expected P x (n x m) {{v1, ...}}"));
        let t: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '×' || c == 'X' { 'x' } else { c })
            .collect();
        let (p, rest) = t.split_once("x(").ok_or_else(bad)?;
        let (dims, rest) = rest.split_once(")").ok_or_else(bad)?;
        let (n, m) = dims.split_once('x').ok_or_else(bad)?;
        let volts = rest.strip_prefix('{').and_then(|r| r.strip_suffix('}')).ok_or_else(bad)?;
        let voltages = volts
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            partitions: p.parse().map_err(|_| bad())?,
            island: (n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?),
            voltages,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub technology: Technology,
    pub baseline_mw: f64,
    /// Voltage at which the baseline was measured.
    pub v_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub technology: Technology,
    pub report: PowerReport,
}

/// Evaluates every variant against every baseline. Rows are grouped by baseline, in the order
/// given, and sorted by descending reduction within each group.
pub fn sweep_variants(
    rows: usize,
    cols: usize,
    variants: &[Variant],
    baselines: &[Baseline],
) -> Result<Vec<SweepRow>, PowerError> {
    for v in variants {
        v.check_tiling(rows, cols)?;
    }
    let mut out = Vec::with_capacity(variants.len() * baselines.len());
    for b in baselines {
        let mut group = Vec::with_capacity(variants.len());
        for v in variants {
            let fractions = vec![1.0 / v.partitions as f64; v.partitions];
            let mut report = dynamic_power(b.baseline_mw, &fractions, &v.voltages, b.v_ref)?;
            report.variant_label = v.label();
            group.push(SweepRow {
                variant: v.clone(),
                technology: b.technology,
                report,
            });
        }
        group.sort_by(|a, b| b.report.reduction_pct.total_cmp(&a.report.reduction_pct));
        out.extend(group);
    }
    Ok(out)
}

/// `variant,technology,baseline_mw,scaled_mw,reduction_pct` with a header line.
pub fn sweep_delimited(rows: &[SweepRow]) -> String {
    let mut out = String::from("variant,technology,baseline_mw,scaled_mw,reduction_pct\n");
    for r in rows {
        out.push_str(&format!(
            "\"{}\",{},{},{:.3},{:.3}\n",
            r.report.variant_label, r.technology, r.report.baseline_mw, r.report.scaled_total_mw, r.report.reduction_pct
        ));
    }
    out
}

/// Left-aligned first column, right-aligned numbers.
fn render(header: &[&str], body: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.report.variant_label.clone(),
                r.technology.to_string(),
                format!("{:.1}", r.report.baseline_mw),
                format!("{:.1}", r.report.scaled_total_mw),
                format!("{:.3}", r.report.reduction_pct),
            ]
        })
        .collect();
    render(&["variant", "technology", "baseline_mw", "scaled_mw", "reduction_pct"], &body)
}

/// One published measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub array: (usize, usize),
    pub technology: Technology,
    pub baseline_v: f64,
    pub baseline_mw: f64,
    pub scaled_mw: f64,
    pub reduction_pct: f64,
    pub voltages: Vec<f64>,
}

pub fn parse_reference(text: &str) -> Result<Vec<ReferenceRow>, PowerError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("array,") {
            continue;
        }
        let err = |reason: String| PowerError::Format { line: idx + 1, reason };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| err(format!("bad number {:?}", f[i])));
        let (r, c) = f[0].split_once('x').ok_or_else(|| err(format!("bad array {:?}", f[0])))?;
        let dim = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad array {:?}", f[0])));
        let voltages = f[6]
            .split(';')
            .map(|v| v.trim().parse::<f64>().map_err(|_| err(format!("bad voltage {v:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ReferenceRow {
            array: (dim(r)?, dim(c)?),
            technology: f[1].parse().map_err(|_| err(format!("unknown technology {:?}", f[1])))?,
            baseline_v: num(2)?,
            baseline_mw: num(3)?,
            scaled_mw: num(4)?,
            reduction_pct: num(5)?,
            voltages,
        });
    }
    Ok(out)
}

/// The bundled reference table.
pub fn reference_rows() -> Vec<ReferenceRow> {
    parse_reference(REFERENCE_POWER).expect("bundled reference table parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference: ReferenceRow,
    pub model: PowerReport,
    /// Reference minus model reduction, percentage points.
    pub gap_pct: f64,
    pub flagged: bool,
}

/// Recomputes every reference row with the quadratic model on equal islands.
pub fn compare_with_reference(rows: &[ReferenceRow], tolerance_pct: f64) -> Result<Vec<Comparison>, PowerError> {
    rows.iter()
        .map(|r| {
            let p = r.voltages.len();
            let fractions = vec![1.0 / p as f64; p];
            let mut model = dynamic_power(r.baseline_mw, &fractions, &r.voltages, r.baseline_v)?;
            model.variant_label = variant_label(p, island_shape(r.array.0, r.array.1, p), &r.voltages);
            let gap_pct = r.reduction_pct - model.reduction_pct;
            Ok(Comparison {
                reference: r.clone(),
                model,
                gap_pct,
                flagged: gap_pct.abs() > tolerance_pct,
            })
        })
        .collect()
}

pub fn comparison_table(rows: &[Comparison]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            vec![
                format!("{}x{}", c.reference.array.0, c.reference.array.1),
                c.model.variant_label.clone(),
                c.reference.technology.to_string(),
                format_volts(c.reference.baseline_v),
                format!("{:.0}", c.reference.baseline_mw),
                format!("{:.1}", c.model.scaled_total_mw),
                format!("{:.3}", c.model.reduction_pct),
                format!("{:.0}", c.reference.scaled_mw),
                format!("{:.2}", c.reference.reduction_pct),
                format!("{:+.3}", c.gap_pct),
                if c.flagged { "GAP".into() } else { "ok".into() },
            ]
        })
        .collect();
    let mut out = render(
        &[
            "array",
            "variant",
            "technology",
            "baseline_v",
            "baseline_mw",
            "model_mw",
            "model_pct",
            "reference_mw",
            "reference_pct",
            "gap_pts",
            "flag",
        ],
        &body,
    );
    out.push_str(&format!(
        "GAP: model and reference reductions differ by more than {GAP_TOLERANCE_PCT} percentage points.\n\
         The model scales dynamic power with the square of the supply only, while the measured\n\
         figures come from vendor power engines. Razor shadow flops and the duplicated\n\
         multiplier/adder are not part of the model.\n"
    ));
    out
}
