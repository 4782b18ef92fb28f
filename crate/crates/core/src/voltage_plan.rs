//! Voltage regions and the static per-partition bias voltages.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::clustering::ClusterAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("region error: {0}")]
    Region(String),
    #[error("partition count must be at least 1")]
    NoPartitions,
    #[error("cardinality error: {clusters} clusters but {partitions} partitions")]
    Cardinality { clusters: usize, partitions: usize },
    #[error("unknown technology {0:?}; valid: 28nm-commercial, 22nm, 45nm, 130nm")]
    UnknownTechnology(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technology {
    Commercial28nm,
    Nm22,
    Nm45,
    Nm130,
}

impl Technology {
    pub const ALL: [Technology; 4] = [
        Technology::Commercial28nm,
        Technology::Nm22,
        Technology::Nm45,
        Technology::Nm130,
    ];

    /// Transistor threshold voltage used by the delay model.
    pub fn threshold_voltage(self) -> f64 {
        match self {
            // Not published for the commercial device; set equal to the 22 nm value.
            Technology::Commercial28nm => 0.45,
            Technology::Nm22 => 0.45,
            Technology::Nm45 => 0.5,
            Technology::Nm130 => 0.7,
        }
    }

    pub fn nominal_voltage(self) -> f64 {
        match self {
            Technology::Commercial28nm => 1.0,
            Technology::Nm22 | Technology::Nm45 => 1.2,
            Technology::Nm130 => 1.3,
        }
    }
}

impl FromStr for Technology {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "28nm-commercial" | "28nm" => Ok(Technology::Commercial28nm),
            "22nm" => Ok(Technology::Nm22),
            "45nm" => Ok(Technology::Nm45),
            "130nm" => Ok(Technology::Nm130),
            other => Err(PlanError::UnknownTechnology(other.to_string())),
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technology::Commercial28nm => "28nm-commercial",
            Technology::Nm22 => "22nm",
            Technology::Nm45 => "45nm",
            Technology::Nm130 => "130nm",
        })
    }
}

/// Crash, minimum and nominal core voltages of a device.
///
/// Below `v_crash` the fabric fails outright, `[v_crash, v_min)` is the critical region
/// where timing errors appear, and `[v_min, v_nom]` is the guardband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageRegions {
    pub v_crash: f64,
    pub v_min: f64,
    pub v_nom: f64,
    pub v_threshold: f64,
    pub technology: Technology,
}

impl VoltageRegions {
    pub fn new(
        technology: Technology,
        v_threshold: f64,
        v_crash: f64,
        v_min: f64,
        v_nom: f64,
    ) -> Result<Self, PlanError> {
        let r = Self {
            v_crash,
            v_min,
            v_nom,
            v_threshold,
            technology,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let all = [self.v_threshold, self.v_crash, self.v_min, self.v_nom];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PlanError::Region("voltages must be finite".into()));
        }
        if !(self.v_threshold < self.v_crash) {
            return Err(PlanError::Region(format!(
                "threshold {} V must lie below crash voltage {} V",
                self.v_threshold, self.v_crash
            )));
        }
        if !(self.v_min > self.v_crash) {
            return Err(PlanError::Region(format!(
                "v_min {} V must exceed v_crash {} V",
                self.v_min, self.v_crash
            )));
        }
        if !(self.v_min <= self.v_nom) {
            return Err(PlanError::Region(format!(
                "v_min {} V must not exceed v_nom {} V",
                self.v_min, self.v_nom
            )));
        }
        Ok(())
    }

    /// Built-in regions. The commercial device uses its 0.95-1.00 V guardband as the
    /// operating range; the academic nodes open the range down to threshold + 50 mV.
    pub fn preset(technology: Technology) -> Self {
        let v_threshold = technology.threshold_voltage();
        let v_nom = technology.nominal_voltage();
        let v_crash = match technology {
            Technology::Commercial28nm => 0.95,
            _ => v_threshold + 0.05,
        };
        Self {
            v_crash,
            v_min: v_nom,
            v_nom,
            v_threshold,
            technology,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltagePlan {
    pub regions: VoltageRegions,
    /// Step between adjacent partition voltages, V.
    pub v_step: f64,
    /// Partition voltages, ascending.
    pub v: Vec<f64>,
    /// Partition index per cluster index.
    pub cluster_to_partition: Vec<usize>,
}

impl VoltagePlan {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn partition_of_cluster(&self, cluster: usize) -> usize {
        self.cluster_to_partition[cluster]
    }

    /// Voltages rounded to `resolution` volts (0.01 V for reporting).
    pub fn rounded(&self, resolution: f64) -> Vec<f64> {
        self.v.iter().map(|v| round_to(*v, resolution)).collect()
    }

    /// `partition,v_ccint_volts,cluster,mean_slack_ns,size` with a header line.
    pub fn to_delimited(&self, assignment: &ClusterAssignment) -> String {
        let mut out = String::from("partition,v_ccint_volts,cluster,mean_slack_ns,size\n");
        let mut by_partition: Vec<(usize, usize)> = self
            .cluster_to_partition
            .iter()
            .enumerate()
            .map(|(c, &p)| (p, c))
            .collect();
        by_partition.sort();
        for (p, c) in by_partition {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p,
                format_volts(self.v[p]),
                c,
                assignment.mean_slack[c],
                assignment.size[c]
            ));
        }
        out
    }

    /// Reads partition voltages and the cluster mapping back from the export format.
    /// The step and regions are not part of the file and are supplied by the caller.
    pub fn from_delimited(
        text: &str,
        regions: VoltageRegions,
        v_step: f64,
    ) -> Result<Self, PlanError> {
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("partition,") {
                continue;
            }
            let err = |reason: &str| PlanError::Format {
                line: idx + 1,
                reason: reason.into(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(err("expected partition,v_ccint_volts,cluster,mean_slack_ns,size"));
            }
            let p: usize = f[0].parse().map_err(|_| err("bad partition"))?;
            let v: f64 = f[1].parse().map_err(|_| err("bad voltage"))?;
            let c: usize = f[2].parse().map_err(|_| err("bad cluster"))?;
            rows.push((p, v, c));
        }
        let n = rows.len();
        let mut v = vec![f64::NAN; n];
        let mut map = vec![usize::MAX; n];
        for (p, volts, c) in rows {
            if p >= n || c >= n || !v[p].is_nan() || map[c] != usize::MAX {
                return Err(PlanError::Format {
                    line: 0,
                    reason: "partition/cluster indices must each form 0..n".into(),
                });
            }
            v[p] = volts;
            map[c] = p;
        }
        if n == 0 {
            return Err(PlanError::NoPartitions);
        }
        Ok(Self {
            regions,
            v_step,
            v,
            cluster_to_partition: map,
        })
    }
}

pub fn round_to(v: f64, resolution: f64) -> f64 {
    (v / resolution).round() * resolution
}

/// Splits `[v_crash, v_min]` into `n` equal steps and places one partition voltage at the
/// midpoint of each.
pub fn static_voltage_scaling(regions: &VoltageRegions, n: usize) -> Result<VoltagePlan, PlanError> {
    regions.validate()?;
    if n == 0 {
        return Err(PlanError::NoPartitions);
    }
    let v_step = (regions.v_min - regions.v_crash) / n as f64;
    let mut v_low = regions.v_crash;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push((v_low + v_low + v_step) / 2.0);
        v_low += v_step;
    }
    Ok(VoltagePlan {
        regions: *regions,
        v_step,
        v,
        cluster_to_partition: (0..n).collect(),
    })
}

/// Per-MAC voltages, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVoltages {
    pub rows: usize,
    pub cols: usize,
    pub volts: Vec<f64>,
    /// Partition per MAC, row-major.
    pub partition: Vec<usize>,
}

impl MacVoltages {
    pub fn uniform(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            volts: vec![v; rows * cols],
            partition: vec![0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.volts[row * self.cols + col]
    }

    /// Rebuilds per-MAC voltages from per-partition values.
    pub fn with_partition_voltages(&self, v: &[f64]) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            volts: self.partition.iter().map(|&p| v[p]).collect(),
            partition: self.partition.clone(),
        }
    }

    /// Partition sizes and their voltages, in partition order.
    pub fn grouped(&self, partitions: usize) -> Vec<(usize, f64)> {
        let mut out = vec![(0usize, f64::NAN); partitions];
        for (&p, &v) in self.partition.iter().zip(&self.volts) {
            out[p].0 += 1;
            out[p].1 = v;
        }
        out
    }
}

/// Gives every MAC the voltage of its cluster's partition.
pub fn assign_voltages(
    assignment: &ClusterAssignment,
    plan: &VoltagePlan,
) -> Result<MacVoltages, PlanError> {
    if assignment.num_clusters() != plan.n() {
        return Err(PlanError::Cardinality {
            clusters: assignment.num_clusters(),
            partitions: plan.n(),
        });
    }
    let partition: Vec<usize> = assignment
        .cluster_of
        .iter()
        .map(|&c| plan.partition_of_cluster(c))
        .collect();
    Ok(MacVoltages {
        rows: assignment.rows,
        cols: assignment.cols,
        volts: partition.iter().map(|&p| plan.v[p]).collect(),
        partition,
    })
}

/// Island shape for `p` equal partitions of a `rows x cols` array: the most square grid of
/// islands that tiles the array exactly, if one exists.
pub fn island_shape(rows: usize, cols: usize, p: usize) -> Option<(usize, usize)> {
    (1..=p)
        .filter(|pr| p % pr == 0)
        .map(|pr| (pr, p / pr))
        .filter(|&(pr, pc)| rows % pr == 0 && cols % pc == 0)
        .min_by_key(|&(pr, pc)| (pr.abs_diff(pc), std::cmp::Reverse(pr)))
        .map(|(pr, pc)| (rows / pr, cols / pc))
}

/// `P × (n × m) {V1, ..., VP}` variant label.
pub fn variant_label(p: usize, island: Option<(usize, usize)>, voltages: &[f64]) -> String {
    let volts: Vec<String> = voltages.iter().map(|v| format_volts(*v)).collect();
    match island {
        Some((n, m)) => format!("{p} × ({n} × {m}) {{{}}}", volts.join(", ")),
        None => format!("{p} × (?) {{{}}}", volts.join(", ")),
    }
}

/// Shortest decimal with at least one fractional digit, e.g. `1.0`, `0.95625`.
/// Printed to nine decimals at most, so accumulated rounding noise does not leak into files.
pub fn format_volts(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// Bundled published partition voltages for the 16x16 guardband plan.
pub const REFERENCE_PLAN: &str = include_str!("../data/reference_plan.csv");

/// One partition of a computed plan next to its published counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanComparison {
    pub partition: usize,
    pub computed_v: f64,
    pub rounded_v: f64,
    pub reported_v: f64,
    pub deployed_v: f64,
}

impl PlanComparison {
    /// The rounded value agrees with the deployed one.
    pub fn deployed_matches(&self) -> bool {
        (self.rounded_v - self.deployed_v).abs() < 1e-9
    }

    /// The computed value and the published one differ at the published precision.
    pub fn reported_differs(&self) -> bool {
        (self.computed_v - self.reported_v).abs() > 0.0015
    }
}

/// Reads `partition,reported_v,deployed_v` rows; partitions are numbered from 1.
pub fn parse_reference_plan(text: &str) -> Result<Vec<(f64, f64)>, PlanError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("partition,") {
            continue;
        }
        let err = |reason: &str| PlanError::Format {
            line: idx + 1,
            reason: reason.into(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err("expected partition,reported_v,deployed_v"));
        }
        let p: usize = f[0].parse().map_err(|_| err("bad partition"))?;
        if p != out.len() + 1 {
            return Err(err("partitions must be numbered 1, 2, ... in order"));
        }
        let r: f64 = f[1].parse().map_err(|_| err("bad reported_v"))?;
        let d: f64 = f[2].parse().map_err(|_| err("bad deployed_v"))?;
        out.push((r, d));
    }
    Ok(out)
}

/// Pairs plan partitions with the bundled reference, or `None` when the partition counts differ.
pub fn compare_with_reference(plan: &VoltagePlan) -> Option<Vec<PlanComparison>> {
    let reference = parse_reference_plan(REFERENCE_PLAN).ok()?;
    if reference.len() != plan.n() {
        return None;
    }
    Some(
        plan.v
            .iter()
            .zip(reference)
            .enumerate()
            .map(|(p, (&v, (reported_v, deployed_v)))| PlanComparison {
                partition: p,
                computed_v: v,
                rounded_v: round_to(v, 0.01),
                reported_v,
                deployed_v,
            })
            .collect(),
    )
}

/// Human-readable plan summary, with the reference comparison when one applies.
pub fn plan_report(plan: &VoltagePlan) -> String {
    let r = &plan.regions;
    let mut out = format!(
        "technology {}  v_crash {} V  v_min {} V  v_nom {} V  partitions {}  v_s {} V\n",
        r.technology,
        format_volts(r.v_crash),
        format_volts(r.v_min),
        format_volts(r.v_nom),
        plan.n(),
        format_volts(plan.v_step)
    );
    for (p, v) in plan.v.iter().enumerate() {
        out.push_str(&format!(
            "partition {p}: {} V (rounded {:.2} V)\n",
            format_volts(*v),
            round_to(*v, 0.01)
        ));
    }
    if let Some(cmp) = compare_with_reference(plan) {
        out.push_str("reference comparison (partition, computed, rounded, reported, deployed):\n");
        for c in &cmp {
            let mut note = String::new();
            if c.reported_differs() {
                note.push_str("  reported value differs from the midpoint rule");
            }
            if !c.deployed_matches() {
                note.push_str("  rounded value differs from deployed");
            }
            out.push_str(&format!(
                "  {}: {} {:.2} {} {:.2}{note}\n",
                c.partition,
                format_volts(c.computed_v),
                c.rounded_v,
                format_volts(c.reported_v),
                c.deployed_v
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slack_model::MacSlackTable;

    fn guardband() -> VoltageRegions {
        VoltageRegions::preset(Technology::Commercial28nm)
    }

    #[test]
    fn guardband_four_partitions() {
        let plan = static_voltage_scaling(&guardband(), 4).unwrap();
        let expected = [0.95625, 0.96875, 0.98125, 0.99375];
        for (v, e) in plan.v.iter().zip(expected) {
            assert!((v - e).abs() < 1e-9, "{v} vs {e}");
        }
        assert_eq!(plan.v_step, (1.00 - 0.95) / 4.0);
        assert_eq!(plan.rounded(0.01), vec![0.96, 0.97, 0.98, 0.99]);
    }

    #[test]
    fn single_partition_is_midpoint() {
        let plan = static_voltage_scaling(&guardband(), 1).unwrap();
        assert!((plan.v[0] - 0.975).abs() < 1e-12);
    }

    #[test]
    fn wide_range_two_partitions() {
        let r = VoltageRegions::new(Technology::Nm45, 0.45, 0.5, 1.2, 1.2).unwrap();
        let plan = static_voltage_scaling(&r, 2).unwrap();
        assert!((plan.v_step - 0.35).abs() < 1e-12);
        assert!((plan.v[0] - 0.675).abs() < 1e-12);
        assert!((plan.v[1] - 1.025).abs() < 1e-12);
    }

    #[test]
    fn inverted_region_rejected() {
        assert!(matches!(
            VoltageRegions::new(Technology::Nm22, 0.45, 1.0, 0.9, 1.2),
            Err(PlanError::Region(_))
        ));
        let mut r = guardband();
        r.v_min = r.v_crash;
        assert!(static_voltage_scaling(&r, 4).is_err());
        assert_eq!(static_voltage_scaling(&guardband(), 0), Err(PlanError::NoPartitions));
    }

    #[test]
    fn presets_are_valid() {
        for t in Technology::ALL {
            VoltageRegions::preset(t).validate().unwrap();
            assert_eq!(t.to_string().parse::<Technology>().unwrap(), t);
        }
    }

    #[test]
    fn higher_slack_gets_lower_voltage() {
        let t = MacSlackTable::new(1, 4, vec![6.0, 4.0, 6.0, 4.0], vec![1; 4]).unwrap();
        let a = ClusterAssignment::from_labels(&t, &[0, 1, 0, 1]);
        let mut plan = static_voltage_scaling(&guardband(), 2).unwrap();
        plan.v = vec![0.96, 0.99];
        let mv = assign_voltages(&a, &plan).unwrap();
        assert_eq!(mv.volts, vec![0.96, 0.99, 0.96, 0.99]);
    }

    #[test]
    fn single_cluster_single_voltage() {
        let t = MacSlackTable::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![1; 4]).unwrap();
        let a = ClusterAssignment::from_labels(&t, &[0; 4]);
        let plan = static_voltage_scaling(&guardband(), 1).unwrap();
        let mv = assign_voltages(&a, &plan).unwrap();
        assert!(mv.volts.iter().all(|&v| v == plan.v[0]));
    }

    #[test]
    fn cardinality_mismatch() {
        let t = MacSlackTable::new(1, 2, vec![1.0, 2.0], vec![1; 2]).unwrap();
        let a = ClusterAssignment::from_labels(&t, &[0, 1]);
        let plan = static_voltage_scaling(&guardband(), 3).unwrap();
        assert_eq!(
            assign_voltages(&a, &plan),
            Err(PlanError::Cardinality {
                clusters: 2,
                partitions: 3
            })
        );
    }

    #[test]
    fn export_round_trip() {
        let t = MacSlackTable::new(1, 4, vec![6.0, 4.0, 5.0, 4.5], vec![1; 4]).unwrap();
        let a = ClusterAssignment::from_labels(&t, &[0, 1, 2, 3]);
        let plan = static_voltage_scaling(&guardband(), 4).unwrap();
        let text = plan.to_delimited(&a);
        assert!(text.starts_with("partition,v_ccint_volts,cluster,mean_slack_ns,size\n0,0.95625,0,6,1\n"));
        let back = VoltagePlan::from_delimited(&text, plan.regions, plan.v_step).unwrap();
        assert_eq!(back.cluster_to_partition, plan.cluster_to_partition);
        for (x, y) in back.v.iter().zip(&plan.v) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(back.to_delimited(&a), text);
    }

    #[test]
    fn labels() {
        assert_eq!(island_shape(16, 16, 4), Some((8, 8)));
        assert_eq!(island_shape(64, 64, 2), Some((32, 64)));
        assert_eq!(island_shape(64, 64, 1), Some((64, 64)));
        assert_eq!(island_shape(5, 5, 3), None);
        assert_eq!(
            variant_label(4, Some((32, 32)), &[0.8, 1.0, 1.2, 1.3]),
            "4 × (32 × 32) {0.8, 1.0, 1.2, 1.3}"
        );
    }
}
