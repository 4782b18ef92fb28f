//! One-dimensional clustering of MACs by minimum slack.
//!
//! Every algorithm returns raw labels which [`ClusterAssignment::from_labels`] relabels so that
//! cluster 0 has the largest mean slack. Downstream, cluster `c` maps to partition `c`, so the
//! MACs with the most timing margin land in the lowest-voltage island.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::report_ingest::MacId;
use crate::slack_model::MacSlackTable;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("no core points; widen epsilon")]
    NoCorePoints,
    #[error("unknown clustering algorithm {0:?}; valid: hierarchical, kmeans, meanshift, dbscan")]
    UnknownAlgorithm(String),
    #[error("unknown linkage {0:?}; valid: single, complete, average")]
    UnknownLinkage(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Hierarchical,
    KMeans,
    MeanShift,
    Dbscan,
}

impl Algorithm {
    pub const NAMES: [&'static str; 4] = ["hierarchical", "kmeans", "meanshift", "dbscan"];
}

impl FromStr for Algorithm {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hierarchical" => Ok(Algorithm::Hierarchical),
            "kmeans" => Ok(Algorithm::KMeans),
            "meanshift" => Ok(Algorithm::MeanShift),
            "dbscan" => Ok(Algorithm::Dbscan),
            other => Err(ClusterError::UnknownAlgorithm(other.to_string())),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algorithm::Hierarchical => "hierarchical",
            Algorithm::KMeans => "kmeans",
            Algorithm::MeanShift => "meanshift",
            Algorithm::Dbscan => "dbscan",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl FromStr for Linkage {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(ClusterError::UnknownLinkage(other.to_string())),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub algorithm: Algorithm,
    /// Cluster count for k-means and for the hierarchical cut.
    pub k: usize,
    /// Mean-shift bandwidth, ns.
    pub radius: f64,
    /// DBSCAN neighbourhood radius, ns.
    pub epsilon: f64,
    /// DBSCAN core threshold; the point itself counts.
    pub minpoints: usize,
    pub linkage: Linkage,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::KMeans,
            k: 4,
            radius: 0.4,
            epsilon: 0.2,
            minpoints: 4,
            linkage: Linkage::Average,
            seed: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self, n: usize) -> Result<(), ClusterError> {
        match self.algorithm {
            Algorithm::Hierarchical | Algorithm::KMeans => {
                if self.k == 0 || self.k > n {
                    return Err(ClusterError::Parameter(format!(
                        "k = {} must be in 1..={n}",
                        self.k
                    )));
                }
            }
            Algorithm::MeanShift => {
                if !(self.radius > 0.0) || !self.radius.is_finite() {
                    return Err(ClusterError::Parameter(format!(
                        "radius {} must be positive",
                        self.radius
                    )));
                }
            }
            Algorithm::Dbscan => {
                if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
                    return Err(ClusterError::Parameter(format!(
                        "epsilon {} must be positive",
                        self.epsilon
                    )));
                }
                if self.minpoints == 0 {
                    return Err(ClusterError::Parameter("minpoints must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// MAC-to-cluster map with per-cluster statistics. Cluster indices are ordered by
/// descending mean slack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub rows: usize,
    pub cols: usize,
    /// Cluster index per MAC, row-major.
    pub cluster_of: Vec<usize>,
    pub mean_slack: Vec<f64>,
    pub min_slack: Vec<f64>,
    pub size: Vec<usize>,
    /// DBSCAN outliers before they were folded into the lowest-slack cluster.
    pub noise: Vec<MacId>,
    pub warnings: Vec<String>,
}

impl ClusterAssignment {
    /// Builds an assignment from arbitrary integer labels, one per MAC in row-major order.
    pub fn from_labels(table: &MacSlackTable, labels: &[usize]) -> Self {
        assert_eq!(labels.len(), table.len(), "one label per MAC");
        let slacks = table.slacks();
        // label -> (sum, count, min, first member)
        let mut stats: HashMap<usize, (f64, usize, f64, usize)> = HashMap::new();
        for (i, (&l, &s)) in labels.iter().zip(slacks).enumerate() {
            let e = stats.entry(l).or_insert((0.0, 0, f64::INFINITY, i));
            e.0 += s;
            e.1 += 1;
            e.2 = e.2.min(s);
        }
        let mut order: Vec<(usize, f64, f64, usize, usize)> = stats
            .into_iter()
            .map(|(l, (sum, n, min, first))| (l, sum / n as f64, min, n, first))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.4.cmp(&b.4)));
        let remap: HashMap<usize, usize> =
            order.iter().enumerate().map(|(new, o)| (o.0, new)).collect();
        Self {
            rows: table.rows(),
            cols: table.cols(),
            cluster_of: labels.iter().map(|l| remap[l]).collect(),
            mean_slack: order.iter().map(|o| o.1).collect(),
            min_slack: order.iter().map(|o| o.2).collect(),
            size: order.iter().map(|o| o.3).collect(),
            noise: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.size.len()
    }

    pub fn cluster(&self, mac: MacId) -> usize {
        self.cluster_of[mac.row * self.cols + mac.col]
    }

    /// MACs of one cluster in row-major order.
    pub fn members(&self, cluster: usize) -> Vec<MacId> {
        self.cluster_of
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| MacId::new(i / self.cols, i % self.cols))
            .collect()
    }

    /// `row,col,min_slack_ns,cluster` with a header line.
    pub fn to_delimited(&self, table: &MacSlackTable) -> String {
        let mut out = String::from("row,col,min_slack_ns,cluster\n");
        for (i, c) in self.cluster_of.iter().enumerate() {
            let m = table.mac_at(i);
            out.push_str(&format!("{},{},{},{}\n", m.row, m.col, table.min_slack(m), c));
        }
        out
    }

    /// Reads the export format back into a slack table and an assignment.
    pub fn from_delimited(text: &str) -> Result<(MacSlackTable, Self), ClusterError> {
        let mut rows_seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("row,") {
                continue;
            }
            let err = |reason: &str| ClusterError::Format {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err("expected row,col,min_slack_ns,cluster"));
            }
            rows_seen.push((
                f[0].parse::<usize>().map_err(|_| err("bad row"))?,
                f[1].parse::<usize>().map_err(|_| err("bad col"))?,
                f[2].parse::<f64>().map_err(|_| err("bad slack"))?,
                f[3].parse::<usize>().map_err(|_| err("bad cluster"))?,
            ));
        }
        let table_text: String = std::iter::once("row,col,min_slack_ns,path_count\n".to_string())
            .chain(rows_seen.iter().map(|(r, c, s, _)| format!("{r},{c},{s},1\n")))
            .collect();
        let table = MacSlackTable::from_delimited(&table_text).map_err(|e| ClusterError::Format {
            line: 0,
            reason: e.to_string(),
        })?;
        let mut labels = vec![0; table.len()];
        for (r, c, _, l) in rows_seen {
            labels[r * table.cols() + c] = l;
        }
        Ok((table.clone(), Self::from_labels(&table, &labels)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Node ids: `0..n` are MACs in row-major order, `n + s` is the node built by merge `s`.
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// `left,right,distance_ns` with a header line.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("left,right,distance_ns\n");
        for m in &self.merges {
            out.push_str(&format!("{},{},{}\n", m.left, m.right, m.distance));
        }
        out
    }

    /// Flat labels after applying the first `n - k` merges.
    pub fn cut(&self, n: usize, k: usize) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, m) in self.merges.iter().take(n.saturating_sub(k)).enumerate() {
            let node = n + s;
            let a = find(&mut parent, m.left);
            let b = find(&mut parent, m.right);
            parent[a] = node;
            parent[b] = node;
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub assignment: ClusterAssignment,
    pub dendrogram: Option<Dendrogram>,
}

/// Runs the algorithm selected in `params`.
pub fn run(table: &MacSlackTable, params: &ClusterParams) -> Result<ClusterOutcome, ClusterError> {
    params.validate(table.len())?;
    Ok(match params.algorithm {
        Algorithm::Hierarchical => {
            let (assignment, dendrogram) = cluster_hierarchical(table, params.k, params.linkage)?;
            ClusterOutcome {
                assignment,
                dendrogram: Some(dendrogram),
            }
        }
        Algorithm::KMeans => ClusterOutcome {
            assignment: cluster_kmeans(table, params.k, params.seed)?,
            dendrogram: None,
        },
        Algorithm::MeanShift => ClusterOutcome {
            assignment: cluster_meanshift(table, params.radius)?,
            dendrogram: None,
        },
        Algorithm::Dbscan => ClusterOutcome {
            assignment: cluster_dbscan(table, params.epsilon, params.minpoints)?,
            dendrogram: None,
        },
    })
}

/// Agglomerative clustering with Lance-Williams distance updates, O(n^3).
///
/// Each active cluster lives in the slot of its lowest-index member; ties between equal
/// distances go to the lexicographically first slot pair.
pub fn cluster_hierarchical(
    table: &MacSlackTable,
    k: usize,
    linkage: Linkage,
) -> Result<(ClusterAssignment, Dendrogram), ClusterError> {
    let x = table.slacks();
    let n = x.len();
    if k == 0 || k > n {
        return Err(ClusterError::Parameter(format!("k = {k} must be in 1..={n}")));
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = (x[i] - x[j]).abs();
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if active[b] && dist[a * n + b] < best.2 {
                    best = (a, b, dist[a * n + b]);
                }
            }
        }
        let (a, b, d) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let (da, db) = (dist[c * n + a], dist[c * n + b]);
            let updated = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (na * da + nb * db) / (na + nb),
            };
            dist[c * n + a] = updated;
            dist[a * n + c] = updated;
        }
        merges.push(Merge {
            left: node[a].min(node[b]),
            right: node[a].max(node[b]),
            distance: d,
            size: size[a] + size[b],
        });
        active[b] = false;
        size[a] += size[b];
        node[a] = n + step;
    }

    let dendrogram = Dendrogram { merges };
    let labels = dendrogram.cut(n, k);
    Ok((ClusterAssignment::from_labels(table, &labels), dendrogram))
}

const KMEANS_TOLERANCE_NS: f64 = 1e-9;
const KMEANS_MAX_ITER: usize = 300;

/// Globally optimal 1-D k-means.
///
/// Optimal clusters are contiguous runs of the sorted distinct values, so the best
/// segmentation is found exactly by dynamic programming; Lloyd iterations then start from
/// the optimal centres, which only matters when a value sits exactly halfway between two
/// centres (`seed` decides those). Asking for more clusters than distinct values reduces
/// `k` with a warning.
pub fn cluster_kmeans(
    table: &MacSlackTable,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    let prep = KMeansInput::new(table, k)?;
    let centers = optimal_centers(&prep.distinct, &prep.weight, prep.k);
    let labels = lloyd(table.slacks(), centers, seed, &prep.rank);
    Ok(prep.finish(table, labels))
}

/// Plain Lloyd's algorithm from `k` evenly spaced quantiles of the distinct slack values.
/// Converges to a local optimum only; kept for comparison with [`cluster_kmeans`].
pub fn cluster_kmeans_lloyd(
    table: &MacSlackTable,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    let prep = KMeansInput::new(table, k)?;
    let m = prep.distinct.len();
    let centers = (0..prep.k)
        .map(|i| prep.distinct[(2 * i + 1) * m / (2 * prep.k)])
        .collect();
    let labels = lloyd(table.slacks(), centers, seed, &prep.rank);
    Ok(prep.finish(table, labels))
}

struct KMeansInput {
    k: usize,
    distinct: Vec<f64>,
    weight: Vec<usize>,
    /// Position of each value in `distinct`.
    rank: Vec<u64>,
    warnings: Vec<String>,
}

impl KMeansInput {
    fn new(table: &MacSlackTable, k: usize) -> Result<Self, ClusterError> {
        let x = table.slacks();
        let n = x.len();
        if k == 0 || k > n {
            return Err(ClusterError::Parameter(format!("k = {k} must be in 1..={n}")));
        }
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut warnings = Vec::new();
        let k = if k > distinct.len() {
            warnings.push(format!(
                "k = {k} exceeds the {} distinct slack values; using k = {}",
                distinct.len(),
                distinct.len()
            ));
            distinct.len()
        } else {
            k
        };
        let rank: Vec<u64> = x
            .iter()
            .map(|v| distinct.partition_point(|d| d < v) as u64)
            .collect();
        let mut weight = vec![0usize; distinct.len()];
        for &r in &rank {
            weight[r as usize] += 1;
        }
        Ok(Self {
            k,
            distinct,
            weight,
            rank,
            warnings,
        })
    }

    fn finish(mut self, table: &MacSlackTable, labels: Vec<usize>) -> ClusterAssignment {
        let mut out = ClusterAssignment::from_labels(table, &labels);
        if out.num_clusters() < self.k {
            self.warnings.push(format!(
                "{} of {} centres ended empty",
                self.k - out.num_clusters(),
                self.k
            ));
        }
        out.warnings = self.warnings;
        out
    }
}

/// Centres of the minimum sum-of-squares segmentation of sorted, weighted values into `k` runs.
///
/// Row `c` of the table holds the best cost of covering the first `j` values with `c` runs.
/// The optimal split point is monotone in `j`, so each row is filled by divide and conquer.
fn optimal_centers(v: &[f64], w: &[usize], k: usize) -> Vec<f64> {
    let m = v.len();
    let mut s0 = vec![0.0; m + 1];
    let mut s1 = vec![0.0; m + 1];
    let mut s2 = vec![0.0; m + 1];
    for i in 0..m {
        let wi = w[i] as f64;
        s0[i + 1] = s0[i] + wi;
        s1[i + 1] = s1[i] + wi * v[i];
        s2[i + 1] = s2[i] + wi * v[i] * v[i];
    }
    // sum of squares of values i..j around their mean
    let cost = |i: usize, j: usize| {
        let cnt = s0[j] - s0[i];
        let sum = s1[j] - s1[i];
        (s2[j] - s2[i] - sum * sum / cnt).max(0.0)
    };

    let mut prev: Vec<f64> = (0..=m).map(|j| if j == 0 { 0.0 } else { cost(0, j) }).collect();
    let mut split = vec![vec![0usize; m + 1]; k + 1];
    for c in 2..=k {
        let mut cur = vec![f64::INFINITY; m + 1];
        let mut arg = vec![0usize; m + 1];
        fill_row(c, m, c - 1, m - 1, &prev, &mut cur, &mut arg, &cost);
        prev = cur;
        split[c] = arg;
    }

    let mut bounds = vec![m];
    let mut j = m;
    for c in (2..=k).rev() {
        j = split[c][j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();
    bounds
        .windows(2)
        .map(|b| (s1[b[1]] - s1[b[0]]) / (s0[b[1]] - s0[b[0]]))
        .collect()
}

/// Fills `cur[lo..=hi]` knowing the optimal split for that range lies in `opt_lo..=opt_hi`.
#[allow(clippy::too_many_arguments)]
fn fill_row(
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    cost: &dyn Fn(usize, usize) -> f64,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo);
    for i in opt_lo..=opt_hi.min(mid - 1) {
        let val = prev[i] + cost(i, mid);
        if val < best.0 {
            best = (val, i);
        }
    }
    cur[mid] = best.0;
    arg[mid] = best.1;
    if mid > lo {
        fill_row(lo, mid - 1, opt_lo, best.1, prev, cur, arg, cost);
    }
    fill_row(mid + 1, hi, best.1, opt_hi, prev, cur, arg, cost);
}

/// Runs Lloyd iterations until centres move less than 1e-9 ns or 300 iterations pass.
fn lloyd(x: &[f64], mut centers: Vec<f64>, seed: u64, rank: &[u64]) -> Vec<usize> {
    let (n, k) = (x.len(), centers.len());
    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        for i in 0..n {
            labels[i] = nearest_center(&centers, x[i], seed, rank[i]);
        }
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for i in 0..n {
            sum[labels[i]] += x[i];
            count[labels[i]] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if count[c] > 0 {
                let next = sum[c] / count[c] as f64;
                shift = shift.max((next - centers[c]).abs());
                centers[c] = next;
            }
        }
        if shift < KMEANS_TOLERANCE_NS {
            break;
        }
    }
    for i in 0..n {
        labels[i] = nearest_center(&centers, x[i], seed, rank[i]);
    }
    labels
}

fn nearest_center(centers: &[f64], v: f64, seed: u64, rank: u64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &ctr) in centers.iter().enumerate() {
        let d = (v - ctr).abs();
        if d < best_d {
            best = c;
            best_d = d;
        } else if d == best_d
            && splitmix64(seed ^ rank.wrapping_mul(0x9E37_79B9_7F4A_7C15)) & 1 == 1
        {
            best = c;
        }
    }
    best
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MEANSHIFT_TOLERANCE_NS: f64 = 1e-6;
const MEANSHIFT_MAX_ITER: usize = 1000;

/// Flat-kernel mean shift. Every point climbs to the mean of its `radius` window until the
/// shift drops below 1e-6 ns; sorted modes closer than `radius / 2` are merged.
pub fn cluster_meanshift(
    table: &MacSlackTable,
    radius: f64,
) -> Result<ClusterAssignment, ClusterError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(ClusterError::Parameter(format!("radius {radius} must be positive")));
    }
    let x = table.slacks();
    let modes = meanshift_modes(x, radius);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| modes[a].total_cmp(&modes[b]).then(a.cmp(&b)));
    let mut labels = vec![0usize; x.len()];
    let mut label = 0;
    for w in 0..order.len() {
        if w > 0 && modes[order[w]] - modes[order[w - 1]] > radius / 2.0 {
            label += 1;
        }
        labels[order[w]] = label;
    }
    Ok(ClusterAssignment::from_labels(table, &labels))
}

/// Converged flat-kernel mode for every point.
pub fn meanshift_modes(x: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    x.iter()
        .map(|&start| {
            let mut y = start;
            for _ in 0..MEANSHIFT_MAX_ITER {
                let lo = sorted.partition_point(|&v| y - v > radius);
                let hi = sorted.partition_point(|&v| v - y <= radius);
                if lo >= hi {
                    break;
                }
                let next = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
                let shift = (next - y).abs();
                y = next;
                if shift < MEANSHIFT_TOLERANCE_NS {
                    break;
                }
            }
            y
        })
        .collect()
}

/// Density clustering on the sorted slack line.
///
/// A point is core when at least `minpoints` values (itself included) lie within `epsilon`.
/// Border points shared by two clusters join the one whose lowest-index core point comes
/// first, which is what an index-order scan would produce. Noise is recorded in
/// [`ClusterAssignment::noise`] and then folded into the cluster with the lowest mean slack.
pub fn cluster_dbscan(
    table: &MacSlackTable,
    epsilon: f64,
    minpoints: usize,
) -> Result<ClusterAssignment, ClusterError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(ClusterError::Parameter(format!("epsilon {epsilon} must be positive")));
    }
    if minpoints == 0 {
        return Err(ClusterError::Parameter("minpoints must be at least 1".into()));
    }
    let labels = dbscan_labels(table.slacks(), epsilon, minpoints);
    let Some(max_label) = labels.iter().flatten().max().copied() else {
        return Err(ClusterError::NoCorePoints);
    };
    let x = table.slacks();
    let mut sum = vec![0.0; max_label + 1];
    let mut count = vec![0usize; max_label + 1];
    for (l, v) in labels.iter().zip(x) {
        if let Some(l) = l {
            sum[*l] += v;
            count[*l] += 1;
        }
    }
    let lowest = (0..=max_label)
        .min_by(|&a, &b| {
            (sum[a] / count[a] as f64)
                .total_cmp(&(sum[b] / count[b] as f64))
                .then(a.cmp(&b))
        })
        .unwrap();
    let noise: Vec<MacId> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| table.mac_at(i))
        .collect();
    let flat: Vec<usize> = labels.iter().map(|l| l.unwrap_or(lowest)).collect();
    let mut out = ClusterAssignment::from_labels(table, &flat);
    out.noise = noise;
    Ok(out)
}

/// Raw DBSCAN labels, `None` for noise. Labels are numbered in cluster discovery order.
pub fn dbscan_labels(x: &[f64], epsilon: f64, minpoints: usize) -> Vec<Option<usize>> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    let window = |v: f64| {
        let lo = sorted.partition_point(|&s| v - s > epsilon);
        let hi = sorted.partition_point(|&s| s - v <= epsilon);
        (lo, hi)
    };
    let is_core: Vec<bool> = sorted
        .iter()
        .map(|&v| {
            let (lo, hi) = window(v);
            hi - lo >= minpoints
        })
        .collect();

    // Runs of consecutive cores no more than epsilon apart form one component.
    let mut component = vec![usize::MAX; n];
    let mut first_core: Vec<usize> = Vec::new();
    let mut prev_core: Option<usize> = None;
    for p in 0..n {
        if !is_core[p] {
            continue;
        }
        let joins = prev_core.is_some_and(|q| sorted[p] - sorted[q] <= epsilon);
        if !joins {
            first_core.push(usize::MAX);
        }
        let c = first_core.len() - 1;
        component[p] = c;
        first_core[c] = first_core[c].min(order[p]);
        prev_core = Some(p);
    }

    // Discovery order of a component is the index of its first core point.
    let mut by_discovery: Vec<usize> = (0..first_core.len()).collect();
    by_discovery.sort_by_key(|&c| first_core[c]);
    let mut rank = vec![0; first_core.len()];
    for (r, &c) in by_discovery.iter().enumerate() {
        rank[c] = r;
    }

    let mut labels = vec![None; n];
    let mut left_core: Option<usize> = None;
    let mut nearest_left = vec![None; n];
    for p in 0..n {
        if is_core[p] {
            left_core = Some(p);
        }
        nearest_left[p] = left_core;
    }
    let mut right_core: Option<usize> = None;
    for p in (0..n).rev() {
        if is_core[p] {
            right_core = Some(p);
            labels[order[p]] = Some(rank[component[p]]);
            continue;
        }
        let mut best: Option<usize> = None;
        for q in [nearest_left[p], right_core].into_iter().flatten() {
            if (sorted[p] - sorted[q]).abs() <= epsilon {
                let r = rank[component[q]];
                best = Some(best.map_or(r, |b: usize| b.min(r)));
            }
        }
        labels[order[p]] = best;
    }
    labels
}

/// Cluster-quality summary for comparing algorithms on the same table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterQuality {
    /// Mean silhouette coefficient, `None` with a single cluster.
    pub silhouette: Option<f64>,
    /// Mean absolute deviation of slack from its cluster mean, ns.
    pub within_spread: f64,
    /// Smallest gap between adjacent cluster means, ns; `None` with a single cluster.
    pub between_gap: Option<f64>,
}

pub fn cluster_quality(table: &MacSlackTable, assignment: &ClusterAssignment) -> ClusterQuality {
    let x = table.slacks();
    let n = x.len();
    let p = assignment.num_clusters();
    let within = x
        .iter()
        .zip(&assignment.cluster_of)
        .map(|(v, &c)| (v - assignment.mean_slack[c]).abs())
        .sum::<f64>()
        / n as f64;
    if p < 2 {
        return ClusterQuality {
            silhouette: None,
            within_spread: within,
            between_gap: None,
        };
    }
    let gap = assignment
        .mean_slack
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for i in 0..n {
        let ci = assignment.cluster_of[i];
        let mut sums = vec![0.0; p];
        for j in 0..n {
            if i != j {
                sums[assignment.cluster_of[j]] += (x[i] - x[j]).abs();
            }
        }
        if assignment.size[ci] == 1 {
            continue;
        }
        let a = sums[ci] / (assignment.size[ci] - 1) as f64;
        let b = (0..p)
            .filter(|&c| c != ci)
            .map(|c| sums[c] / assignment.size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    ClusterQuality {
        silhouette: Some(total / n as f64),
        within_spread: within,
        between_gap: Some(gap),
    }
}
