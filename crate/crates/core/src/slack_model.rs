//! Per-MAC minimum slack tables.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::report_ingest::{attribute_paths, MacId, TimingPath};

#[derive(Debug, Error, PartialEq)]
pub enum SlackError {
    #[error("array dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyArray { rows: usize, cols: usize },
    #[error("no MAC coverage: none of the {0} paths ends inside a MAC")]
    NoCoverage(usize),
    #[error("path {path:?} ends in MAC {mac}, outside the {rows}x{cols} array")]
    OutOfGrid {
        path: String,
        mac: MacId,
        rows: usize,
        cols: usize,
    },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Minimum slack of every MAC in a `rows x cols` array, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MacSlackTable {
    rows: usize,
    cols: usize,
    min_slack: Vec<f64>,
    path_count: Vec<usize>,
}

impl MacSlackTable {
    pub fn new(
        rows: usize,
        cols: usize,
        min_slack: Vec<f64>,
        path_count: Vec<usize>,
    ) -> Result<Self, SlackError> {
        if rows == 0 || cols == 0 {
            return Err(SlackError::EmptyArray { rows, cols });
        }
        if min_slack.len() != rows * cols || path_count.len() != rows * cols {
            return Err(SlackError::Parameter(format!(
                "expected {} entries, got {} slacks and {} counts",
                rows * cols,
                min_slack.len(),
                path_count.len()
            )));
        }
        if let Some(bad) = min_slack.iter().find(|v| !v.is_finite()) {
            return Err(SlackError::Parameter(format!("non-finite slack {bad}")));
        }
        Ok(Self {
            rows,
            cols,
            min_slack,
            path_count,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, mac: MacId) -> usize {
        debug_assert!(mac.row < self.rows && mac.col < self.cols);
        mac.row * self.cols + mac.col
    }

    pub fn mac_at(&self, index: usize) -> MacId {
        MacId::new(index / self.cols, index % self.cols)
    }

    pub fn min_slack(&self, mac: MacId) -> f64 {
        self.min_slack[self.index(mac)]
    }

    pub fn path_count(&self, mac: MacId) -> usize {
        self.path_count[self.index(mac)]
    }

    /// Slack values in row-major MAC order.
    pub fn slacks(&self) -> &[f64] {
        &self.min_slack
    }

    pub fn macs(&self) -> impl Iterator<Item = MacId> + '_ {
        (0..self.len()).map(|i| self.mac_at(i))
    }

    /// MACs that had no attributed path.
    pub fn uncovered(&self) -> Vec<MacId> {
        self.macs().filter(|&m| self.path_count(m) == 0).collect()
    }

    pub fn global_min(&self) -> f64 {
        self.min_slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fills MACs without paths from `fallback`, which must have the same shape.
    pub fn complete_with(&self, fallback: &MacSlackTable) -> Result<MacSlackTable, SlackError> {
        if fallback.rows != self.rows || fallback.cols != self.cols {
            return Err(SlackError::Parameter(format!(
                "completion table is {}x{}, expected {}x{}",
                fallback.rows, fallback.cols, self.rows, self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.len() {
            if out.path_count[i] == 0 {
                out.min_slack[i] = fallback.min_slack[i];
                out.path_count[i] = fallback.path_count[i];
            }
        }
        Ok(out)
    }

    /// `row,col,min_slack_ns,path_count` with a header line.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("row,col,min_slack_ns,path_count\n");
        for m in self.macs() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.row,
                m.col,
                self.min_slack(m),
                self.path_count(m)
            ));
        }
        out
    }

    /// Parses the export format. Every MAC of the bounding array must appear exactly once.
    pub fn from_delimited(text: &str) -> Result<Self, SlackError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with("row,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let fmt_err = |reason: &str| SlackError::Format {
                line: lineno,
                reason: reason.to_string(),
            };
            if f.len() != 4 {
                return Err(fmt_err("expected row,col,min_slack_ns,path_count"));
            }
            let row: usize = f[0].parse().map_err(|_| fmt_err("bad row"))?;
            let col: usize = f[1].parse().map_err(|_| fmt_err("bad col"))?;
            let slack: f64 = f[2].parse().map_err(|_| fmt_err("bad slack"))?;
            let count: usize = f[3].parse().map_err(|_| fmt_err("bad path count"))?;
            entries.push((lineno, row, col, slack, count));
        }
        if entries.is_empty() {
            return Err(SlackError::Format {
                line: 0,
                reason: "no entries".into(),
            });
        }
        let rows = entries.iter().map(|e| e.1).max().unwrap() + 1;
        let cols = entries.iter().map(|e| e.2).max().unwrap() + 1;
        let mut slack = vec![f64::NAN; rows * cols];
        let mut counts = vec![0; rows * cols];
        for (line, r, c, s, n) in entries {
            let i = r * cols + c;
            if !slack[i].is_nan() {
                return Err(SlackError::Format {
                    line,
                    reason: format!("duplicate MAC ({r},{c})"),
                });
            }
            slack[i] = s;
            counts[i] = n;
        }
        if let Some(i) = slack.iter().position(|v| v.is_nan()) {
            return Err(SlackError::Format {
                line: 0,
                reason: format!("MAC ({},{}) missing", i / cols, i % cols),
            });
        }
        Self::new(rows, cols, slack, counts)
    }
}

/// Result of reducing paths to per-MAC minima.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackIngest {
    pub table: MacSlackTable,
    /// Indices into the input path list of paths not owned by any MAC.
    pub unattributed: Vec<usize>,
    /// MACs with no attributed path; they carry the global minimum slack.
    pub uncovered: Vec<MacId>,
}

pub fn min_slack_per_mac(
    paths: &[TimingPath],
    rows: usize,
    cols: usize,
) -> Result<SlackIngest, SlackError> {
    if rows == 0 || cols == 0 {
        return Err(SlackError::EmptyArray { rows, cols });
    }
    let attribution = attribute_paths(paths);
    let mut min = vec![f64::INFINITY; rows * cols];
    let mut count = vec![0usize; rows * cols];
    for (path, owner) in paths.iter().zip(&attribution.owner) {
        let Some(mac) = owner else { continue };
        if mac.row >= rows || mac.col >= cols {
            return Err(SlackError::OutOfGrid {
                path: path.name.clone(),
                mac: *mac,
                rows,
                cols,
            });
        }
        let i = mac.row * cols + mac.col;
        min[i] = min[i].min(path.slack);
        count[i] += 1;
    }
    if count.iter().all(|&c| c == 0) {
        return Err(SlackError::NoCoverage(paths.len()));
    }
    let global = min.iter().copied().fold(f64::INFINITY, f64::min);
    let mut uncovered = Vec::new();
    for (i, v) in min.iter_mut().enumerate() {
        if count[i] == 0 {
            *v = global;
            uncovered.push(MacId::new(i / cols, i % cols));
        }
    }
    Ok(SlackIngest {
        table: MacSlackTable::new(rows, cols, min, count)?,
        unattributed: attribution.unattributed,
        uncovered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackProfile {
    /// Slack strictly decreasing with row index; columns jitter inside a per-row band.
    RowGradient,
    /// Independent uniform draws over the band.
    Uniform,
    /// Row gradient plus Gaussian noise, clipped to the band; rows may overlap.
    NoisyGradient,
}

impl SlackProfile {
    pub const NAMES: [&'static str; 3] = ["row_gradient", "uniform", "noisy_gradient"];
}

impl FromStr for SlackProfile {
    type Err = SlackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row_gradient" => Ok(SlackProfile::RowGradient),
            "uniform" => Ok(SlackProfile::Uniform),
            "noisy_gradient" => Ok(SlackProfile::NoisyGradient),
            other => Err(SlackError::Parameter(format!(
                "unknown slack profile {other:?}; valid: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for SlackProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SlackProfile::RowGradient => "row_gradient",
            SlackProfile::Uniform => "uniform",
            SlackProfile::NoisyGradient => "noisy_gradient",
        };
        f.write_str(name)
    }
}

/// Generates a synthetic slack table with values in `[lo, hi]` ns.
pub fn synthesize_slack_table(
    rows: usize,
    cols: usize,
    profile: SlackProfile,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<MacSlackTable, SlackError> {
    if rows == 0 || cols == 0 {
        return Err(SlackError::EmptyArray { rows, cols });
    }
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(SlackError::Parameter(format!(
            "slack band [{lo}, {hi}] is empty"
        )));
    }
    if profile != SlackProfile::Uniform && lo == hi && rows > 1 {
        return Err(SlackError::Parameter(format!(
            "{profile} needs lo < hi to separate {rows} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = hi - lo;
    let row_width = band / rows as f64;
    let noise = Normal::new(0.0, 0.75 * row_width.max(f64::MIN_POSITIVE))
        .map_err(|e| SlackError::Parameter(e.to_string()))?;
    let mut slack = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for _ in 0..cols {
            let v = match profile {
                SlackProfile::Uniform => lo + band * rng.random::<f64>(),
                // Each row lives in the top half of its own band slot, so every value of
                // row r exceeds every value of row r + 1.
                SlackProfile::RowGradient => {
                    hi - r as f64 * row_width - 0.5 * row_width * rng.random::<f64>()
                }
                SlackProfile::NoisyGradient => {
                    let centre = hi - (r as f64 + 0.5) * row_width;
                    (centre + noise.sample(&mut rng)).clamp(lo, hi)
                }
            };
            slack.push(v);
        }
    }
    MacSlackTable::new(rows, cols, slack, vec![1; rows * cols])
}
