//! Voltage-island floorplanning on a slice grid and placement-constraint text.
//!
//! Partitions become equal-width vertical bands spanning the full grid height, ordered by
//! partition index from the left. MACs of a partition are packed row-major inside their band,
//! each occupying a `w x h` block of slices anchored at its lower-left slice.
//!
//! Constraint text has one line per island and one per MAC:
//!
//! ```text
//! PBLOCK p0 SLICE_X0Y0:SLICE_X15Y31
//! LOC GEN_REG_I[0].GEN_REG_J[0] SLICE_X0Y0
//! ```

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::clustering::ClusterAssignment;
use crate::report_ingest::{mac_of_endpoint, MacId};

#[derive(Debug, Error, PartialEq)]
pub enum FloorplanError {
    #[error(
        "capacity error: partition {partition} needs {required} slices ({macs} MACs) but its \
         band offers {available} usable slices"
    )]
    Capacity {
        partition: usize,
        macs: usize,
        required: usize,
        available: usize,
    },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceGrid {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub w: usize,
    pub h: usize,
}

/// Inclusive slice rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x_lo: usize,
    pub y_lo: usize,
    pub x_hi: usize,
    pub y_hi: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_lo..=self.x_hi).contains(&x) && (self.y_lo..=self.y_hi).contains(&y)
    }

    pub fn width(&self) -> usize {
        self.x_hi - self.x_lo + 1
    }

    pub fn height(&self) -> usize {
        self.y_hi - self.y_lo + 1
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SLICE_X{}Y{}:SLICE_X{}Y{}",
            self.x_lo, self.y_lo, self.x_hi, self.y_hi
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLayout {
    pub grid: SliceGrid,
    pub footprint: Footprint,
    pub rows: usize,
    pub cols: usize,
    pub islands: Vec<Rect>,
    /// Anchor slice `(x, y)` per MAC, row-major.
    pub mac_loc: Vec<(usize, usize)>,
    /// Partition per MAC, row-major.
    pub mac_partition: Vec<usize>,
}

impl PartitionLayout {
    pub fn loc(&self, mac: MacId) -> (usize, usize) {
        self.mac_loc[mac.row * self.cols + mac.col]
    }

    pub fn partition(&self, mac: MacId) -> usize {
        self.mac_partition[mac.row * self.cols + mac.col]
    }
}

/// Packs each cluster into its own vertical band. Cluster `c` occupies partition `c`.
pub fn plan_layout(
    assignment: &ClusterAssignment,
    grid: SliceGrid,
    footprint: Footprint,
) -> Result<PartitionLayout, FloorplanError> {
    if footprint.w == 0 || footprint.h == 0 {
        return Err(FloorplanError::Parameter("MAC footprint must be at least 1x1".into()));
    }
    let p = assignment.num_clusters();
    let total = assignment.cluster_of.len() * footprint.w * footprint.h;
    if total > grid.width * grid.height {
        return Err(FloorplanError::Capacity {
            partition: 0,
            macs: assignment.cluster_of.len(),
            required: total,
            available: grid.width * grid.height,
        });
    }
    let band = grid.width / p;
    let per_row = band / footprint.w;
    let per_col = grid.height / footprint.h;
    let capacity = per_row * per_col;
    for (c, &size) in assignment.size.iter().enumerate() {
        if size > capacity {
            return Err(FloorplanError::Capacity {
                partition: c,
                macs: size,
                required: size * footprint.w * footprint.h,
                available: capacity * footprint.w * footprint.h,
            });
        }
    }
    let islands: Vec<Rect> = (0..p)
        .map(|k| Rect {
            x_lo: k * band,
            y_lo: 0,
            x_hi: (k + 1) * band - 1,
            y_hi: grid.height - 1,
        })
        .collect();
    let mut mac_loc = vec![(0, 0); assignment.cluster_of.len()];
    let mut next_slot = vec![0usize; p];
    for (i, &c) in assignment.cluster_of.iter().enumerate() {
        let s = next_slot[c];
        next_slot[c] += 1;
        mac_loc[i] = (
            islands[c].x_lo + (s % per_row) * footprint.w,
            islands[c].y_lo + (s / per_row) * footprint.h,
        );
    }
    Ok(PartitionLayout {
        grid,
        footprint,
        rows: assignment.rows,
        cols: assignment.cols,
        islands,
        mac_loc,
        mac_partition: assignment.cluster_of.clone(),
    })
}

pub fn emit_constraints(layout: &PartitionLayout) -> String {
    let mut out = String::new();
    for (k, r) in layout.islands.iter().enumerate() {
        out.push_str(&format!("PBLOCK p{k} {r}\n"));
    }
    for (i, &(x, y)) in layout.mac_loc.iter().enumerate() {
        let mac = MacId::new(i / layout.cols, i % layout.cols);
        out.push_str(&format!("LOC {} SLICE_X{x}Y{y}\n", mac.instance_name()));
    }
    out
}

static PBLOCK_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^PBLOCK p(\d+) SLICE_X(\d+)Y(\d+):SLICE_X(\d+)Y(\d+)$").unwrap()
});
static LOC_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^LOC (\S+) SLICE_X(\d+)Y(\d+)$").unwrap());

/// Rebuilds a layout from constraint text. Grid and footprint are not recorded in the text.
pub fn parse_constraints(
    text: &str,
    grid: SliceGrid,
    footprint: Footprint,
) -> Result<PartitionLayout, FloorplanError> {
    let mut islands: Vec<(usize, Rect)> = Vec::new();
    let mut locs: Vec<(MacId, (usize, usize), usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let num = |s: &str| s.parse::<usize>().unwrap_or(usize::MAX);
        if let Some(c) = PBLOCK_LINE.captures(line) {
            islands.push((
                num(&c[1]),
                Rect {
                    x_lo: num(&c[2]),
                    y_lo: num(&c[3]),
                    x_hi: num(&c[4]),
                    y_hi: num(&c[5]),
                },
            ));
        } else if let Some(c) = LOC_LINE.captures(line) {
            let mac = mac_of_endpoint(&c[1]).map_err(|e| FloorplanError::Format {
                line: lineno,
                reason: e.to_string(),
            })?;
            locs.push((mac, (num(&c[2]), num(&c[3])), lineno));
        } else {
            return Err(FloorplanError::Format {
                line: lineno,
                reason: format!("unrecognised constraint {line:?}"),
            });
        }
    }
    islands.sort_by_key(|(k, _)| *k);
    if islands.iter().enumerate().any(|(i, (k, _))| i != *k) {
        return Err(FloorplanError::Format {
            line: 0,
            reason: "PBLOCK names must be p0..p(n-1)".into(),
        });
    }
    let islands: Vec<Rect> = islands.into_iter().map(|(_, r)| r).collect();
    let rows = locs.iter().map(|l| l.0.row + 1).max().unwrap_or(0);
    let cols = locs.iter().map(|l| l.0.col + 1).max().unwrap_or(0);
    let mut mac_loc = vec![None; rows * cols];
    let mut mac_partition = vec![0; rows * cols];
    for (mac, loc, line) in locs {
        let i = mac.row * cols + mac.col;
        if mac_loc[i].is_some() {
            return Err(FloorplanError::Format {
                line,
                reason: format!("duplicate LOC for {}", mac.instance_name()),
            });
        }
        mac_partition[i] = islands
            .iter()
            .position(|r| r.contains(loc.0, loc.1))
            .ok_or_else(|| FloorplanError::Format {
                line,
                reason: format!("{} placed outside every PBLOCK", mac.instance_name()),
            })?;
        mac_loc[i] = Some(loc);
    }
    let mac_loc = mac_loc
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| FloorplanError::Format {
                line: 0,
                reason: format!("no LOC for MAC ({},{})", i / cols, i % cols),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PartitionLayout {
        grid,
        footprint,
        rows,
        cols,
        islands,
        mac_loc,
        mac_partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slack_model::MacSlackTable;

    fn assignment(rows: usize, cols: usize, labels: &[usize]) -> ClusterAssignment {
        let slacks: Vec<f64> = labels.iter().map(|&l| 10.0 - l as f64).collect();
        let t = MacSlackTable::new(rows, cols, slacks, vec![1; rows * cols]).unwrap();
        ClusterAssignment::from_labels(&t, labels)
    }

    #[test]
    fn four_equal_bands() {
        // Quadrants of a 16x16 array, one cluster each.
        let labels: Vec<usize> = (0..256).map(|i| (i / 16 / 8) * 2 + (i % 16) / 8).collect();
        let a = assignment(16, 16, &labels);
        let layout = plan_layout(
            &a,
            SliceGrid {
                width: 64,
                height: 32,
            },
            Footprint { w: 2, h: 2 },
        )
        .unwrap();
        assert_eq!(layout.islands.len(), 4);
        for (k, r) in layout.islands.iter().enumerate() {
            assert_eq!((r.width(), r.height()), (16, 32));
            assert_eq!(r.x_lo, 16 * k);
        }
        let text = emit_constraints(&layout);
        assert_eq!(text.lines().filter(|l| l.starts_with("PBLOCK")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("LOC")).count(), 256);
        assert!(text.starts_with("PBLOCK p0 SLICE_X0Y0:SLICE_X15Y31\n"));
    }

    #[test]
    fn single_mac() {
        let a = assignment(1, 1, &[0]);
        let layout = plan_layout(
            &a,
            SliceGrid {
                width: 1,
                height: 1,
            },
            Footprint { w: 1, h: 1 },
        )
        .unwrap();
        assert_eq!(layout.mac_loc, vec![(0, 0)]);
        let text = emit_constraints(&layout);
        assert_eq!(
            text,
            "PBLOCK p0 SLICE_X0Y0:SLICE_X0Y0\nLOC GEN_REG_I[0].GEN_REG_J[0] SLICE_X0Y0\n"
        );
    }

    #[test]
    fn capacity_error_reports_slices() {
        let a = assignment(2, 2, &[0, 0, 0, 1]);
        let err = plan_layout(
            &a,
            SliceGrid {
                width: 4,
                height: 1,
            },
            Footprint { w: 1, h: 1 },
        )
        .unwrap_err();
        assert_eq!(
            err,
            FloorplanError::Capacity {
                partition: 0,
                macs: 3,
                required: 3,
                available: 2
            }
        );
        assert!(err.to_string().contains("needs 3 slices"));
    }

    #[test]
    fn total_capacity_checked_first() {
        let a = assignment(2, 2, &[0; 4]);
        assert!(matches!(
            plan_layout(&a, SliceGrid { width: 1, height: 1 }, Footprint { w: 1, h: 1 }),
            Err(FloorplanError::Capacity { required: 4, available: 1, .. })
        ));
    }

    #[test]
    fn parse_rejects_stray_lines() {
        let grid = SliceGrid { width: 1, height: 1 };
        let fp = Footprint { w: 1, h: 1 };
        assert!(matches!(
            parse_constraints("set_property foo\n", grid, fp),
            Err(FloorplanError::Format { line: 1, .. })
        ));
        let outside = "PBLOCK p0 SLICE_X0Y0:SLICE_X0Y0\nLOC GEN_REG_I[0].GEN_REG_J[0] SLICE_X3Y0\n";
        assert!(parse_constraints(outside, grid, fp).is_err());
    }
}
