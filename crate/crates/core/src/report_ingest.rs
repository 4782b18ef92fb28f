//! Synthesis timing-report ingestion.
//!
//! Two layouts are accepted, both with the twelve standard column names in any order:
//!
//! * [`ReportFormat::Delimited`]: comma-separated values, fields trimmed.
//! * [`ReportFormat::Tabular`]: the aligned table printed by synthesis tools. Columns are
//!   separated by tabs, `|` bars, or runs of two or more spaces; single spaces stay inside
//!   a field (`High Fanout`, `Path 1`). Rule lines made only of `-`, `+`, `=` and `|` are skipped.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

/// Header names in canonical order.
pub const COLUMNS: [&str; 12] = [
    "Name",
    "Slack",
    "Levels",
    "High Fanout",
    "From",
    "To",
    "Total Delay",
    "Logic Delay",
    "Net Delay",
    "Requirement",
    "Source Clock",
    "Destination Clock",
];

const SLACK_BUDGET_TOLERANCE_NS: f64 = 0.5;
const DELAY_SPLIT_TOLERANCE_NS: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("schema error: missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: column {column}: cannot parse {value:?} as a number")]
    Parse {
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    Invariant { line: usize, reason: String },
    #[error("no paths")]
    NoPaths,
    #[error("unmapped endpoint: {0}")]
    UnmappedEndpoint(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tabular,
    Delimited,
}

impl ReportFormat {
    /// `.csv` is delimited, anything else (`.rpt`, `.txt`) tabular.
    pub fn from_extension(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Delimited,
            _ => ReportFormat::Tabular,
        }
    }
}

/// One row of a synthesis timing report. Times are in nanoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingPath {
    pub name: String,
    pub slack: f64,
    pub levels: u32,
    pub high_fanout: u32,
    pub from_endpoint: String,
    pub to_endpoint: String,
    pub total_delay: f64,
    pub logic_delay: f64,
    pub net_delay: f64,
    pub requirement: f64,
    pub source_clock: String,
    pub destination_clock: String,
}

impl TimingPath {
    /// Checks the timing-budget invariants of a single row.
    pub fn check(&self) -> Result<(), String> {
        if !(self.requirement > 0.0) {
            return Err(format!("requirement {} must be positive", self.requirement));
        }
        if self.slack + self.total_delay > self.requirement + SLACK_BUDGET_TOLERANCE_NS {
            return Err(format!(
                "slack {} + total delay {} exceeds requirement {}",
                self.slack, self.total_delay, self.requirement
            ));
        }
        if self.total_delay < self.logic_delay || self.total_delay < self.net_delay {
            return Err(format!(
                "total delay {} is smaller than a component delay",
                self.total_delay
            ));
        }
        if (self.logic_delay + self.net_delay - self.total_delay).abs()
            > DELAY_SPLIT_TOLERANCE_NS + 1e-9
        {
            return Err(format!(
                "logic {} + net {} does not add up to total {}",
                self.logic_delay, self.net_delay, self.total_delay
            ));
        }
        Ok(())
    }
}

/// Coordinates of a MAC in the systolic array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacId {
    pub row: usize,
    pub col: usize,
}

impl MacId {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Generate-loop instance name, `GEN_REG_I[i].GEN_REG_J[j]`.
    pub fn instance_name(&self) -> String {
        format!("GEN_REG_I[{}].GEN_REG_J[{}]", self.row, self.col)
    }
}

impl fmt::Display for MacId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

static MAC_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"GEN_REG_I\[(\d+)\]\.GEN_REG_J\[(\d+)\]").unwrap());

/// Extracts the MAC coordinates embedded in a hierarchical endpoint name.
pub fn mac_of_endpoint(endpoint: &str) -> Result<MacId, IngestError> {
    let unmapped = || IngestError::UnmappedEndpoint(endpoint.to_string());
    let caps = MAC_PATTERN.captures(endpoint).ok_or_else(unmapped)?;
    let row = caps[1].parse().map_err(|_| unmapped())?;
    let col = caps[2].parse().map_err(|_| unmapped())?;
    Ok(MacId { row, col })
}

/// Per-path MAC ownership, keyed on the capturing ("To") endpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Attribution {
    pub owner: Vec<Option<MacId>>,
    /// Indices of paths whose "To" endpoint is not inside a MAC.
    pub unattributed: Vec<usize>,
}

pub fn attribute_paths(paths: &[TimingPath]) -> Attribution {
    let mut out = Attribution::default();
    for (idx, p) in paths.iter().enumerate() {
        match mac_of_endpoint(&p.to_endpoint) {
            Ok(m) => out.owner.push(Some(m)),
            Err(_) => {
                out.owner.push(None);
                out.unattributed.push(idx);
            }
        }
    }
    out
}

pub fn parse_timing_report(
    source: &str,
    format: ReportFormat,
) -> Result<Vec<TimingPath>, IngestError> {
    let rows = match format {
        ReportFormat::Delimited => split_delimited(source)?,
        ReportFormat::Tabular => split_tabular(source),
    };
    let mut rows = rows.into_iter();
    let Some((_, header)) = rows.next() else {
        return Err(IngestError::NoPaths);
    };
    let index = column_index(&header)?;
    let mut paths = Vec::new();
    for (line, fields) in rows {
        if fields.len() != header.len() {
            return Err(IngestError::FieldCount {
                line,
                expected: header.len(),
                found: fields.len(),
            });
        }
        let path = build_path(&fields, &index, line)?;
        path.check()
            .map_err(|reason| IngestError::Invariant { line, reason })?;
        paths.push(path);
    }
    if paths.is_empty() {
        return Err(IngestError::NoPaths);
    }
    Ok(paths)
}

/// Writes paths in the delimited format with the canonical column order.
pub fn write_delimited(paths: &[TimingPath]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for p in paths {
        w.write_record([
            p.name.clone(),
            p.slack.to_string(),
            p.levels.to_string(),
            p.high_fanout.to_string(),
            p.from_endpoint.clone(),
            p.to_endpoint.clone(),
            p.total_delay.to_string(),
            p.logic_delay.to_string(),
            p.net_delay.to_string(),
            p.requirement.to_string(),
            p.source_clock.clone(),
            p.destination_clock.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

type Row = (usize, Vec<String>);

fn split_delimited(source: &str) -> Result<Vec<Row>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

static TABULAR_SEPARATOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\t+|\s*\|\s*| {2,}").unwrap());

fn split_tabular(source: &str) -> Vec<Row> {
    let mut rows = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || is_rule(line) {
            continue;
        }
        let line = line.trim_matches('|').trim();
        let fields: Vec<String> = TABULAR_SEPARATOR
            .split(line)
            .map(|f| f.trim().to_string())
            .collect();
        rows.push((idx + 1, fields));
    }
    rows
}

fn is_rule(line: &str) -> bool {
    line.chars().all(|c| matches!(c, '-' | '+' | '=' | '|' | ' '))
}

struct ColumnIndex([usize; 12]);

fn column_index(header: &[String]) -> Result<ColumnIndex, IngestError> {
    let mut idx = [0usize; 12];
    for (slot, name) in COLUMNS.iter().enumerate() {
        idx[slot] = header
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))?;
    }
    Ok(ColumnIndex(idx))
}

fn build_path(
    fields: &[String],
    index: &ColumnIndex,
    line: usize,
) -> Result<TimingPath, IngestError> {
    let text = |slot: usize| fields[index.0[slot]].clone();
    let num = |slot: usize| -> Result<f64, IngestError> {
        let raw = &fields[index.0[slot]];
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IngestError::Parse {
                line,
                column: COLUMNS[slot],
                value: raw.clone(),
            })
    };
    let count = |slot: usize| -> Result<u32, IngestError> {
        let raw = &fields[index.0[slot]];
        raw.parse::<u32>().map_err(|_| IngestError::Parse {
            line,
            column: COLUMNS[slot],
            value: raw.clone(),
        })
    };
    Ok(TimingPath {
        name: text(0),
        slack: num(1)?,
        levels: count(2)?,
        high_fanout: count(3)?,
        from_endpoint: text(4),
        to_endpoint: text(5),
        total_delay: num(6)?,
        logic_delay: num(7)?,
        net_delay: num(8)?,
        requirement: num(9)?,
        source_clock: text(10),
        destination_clock: text(11),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Name, Slack, Levels, High Fanout, From, To, Total Delay, Logic Delay, Net Delay, Requirement, Source Clock, Destination Clock";
    const PATH1: &str = "Path 1, 5.34, 8, 8, GEN_REG_I[0].GEN_REG_J[1].uut/prev_activ_reg[1]/C, GEN_REG_I[1].GEN_REG_J[1].uut/sig_mac_out_reg[16]/D, 4.37, 2.80, 1.57, 10.00, clk, clk";

    #[test]
    fn parses_first_fragment_row() {
        let paths =
            parse_timing_report(&format!("{HEADER}\n{PATH1}\n"), ReportFormat::Delimited).unwrap();
        assert_eq!(paths.len(), 1);
        let p = &paths[0];
        assert_eq!(p.name, "Path 1");
        assert_eq!(p.slack, 5.34);
        assert_eq!(p.levels, 8);
        assert_eq!(p.high_fanout, 8);
        assert_eq!(p.total_delay, 4.37);
        assert_eq!(p.logic_delay, 2.80);
        assert_eq!(p.net_delay, 1.57);
        assert_eq!(p.requirement, 10.00);
        assert_eq!(
            p.to_endpoint,
            "GEN_REG_I[1].GEN_REG_J[1].uut/sig_mac_out_reg[16]/D"
        );
        assert_eq!(p.source_clock, "clk");
        assert_eq!(p.destination_clock, "clk");
    }

    #[test]
    fn empty_input_has_no_paths() {
        assert_eq!(
            parse_timing_report("", ReportFormat::Delimited),
            Err(IngestError::NoPaths)
        );
        assert_eq!(
            parse_timing_report("", ReportFormat::Tabular),
            Err(IngestError::NoPaths)
        );
        assert_eq!(
            parse_timing_report(&format!("{HEADER}\n"), ReportFormat::Delimited),
            Err(IngestError::NoPaths)
        );
    }

    #[test]
    fn bad_slack_reports_line_two() {
        let row = PATH1.replace("5.34", "abc");
        let err = parse_timing_report(&format!("{HEADER}\n{row}\n"), ReportFormat::Delimited)
            .unwrap_err();
        assert_eq!(
            err,
            IngestError::Parse {
                line: 2,
                column: "Slack",
                value: "abc".into()
            }
        );
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn missing_column_is_named() {
        let header = HEADER.replace(", Net Delay", "");
        let row = PATH1.replace(", 1.57, 10.00", ", 10.00");
        let err = parse_timing_report(&format!("{header}\n{row}\n"), ReportFormat::Delimited)
            .unwrap_err();
        assert_eq!(err, IngestError::MissingColumn("Net Delay"));
    }

    #[test]
    fn header_order_is_free() {
        let text = "To,Slack,Name,From,Levels,High Fanout,Total Delay,Logic Delay,Net Delay,Requirement,Source Clock,Destination Clock\n\
                    GEN_REG_I[2].GEN_REG_J[3].uut/x/D,1.5,p,a/C,3,4,8.0,5.0,3.0,10,clk,clk\n";
        let p = &parse_timing_report(text, ReportFormat::Delimited).unwrap()[0];
        assert_eq!(p.slack, 1.5);
        assert_eq!(p.name, "p");
        assert_eq!(p.levels, 3);
        assert_eq!(mac_of_endpoint(&p.to_endpoint).unwrap(), MacId::new(2, 3));
    }

    #[test]
    fn tabular_layout_matches_delimited() {
        let tab = "\
+--------+-------+
Name    Slack   Levels  High Fanout   From   To   Total Delay  Logic Delay  Net Delay  Requirement  Source Clock  Destination Clock
------------------------------------------------------------------
Path 1  5.34  8  8  GEN_REG_I[0].GEN_REG_J[1].uut/prev_activ_reg[1]/C  GEN_REG_I[1].GEN_REG_J[1].uut/sig_mac_out_reg[16]/D  4.37  2.80  1.57  10.00  clk  clk
";
        let a = parse_timing_report(tab, ReportFormat::Tabular).unwrap();
        let b =
            parse_timing_report(&format!("{HEADER}\n{PATH1}\n"), ReportFormat::Delimited).unwrap();
        assert_eq!(a, b);

        let piped = "| Name | Slack | Levels | High Fanout | From | To | Total Delay | Logic Delay | Net Delay | Requirement | Source Clock | Destination Clock |\n\
                     | Path 1 | 5.34 | 8 | 8 | GEN_REG_I[0].GEN_REG_J[1].uut/prev_activ_reg[1]/C | GEN_REG_I[1].GEN_REG_J[1].uut/sig_mac_out_reg[16]/D | 4.37 | 2.80 | 1.57 | 10.00 | clk | clk |\n";
        assert_eq!(parse_timing_report(piped, ReportFormat::Tabular).unwrap(), b);
    }

    #[test]
    fn tabular_error_line_numbers_count_raw_lines() {
        let tab = "Name\tSlack\tLevels\tHigh Fanout\tFrom\tTo\tTotal Delay\tLogic Delay\tNet Delay\tRequirement\tSource Clock\tDestination Clock\n\
                   \n\
                   p\tx\t1\t1\ta\tb\t1\t0.5\t0.5\t10\tclk\tclk\n";
        assert!(matches!(
            parse_timing_report(tab, ReportFormat::Tabular),
            Err(IngestError::Parse { line: 3, column: "Slack", .. })
        ));
    }

    #[test]
    fn budget_invariant_enforced() {
        let row = PATH1.replace("5.34", "7.00");
        assert!(matches!(
            parse_timing_report(&format!("{HEADER}\n{row}\n"), ReportFormat::Delimited),
            Err(IngestError::Invariant { line: 2, .. })
        ));
        let row = PATH1.replace("2.80, 1.57", "2.00, 1.57");
        assert!(matches!(
            parse_timing_report(&format!("{HEADER}\n{row}\n"), ReportFormat::Delimited),
            Err(IngestError::Invariant { line: 2, .. })
        ));
    }

    #[test]
    fn negative_slack_allowed() {
        let row = PATH1.replace("5.34", "-0.25").replace("4.37, 2.80, 1.57", "10.20, 8.63, 1.57");
        let p = &parse_timing_report(&format!("{HEADER}\n{row}\n"), ReportFormat::Delimited)
            .unwrap()[0];
        assert_eq!(p.slack, -0.25);
    }

    #[test]
    fn endpoint_mapping() {
        assert_eq!(
            mac_of_endpoint("GEN_REG_I[1].GEN_REG_J[1].uut/sig_mac_out_reg[16]/D").unwrap(),
            MacId::new(1, 1)
        );
        assert_eq!(
            mac_of_endpoint("GEN_REG_I[15].GEN_REG_J[0].uut/x/D").unwrap(),
            MacId::new(15, 0)
        );
        assert_eq!(
            mac_of_endpoint("clk_wiz/clkout"),
            Err(IngestError::UnmappedEndpoint("clk_wiz/clkout".into()))
        );
    }

    #[test]
    fn unattributed_paths_are_listed() {
        let mut paths =
            parse_timing_report(&format!("{HEADER}\n{PATH1}\n"), ReportFormat::Delimited).unwrap();
        let mut clock = paths[0].clone();
        clock.to_endpoint = "clk_wiz/clkout".into();
        paths.push(clock);
        let att = attribute_paths(&paths);
        assert_eq!(att.owner, vec![Some(MacId::new(1, 1)), None]);
        assert_eq!(att.unattributed, vec![1]);
    }

    #[test]
    fn instance_name_round_trips() {
        let m = MacId::new(7, 12);
        assert_eq!(mac_of_endpoint(&m.instance_name()).unwrap(), m);
    }

    #[test]
    fn format_from_extension() {
        use std::path::Path;
        assert_eq!(ReportFormat::from_extension(Path::new("a.CSV")), ReportFormat::Delimited);
        assert_eq!(ReportFormat::from_extension(Path::new("a.rpt")), ReportFormat::Tabular);
    }
}
