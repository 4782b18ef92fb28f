//! Flat `key = value` configuration with dotted keys, overridable from the command line.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use voltisland::slack_model::SlackProfile;
use voltisland::{Algorithm, Linkage};

use crate::error::{CliError, Result};

/// Environment variable that replaces `output.dir` from the config file.
pub const OUT_ENV: &str = "VOLTISLAND_OUT";

#[derive(Debug, Clone, Copy)]
enum Kind {
    Int,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
}

struct Key {
    name: &'static str,
    default: Option<&'static str>,
    kind: Kind,
    help: &'static str,
}

const REPORT_FORMATS: &[&str] = &["auto", "delimited", "tabular"];
const TECHNOLOGIES: &[&str] = &["28nm-commercial", "22nm", "45nm", "130nm"];
const WORKLOADS: &[&str] = &["max_toggle", "random"];
const POWER_SOURCES: &[&str] = &["plan", "calibrated"];

const KEYS: &[Key] = &[
    Key { name: "seed", default: Some("1"), kind: Kind::Int, help: "seed for every random draw" },
    Key { name: "output.dir", default: Some("out"), kind: Kind::Text, help: "artifact directory" },
    Key { name: "array.rows", default: Some("16"), kind: Kind::Int, help: "systolic array rows" },
    Key { name: "array.cols", default: Some("16"), kind: Kind::Int, help: "systolic array columns" },
    Key {
        name: "input.report",
        default: Some("builtin:timing_fragment"),
        kind: Kind::Text,
        help: "timing report path, builtin:timing_fragment, or synthetic",
    },
    Key { name: "input.format", default: Some("auto"), kind: Kind::Choice(REPORT_FORMATS), help: "report layout" },
    Key {
        name: "input.profile",
        default: Some("row_gradient"),
        kind: Kind::Choice(&SlackProfile::NAMES),
        help: "synthetic slack profile",
    },
    Key { name: "input.slack_lo", default: Some("3.0"), kind: Kind::Float, help: "synthetic slack band low end, ns" },
    Key { name: "input.slack_hi", default: Some("7.0"), kind: Kind::Float, help: "synthetic slack band high end, ns" },
    Key {
        name: "input.complete",
        default: Some("true"),
        kind: Kind::Bool,
        help: "fill MACs without report paths from the synthetic profile",
    },
    Key {
        name: "cluster.algorithm",
        default: Some("kmeans"),
        kind: Kind::Choice(&Algorithm::NAMES),
        help: "clustering algorithm",
    },
    Key { name: "cluster.k", default: Some("4"), kind: Kind::Int, help: "cluster count (kmeans, hierarchical)" },
    Key { name: "cluster.radius", default: Some("0.4"), kind: Kind::Float, help: "mean-shift bandwidth, ns" },
    Key { name: "cluster.epsilon", default: Some("0.2"), kind: Kind::Float, help: "DBSCAN radius, ns" },
    Key { name: "cluster.minpoints", default: Some("4"), kind: Kind::Int, help: "DBSCAN core threshold" },
    Key {
        name: "cluster.linkage",
        default: Some("average"),
        kind: Kind::Choice(&["single", "complete", "average"]),
        help: "hierarchical linkage",
    },
    Key {
        name: "plan.technology",
        default: Some("28nm-commercial"),
        kind: Kind::Choice(TECHNOLOGIES),
        help: "device technology",
    },
    Key { name: "plan.v_crash", default: None, kind: Kind::Float, help: "crash voltage override, V" },
    Key { name: "plan.v_min", default: None, kind: Kind::Float, help: "minimum safe voltage override, V" },
    Key { name: "floorplan.grid_width", default: Some("64"), kind: Kind::Int, help: "slice columns" },
    Key { name: "floorplan.grid_height", default: Some("64"), kind: Kind::Int, help: "slice rows" },
    Key { name: "floorplan.mac_width", default: Some("1"), kind: Kind::Int, help: "slices per MAC, x" },
    Key { name: "floorplan.mac_height", default: Some("1"), kind: Kind::Int, help: "slices per MAC, y" },
    Key { name: "sim.t_clk", default: Some("10.0"), kind: Kind::Float, help: "clock period, ns" },
    Key { name: "sim.t_del", default: None, kind: Kind::Float, help: "shadow latch delay, ns (default t_clk/2)" },
    Key { name: "sim.alpha", default: Some("1.3"), kind: Kind::Float, help: "alpha-power exponent" },
    Key { name: "sim.kappa", default: Some("0.1"), kind: Kind::Float, help: "data-dependent delay weight" },
    Key { name: "sim.batch_rows", default: Some("16"), kind: Kind::Int, help: "activation rows per batch" },
    Key { name: "sim.batches", default: Some("4"), kind: Kind::Int, help: "random batches per run" },
    Key { name: "sim.trace", default: Some("false"), kind: Kind::Bool, help: "write the per-event trace" },
    Key { name: "calibrate.max_epochs", default: Some("200"), kind: Kind::Int, help: "epoch budget" },
    Key { name: "calibrate.v_floor", default: None, kind: Kind::Float, help: "lowest voltage (default v_th + 0.05)" },
    Key { name: "calibrate.v_ceil", default: None, kind: Kind::Float, help: "highest voltage (default v_nom)" },
    Key {
        name: "calibrate.quantize",
        default: Some("false"),
        kind: Kind::Bool,
        help: "round the step up to the 0.1 V supply resolution",
    },
    Key {
        name: "calibrate.workload",
        default: Some("max_toggle"),
        kind: Kind::Choice(WORKLOADS),
        help: "activation stream replayed each epoch",
    },
    Key { name: "calibrate.batch_rows", default: Some("16"), kind: Kind::Int, help: "activation rows per epoch batch" },
    Key { name: "report.baseline_mw", default: None, kind: Kind::Float, help: "baseline power (default reference lookup)" },
    Key { name: "report.baseline_v", default: Some("1.0"), kind: Kind::Float, help: "voltage of the baseline, V" },
    Key {
        name: "report.source",
        default: Some("plan"),
        kind: Kind::Choice(POWER_SOURCES),
        help: "partition voltages to price",
    },
    Key { name: "report.resolution", default: Some("0.01"), kind: Kind::Float, help: "voltage rounding, V; 0 keeps exact" },
    Key { name: "report.variants", default: None, kind: Kind::Text, help: "sweep variants separated by ';'" },
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

fn check(key: &Key, value: &str) -> Result<()> {
    let bad = |what: &str| CliError::config(key.name, format!("{value:?} is not {what}"));
    match key.kind {
        Kind::Int => value.parse::<u64>().map(|_| ()).map_err(|_| bad("a non-negative integer")),
        Kind::Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => Err(bad("a finite number")),
        },
        Kind::Bool => parse_bool(value).map(|_| ()).ok_or_else(|| bad("true or false")),
        Kind::Text => Ok(()),
        Kind::Choice(names) => {
            if names.contains(&value) {
                Ok(())
            } else {
                Err(CliError::config(
                    key.name,
                    format!("unknown value {value:?}; valid: {}", names.join(", ")),
                ))
            }
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

/// Every registered key with its default and a one-line description.
pub fn describe_keys() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for k in KEYS {
        out.push_str(&format!(
            "{:width$}  {:24}  {}\n",
            k.name,
            k.default.unwrap_or("(unset)"),
            k.help
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .filter_map(|k| k.default.map(|d| (k.name, d.to_string())))
                .collect(),
        }
    }
}

impl Config {
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let key = lookup(name).ok_or_else(|| CliError::config(name, "unknown configuration key"))?;
        check(key, value)?;
        self.values.insert(key.name, value.to_string());
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::config(
                    "",
                    format!("{origin}:{}: expected key = value, got {line:?}", idx + 1),
                ));
            };
            let v = v.trim();
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `--key=value`, `--key value` and bare `--flag` (boolean true) arguments.
    pub fn apply_args(&mut self, args: &[String]) -> Result<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(body) = arg.strip_prefix("--") else {
                return Err(CliError::config(arg, "expected --key=value"));
            };
            if let Some((k, v)) = body.split_once('=') {
                self.set(k, v)?;
                i += 1;
                continue;
            }
            let key = lookup(body).ok_or_else(|| CliError::config(body, "unknown configuration key"))?;
            match args.get(i + 1) {
                Some(v) if !v.starts_with("--") => {
                    self.set(body, v)?;
                    i += 2;
                }
                _ if matches!(key.kind, Kind::Bool) => {
                    self.set(body, "true")?;
                    i += 1;
                }
                _ => return Err(CliError::config(body, "missing value")),
            }
        }
        Ok(())
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    fn required(&self, name: &str) -> Result<&str> {
        self.raw(name)
            .ok_or_else(|| CliError::config(name, "no value and no default"))
    }

    pub fn text(&self, name: &str) -> Result<String> {
        self.required(name).map(str::to_string)
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        self.parse(name)
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        self.parse(name)
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        self.parse(name)
    }

    pub fn opt_f64(&self, name: &str) -> Result<Option<f64>> {
        match self.raw(name) {
            None => Ok(None),
            Some(_) => self.f64(name).map(Some),
        }
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        let v = self.required(name)?;
        parse_bool(v).ok_or_else(|| CliError::config(name, format!("{v:?} is not true or false")))
    }

    /// Parses through the target type's `FromStr`, reporting failures against `name`.
    pub fn parse<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.required(name)?;
        v.parse::<T>()
            .map_err(|e| CliError::config(name, format!("{v:?}: {e}")))
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.parse("cluster.algorithm")
    }

    pub fn linkage(&self) -> Result<Linkage> {
        self.parse("cluster.linkage")
    }

    /// Effective values for the manifest, without the output location.
    pub fn parameters(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| **k != "output.dir")
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }
}

/// Loads defaults, then the config file, then `VOLTISLAND_OUT`, then command-line overrides.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            cfg.set("output.dir", &dir)?;
        }
    }
    cfg.apply_args(overrides)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: &[&str]) -> Vec<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = Config::default();
        for k in KEYS {
            if let Some(v) = cfg.raw(k.name) {
                check(k, v).unwrap();
            }
        }
        assert_eq!(cfg.usize("cluster.k").unwrap(), 4);
    }

    #[test]
    fn file_then_args() {
        let mut cfg = Config::default();
        cfg.apply_text("# comment\ncluster.k = 3\n\nplan.technology = \"22nm\"  # trailing\n", "t")
            .unwrap();
        cfg.apply_args(&args(&["--cluster.k=5", "--sim.trace", "--seed", "9"])).unwrap();
        assert_eq!(cfg.usize("cluster.k").unwrap(), 5);
        assert_eq!(cfg.raw("plan.technology"), Some("22nm"));
        assert!(cfg.bool("sim.trace").unwrap());
        assert_eq!(cfg.u64("seed").unwrap(), 9);
    }

    #[test]
    fn unknown_key_names_path() {
        let mut cfg = Config::default();
        let e = cfg.apply_args(&args(&["--cluster.kk=3"])).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("cluster.kk"));
        let e = cfg.apply_text("sim.t_clk = fast\n", "t").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("sim.t_clk"));
    }

    #[test]
    fn unknown_algorithm_lists_names() {
        let mut cfg = Config::default();
        let e = cfg.set("cluster.algorithm", "spectral").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("cluster.algorithm"));
        for name in Algorithm::NAMES {
            assert!(e.message.contains(name), "{}", e.message);
        }
    }

    #[test]
    fn optional_keys_start_unset() {
        let cfg = Config::default();
        assert_eq!(cfg.opt_f64("sim.t_del").unwrap(), None);
        assert!(!cfg.parameters().contains_key("output.dir"));
    }
}
