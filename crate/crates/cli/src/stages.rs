//! One function per pipeline stage. Each reads its inputs from the artifact directory, writes
//! its exports plus a manifest, and returns a one-line summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use voltisland::calibrate::{calibrate as run_calibration, CalibrationConfig, Workload};
use voltisland::clustering::{self, cluster_quality};
use voltisland::floorplan::{emit_constraints, plan_layout, Footprint, SliceGrid};
use voltisland::matrix::reference_matmul;
use voltisland::power_report::{
    compare_with_reference, comparison_table, dynamic_power, reference_rows, sweep_delimited,
    sweep_table, sweep_variants, Baseline, Variant, GAP_TOLERANCE_PCT,
};
use voltisland::report_ingest::{parse_timing_report, write_delimited};
use voltisland::slack_model::{min_slack_per_mac, synthesize_slack_table, SlackProfile};
use voltisland::systolic_sim::{simulate_matmul, DelayModel, TraceEvent};
use voltisland::voltage_plan::{
    assign_voltages, format_volts, island_shape, plan_report, round_to, static_voltage_scaling,
    MacVoltages,
};
use voltisland::{
    ClusterAssignment, ClusterParams, MacSlackTable, ReportFormat, Technology, VoltagePlan,
    VoltageRegions, TIMING_FRAGMENT,
};

use crate::config::Config;
use crate::error::{input, stage, CliError, Kind, Result};
use crate::manifest::StageRun;

pub const BUILTIN_FRAGMENT: &str = "builtin:timing_fragment";
pub const SYNTHETIC: &str = "synthetic";

/// Stages chained by `run-all`, in order.
pub const PIPELINE: [&str; 7] = [
    "ingest",
    "cluster",
    "plan",
    "floorplan",
    "simulate",
    "calibrate",
    "report",
];

pub fn run_stage(name: &str, cfg: &Config, dir: &Path) -> Result<String> {
    match name {
        "ingest" => ingest(cfg, dir),
        "cluster" => cluster(cfg, dir),
        "plan" => plan(cfg, dir),
        "floorplan" => floorplan(cfg, dir),
        "simulate" => simulate(cfg, dir),
        "calibrate" => calibrate(cfg, dir),
        "report" => report(cfg, dir),
        "sweep" => sweep(cfg, dir),
        other => Err(CliError::new(Kind::Config, format!("unknown stage {other}"))),
    }
}

fn array_dims(cfg: &Config) -> Result<(usize, usize)> {
    let rows = cfg.usize("array.rows")?;
    let cols = cfg.usize("array.cols")?;
    if rows == 0 {
        return Err(CliError::config("array.rows", "must be at least 1"));
    }
    if cols == 0 {
        return Err(CliError::config("array.cols", "must be at least 1"));
    }
    Ok((rows, cols))
}

fn technology(cfg: &Config) -> Result<Technology> {
    cfg.parse("plan.technology")
}

fn regions(cfg: &Config) -> Result<VoltageRegions> {
    let mut r = VoltageRegions::preset(technology(cfg)?);
    let crash = cfg.opt_f64("plan.v_crash")?;
    let min = cfg.opt_f64("plan.v_min")?;
    if let Some(v) = crash {
        r.v_crash = v;
    }
    if let Some(v) = min {
        r.v_min = v;
    }
    r.validate().map_err(|e| {
        let key = if crash.is_some() { "plan.v_crash" } else { "plan.v_min" };
        CliError::config(key, e.to_string())
    })?;
    Ok(r)
}

fn delay_model(cfg: &Config, regions: &VoltageRegions) -> Result<DelayModel> {
    let t_clk = cfg.f64("sim.t_clk")?;
    let mut m = DelayModel::new(regions.v_threshold, regions.v_nom, t_clk)
        .map_err(|e| CliError::config("sim.t_clk", e.to_string()))?;
    m.alpha = cfg.f64("sim.alpha")?;
    m.kappa = cfg.f64("sim.kappa")?;
    if let Some(d) = cfg.opt_f64("sim.t_del")? {
        m.t_del = d;
    }
    m.validate().map_err(|e| CliError::config("sim", e.to_string()))?;
    Ok(m)
}

fn load_table(run: &mut StageRun, cfg: &Config) -> Result<MacSlackTable> {
    let text = run.artifact("slack_table.csv", "ingest")?;
    let table = MacSlackTable::from_delimited(&text).map_err(input("slack_table.csv"))?;
    check_dims("slack_table.csv", table.rows(), table.cols(), cfg, "ingest")?;
    Ok(table)
}

fn load_assignment(run: &mut StageRun, cfg: &Config) -> Result<ClusterAssignment> {
    let text = run.artifact("assignment.csv", "cluster")?;
    let (_, a) = ClusterAssignment::from_delimited(&text).map_err(input("assignment.csv"))?;
    check_dims("assignment.csv", a.rows, a.cols, cfg, "cluster")?;
    Ok(a)
}

fn load_plan(run: &mut StageRun, regions: VoltageRegions) -> Result<VoltagePlan> {
    let text = run.artifact("plan.csv", "plan")?;
    let mut plan = VoltagePlan::from_delimited(&text, regions, 0.0).map_err(input("plan.csv"))?;
    plan.v_step = (regions.v_min - regions.v_crash) / plan.n() as f64;
    Ok(plan)
}

fn check_dims(name: &str, rows: usize, cols: usize, cfg: &Config, producer: &str) -> Result<()> {
    let (r, c) = array_dims(cfg)?;
    if (rows, cols) != (r, c) {
        return Err(CliError::new(
            Kind::Dependency,
            format!("{name} covers a {rows}x{cols} array but array is {r}x{c}; rerun `voltisland {producer}`"),
        ));
    }
    Ok(())
}

fn mac_voltages(a: &ClusterAssignment, plan: &VoltagePlan) -> Result<MacVoltages> {
    assign_voltages(a, plan).map_err(|e| {
        CliError::new(
            Kind::Dependency,
            format!("{e}; rerun `voltisland plan` after `voltisland cluster`"),
        )
    })
}

fn volts_list(v: &[f64]) -> String {
    v.iter().map(|x| format_volts(*x)).collect::<Vec<_>>().join(", ")
}

pub fn ingest(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("ingest", cfg, dir)?;
    let (rows, cols) = array_dims(cfg)?;
    let seed = cfg.u64("seed")?;
    let profile: SlackProfile = cfg.parse("input.profile")?;
    let synth = || {
        synthesize_slack_table(
            rows,
            cols,
            profile,
            cfg.f64("input.slack_lo")?,
            cfg.f64("input.slack_hi")?,
            seed,
        )
        .map_err(|e| CliError::config("input.slack_lo", e.to_string()))
    };
    let source = cfg.text("input.report")?;
    let mut notes = String::new();
    let table = if source == SYNTHETIC {
        writeln!(notes, "source synthetic {profile} profile, seed {seed}").unwrap();
        synth()?
    } else {
        let (text, format) = if source == BUILTIN_FRAGMENT {
            (TIMING_FRAGMENT.to_string(), ReportFormat::Delimited)
        } else {
            let path = Path::new(&source);
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config("input.report", format!("cannot read {source}: {e}")))?;
            let format = match cfg.text("input.format")?.as_str() {
                "delimited" => ReportFormat::Delimited,
                "tabular" => ReportFormat::Tabular,
                _ => ReportFormat::from_extension(path),
            };
            (text, format)
        };
        run.record_input(&source, text.as_bytes());
        let paths = parse_timing_report(&text, format).map_err(input(&source))?;
        let found = min_slack_per_mac(&paths, rows, cols).map_err(stage)?;
        run.write("paths.csv", &write_delimited(&paths))?;
        writeln!(notes, "source {source}").unwrap();
        writeln!(
            notes,
            "paths {}  unattributed {}  covered MACs {}  uncovered MACs {}",
            paths.len(),
            found.unattributed.len(),
            rows * cols - found.uncovered.len(),
            found.uncovered.len()
        )
        .unwrap();
        if cfg.bool("input.complete")? && !found.uncovered.is_empty() {
            writeln!(notes, "uncovered MACs filled from the synthetic {profile} profile, seed {seed}").unwrap();
            found.table.complete_with(&synth()?).map_err(stage)?
        } else {
            if !found.uncovered.is_empty() {
                writeln!(notes, "uncovered MACs carry the global minimum slack").unwrap();
            }
            found.table
        }
    };
    writeln!(
        notes,
        "array {rows}x{cols}  min slack {} ns",
        table.global_min()
    )
    .unwrap();
    run.write("slack_table.csv", &table.to_delimited())?;
    run.write("ingest_summary.txt", &notes)?;
    run.finish("ingest.manifest.json")?;
    Ok(format!("ingest: {rows}x{cols} slack table from {source}"))
}

pub fn cluster(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("cluster", cfg, dir)?;
    let table = load_table(&mut run, cfg)?;
    let params = ClusterParams {
        algorithm: cfg.algorithm()?,
        k: cfg.usize("cluster.k")?,
        radius: cfg.f64("cluster.radius")?,
        epsilon: cfg.f64("cluster.epsilon")?,
        minpoints: cfg.usize("cluster.minpoints")?,
        linkage: cfg.linkage()?,
        seed: cfg.u64("seed")?,
    };
    params
        .validate(table.len())
        .map_err(|e| CliError::config("cluster", e.to_string()))?;
    let outcome = clustering::run(&table, &params).map_err(stage)?;
    let a = &outcome.assignment;
    run.write("assignment.csv", &a.to_delimited(&table))?;
    if let Some(d) = &outcome.dendrogram {
        run.write("dendrogram.csv", &d.to_delimited())?;
    }
    let q = cluster_quality(&table, a);
    let mut notes = format!("algorithm {}  clusters {}\n", params.algorithm, a.num_clusters());
    for c in 0..a.num_clusters() {
        writeln!(
            notes,
            "cluster {c}: size {}  mean slack {:.4} ns  min slack {:.4} ns",
            a.size[c], a.mean_slack[c], a.min_slack[c]
        )
        .unwrap();
    }
    match q.silhouette {
        Some(s) => writeln!(notes, "silhouette {s:.4}  within spread {:.4} ns", q.within_spread),
        None => writeln!(notes, "within spread {:.4} ns", q.within_spread),
    }
    .unwrap();
    if !a.noise.is_empty() {
        writeln!(notes, "noise MACs folded into the lowest-slack cluster: {}", a.noise.len()).unwrap();
    }
    for w in &a.warnings {
        writeln!(notes, "warning: {w}").unwrap();
    }
    run.write("cluster_summary.txt", &notes)?;
    run.finish("cluster.manifest.json")?;
    Ok(format!("cluster: {} clusters with {}", a.num_clusters(), params.algorithm))
}

pub fn plan(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("plan", cfg, dir)?;
    let a = load_assignment(&mut run, cfg)?;
    let plan = static_voltage_scaling(&regions(cfg)?, a.num_clusters()).map_err(stage)?;
    run.write("plan.csv", &plan.to_delimited(&a))?;
    run.write("plan_report.txt", &plan_report(&plan))?;
    run.finish("plan.manifest.json")?;
    Ok(format!("plan: {} partitions at {{{}}} V", plan.n(), volts_list(&plan.v)))
}

pub fn floorplan(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("floorplan", cfg, dir)?;
    let a = load_assignment(&mut run, cfg)?;
    let grid = SliceGrid {
        width: cfg.usize("floorplan.grid_width")?,
        height: cfg.usize("floorplan.grid_height")?,
    };
    let footprint = Footprint {
        w: cfg.usize("floorplan.mac_width")?,
        h: cfg.usize("floorplan.mac_height")?,
    };
    let layout = plan_layout(&a, grid, footprint).map_err(|e| CliError::config("floorplan", e.to_string()))?;
    run.write("constraints.txt", &emit_constraints(&layout))?;
    run.finish("floorplan.manifest.json")?;
    let islands: Vec<String> = layout.islands.iter().map(|r| r.to_string()).collect();
    Ok(format!("floorplan: {} islands {}", islands.len(), islands.join(" ")))
}

pub fn simulate(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("simulate", cfg, dir)?;
    let (rows, cols) = array_dims(cfg)?;
    let table = load_table(&mut run, cfg)?;
    let a = load_assignment(&mut run, cfg)?;
    let regions = regions(cfg)?;
    let plan = load_plan(&mut run, regions)?;
    let macs = mac_voltages(&a, &plan)?;
    let model = delay_model(cfg, &regions)?;
    let batch_rows = cfg.usize("sim.batch_rows")?;
    let batches = cfg.usize("sim.batches")?;
    if batch_rows == 0 {
        return Err(CliError::config("sim.batch_rows", "must be at least 1"));
    }
    if batches == 0 {
        return Err(CliError::config("sim.batches", "must be at least 1"));
    }
    let trace = cfg.bool("sim.trace")?;
    let workload = Workload::random(rows, cols, batch_rows, batches, cfg.u64("seed")?);

    let mut total = None;
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut exact = true;
    for batch in &workload.batches {
        let r = simulate_matmul(batch, &workload.weights, &table, &macs, &model, trace).map_err(stage)?;
        exact &= r.output == reference_matmul(batch, &workload.weights);
        let offset = total.as_ref().map_or(0, |t: &voltisland::systolic_sim::SimRunResult| t.cycles);
        events.extend(r.trace.iter().map(|e| TraceEvent {
            cycle: e.cycle + offset,
            ..*e
        }));
        match total.as_mut() {
            Some(t) => t.accumulate(&r),
            None => total = Some(r),
        }
    }
    let mut total = total.expect("at least one batch");
    total.trace = events;

    run.write("sim_counts.csv", &total.counts_delimited())?;
    if trace {
        run.write("sim_trace.csv", &total.trace_delimited())?;
    }
    let mut notes = format!(
        "batches {batches} x {batch_rows} rows  cycles {}  stall cycles {}\n",
        total.cycles, total.stall_cycles
    );
    writeln!(
        notes,
        "detected {}  undetected {}  outputs exact {}",
        total.total_detected(),
        total.total_undetected(),
        if exact { "yes" } else { "no" }
    )
    .unwrap();
    for (p, (d, u)) in total.partition_errors(&macs.partition, plan.n()).iter().enumerate() {
        writeln!(
            notes,
            "partition {p}: {} V  detected {d}  undetected {u}",
            format_volts(plan.v[p])
        )
        .unwrap();
    }
    run.write("sim_summary.txt", &notes)?;
    run.finish("simulate.manifest.json")?;
    Ok(format!(
        "simulate: {} detected, {} undetected, outputs exact {}",
        total.total_detected(),
        total.total_undetected(),
        exact
    ))
}

pub fn calibrate(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("calibrate", cfg, dir)?;
    let (rows, cols) = array_dims(cfg)?;
    let table = load_table(&mut run, cfg)?;
    let a = load_assignment(&mut run, cfg)?;
    let regions = regions(cfg)?;
    let plan = load_plan(&mut run, regions)?;
    let macs = mac_voltages(&a, &plan)?;
    let model = delay_model(cfg, &regions)?;
    let batch_rows = cfg.usize("calibrate.batch_rows")?;
    if batch_rows == 0 {
        return Err(CliError::config("calibrate.batch_rows", "must be at least 1"));
    }
    let workload = match cfg.text("calibrate.workload")?.as_str() {
        "random" => Workload::random(rows, cols, batch_rows, cfg.usize("sim.batches")?.max(1), cfg.u64("seed")?),
        _ => Workload::max_toggle(rows, cols, batch_rows),
    };
    let mut config = CalibrationConfig::for_model(&model);
    if let Some(v) = cfg.opt_f64("calibrate.v_floor")? {
        config.v_floor = v;
    }
    if let Some(v) = cfg.opt_f64("calibrate.v_ceil")? {
        config.v_ceil = v;
    }
    config.quantize_supply = cfg.bool("calibrate.quantize")?;
    config.max_epochs = cfg.usize("calibrate.max_epochs")?;
    let result = run_calibration(&plan, &macs, &table, &workload, &model, &config)
        .map_err(|e| match e {
            voltisland::calibrate::CalibrateError::Parameter(m) => CliError::config("calibrate", m),
            other => stage(other),
        })?;
    let replay = workload
        .run(&table, &macs.with_partition_voltages(&result.final_v), &model)
        .map_err(stage)?;

    run.write("trajectory.csv", &result.trajectory_delimited())?;
    run.write("calibration.csv", &result.summary_delimited())?;
    let mut notes = format!(
        "epochs {}  converged {}  step {} V\n",
        result.epochs,
        result.converged,
        format_volts(result.v_s)
    );
    for p in 0..result.final_v.len() {
        writeln!(
            notes,
            "partition {p}: {} V -> {} V  steps {}  {}",
            format_volts(result.initial_v[p]),
            format_volts(result.final_v[p]),
            result.step_counts[p],
            format!("{:?}", result.status[p]).to_lowercase()
        )
        .unwrap();
    }
    writeln!(
        notes,
        "replay at final voltages: detected {}  undetected {}",
        replay.total_detected(),
        replay.total_undetected()
    )
    .unwrap();
    run.write("calibration_summary.txt", &notes)?;
    run.finish("calibrate.manifest.json")?;
    Ok(format!(
        "calibrate: {} epochs, converged {}, final {{{}}} V",
        result.epochs,
        result.converged,
        volts_list(&result.final_v)
    ))
}

/// Final voltages from the `final_v` column of `calibration.csv`.
fn calibrated_voltages(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .nth(2)
            .and_then(|f| f.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::new(Kind::Input, format!("calibration.csv:{}: bad final_v", idx + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn reference_baseline(cfg: &Config, rows: usize, cols: usize, tech: Technology) -> Result<Option<Baseline>> {
    let v_ref = cfg.f64("report.baseline_v")?;
    if let Some(mw) = cfg.opt_f64("report.baseline_mw")? {
        return Ok(Some(Baseline {
            technology: tech,
            baseline_mw: mw,
            v_ref,
        }));
    }
    Ok(reference_rows()
        .into_iter()
        .find(|r| r.array == (rows, cols) && r.technology == tech && (r.baseline_v - v_ref).abs() < 1e-9)
        .map(|r| Baseline {
            technology: tech,
            baseline_mw: r.baseline_mw,
            v_ref,
        }))
}

pub fn report(cfg: &Config, dir: &Path) -> Result<String> {
    let mut run = StageRun::new("report", cfg, dir)?;
    let (rows, cols) = array_dims(cfg)?;
    let a = load_assignment(&mut run, cfg)?;
    let regions = regions(cfg)?;
    let plan = load_plan(&mut run, regions)?;
    let macs = mac_voltages(&a, &plan)?;
    let source = cfg.text("report.source")?;
    let mut volts = if source == "calibrated" {
        let v = calibrated_voltages(&run.artifact("calibration.csv", "calibrate")?)?;
        if v.len() != plan.n() {
            return Err(CliError::new(
                Kind::Dependency,
                format!(
                    "calibration.csv has {} partitions but plan.csv has {}; rerun `voltisland calibrate`",
                    v.len(),
                    plan.n()
                ),
            ));
        }
        v
    } else {
        plan.v.clone()
    };
    let resolution = cfg.f64("report.resolution")?;
    if resolution < 0.0 {
        return Err(CliError::config("report.resolution", "must not be negative"));
    }
    if resolution > 0.0 {
        volts = volts.iter().map(|v| round_to(*v, resolution)).collect();
    }
    let tech = regions.technology;
    let baseline = reference_baseline(cfg, rows, cols, tech)?.ok_or_else(|| {
        CliError::config(
            "report.baseline_mw",
            format!("no reference baseline for a {rows}x{cols} {tech} array; set report.baseline_mw"),
        )
    })?;
    let sizes: Vec<usize> = macs.grouped(plan.n()).iter().map(|(s, _)| *s).collect();
    let fractions: Vec<f64> = sizes.iter().map(|s| *s as f64 / (rows * cols) as f64).collect();
    let mut power = dynamic_power(baseline.baseline_mw, &fractions, &volts, baseline.v_ref).map_err(stage)?;
    power.variant_label = format!("{} partitions {{{}}}", plan.n(), volts_list(&volts));

    let mut csv = String::from("partition,size,fraction,v_volts,power_mw\n");
    for p in 0..plan.n() {
        writeln!(
            csv,
            "{p},{},{},{},{}",
            sizes[p],
            fractions[p],
            format_volts(volts[p]),
            power.per_partition_mw[p]
        )
        .unwrap();
    }
    let mut txt = format!(
        "array {rows}x{cols}  technology {tech}  voltages from {source}\n{}\nbaseline {} mW at {} V\n",
        power.variant_label,
        baseline.baseline_mw,
        format_volts(baseline.v_ref)
    );
    for p in 0..plan.n() {
        writeln!(
            txt,
            "partition {p}: {} MACs at {} V  {:.3} mW",
            sizes[p],
            format_volts(volts[p]),
            power.per_partition_mw[p]
        )
        .unwrap();
    }
    writeln!(
        txt,
        "scaled {:.3} mW  reduction {:.3}%\n",
        power.scaled_total_mw, power.reduction_pct
    )
    .unwrap();
    txt.push_str("quadratic model against measured reference reductions:\n");
    let cmp = compare_with_reference(&reference_rows(), GAP_TOLERANCE_PCT).map_err(stage)?;
    txt.push_str(&comparison_table(&cmp));
    run.write("power_report.csv", &csv)?;
    run.write("power_report.txt", &txt)?;
    run.finish("report.manifest.json")?;
    Ok(format!(
        "report: {:.3} mW of {} mW, reduction {:.3}%",
        power.scaled_total_mw, baseline.baseline_mw, power.reduction_pct
    ))
}

fn sweep_plan(cfg: &Config, rows: usize, cols: usize) -> Result<Vec<Variant>> {
    if let Some(text) = cfg.raw("report.variants") {
        let mut out = Vec::new();
        for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let v: Variant = part
                .parse()
                .map_err(|e: voltisland::power_report::PowerError| CliError::config("report.variants", e.to_string()))?;
            v.check_tiling(rows, cols)
                .map_err(|e| CliError::config("report.variants", e.to_string()))?;
            out.push(v);
        }
        if out.is_empty() {
            return Err(CliError::config("report.variants", "no variants given"));
        }
        return Ok(out);
    }
    let regions = regions(cfg)?;
    let resolution = cfg.f64("report.resolution")?;
    let mut out = Vec::new();
    let mut p = 1;
    while p <= 16 && p <= rows * cols {
        if island_shape(rows, cols, p).is_some() {
            let plan = static_voltage_scaling(&regions, p).map_err(stage)?;
            let v = if resolution > 0.0 { plan.rounded(resolution) } else { plan.v };
            out.push(Variant::equal(rows, cols, v).map_err(stage)?);
        }
        p *= 2;
    }
    Ok(out)
}

fn variant_dir(index: usize, v: &Variant) -> String {
    format!("{index:02}_p{}_{}x{}", v.partitions, v.island.0, v.island.1)
}

/// Prices every variant against every available baseline. Each variant runs on its own
/// thread and writes only into its own subdirectory of `sweep/`.
pub fn sweep(cfg: &Config, dir: &Path) -> Result<String> {
    let (rows, cols) = array_dims(cfg)?;
    let variants = sweep_plan(cfg, rows, cols)?;
    let baselines: Vec<Baseline> = if cfg.raw("report.baseline_mw").is_some() {
        reference_baseline(cfg, rows, cols, technology(cfg)?)?.into_iter().collect()
    } else {
        let mut b = Vec::new();
        for tech in Technology::ALL {
            b.extend(reference_baseline(cfg, rows, cols, tech)?);
        }
        b
    };
    if baselines.is_empty() {
        return Err(CliError::config(
            "report.baseline_mw",
            format!("no reference baseline for a {rows}x{cols} array; set report.baseline_mw"),
        ));
    }
    let root = dir.join("sweep");
    if root.exists() {
        fs::remove_dir_all(&root)
            .map_err(|e| CliError::new(Kind::Io, format!("cannot clear {}: {e}", root.display())))?;
    }
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (root, baselines) = (&root, &baselines);
                s.spawn(move || -> Result<()> {
                    let mut run = StageRun::nested("sweep", cfg, dir, &root.join(variant_dir(i, v)))?;
                    run.record_input("variant", v.label().as_bytes());
                    let rows = sweep_variants(rows, cols, std::slice::from_ref(v), baselines).map_err(stage)?;
                    run.write("power.csv", &sweep_delimited(&rows))?;
                    run.write("power.txt", &sweep_table(&rows))?;
                    run.finish("manifest.json")
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::new(Kind::Stage, "sweep worker panicked"))))
            .collect()
    });
    for r in results {
        r?;
    }
    let all = sweep_variants(rows, cols, &variants, &baselines).map_err(stage)?;
    let mut run = StageRun::nested("sweep", cfg, dir, &root)?;
    for (i, v) in variants.iter().enumerate() {
        run.record_input(&variant_dir(i, v), v.label().as_bytes());
    }
    run.write("sweep.csv", &sweep_delimited(&all))?;
    run.write("sweep.txt", &sweep_table(&all))?;
    run.finish("manifest.json")?;
    Ok(format!(
        "sweep: {} variants x {} baselines",
        variants.len(),
        baselines.len()
    ))
}
