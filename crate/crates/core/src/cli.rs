//! The `mfit` command line. Every subcommand reads text inputs, writes text
//! outputs and leaves a JSON run manifest next to its primary output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::CalibrationRequest;
use crate::dss::{self, DssModel, DSS_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::metrics::{compare, CompareOptions};
use crate::package::load_package;
use crate::rc::{build_rc, RCModel, MODEL_FORMAT_VERSION};
use crate::solver::{layer_heatmap, simulate, steady_state_rise, SolverConfig};
use crate::trace::TemperatureTrace;
use crate::workload::{load_power_csv, synth_wl1, PowerTrace, SynthSpec};

/// Shown by `--version`.
pub const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format 1, dss format 1)");

#[derive(Debug, Parser)]
#[command(name = "mfit", version = LONG_VERSION, about = "Compact thermal models of chiplet packages")]
struct Cli {
    /// Manifest path; defaults to `<primary output>.manifest.json`.
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mesh a package document into an RC model file.
    Build {
        #[arg(long)]
        package: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate abstraction formulas (conductivity, capacity, heatsink HTC).
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Write key-value results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the stress / PRBS / cooldown power trace.
    #[command(name = "synth-wl1")]
    SynthWl1(SynthArgs),
    /// Integrate the RC model over a power trace.
    Simulate(SimulateArgs),
    /// Steady-state temperatures for constant power.
    Steady {
        #[arg(long)]
        model: PathBuf,
        /// Same watts on every power block.
        #[arg(long, conflicts_with = "power")]
        power_const: Option<f64>,
        /// Power CSV; the row in effect at `--at` is used.
        #[arg(long, required_unless_present = "power_const")]
        power: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        at: f64,
        /// Write the node table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-order-hold discretization into a DSS model file.
    Discretize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = dss::DEFAULT_TS)]
        ts: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step a DSS model through a power trace.
    #[command(name = "run-dss")]
    RunDss {
        #[arg(long)]
        dss: PathBuf,
        #[arg(long)]
        power: PathBuf,
        #[arg(long)]
        out_trace: PathBuf,
        /// Check the DSS file against the RC model it claims to come from.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a candidate temperature trace against a reference.
    Compare {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        cand: PathBuf,
        #[arg(long, default_value_t = 85.0)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        guard: f64,
        /// Score every node rather than chiplet nodes only.
        #[arg(long)]
        all_nodes: bool,
        /// Model whose chiplet flags select the scored nodes.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-node MAE table.
        #[arg(long)]
        per_node: Option<PathBuf>,
    },
    /// Per-layer temperature rasters from a trace.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        layer: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    package: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    stress: f64,
    #[arg(long, default_value_t = 30.0)]
    prbs: f64,
    #[arg(long, default_value_t = 15.0)]
    cooldown: f64,
    #[arg(long, default_value_t = 0.1)]
    dwell: f64,
    #[arg(long, default_value_t = 3.0)]
    max_power: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    power: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-8)]
    atol: f64,
    #[arg(long, default_value_t = 0.01)]
    output_dt: f64,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    out_trace: PathBuf,
    #[arg(long)]
    heatmap_layer: Vec<String>,
    #[arg(long, value_delimiter = ',', requires = "heatmap_layer")]
    heatmap_times: Vec<f64>,
}

/// Provenance record of one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub model_format_version: u32,
    pub dss_format_version: u32,
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub config: Value,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per phase, in execution order.
    pub phases: Vec<(String, f64)>,
    pub total_seconds: f64,
    pub summary: Value,
}

struct Run {
    start: Instant,
    manifest: RunManifest,
    primary: Option<PathBuf>,
}

impl Run {
    fn new(subcommand: &str) -> Self {
        Run {
            start: Instant::now(),
            manifest: RunManifest {
                tool: "mfit",
                version: env!("CARGO_PKG_VERSION"),
                model_format_version: MODEL_FORMAT_VERSION,
                dss_format_version: DSS_FORMAT_VERSION,
                subcommand: subcommand.to_string(),
                inputs: BTreeMap::new(),
                config: Value::Null,
                outputs: Vec::new(),
                phases: Vec::new(),
                total_seconds: 0.0,
                summary: json!({}),
            },
            primary: None,
        }
    }

    fn input(&mut self, key: &str, path: &Path) {
        let resolved = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        self.manifest.inputs.insert(key.to_string(), resolved.display().to_string());
    }

    fn output(&mut self, path: &Path) {
        if self.primary.is_none() {
            self.primary = Some(path.to_path_buf());
        }
        self.manifest.outputs.push(path.display().to_string());
    }

    fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.manifest.phases.push((name.to_string(), t0.elapsed().as_secs_f64()));
        Ok(out)
    }

    fn summary(&mut self, key: &str, value: Value) {
        self.manifest.summary[key] = value;
    }

    fn finish(mut self, explicit: Option<&Path>) -> Result<()> {
        let path = match (explicit, &self.primary) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => manifest_path(p),
            (None, None) => return Ok(()),
        };
        self.manifest.total_seconds = self.start.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn stdout_text(text: &str) -> Result<()> {
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let manifest = cli.manifest;
    let run = match cli.command {
        Command::Build { package, out } => cmd_build(&package, &out)?,
        Command::Calibrate { input, out } => cmd_calibrate(&input, out.as_deref())?,
        Command::SynthWl1(a) => cmd_synth(&a)?,
        Command::Simulate(a) => cmd_simulate(&a)?,
        Command::Steady { model, power_const, power, at, out } => {
            cmd_steady(&model, power_const, power.as_deref(), at, out.as_deref())?
        }
        Command::Discretize { model, ts, out } => cmd_discretize(&model, ts, &out)?,
        Command::RunDss { dss, power, out_trace, model } => cmd_run_dss(&dss, &power, &out_trace, model.as_deref())?,
        Command::Compare { reference, cand, threshold, guard, all_nodes, model, out, per_node } => cmd_compare(
            &reference,
            &cand,
            CompareOptions { threshold, guard, all_nodes },
            model.as_deref(),
            out.as_deref(),
            per_node.as_deref(),
        )?,
        Command::Heatmap { model, trace, layer, times, out_dir } => {
            cmd_heatmap(&model, &trace, &layer, &times, &out_dir)?
        }
    };
    run.finish(manifest.as_deref())
}

fn node_counts(model: &RCModel) -> Value {
    let per_layer: serde_json::Map<String, Value> = model
        .layers
        .iter()
        .map(|l| (l.name.clone(), json!(l.nodes.len())))
        .collect();
    json!({
        "nodes": model.len(),
        "chiplet_nodes": model.chiplet_mask().iter().filter(|c| **c).count(),
        "couplings": model.couplings.len(),
        "power_blocks": model.power_blocks.len(),
        "nodes_per_layer": per_layer,
    })
}

fn cmd_build(package: &Path, out: &Path) -> Result<Run> {
    let mut run = Run::new("build");
    run.input("package", package);
    let spec = run.phase("parse", || load_package(package))?;
    let model = run.phase("assemble", || build_rc(&spec))?;
    run.phase("write", || model.save(out))?;
    run.output(out);
    run.summary("model", node_counts(&model));
    run.summary("fingerprint", json!(model.fingerprint()));
    Ok(run)
}

fn cmd_calibrate(input: &Path, out: Option<&Path>) -> Result<Run> {
    let mut run = Run::new("calibrate");
    run.input("input", input);
    let request = run.phase("parse", || CalibrationRequest::parse(&read_file(input)?))?;
    let values = run.phase("evaluate", || request.evaluate())?;
    let mut text = String::new();
    for (k, v) in &values {
        let _ = writeln!(text, "{k} = {v}");
    }
    match out {
        Some(p) => {
            write_file(p, &text)?;
            run.output(p);
        }
        None => stdout_text(&text)?,
    }
    run.summary("results", json!(values.into_iter().collect::<BTreeMap<_, _>>()));
    Ok(run)
}

fn cmd_synth(a: &SynthArgs) -> Result<Run> {
    let mut run = Run::new("synth-wl1");
    run.input("package", &a.package);
    let spec = SynthSpec {
        stress_s: a.stress,
        prbs_s: a.prbs,
        cooldown_s: a.cooldown,
        dwell_s: a.dwell,
        max_power_w: a.max_power,
        seed: a.seed,
    };
    run.manifest.config = serde_json::to_value(&spec).expect("serializes");
    let package = run.phase("parse", || load_package(&a.package))?;
    let trace = run.phase("generate", || synth_wl1(&spec, &package.power_block_ids()))?;
    run.phase("write", || trace.save_csv(&a.out))?;
    run.output(&a.out);
    run.summary("change_instants", json!(trace.times.len()));
    run.summary("end_time_s", json!(trace.end_time));
    Ok(run)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Run> {
    let mut run = Run::new("simulate");
    run.input("model", &a.model);
    run.input("power", &a.power);
    let cfg = SolverConfig { rtol: a.rtol, atol: a.atol, max_step: a.max_step, output_dt: a.output_dt };
    run.manifest.config = serde_json::to_value(&cfg).expect("serializes");
    let model = run.phase("load", || RCModel::load(&a.model))?;
    let power = run.phase("load_power", || load_power_csv(&a.power))?;
    let trace = run.phase("integrate", || simulate(&model, &power, &cfg, None))?;
    run.phase("write", || trace.save_csv(&a.out_trace))?;
    run.output(&a.out_trace);
    if !a.heatmap_layer.is_empty() {
        let dir = a.out_trace.parent().unwrap_or(Path::new(".")).to_path_buf();
        let written = run.phase("heatmaps", || write_heatmaps(&trace, &model, &a.heatmap_layer, &a.heatmap_times, &dir))?;
        run.manifest.outputs.extend(written);
    }
    run.summary("samples", json!(trace.len()));
    run.summary("max_temperature_c", json!(trace.max()));
    Ok(run)
}

fn write_heatmaps(
    trace: &TemperatureTrace,
    model: &RCModel,
    layers: &[String],
    times: &[f64],
    dir: &Path,
) -> Result<Vec<String>> {
    if times.is_empty() {
        return Err(Error::domain("heat maps need at least one time"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for layer in layers {
        for &t in times {
            let map = layer_heatmap(trace, model, layer, t)?;
            let path = dir.join(map.file_name());
            write_file(&path, &map.to_csv())?;
            written.push(path.display().to_string());
        }
    }
    Ok(written)
}

fn cmd_steady(
    model_path: &Path,
    power_const: Option<f64>,
    power: Option<&Path>,
    at: f64,
    out: Option<&Path>,
) -> Result<Run> {
    let mut run = Run::new("steady");
    run.input("model", model_path);
    let model = run.phase("load", || RCModel::load(model_path))?;
    let watts: Vec<f64> = match (power_const, power) {
        (Some(w), _) => vec![w; model.power_blocks.len()],
        (None, Some(p)) => {
            run.input("power", p);
            let trace = load_power_csv(p)?;
            let rows = trace.bind(&model.power_blocks)?;
            rows[trace.segment_at(at)].clone()
        }
        (None, None) => return Err(Error::domain("steady needs --power-const or --power")),
    };
    run.manifest.config = json!({ "power_const_w": power_const, "at_s": at });
    let rise = run.phase("solve", || steady_state_rise(&model, &watts))?;

    let p_in: f64 = watts.iter().sum();
    let p_out: f64 = model.nodes.iter().zip(&rise).map(|(n, r)| n.g_conv * r).sum();
    let max = rise.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + model.ambient_c;
    let mut text = String::new();
    let _ = writeln!(text, "# total_power_w = {p_in}");
    let _ = writeln!(text, "# dissipated_power_w = {p_out}");
    let _ = writeln!(text, "# max_temperature_c = {max}");
    text.push_str("node,temperature_c\n");
    for (n, r) in model.nodes.iter().zip(&rise) {
        let _ = writeln!(text, "{},{}", n.id(), model.ambient_c + r);
    }
    match out {
        Some(p) => {
            write_file(p, &text)?;
            run.output(p);
        }
        None => stdout_text(&text)?,
    }
    run.summary("total_power_w", json!(p_in));
    run.summary("dissipated_power_w", json!(p_out));
    run.summary("max_temperature_c", json!(max));
    Ok(run)
}

fn cmd_discretize(model_path: &Path, ts: f64, out: &Path) -> Result<Run> {
    let mut run = Run::new("discretize");
    run.input("model", model_path);
    run.manifest.config = json!({ "ts_s": ts });
    let text = run.phase("load", || read_file(model_path))?;
    let model = RCModel::from_text(&text)?;
    let d = run.phase("discretize", || dss::discretize_with_fingerprint(&model, ts, dss::file_fingerprint(&text)))?;
    let (lo, hi) = run.phase("spectral_radius", || Ok(d.spectral_radius_bounds(2000)))?;
    run.phase("write", || d.save(out))?;
    run.output(out);
    run.summary("states", json!(d.states()));
    run.summary("inputs", json!(d.inputs()));
    run.summary("spectral_radius_bounds", json!([lo, hi]));
    if hi >= 1.0 {
        eprintln!("warning: spectral radius bound {hi} is not below 1");
    }
    Ok(run)
}

fn cmd_run_dss(dss_path: &Path, power: &Path, out: &Path, model: Option<&Path>) -> Result<Run> {
    let mut run = Run::new("run-dss");
    run.input("dss", dss_path);
    run.input("power", power);
    let d = run.phase("load", || DssModel::load(dss_path))?;
    if let Some(m) = model {
        run.input("model", m);
        d.check_source(&read_file(m)?)?;
    }
    run.manifest.config = json!({ "ts_s": d.ts });
    let trace: PowerTrace = run.phase("load_power", || load_power_csv(power))?;
    let temps = run.phase("step", || d.run(&trace, None))?;
    run.phase("write", || temps.save_csv(out))?;
    run.output(out);
    run.summary("steps", json!(temps.len() - 1));
    run.summary("max_temperature_c", json!(temps.max()));
    Ok(run)
}

fn cmd_compare(
    reference: &Path,
    cand: &Path,
    opts: CompareOptions,
    model: Option<&Path>,
    out: Option<&Path>,
    per_node: Option<&Path>,
) -> Result<Run> {
    let mut run = Run::new("compare");
    run.input("reference", reference);
    run.input("candidate", cand);
    run.manifest.config = serde_json::to_value(&opts).expect("serializes");
    let mut r = run.phase("load", || TemperatureTrace::load_csv(reference))?;
    let c = TemperatureTrace::load_csv(cand)?;
    if let Some(m) = model {
        run.input("model", m);
        let model = RCModel::load(m)?;
        let flags: BTreeMap<String, bool> = model.nodes.iter().map(|n| (n.id(), n.is_chiplet)).collect();
        r.chiplet = Some(r.node_ids.iter().map(|id| flags.get(id).copied().unwrap_or(false)).collect());
    }
    let report = run.phase("compare", || compare(&r, &c, &opts))?;
    let text = report.to_text();
    match out {
        Some(p) => {
            write_file(p, &text)?;
            run.output(p);
        }
        None => stdout_text(&text)?,
    }
    if let Some(p) = per_node {
        write_file(p, &report.per_node_csv())?;
        run.output(p);
    }
    run.summary("mae_k", json!(report.mae));
    run.summary("violation_accuracy", json!(report.violation_accuracy));
    Ok(run)
}

fn cmd_heatmap(model_path: &Path, trace_path: &Path, layers: &[String], times: &[f64], dir: &Path) -> Result<Run> {
    let mut run = Run::new("heatmap");
    run.input("model", model_path);
    run.input("trace", trace_path);
    run.manifest.config = json!({ "layers": layers, "times_s": times });
    let model = run.phase("load", || RCModel::load(model_path))?;
    let trace = TemperatureTrace::load_csv(trace_path)?;
    let layers: Vec<String> = if layers.is_empty() {
        model.layers.iter().map(|l| l.name.clone()).collect()
    } else {
        layers.to_vec()
    };
    let written = run.phase("render", || write_heatmaps(&trace, &model, &layers, times, dir))?;
    // The manifest for a set of maps sits in the output directory.
    run.primary = Some(dir.join("heatmaps"));
    run.manifest.outputs = written;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn version_names_format_versions() {
        assert!(LONG_VERSION.contains(&format!("model format {MODEL_FORMAT_VERSION}")));
        assert!(LONG_VERSION.contains(&format!("dss format {DSS_FORMAT_VERSION}")));
    }

    #[test]
    fn unknown_subcommand_is_input_error() {
        assert_eq!(run(["mfit", "frobnicate"]), 1);
        assert_eq!(run(["mfit"]), 1);
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/m.model")), PathBuf::from("out/m.model.manifest.json"));
    }
}
