mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cardiomr_core::driver::{
    calibrate_c, compare, default_method, run_method, Method, Reference, CALIBRATION_HEADER, METRICS_HEADER,
};
use cardiomr_core::driver::MetricsRow;
use cardiomr_core::ScenarioConfig;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use output::{content_hash, Manifest, OutputDir, Timing};

#[derive(Debug, Parser)]
#[command(name = "cardiomr", version, about = "Adaptive multiresolution solver for cardiac monodomain and bidomain models")]
struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true, env = "CARDIOMR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write snapshots, metrics and a manifest.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the method implied by the scenario's integrator.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Run several methods and score them against a uniform fine-grid reference.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_value = "fv,mr,mr_lts,mr_rkf")]
        methods: Vec<Method>,
    },
    /// Sweep the tolerance constant C and tabulate compression, speed-up and error.
    CalibrateC {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<f64>,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// Scenario JSON, or the manifest of an earlier run.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = ["example1", "example2", "example3"])]
    preset: Option<String>,
    /// Output directory (default: the scenario's `output_dir`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved; every scenario is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig> {
        if let Some(p) = &self.preset {
            return Ok(ScenarioConfig::preset(p)?);
        }
        let path = self.config.as_ref().expect("clap requires a config or a preset");
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_config(&text)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| Path::new("out").join(&cfg.name))
    }
}

/// Accept a scenario document or a run manifest, whose `config` field is the scenario.
fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| cardiomr_core::Error::Config(format!("malformed JSON: {e}")))?;
    let doc = match value.get("config") {
        Some(c) if value.get("config_hash").is_some() => c.clone(),
        _ => value,
    };
    Ok(ScenarioConfig::from_json(&doc.to_string())?)
}

fn manifest(command: &str, arguments: serde_json::Value, cfg: &ScenarioConfig, started: Instant, timings: Vec<Timing>) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        arguments,
        config: cfg.clone(),
        config_hash: content_hash(cfg.to_json().as_bytes()),
        outputs: Vec::new(),
        wall_seconds: started.elapsed().as_secs_f64(),
        timings,
    }
}

/// Snapshot observers return core errors; an output failure is parked here and the run
/// aborted, so that it surfaces as an I/O error rather than a numerical one.
fn keep_io_error(r: Result<()>, slot: &mut Option<anyhow::Error>) -> cardiomr_core::Result<()> {
    r.map_err(|e| {
        *slot = Some(e);
        cardiomr_core::Error::Scheduling("aborted after an output error".into())
    })
}

fn finish_io<T>(r: cardiomr_core::Result<T>, slot: Option<anyhow::Error>) -> Result<T> {
    match slot {
        Some(e) => Err(e),
        None => Ok(r?),
    }
}

fn timings_rows(timings: &[Timing]) -> Vec<String> {
    timings.iter().map(|t| format!("{},{:e}", t.label, t.cpu_seconds)).collect()
}

fn run(source: &Source, method: Option<Method>) -> Result<()> {
    let started = Instant::now();
    let cfg = source.load()?;
    let method = method.unwrap_or_else(|| default_method(&cfg));
    let mut out = OutputDir::create(&source.out_dir(&cfg))?;
    let fields = cfg.model.fields();
    let mut rows = Vec::new();
    let mut snapshot_cpu = Vec::new();
    let mut io_error = None;
    let summary = run_method(&cfg, method, &mut |snap| {
        keep_io_error(out.write_snapshot("snapshots", snap, fields), &mut io_error)?;
        rows.push(MetricsRow { t: snap.t, eta: snap.eta, speedup: None, leaf_count: snap.leaves.len(), cpu_seconds: snap.cpu_seconds, errors: None });
        snapshot_cpu.push(Timing { label: format!("t{:.4}", snap.t), cpu_seconds: snap.cpu_seconds });
        Ok(())
    });
    let summary = finish_io(summary, io_error)?;
    out.write_csv("metrics.csv", METRICS_HEADER, rows.iter().map(|r| r.csv()))?;
    snapshot_cpu.push(Timing { label: format!("{method}_total"), cpu_seconds: summary.cpu_seconds });
    out.write_csv("timings.csv", "label,cpu_seconds", timings_rows(&snapshot_cpu))?;
    let args = json!({ "method": method, "seed": source.seed, "stats": summary.stats });
    let root = out.root().to_path_buf();
    out.finish(manifest("run", args, &cfg, started, snapshot_cpu))?;
    eprintln!(
        "{method}: t = {} reached in {:.2} s, {} leaves (eta {:.2}); output in {}",
        summary.t_end,
        summary.cpu_seconds,
        summary.final_leaf_count,
        summary.final_eta,
        root.display()
    );
    Ok(())
}

fn run_compare(source: &Source, methods: &[Method]) -> Result<()> {
    let started = Instant::now();
    let cfg = source.load()?;
    if methods.is_empty() {
        bail!(cardiomr_core::Error::Config("no methods given".into()));
    }
    let mut out = OutputDir::create(&source.out_dir(&cfg))?;
    let reference = Reference::compute(&cfg)?;
    let fields = cfg.model.fields();
    let mut io_error = None;
    let reports = compare(&cfg, methods, &reference, &mut |m, snap| {
        keep_io_error(out.write_snapshot(&format!("snapshots/{m}"), snap, fields), &mut io_error)
    });
    let reports = finish_io(reports, io_error)?;
    let mut rows = Vec::new();
    let mut timings = vec![Timing { label: format!("reference_L{}", reference.level), cpu_seconds: reference.cpu_seconds }];
    for r in &reports {
        let m = r.summary.method;
        rows.extend(r.rows.iter().map(|row| format!("{m},{}", row.csv())));
        timings.extend(r.rows.iter().map(|row| Timing { label: format!("{m}_t{:.4}", row.t), cpu_seconds: row.cpu_seconds }));
        timings.push(Timing { label: format!("{m}_total"), cpu_seconds: r.summary.cpu_seconds });
        eprintln!("{m}: {:.2} s, final eta {:.2}", r.summary.cpu_seconds, r.summary.final_eta);
    }
    out.write_csv("comparison.csv", &format!("method,{METRICS_HEADER}"), rows)?;
    out.write_csv("timings.csv", "label,cpu_seconds", timings_rows(&timings))?;
    let args = json!({ "methods": methods, "seed": source.seed, "reference_level": reference.level });
    out.finish(manifest("compare", args, &cfg, started, timings))?;
    Ok(())
}

fn run_calibrate(source: &Source, candidates: &[f64]) -> Result<()> {
    let started = Instant::now();
    let cfg = source.load()?;
    let mut out = OutputDir::create(&source.out_dir(&cfg))?;
    let reference = Reference::compute(&cfg)?;
    let rows = calibrate_c(&cfg, candidates, &reference)?;
    for w in rows.windows(2) {
        if w[1].c > w[0].c && w[1].eta < w[0].eta {
            eprintln!("note: eta decreased from {:.3} to {:.3} when C grew from {} to {}", w[0].eta, w[1].eta, w[0].c, w[1].c);
        }
    }
    out.write_csv("calibration.csv", CALIBRATION_HEADER, rows.iter().map(|r| r.csv()))?;
    let args = json!({ "candidates": candidates, "seed": source.seed });
    out.finish(manifest("calibrate-c", args, &cfg, started, Vec::new()))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<cardiomr_core::Error>()) {
        Some(e) if e.is_config() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run { source, method } => run(source, *method),
        Command::Compare { source, methods } => run_compare(source, methods),
        Command::CalibrateC { source, candidates } => run_calibrate(source, candidates),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_documents_are_accepted_as_configs() {
        let cfg = ScenarioConfig::preset("example1").unwrap();
        let m = manifest("run", json!({}), &cfg, Instant::now(), Vec::new());
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let e = parse_config("{").unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let e = anyhow::Error::from(cardiomr_core::Error::NonFinite { field: "v", time: 1.0 });
        assert_eq!(exit_code(&e), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}
