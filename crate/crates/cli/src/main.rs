mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use authsim_core::authengine::Method;
use authsim_core::sim::{self, InstantRecord, ScenarioConfig, ThresholdMode};
use clap::{Args, Parser, Subcommand};

use config::{Config, SweepParam, SweepSpec};
use output::{num, CsvFile, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] authsim_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_owned(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Numeric(authsim_core::Error::InvalidConfig(_)) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "authsim", version, about = "Kalman-filter physical-layer authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set seed=7` or `--set sweep.values=[1,2]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes instants.csv, cdf_<metric>.csv and manifest.json
    /// (plus sweep.csv when the file has a [sweep] table).
    Run(Common),
    /// Time-averaged metrics for each value of one parameter; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: Option<SweepParam>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated methods: chi-square, gaussian, asymptotic.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Vec<Method>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn method_name(m: Method) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("AUTHSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("AUTHSIM_THREADS={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("AUTHSIM_THREADS: {e}")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn cmd_run(common: &Common) -> Result<(), CliError> {
    let cfg = Config::load(&common.config, &common.overrides)?;
    create_dir(&common.out)?;
    let records = sim::run(&cfg.scenario)?;
    let mut outputs = vec![output::write_instants(&common.out.join("instants.csv"), &records)?];
    for &m in &cfg.output.cdf {
        outputs.push(output::write_cdf(&common.out.join(format!("cdf_{}.csv", m.name())), m, &records)?);
    }
    if let Some(spec) = &cfg.sweep {
        outputs.push(write_sweep(&common.out.join("sweep.csv"), &cfg.scenario, spec)?);
    }
    let manifest = common.out.join("manifest.json");
    outputs.push(manifest.clone());
    RunManifest::new(&cfg, &outputs).write(&manifest)?;
    report(&records);
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    param: Option<SweepParam>,
    values: Vec<f64>,
    methods: Vec<Method>,
) -> Result<(), CliError> {
    let mut cfg = Config::load(&common.config, &common.overrides)?;
    let mut spec = cfg.sweep.take();
    if let Some(param) = param {
        spec = Some(SweepSpec { param, values: Vec::new(), methods: Vec::new() });
    }
    let mut spec = spec.ok_or_else(|| {
        CliError::Config(format!("{}: no --param given and no [sweep] table", common.config.display()))
    })?;
    if !values.is_empty() {
        spec.values = values;
    }
    if !methods.is_empty() {
        spec.methods = methods;
    }
    if spec.values.is_empty() {
        return Err(CliError::Config("sweep has no values".into()));
    }
    cfg.sweep = Some(spec.clone());
    create_dir(&common.out)?;
    let sweep = write_sweep(&common.out.join("sweep.csv"), &cfg.scenario, &spec)?;
    let manifest = common.out.join("manifest.json");
    RunManifest::new(&cfg, &[sweep, manifest.clone()]).write(&manifest)?;
    Ok(())
}

/// Scenario for one sweep point; an eta sweep switches to fixed thresholds `η_P = η_C = value`.
fn sweep_point(
    base: &ScenarioConfig,
    param: SweepParam,
    value: f64,
    method: Method,
) -> Result<ScenarioConfig, CliError> {
    let mut cfg = base.clone();
    cfg.method = method;
    match param {
        SweepParam::MC => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(CliError::Config(format!("m_c sweep value {value} is not a positive integer")));
            }
            cfg.m_c = value as usize;
        }
        SweepParam::Eta => {
            cfg.threshold_mode = ThresholdMode::Fixed;
            cfg.eta_p = value;
            cfg.eta_c = value;
        }
    }
    cfg.validate().map_err(|e| CliError::Config(format!("sweep {}={value}: {e}", param.name())))?;
    Ok(cfg)
}

fn write_sweep(path: &Path, base: &ScenarioConfig, spec: &SweepSpec) -> Result<PathBuf, CliError> {
    let methods = if spec.methods.is_empty() { vec![base.method] } else { spec.methods.clone() };
    let points = spec
        .values
        .iter()
        .flat_map(|&v| methods.iter().map(move |&m| (v, m)))
        .map(|(v, m)| sweep_point(base, spec.param, v, m).map(|cfg| (v, m, cfg)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut f = CsvFile::create(path, output::SWEEP_HEADER)?;
    for (value, method, cfg) in points {
        let records = sim::run(&cfg)?;
        let col = |k: usize, analytic: bool| -> Vec<f64> {
            records.iter().map(|r| if analytic { r.analytic_array()[k] } else { r.empirical()[k] }).collect()
        };
        let mean = |v: Vec<f64>| sim::mean_std(&v).0;
        let std = |v: Vec<f64>| sim::mean_std(&v).1;
        f.row(&[
            spec.param.name().to_owned(),
            num(value),
            method_name(method),
            records.len().to_string(),
            num(mean(col(0, true))),
            num(mean(col(1, true))),
            num(mean(col(2, true))),
            num(mean(col(0, false))),
            num(mean(col(1, false))),
            num(mean(col(2, false))),
            num(std(col(1, false))),
            num(std(col(2, false))),
            records.iter().filter(|r| r.opt_flags != 0).count().to_string(),
        ])?;
        eprintln!("{}={} {}: done", spec.param.name(), value, method_name(method));
    }
    f.finish()
}

fn report(records: &[InstantRecord]) {
    let mean = |k: usize| sim::mean_std(&records.iter().map(|r| r.empirical()[k]).collect::<Vec<_>>()).0;
    eprintln!("{} instants: mean P_TN {:.4}, P_FN1 {:.4}, P_FN2 {:.4}", records.len(), mean(0), mean(1), mean(2));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(common) => cmd_run(&common),
        Command::Sweep { common, param, values, methods } => cmd_sweep(&common, param, values, methods),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("authsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
