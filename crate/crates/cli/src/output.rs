//! CSV and manifest writers. Floats use `{:.16e}` so every value round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use authsim_core::sim::InstantRecord;
use authsim_core::threshold::flags;
use serde::Serialize;

use crate::config::{Config, Metric};
use crate::CliError;

pub const INSTANTS_HEADER: &str =
    "t,sensor,eta_P,eta_C,p_tn_analytic,p_fn1_analytic,p_fn2_analytic,p_tn_emp,p_fn1_emp,p_fn2_emp,opt_iters,opt_flags";

pub const SWEEP_HEADER: &str = "param,value,method,instants,p_tn_analytic,p_fn1_analytic,p_fn2_analytic,\
p_tn_emp,p_fn1_emp,p_fn2_emp,p_fn1_emp_std,p_fn2_emp_std,flagged_instants";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn metric(r: &InstantRecord, m: Metric) -> f64 {
    let a = r.analytic_array();
    let e = r.empirical();
    match m {
        Metric::PTnAnalytic => a[0],
        Metric::PFn1Analytic => a[1],
        Metric::PFn2Analytic => a[2],
        Metric::PTnEmp => e[0],
        Metric::PFn1Emp => e[1],
        Metric::PFn2Emp => e[2],
        Metric::EtaP => r.thresholds.eta_p,
        Metric::EtaC => r.thresholds.eta_c,
    }
}

/// Buffered text file that reports the path on failure.
pub struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvFile {
    pub fn create(path: &Path, header: &str) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut f = Self { path: path.to_owned(), out: BufWriter::new(file) };
        f.line(header)?;
        Ok(f)
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.line(&fields.join(","))
    }

    fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

pub fn write_instants(path: &Path, records: &[InstantRecord]) -> Result<PathBuf, CliError> {
    let mut f = CsvFile::create(path, INSTANTS_HEADER)?;
    for r in records {
        let a = r.analytic_array();
        let e = r.empirical();
        f.row(&[
            num(r.t),
            r.sensor.to_string(),
            num(r.thresholds.eta_p),
            num(r.thresholds.eta_c),
            num(a[0]),
            num(a[1]),
            num(a[2]),
            num(e[0]),
            num(e[1]),
            num(e[2]),
            r.opt_iters.to_string(),
            flags::describe(r.opt_flags),
        ])?;
    }
    f.finish()
}

pub fn write_cdf(path: &Path, m: Metric, records: &[InstantRecord]) -> Result<PathBuf, CliError> {
    let values: Vec<f64> = records.iter().map(|r| metric(r, m)).collect();
    let cdf = authsim_core::sim::empirical_cdf(&values)?;
    let mut f = CsvFile::create(path, &format!("{},cdf", m.name()))?;
    for (x, p) in cdf {
        f.row(&[num(x), num(p)])?;
    }
    f.finish()
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub config_digest: String,
    pub seed: u64,
    pub version: &'static str,
    pub timestamp: String,
    pub outputs: Vec<String>,
    pub config: &'a Config,
}

impl<'a> RunManifest<'a> {
    pub fn new(config: &'a Config, outputs: &[PathBuf]) -> Self {
        Self {
            config_digest: config.digest(),
            seed: config.scenario.seed,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            config,
        }
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        Ok(path.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.05, 1.0 / 3.0, 1e-300, 123456.789, 0.0, f64::INFINITY] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn metric_names() {
        assert_eq!(Metric::PFn2Emp.name(), "p_fn2_emp");
        assert_eq!(Metric::EtaP.name(), "eta_p");
    }
}
