//! Delimited report tables and the run metadata file.
//!
//! Tables carry only deterministic content; wall time and timestamps go to
//! `metadata.json` so identical runs give byte-identical tables.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lmtp::estimators::{Estimate, Interval, SurvivalCurve};
use lmtp::ratio::PositivityReport;
use lmtp::simulation::ScenarioResult;

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct EstimateRow {
    pub policy: String,
    pub estimator: String,
    /// Empty for single-policy rows, else `difference` or `ratio`.
    pub contrast: String,
    pub psi: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub alpha: f64,
    pub interval: &'static str,
    pub n: usize,
    pub degenerate: bool,
    pub warnings: usize,
}

fn interval_name(i: Interval) -> &'static str {
    match i {
        Interval::Influence => "influence",
        Interval::Bootstrap => "bootstrap",
        Interval::None => "none",
    }
}

impl EstimateRow {
    pub fn new(policy: &str, e: &Estimate) -> EstimateRow {
        EstimateRow {
            policy: policy.to_string(),
            estimator: e.estimator.name().to_string(),
            contrast: e.contrast.map(|c| c.name().to_string()).unwrap_or_default(),
            psi: e.psi,
            se: e.se,
            ci_lower: e.ci.map(|c| c.0),
            ci_upper: e.ci.map(|c| c.1),
            alpha: e.alpha,
            interval: interval_name(e.interval),
            n: e.n,
            degenerate: e.degenerate,
            warnings: e.warnings.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ProvenanceRow {
    pub policy: String,
    pub estimator: String,
    pub crossfit_folds: usize,
    pub fold_seed: u64,
    pub truncation: Option<f64>,
    pub outcome_learners: String,
    pub ratio_learners: String,
    /// Fluctuation parameters by time, `;`-separated.
    pub fluctuation: String,
}

impl ProvenanceRow {
    pub fn new(policy: &str, e: &Estimate) -> ProvenanceRow {
        let p = &e.provenance;
        ProvenanceRow {
            policy: policy.to_string(),
            estimator: e.estimator.name().to_string(),
            crossfit_folds: p.folds,
            fold_seed: p.fold_seed,
            truncation: p.truncation,
            outcome_learners: p.outcome_learners.join(";"),
            ratio_learners: p.ratio_learners.join(";"),
            fluctuation: p.fluctuation.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Serialize)]
struct PositivityCsv<'a> {
    policy: &'a str,
    t: usize,
    quantity: &'static str,
    n: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
    alert_threshold: f64,
    alerts: usize,
}

#[derive(Debug, Serialize)]
struct HistogramCsv<'a> {
    policy: &'a str,
    t: usize,
    quantity: &'static str,
    lower: f64,
    upper: f64,
    count: usize,
}

#[derive(Debug, Serialize)]
pub struct CurveRow {
    pub policy: String,
    pub estimator: String,
    pub horizon: usize,
    pub psi: f64,
    pub raw: f64,
    pub se: f64,
    pub pointwise_lower: f64,
    pub pointwise_upper: f64,
    pub simultaneous_lower: f64,
    pub simultaneous_upper: f64,
    pub band_quantile: f64,
}

pub fn curve_rows(policy: &str, c: &SurvivalCurve) -> Vec<CurveRow> {
    let se = c.se();
    c.horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let psi = c.estimates[k].psi;
            CurveRow {
                policy: policy.to_string(),
                estimator: c.estimator.name().to_string(),
                horizon: h,
                psi,
                raw: c.raw[k],
                se: se[k],
                pointwise_lower: psi - c.pointwise[k],
                pointwise_upper: psi + c.pointwise[k],
                simultaneous_lower: psi - c.simultaneous[k],
                simultaneous_upper: psi + c.simultaneous[k],
                band_quantile: c.band_quantile,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub estimator: String,
    pub truth: f64,
    pub replicates: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mc_sd: f64,
    pub mc_se: f64,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
}

impl From<&ScenarioResult> for ScenarioRow {
    fn from(r: &ScenarioResult) -> Self {
        ScenarioRow {
            scenario: r.scenario.clone(),
            estimator: r.estimator.name().to_string(),
            truth: r.truth,
            replicates: r.replicates,
            failures: r.failures,
            mean_estimate: r.mean_estimate,
            bias: r.bias,
            mc_sd: r.mc_sd,
            mc_se: r.mc_se,
            mean_se: r.mean_se,
            coverage: r.coverage,
        }
    }
}

/// Output directory that records every file written into it.
pub struct ReportDir {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl ReportDir {
    pub fn create(dir: &Path) -> CliResult<ReportDir> {
        std::fs::create_dir_all(dir)?;
        Ok(ReportDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn positivity(&mut self, reports: &[(String, PositivityReport)]) -> CliResult<()> {
        let mut rows = Vec::new();
        let mut bins = Vec::new();
        for (policy, rep) in reports {
            for r in &rep.rows {
                rows.push(PositivityCsv {
                    policy,
                    t: r.t,
                    quantity: r.quantity,
                    n: r.n,
                    min: r.min,
                    q1: r.q1,
                    median: r.median,
                    q3: r.q3,
                    max: r.max,
                    mean: r.mean,
                    alert_threshold: rep.alert_threshold,
                    alerts: r.alerts,
                });
            }
            for b in &rep.histogram {
                bins.push(HistogramCsv {
                    policy,
                    t: b.t,
                    quantity: b.quantity,
                    lower: b.lower,
                    upper: b.upper,
                    count: b.count,
                });
            }
        }
        self.table("positivity.csv", &rows)?;
        self.table("positivity_histogram.csv", &bins)
    }

    pub fn metadata(&mut self, meta: &Metadata) -> CliResult<()> {
        let text = serde_json::to_string_pretty(meta).map_err(|e| crate::error::CliError::Output(e.to_string()))?;
        std::fs::write(self.dir.join("metadata.json"), text + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
