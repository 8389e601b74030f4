use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lmtp::estimators::{
    bootstrap_se, contrast, curve_difference, estimate_with, prepare, survival_curve_with, ContrastKind, Estimate,
    EstimatorConfig,
};
use lmtp::panel::ExposureKind;
use lmtp::policy::{validate_policy_requirements, Policy};
use lmtp::ratio::positivity_report;
use lmtp::rng;
use lmtp::simulation::{run_scenario_matrix, truth};

use crate::config::{estimator_config, load, load_dgp, Loaded, PolicySection, RunConfig, SimulateConfig};
use crate::error::{CliError, CliResult};
use crate::report::{curve_rows, sha256_hex, EstimateRow, Metadata, ProvenanceRow, ReportDir, ScenarioRow};

/// Multiplier-bootstrap draws for simultaneous survival bands.
pub const BAND_REPLICATES: usize = 1000;

const DEFAULT_OUTPUT: &str = "lmtp-report";

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    pub output: Option<PathBuf>,
    pub threads: usize,
}

/// What a successful command wrote, plus a short human-readable summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Vec<String>,
}

fn output_dir(inv: &Invocation, configured: &Option<PathBuf>) -> PathBuf {
    inv.output
        .clone()
        .or_else(|| configured.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

/// Refuse policies that fail the technical requirements for this exposure.
pub fn gate(src: &str, policy: &Policy, kind: &ExposureKind) -> CliResult<()> {
    let report = validate_policy_requirements(policy, kind);
    if report.passed() {
        return Ok(());
    }
    Err(CliError::Refused(format!(
        "policy '{src}' does not meet the technical requirements for a {} exposure: {}",
        report.exposure,
        report.summary()
    )))
}

struct Clock {
    started_unix: u64,
    start: Instant,
}

impl Clock {
    fn start() -> Clock {
        Clock {
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            start: Instant::now(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish<T>(
    command: &str,
    inv: &Invocation,
    loaded: &Loaded<T>,
    seed: u64,
    clock: Clock,
    mut dir: ReportDir,
    warnings: Vec<String>,
    summary: Vec<String>,
) -> CliResult<Outcome> {
    let meta = Metadata {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: inv.config.display().to_string(),
        config_sha256: sha256_hex(&loaded.text),
        seed,
        threads: inv.threads,
        parallel: lmtp::exec::is_parallel(),
        started_unix: clock.started_unix,
        wall_seconds: clock.start.elapsed().as_secs_f64(),
        files: dir.files.clone(),
        warnings,
    };
    dir.metadata(&meta)?;
    let mut files = dir.files.clone();
    files.push("metadata.json".into());
    Ok(Outcome {
        dir: dir.path().to_path_buf(),
        files,
        summary,
    })
}

fn summary_line(label: &str, e: &Estimate) -> String {
    match (e.se, e.ci) {
        (Some(se), Some((lo, hi))) => format!("{label:<40} {:>6}  {:.6}  se {:.6}  [{:.6}, {:.6}]", e.estimator.name(), e.psi, se, lo, hi),
        _ => format!("{label:<40} {:>6}  {:.6}", e.estimator.name(), e.psi),
    }
}

fn contrast_label(section: &PolicySection, kind: ContrastKind) -> String {
    let op = match kind {
        ContrastKind::Difference => "-",
        ContrastKind::Ratio => "/",
    };
    format!("({}) {op} ({})", section.rule, section.compare.as_deref().unwrap_or(""))
}

/// Contrast of two single-policy estimates; point estimate only when either
/// side lacks influence values.
fn contrast_or_point(a: &Estimate, b: &Estimate, kind: ContrastKind) -> CliResult<Estimate> {
    if !a.influence.is_empty() && !b.influence.is_empty() {
        return Ok(contrast(a, b, kind)?);
    }
    let mut e = a.clone();
    e.psi = match kind {
        ContrastKind::Difference => a.psi - b.psi,
        ContrastKind::Ratio => a.psi / b.psi,
    };
    e.contrast = Some(kind);
    e.se = None;
    e.ci = None;
    e.influence.clear();
    e.interval = lmtp::estimators::Interval::None;
    Ok(e)
}

pub fn cmd_estimate(inv: &Invocation) -> CliResult<Outcome> {
    let clock = Clock::start();
    let loaded: Loaded<RunConfig> = load(&inv.config)?;
    let c = &loaded.config;
    let cfg = estimator_config(&c.learners, &c.folds, c.truncation, c.alpha, c.seed)?;
    if c.estimators.kinds.is_empty() {
        return Err(CliError::Config("[estimators] kinds must not be empty".into()));
    }
    let (policy, compare) = c.policy.policies(c.seed)?;
    let data = c.data.load(&loaded.base, c.seed)?;
    let kind = data.exposure_kind().clone();
    gate(&c.policy.rule, &policy, &kind)?;
    if let (Some(src), Some(p)) = (&c.policy.compare, &compare) {
        gate(src, p, &kind)?;
    }
    let mut dir = ReportDir::create(&output_dir(inv, &c.output))?;

    let needs_ratios = c.estimators.kinds.iter().any(|k| k.needs_ratios());
    let mut rows = Vec::new();
    let mut provenance = Vec::new();
    let mut positivity = Vec::new();
    let mut warnings = Vec::new();
    let mut summary = Vec::new();
    let mut per_policy: Vec<Vec<Estimate>> = Vec::new();
    let sources: Vec<&str> = std::iter::once(c.policy.rule.as_str()).chain(c.policy.compare.as_deref()).collect();
    let policies: Vec<&Policy> = std::iter::once(&policy).chain(compare.as_ref()).collect();
    for (src, p) in sources.iter().zip(&policies) {
        let nuis = prepare(&data, p, &cfg, needs_ratios)?;
        if let Some(r) = &nuis.ratios {
            positivity.push((src.to_string(), positivity_report(r, c.diagnostics.alert, c.diagnostics.bins)));
            warnings.extend(r.warnings.iter().cloned());
        }
        let mut ests = Vec::new();
        for &k in &c.estimators.kinds {
            let e = if c.estimators.bootstrap > 0 && !k.has_influence() {
                bootstrap_se(k, &data, p, &cfg, c.estimators.bootstrap, rng::derive(c.seed, &[rng::streams::BOOTSTRAP]))?
            } else {
                estimate_with(k, &data, &nuis, &cfg)?
            };
            warnings.extend(e.warnings.iter().cloned());
            summary.push(summary_line(src, &e));
            rows.push(EstimateRow::new(src, &e));
            provenance.push(ProvenanceRow::new(src, &e));
            ests.push(e);
        }
        per_policy.push(ests);
    }
    if per_policy.len() == 2 {
        let label = contrast_label(&c.policy, c.policy.contrast);
        for (a, b) in per_policy[0].iter().zip(&per_policy[1]) {
            let d = contrast_or_point(a, b, c.policy.contrast)?;
            summary.push(summary_line(&label, &d));
            rows.push(EstimateRow::new(&label, &d));
        }
    }
    dir.table("estimates.csv", &rows)?;
    dir.table("provenance.csv", &provenance)?;
    if !positivity.is_empty() {
        dir.positivity(&positivity)?;
    }
    finish("estimate", inv, &loaded, c.seed, clock, dir, warnings, summary)
}

pub fn cmd_survival(inv: &Invocation) -> CliResult<Outcome> {
    let clock = Clock::start();
    let loaded: Loaded<RunConfig> = load(&inv.config)?;
    let c = &loaded.config;
    let cfg: EstimatorConfig = estimator_config(&c.learners, &c.folds, c.truncation, c.alpha, c.seed)?;
    if let Some(k) = c.estimators.kinds.iter().find(|k| !k.has_influence()) {
        return Err(CliError::Config(format!(
            "survival curves need influence values for their bands; '{}' has none (use tmle or sdr)",
            k.name()
        )));
    }
    if c.estimators.kinds.is_empty() {
        return Err(CliError::Config("[estimators] kinds must not be empty".into()));
    }
    let (policy, compare) = c.policy.policies(c.seed)?;
    let data = c.data.load(&loaded.base, c.seed)?;
    if !data.is_survival() {
        return Err(CliError::Config(
            "the survival command needs a survival outcome (outcome_type = \"survival\")".into(),
        ));
    }
    let kind = data.exposure_kind().clone();
    gate(&c.policy.rule, &policy, &kind)?;
    if let (Some(src), Some(p)) = (&c.policy.compare, &compare) {
        gate(src, p, &kind)?;
    }
    let mut dir = ReportDir::create(&output_dir(inv, &c.output))?;

    let mut rows = Vec::new();
    let mut positivity = Vec::new();
    let mut warnings = Vec::new();
    let mut summary = Vec::new();
    let sources: Vec<&str> = std::iter::once(c.policy.rule.as_str()).chain(c.policy.compare.as_deref()).collect();
    let policies: Vec<&Policy> = std::iter::once(&policy).chain(compare.as_ref()).collect();
    let mut curves = Vec::new();
    for (src, p) in sources.iter().zip(&policies) {
        let nuis = prepare(&data, p, &cfg, true)?;
        if let Some(r) = &nuis.ratios {
            positivity.push((src.to_string(), positivity_report(r, c.diagnostics.alert, c.diagnostics.bins)));
            warnings.extend(r.warnings.iter().cloned());
        }
        let mut mine = Vec::new();
        for &k in &c.estimators.kinds {
            let curve = survival_curve_with(&data, &nuis, k, &cfg, BAND_REPLICATES)?;
            if let Some(last) = curve.estimates.last() {
                summary.push(summary_line(&format!("{src} @ {}", curve.horizons.len()), last));
            }
            rows.extend(curve_rows(src, &curve));
            mine.push(curve);
        }
        curves.push(mine);
    }
    if curves.len() == 2 {
        let label = contrast_label(&c.policy, ContrastKind::Difference);
        for (a, b) in curves[0].iter().zip(&curves[1]) {
            let d = curve_difference(a, b, BAND_REPLICATES, rng::derive(c.seed, &[rng::streams::MULTIPLIER, 1]))?;
            if let Some(last) = d.estimates.last() {
                summary.push(summary_line(&format!("{label} @ {}", d.horizons.len()), last));
            }
            rows.extend(curve_rows(&label, &d));
        }
    }
    dir.table("curve.csv", &rows)?;
    dir.positivity(&positivity)?;
    finish("survival", inv, &loaded, c.seed, clock, dir, warnings, summary)
}

pub fn cmd_simulate(inv: &Invocation) -> CliResult<Outcome> {
    let clock = Clock::start();
    let loaded: Loaded<SimulateConfig> = load(&inv.config)?;
    let c = &loaded.config;
    let cfg = estimator_config(&c.learners, &c.folds, c.truncation, c.alpha, c.seed)?;
    let spec = load_dgp(&loaded.base, c.dgp.preset.as_deref(), c.dgp.file.as_deref())?;
    let (policy, compare) = c.policy.policies(c.seed)?;
    if compare.is_some() {
        return Err(CliError::Config("simulate takes a single policy ('compare' is not supported)".into()));
    }
    if c.scenarios.is_empty() {
        return Err(CliError::Config("at least one [[scenarios]] entry is required".into()));
    }
    gate(&c.policy.rule, &policy, &spec.exposure_kind())?;
    let mut dir = ReportDir::create(&output_dir(inv, &c.output))?;

    let psi = truth(&spec, &policy, c.truth_trajectories, rng::derive(c.seed, &[rng::streams::ORACLE]))?;
    let results = run_scenario_matrix(
        &spec,
        &policy,
        &c.scenarios,
        c.n,
        c.replicates,
        &c.estimators.kinds,
        &cfg,
        psi,
        c.seed,
    )?;
    let rows: Vec<ScenarioRow> = results.iter().map(ScenarioRow::from).collect();
    let summary = results
        .iter()
        .map(|r| {
            format!(
                "{:<20} {:>6}  bias {:+.5}  mc_se {:.5}  coverage {}",
                r.scenario,
                r.estimator.name(),
                r.bias,
                r.mc_se,
                r.coverage.map_or("-".to_string(), |v| format!("{v:.3}"))
            )
        })
        .collect();
    dir.table("results.csv", &rows)?;
    finish("simulate", inv, &loaded, c.seed, clock, dir, Vec::new(), summary)
}

/// Threads in the global pool (1 without the `parallel` feature).
pub fn pool_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
