//! TOML run configurations. Unknown keys are rejected everywhere and the
//! root `seed` is mandatory; every random stream is derived from it.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use lmtp::estimators::{ContrastKind, EstimatorConfig, EstimatorKind};
use lmtp::learners::{LearnerSpec, StackSpec};
use lmtp::panel::{load_panel, PanelDataset, PanelSchema};
use lmtp::policy::{parse_policy_spec, Policy};
use lmtp::simulation::{presets, sample_dgp, DgpSpec, Scenario};
use lmtp::rng;

use crate::error::{CliError, CliResult};

fn default_alpha() -> f64 {
    0.05
}
fn default_crossfit() -> usize {
    5
}
fn default_cv() -> usize {
    5
}
fn default_alert() -> f64 {
    50.0
}
fn default_bins() -> usize {
    20
}
fn default_kinds() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Tmle, EstimatorKind::Sdr]
}
fn default_learners() -> Vec<LearnerSpec> {
    vec![LearnerSpec::glm(true)]
}
fn default_contrast() -> ContrastKind {
    ContrastKind::Difference
}
fn default_truth_mc() -> usize {
    200_000
}

/// Where the panel comes from: a delimited file with its schema, or `n`
/// draws from a DGP (a shipped preset or a DGP file).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PanelSchema>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub dgp_file: Option<PathBuf>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub rule: String,
    /// Reference policy; when present the report carries contrast rows.
    #[serde(default)]
    pub compare: Option<String>,
    #[serde(default = "default_contrast")]
    pub contrast: ContrastKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EstimatorKind>,
    /// Nonparametric bootstrap replicates for g-computation and IPW
    /// standard errors; 0 reports them without intervals.
    #[serde(default)]
    pub bootstrap: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            kinds: default_kinds(),
            bootstrap: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    #[serde(default = "default_learners")]
    pub outcome: Vec<LearnerSpec>,
    #[serde(default = "default_learners")]
    pub ratio: Vec<LearnerSpec>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        LearnerSection {
            outcome: default_learners(),
            ratio: default_learners(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSection {
    /// Cross-fitting folds for nuisance predictions.
    #[serde(default = "default_crossfit")]
    pub crossfit: usize,
    /// Folds for the stacking cross-validation inside each fit.
    #[serde(default = "default_cv")]
    pub cv: usize,
}

impl Default for FoldSection {
    fn default() -> Self {
        FoldSection {
            crossfit: default_crossfit(),
            cv: default_cv(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Ratios above this count as positivity alerts.
    #[serde(default = "default_alert")]
    pub alert: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            alert: default_alert(),
            bins: default_bins(),
        }
    }
}

/// Configuration for `estimate` and `survival`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub learners: LearnerSection,
    #[serde(default)]
    pub folds: FoldSection,
    /// Upper quantile at which cumulative ratios are capped.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

/// Configuration for `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub dgp: DgpSection,
    pub policy: PolicySection,
    pub n: usize,
    pub replicates: usize,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub learners: LearnerSection,
    #[serde(default)]
    pub folds: FoldSection,
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Monte Carlo trajectories for the truth when exact enumeration is
    /// not available.
    #[serde(default = "default_truth_mc")]
    pub truth_trajectories: usize,
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Raw config text plus its parsed form and the directory relative paths
/// resolve against.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub text: String,
    pub base: PathBuf,
    pub config: T,
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Loaded<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config '{}': {e}", path.display())))?;
    let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { text, base, config })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_dgp(base: &Path, preset: Option<&str>, file: Option<&Path>) -> CliResult<DgpSpec> {
    let spec = match (preset, file) {
        (Some(name), None) => presets::by_name(name).ok_or_else(|| {
            CliError::Config(format!("unknown preset '{name}' (expected one of {})", presets::NAMES.join(", ")))
        })?,
        (None, Some(f)) => {
            let path = resolve(base, f);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read DGP file '{}': {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        _ => return Err(CliError::Config("give exactly one of 'preset' or a DGP file".into())),
    };
    spec.validate()?;
    Ok(spec)
}

impl DataSection {
    pub fn load(&self, base: &Path, seed: u64) -> CliResult<PanelDataset> {
        match (&self.path, &self.schema) {
            (Some(p), Some(schema)) => {
                if self.preset.is_some() || self.dgp_file.is_some() || self.n.is_some() {
                    return Err(CliError::Config(
                        "[data] mixes a file source with a simulated one".into(),
                    ));
                }
                Ok(load_panel(resolve(base, p), schema)?)
            }
            (Some(_), None) => Err(CliError::Config("[data] path given without [data.schema]".into())),
            (None, Some(_)) => Err(CliError::Config("[data.schema] given without a path".into())),
            (None, None) => {
                let spec = load_dgp(base, self.preset.as_deref(), self.dgp_file.as_deref())?;
                let n = self
                    .n
                    .ok_or_else(|| CliError::Config("[data] simulated source needs 'n'".into()))?;
                Ok(sample_dgp(&spec, n, rng::derive(seed, &[rng::streams::SAMPLE]))?)
            }
        }
    }
}

impl PolicySection {
    fn parse_one(src: &str, seed: u64, which: u64) -> CliResult<Policy> {
        let p = parse_policy_spec(src).map_err(|e| CliError::Config(format!("policy '{src}': {e}")))?;
        Ok(p.with_seed(rng::derive(seed, &[rng::streams::RANDOMIZER, which])))
    }

    /// The target policy and the optional reference policy.
    pub fn policies(&self, seed: u64) -> CliResult<(Policy, Option<Policy>)> {
        let main = Self::parse_one(&self.rule, seed, 0)?;
        let compare = self.compare.as_deref().map(|c| Self::parse_one(c, seed, 1)).transpose()?;
        Ok((main, compare))
    }
}

pub fn estimator_config(
    learners: &LearnerSection,
    folds: &FoldSection,
    truncation: Option<f64>,
    alpha: f64,
    seed: u64,
) -> CliResult<EstimatorConfig> {
    if learners.outcome.is_empty() || learners.ratio.is_empty() {
        return Err(CliError::Config("learner stacks must not be empty".into()));
    }
    let stack = |l: &[LearnerSpec]| StackSpec {
        learners: l.to_vec(),
        cv_folds: folds.cv,
    };
    let mut cfg = EstimatorConfig::new(stack(&learners.outcome), stack(&learners.ratio))
        .with_folds(folds.crossfit)
        .with_seed(seed)
        .with_truncation(truncation);
    cfg.alpha = alpha;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        let src = r#"
[data]
preset = "point-treatment"
n = 100
[policy]
rule = "static: 1"
"#;
        let e = toml::from_str::<RunConfig>(src).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = r#"
seed = 1
colour = "blue"
[data]
preset = "point-treatment"
n = 100
[policy]
rule = "static: 1"
"#;
        assert!(toml::from_str::<RunConfig>(src).is_err());
        let nested = r#"
seed = 1
[data]
preset = "point-treatment"
n = 100
[policy]
rule = "static: 1"
[learners]
outcome = [{ family = "binomial-glm", depth = 3 }]
"#;
        assert!(toml::from_str::<RunConfig>(nested).is_err());
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let src = r#"
seed = 9
[data]
preset = "two-period"
n = 50
[policy]
rule = "static: 1"
compare = "natural"
"#;
        let c: RunConfig = toml::from_str(src).unwrap();
        assert_eq!(c.folds.crossfit, 5);
        assert_eq!(c.estimators.kinds, vec![EstimatorKind::Tmle, EstimatorKind::Sdr]);
        assert_eq!(c.alpha, 0.05);
        let (a, b) = c.policy.policies(c.seed).unwrap();
        assert_ne!(a.seed(), b.unwrap().seed());
    }

    #[test]
    fn scenarios_parse_keywords_and_lists() {
        let src = r#"
seed = 3
n = 100
replicates = 2
[dgp]
preset = "two-period"
[policy]
rule = "static: 1"
[[scenarios]]
id = "correct"
[[scenarios]]
id = "sequential"
omit = ["L"]
outcome_wrong = [1]
ratio_wrong = [0]
[[scenarios]]
id = "outcome"
omit = ["L"]
outcome_wrong = "all"
"#;
        let c: SimulateConfig = toml::from_str(src).unwrap();
        assert_eq!(c.scenarios.len(), 3);
        assert_eq!(c.scenarios[2].outcome_wrong.times(1), vec![0, 1]);
    }
}
