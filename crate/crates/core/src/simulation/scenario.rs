//! Replicated estimation under deliberate nuisance misspecification.

use serde::{Deserialize, Serialize};

use super::{oracle_exact, oracle_mc, sample_dgp, DgpSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, EstimatorConfig, EstimatorKind};
use crate::learners::{StackPlan, StackSpec};
use crate::policy::Policy;
use crate::{exec, rng, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    All,
    None,
}

/// Times at which a nuisance is broken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSet {
    Keyword(Keyword),
    Times(Vec<usize>),
}

impl Default for TimeSet {
    fn default() -> Self {
        TimeSet::Keyword(Keyword::None)
    }
}

impl TimeSet {
    pub fn times(&self, horizon: usize) -> Vec<usize> {
        match self {
            TimeSet::Keyword(Keyword::All) => (0..=horizon).collect(),
            TimeSet::Keyword(Keyword::None) => Vec::new(),
            TimeSet::Times(v) => v.clone(),
        }
    }
}

/// A misspecification pattern: at the listed times the nuisance learners
/// lose the `omit` variables (at every lag).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub omit: Vec<String>,
    #[serde(default)]
    pub outcome_wrong: TimeSet,
    #[serde(default)]
    pub ratio_wrong: TimeSet,
}

impl Scenario {
    pub fn correct(id: &str) -> Scenario {
        Scenario {
            id: id.into(),
            omit: Vec::new(),
            outcome_wrong: TimeSet::default(),
            ratio_wrong: TimeSet::default(),
        }
    }

    pub fn broken(id: &str, omit: &[&str], outcome_wrong: TimeSet, ratio_wrong: TimeSet) -> Scenario {
        Scenario {
            id: id.into(),
            omit: omit.iter().map(|s| s.to_string()).collect(),
            outcome_wrong,
            ratio_wrong,
        }
    }

    pub fn validate(&self, spec: &DgpSpec) -> Result<()> {
        let names = spec.variable_names();
        for o in &self.omit {
            if !names.contains(o) {
                return Err(Error::Scenario(format!("scenario '{}' omits unknown column '{o}'", self.id)));
            }
        }
        for t in self.outcome_wrong.times(spec.horizon).iter().chain(&self.ratio_wrong.times(spec.horizon)) {
            if *t > spec.horizon {
                return Err(Error::Scenario(format!(
                    "scenario '{}' breaks time {t} beyond horizon {}",
                    self.id, spec.horizon
                )));
            }
        }
        if self.omit.is_empty()
            && (!self.outcome_wrong.times(spec.horizon).is_empty() || !self.ratio_wrong.times(spec.horizon).is_empty())
        {
            return Err(Error::Scenario(format!("scenario '{}' breaks nuisances but omits nothing", self.id)));
        }
        Ok(())
    }

    fn degrade(&self, stack: &StackSpec) -> StackSpec {
        let omit: Vec<&str> = self.omit.iter().map(String::as_str).collect();
        StackSpec {
            learners: stack.learners.iter().map(|l| l.clone().excluding(&omit)).collect(),
            cv_folds: stack.cv_folds,
        }
    }

    fn plan(&self, base: &StackPlan, times: Vec<usize>) -> StackPlan {
        let mut plan = base.clone();
        for t in times {
            let broken = self.degrade(base.at(t));
            plan.by_time.insert(t, broken);
        }
        plan
    }

    /// The base configuration with this scenario's learners swapped in.
    pub fn apply(&self, cfg: &EstimatorConfig, horizon: usize) -> EstimatorConfig {
        EstimatorConfig {
            outcome: self.plan(&cfg.outcome, self.outcome_wrong.times(horizon)),
            ratio: self.plan(&cfg.ratio, self.ratio_wrong.times(horizon)),
            ..cfg.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub truth: f64,
    pub replicates: usize,
    /// Replicates whose estimation failed (excluded from the summaries).
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte Carlo sd of the estimates and the SE of their mean.
    pub mc_sd: f64,
    pub mc_se: f64,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
}

/// `E[Y(d)]` by enumeration when possible, else by Monte Carlo with `m`
/// trajectories.
pub fn truth(spec: &DgpSpec, policy: &Policy, m: usize, seed: u64) -> Result<f64> {
    match oracle_exact(spec, policy) {
        Ok(v) => Ok(v),
        Err(Error::OracleUnsupported(_)) => Ok(oracle_mc(spec, policy, m, seed)?.last().0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Draw {
    psi: f64,
    se: Option<f64>,
    ci: Option<(f64, f64)>,
}

/// Sample `replicates` datasets of size `n` and run every estimator under
/// every scenario. Replicate `r` uses data seed `derive(seed, [r])`, so
/// results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_scenario_matrix(
    spec: &DgpSpec,
    policy: &Policy,
    scenarios: &[Scenario],
    n: usize,
    replicates: usize,
    estimators: &[EstimatorKind],
    base: &EstimatorConfig,
    truth: f64,
    seed: u64,
) -> Result<Vec<ScenarioResult>> {
    if replicates == 0 {
        return Err(Error::Scenario("at least one replicate is required".into()));
    }
    if scenarios.is_empty() || estimators.is_empty() {
        return Err(Error::Scenario("need at least one scenario and one estimator".into()));
    }
    spec.validate()?;
    for s in scenarios {
        s.validate(spec)?;
    }
    let cfgs: Vec<EstimatorConfig> = scenarios.iter().map(|s| s.apply(base, spec.horizon)).collect();
    let runs: Vec<Vec<Option<Vec<Draw>>>> = exec::try_map_range(replicates, |r| -> Result<_> {
        let data = sample_dgp(spec, n, rng::derive(seed, &[rng::streams::REPLICATE, r as u64]))?;
        Ok(cfgs
            .iter()
            .enumerate()
            .map(|(k, cfg)| {
                let cfg = EstimatorConfig {
                    seed: rng::derive(seed, &[rng::streams::REPLICATE, r as u64, k as u64]),
                    ..cfg.clone()
                };
                match estimate_all(estimators, &data, policy, &cfg) {
                    Ok(ests) => Some(
                        ests.iter()
                            .map(|e| Draw {
                                psi: e.psi,
                                se: e.se,
                                ci: e.ci,
                            })
                            .collect(),
                    ),
                    Err(e) => {
                        log::warn!("replicate {r}, scenario {}: {e}", scenarios[k].id);
                        None
                    }
                }
            })
            .collect())
    })?;
    let mut out = Vec::new();
    for (k, s) in scenarios.iter().enumerate() {
        for (j, &est) in estimators.iter().enumerate() {
            let draws: Vec<Draw> = runs.iter().filter_map(|r| r[k].as_ref().map(|d| d[j])).collect();
            let m = draws.len();
            let psis: Vec<f64> = draws.iter().map(|d| d.psi).collect();
            let mean = if m > 0 { stats::mean(&psis) } else { f64::NAN };
            let sd = if m > 1 { stats::sd(&psis) } else { 0.0 };
            let ses: Vec<f64> = draws.iter().filter_map(|d| d.se).collect();
            let cis: Vec<(f64, f64)> = draws.iter().filter_map(|d| d.ci).collect();
            out.push(ScenarioResult {
                scenario: s.id.clone(),
                estimator: est,
                truth,
                replicates,
                failures: replicates - m,
                mean_estimate: mean,
                bias: mean - truth,
                mc_sd: sd,
                mc_se: if m > 0 { sd / (m as f64).sqrt() } else { f64::NAN },
                mean_se: (!ses.is_empty()).then(|| stats::mean(&ses)),
                coverage: (!cis.is_empty()).then(|| {
                    cis.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count() as f64 / cis.len() as f64
                }),
            });
        }
    }
    Ok(out)
}
