//! Declarative data-generating processes.
//!
//! A predictor is `intercept + Σ coef · term`, where a term is a product of
//! factors separated by `*`. A factor names a baseline variable, a
//! time-varying covariate, the exposure `a`, or the time index `t`; it may
//! carry a lag (`L[t-1]`) and an indicator level (`a=2`, `a[t-1]=2`).
//! Lags reaching before `t = 0` evaluate to 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::ExposureKind;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictor {
    /// Used by Bernoulli laws only; normal means and categorical scores
    /// are always on the linear scale.
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub terms: BTreeMap<String, f64>,
}

impl Predictor {
    pub fn logit(intercept: f64, terms: &[(&str, f64)]) -> Predictor {
        Predictor {
            link: Link::Logit,
            intercept,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn identity(intercept: f64, terms: &[(&str, f64)]) -> Predictor {
        Predictor {
            link: Link::Identity,
            ..Predictor::logit(intercept, terms)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
pub enum VarLaw {
    Bernoulli { name: String, p: Predictor },
    Normal { name: String, mean: Predictor, sd: f64 },
}

impl VarLaw {
    pub fn name(&self) -> &str {
        match self {
            VarLaw::Bernoulli { name, .. } | VarLaw::Normal { name, .. } => name,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, VarLaw::Bernoulli { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExposureLaw {
    Binary {
        p: Predictor,
    },
    /// Multinomial logit with the first level as reference: one score per
    /// remaining level.
    Categorical {
        levels: Vec<f64>,
        scores: Vec<Predictor>,
    },
    Continuous {
        mean: Predictor,
        sd: f64,
    },
}

impl ExposureLaw {
    pub fn kind(&self) -> ExposureKind {
        match self {
            ExposureLaw::Binary { .. } => ExposureKind::Binary,
            ExposureLaw::Categorical { levels, .. } => ExposureKind::Categorical { levels: levels.clone() },
            ExposureLaw::Continuous { .. } => ExposureKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OutcomeLaw {
    /// Terminal binary outcome after `A_τ`.
    Binary { p: Predictor },
    /// Terminal normal outcome after `A_τ`.
    Continuous { mean: Predictor, sd: f64 },
    /// Event in interval `t` with probability `hazard` given `H_t, A_t`.
    Survival { hazard: Predictor },
}

fn default_exposure_name() -> String {
    "A".into()
}

fn default_outcome_name() -> String {
    "Y".into()
}

fn default_censoring_name() -> String {
    "C".into()
}

/// Full joint law of one trajectory. Within interval `t` the order is
/// covariates (in declaration order), exposure, censoring, then the event
/// (survival) or, after `A_τ`, the terminal outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub horizon: usize,
    #[serde(default)]
    pub baseline: Vec<VarLaw>,
    #[serde(default)]
    pub covariates: Vec<VarLaw>,
    #[serde(default = "default_exposure_name")]
    pub exposure_name: String,
    pub exposure: ExposureLaw,
    /// Probability of remaining under observation through interval `t`.
    #[serde(default)]
    pub censoring: Option<Predictor>,
    #[serde(default = "default_censoring_name")]
    pub censoring_name: String,
    #[serde(default = "default_outcome_name")]
    pub outcome_name: String,
    pub outcome: OutcomeLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Source {
    Baseline(usize),
    Covariate(usize),
    Exposure,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    pub src: Source,
    pub lag: usize,
    pub eq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Compiled {
    pub link: Link,
    pub intercept: f64,
    pub terms: Vec<(f64, Vec<Factor>)>,
}

/// What a predictor may read, by position in the within-interval order.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Slot {
    Baseline(usize),
    Covariate(usize),
    Exposure,
    After,
}

/// One trajectory's values so far.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Trajectory {
    pub baseline: Vec<f64>,
    /// `[t][j]`.
    pub covariates: Vec<Vec<f64>>,
    pub exposure: Vec<f64>,
}

impl Trajectory {
    pub fn new(n_baseline: usize) -> Trajectory {
        Trajectory {
            baseline: Vec::with_capacity(n_baseline),
            covariates: Vec::new(),
            exposure: Vec::new(),
        }
    }

    fn value(&self, f: &Factor, t: usize) -> f64 {
        if f.lag > t && !matches!(f.src, Source::Baseline(_)) {
            return 0.0;
        }
        let s = t.saturating_sub(f.lag);
        let v = match f.src {
            Source::Baseline(j) => self.baseline[j],
            Source::Covariate(j) => self.covariates[s][j],
            Source::Exposure => self.exposure[s],
            Source::Time => s as f64,
        };
        match f.eq {
            Some(level) => f64::from(u8::from(v == level)),
            None => v,
        }
    }
}

impl Compiled {
    pub fn linear(&self, tr: &Trajectory, t: usize) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|(c, fs)| c * fs.iter().map(|f| tr.value(f, t)).product::<f64>())
                .sum::<f64>()
    }

    /// Bernoulli probability; an identity link outside `[0, 1]` is improper.
    pub fn probability(&self, tr: &Trajectory, t: usize) -> Result<f64> {
        let lp = self.linear(tr, t);
        let p = match self.link {
            Link::Logit => stats::expit(lp),
            Link::Identity => lp,
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ImproperLaw(format!("probability {p} at t={t}")));
        }
        Ok(p)
    }
}

fn parse_factor(raw: &str, spec: &DgpSpec, slot: Slot) -> Result<Factor> {
    let bad = |m: &str| Error::Schema(format!("term factor '{raw}': {m}"));
    let (head, eq) = match raw.split_once('=') {
        Some((h, v)) => (h.trim(), Some(v.trim().parse::<f64>().map_err(|_| bad("indicator level is not a number"))?)),
        None => (raw.trim(), None),
    };
    let (name, lag) = match head.split_once('[') {
        Some((n, rest)) => {
            let inner = rest.strip_suffix(']').ok_or_else(|| bad("unclosed lag"))?;
            let k = inner
                .trim()
                .strip_prefix("t-")
                .and_then(|k| k.trim().parse::<usize>().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| bad("lag must look like [t-k] with k >= 1"))?;
            (n.trim(), k)
        }
        None => (head, 0),
    };
    let src = if name == "t" {
        Source::Time
    } else if name == "a" {
        Source::Exposure
    } else if let Some(j) = spec.baseline.iter().position(|b| b.name() == name) {
        Source::Baseline(j)
    } else if let Some(j) = spec.covariates.iter().position(|c| c.name() == name) {
        Source::Covariate(j)
    } else {
        return Err(bad("unknown variable"));
    };
    let visible = match (slot, src, lag) {
        (_, Source::Time, _) => !matches!(slot, Slot::Baseline(_)),
        (Slot::Baseline(i), Source::Baseline(j), 0) => j < i,
        (Slot::Baseline(_), _, _) => false,
        (_, Source::Baseline(_), 0) => true,
        (_, Source::Baseline(_), _) => false,
        (Slot::Covariate(i), Source::Covariate(j), 0) => j < i,
        (Slot::Covariate(_), Source::Exposure, 0) => false,
        (Slot::Exposure, Source::Exposure, 0) => false,
        _ => true,
    };
    if !visible {
        return Err(bad("not yet generated at this point of the interval"));
    }
    Ok(Factor { src, lag, eq })
}

pub(crate) fn compile(p: &Predictor, spec: &DgpSpec, slot: Slot) -> Result<Compiled> {
    let mut terms = Vec::with_capacity(p.terms.len());
    for (term, &coef) in &p.terms {
        if !coef.is_finite() {
            return Err(Error::ImproperLaw(format!("coefficient of '{term}' is not finite")));
        }
        let factors = term.split('*').map(|f| parse_factor(f, spec, slot)).collect::<Result<Vec<_>>>()?;
        terms.push((coef, factors));
    }
    if !p.intercept.is_finite() {
        return Err(Error::ImproperLaw("intercept is not finite".into()));
    }
    Ok(Compiled {
        link: p.link,
        intercept: p.intercept,
        terms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CompiledVar {
    Bernoulli(Compiled),
    Normal(Compiled, f64),
}

impl CompiledVar {
    fn new(v: &VarLaw, spec: &DgpSpec, slot: Slot) -> Result<CompiledVar> {
        Ok(match v {
            VarLaw::Bernoulli { p, .. } => CompiledVar::Bernoulli(compile(p, spec, slot)?),
            VarLaw::Normal { mean, sd, .. } => {
                if !(*sd > 0.0 && sd.is_finite()) {
                    return Err(Error::ImproperLaw(format!("normal sd {sd} for '{}'", v.name())));
                }
                CompiledVar::Normal(compile(mean, spec, slot)?, *sd)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CompiledExposure {
    Binary(Compiled),
    Categorical(Vec<f64>, Vec<Compiled>),
    Continuous(Compiled, f64),
}

impl CompiledExposure {
    /// Support with probabilities for discrete exposures.
    pub fn support(&self, tr: &Trajectory, t: usize) -> Result<Vec<(f64, f64)>> {
        match self {
            CompiledExposure::Binary(c) => {
                let p = c.probability(tr, t)?;
                Ok(vec![(0.0, 1.0 - p), (1.0, p)])
            }
            CompiledExposure::Categorical(levels, scores) => {
                let s: Vec<f64> = std::iter::once(0.0).chain(scores.iter().map(|c| c.linear(tr, t))).collect();
                let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                Ok(levels.iter().zip(e).map(|(&l, v)| (l, v / z)).collect())
            }
            CompiledExposure::Continuous(..) => Err(Error::OracleUnsupported("continuous exposure".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CompiledOutcome {
    Binary(Compiled),
    Continuous(Compiled, f64),
    Survival(Compiled),
}

/// A spec with every predictor resolved against the variable order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CompiledSpec {
    pub baseline: Vec<CompiledVar>,
    pub covariates: Vec<CompiledVar>,
    pub exposure: CompiledExposure,
    pub censoring: Option<Compiled>,
    pub outcome: CompiledOutcome,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    pub fn exposure_kind(&self) -> ExposureKind {
        self.exposure.kind()
    }

    pub fn is_survival(&self) -> bool {
        matches!(self.outcome, OutcomeLaw::Survival { .. })
    }

    /// Baseline and covariate names.
    pub fn variable_names(&self) -> Vec<String> {
        self.baseline.iter().chain(&self.covariates).map(|v| v.name().to_string()).collect()
    }

    /// Whether every variable has finite support (a normal terminal outcome
    /// is allowed: only its mean enters `E[Y(d)]`).
    pub fn is_discrete(&self) -> bool {
        self.baseline.iter().chain(&self.covariates).all(VarLaw::is_discrete)
            && !matches!(self.exposure, ExposureLaw::Continuous { .. })
    }

    pub(crate) fn compile(&self) -> Result<CompiledSpec> {
        let mut names: Vec<&str> = self.baseline.iter().chain(&self.covariates).map(VarLaw::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Schema("variable names must be unique".into()));
        }
        if names.iter().any(|n| *n == "a" || *n == "t" || n.contains(['[', ']', '=', '*'])) {
            return Err(Error::Schema("variable names may not be 'a', 't' or contain [ ] = *".into()));
        }
        let baseline = self
            .baseline
            .iter()
            .enumerate()
            .map(|(i, v)| CompiledVar::new(v, self, Slot::Baseline(i)))
            .collect::<Result<Vec<_>>>()?;
        let covariates = self
            .covariates
            .iter()
            .enumerate()
            .map(|(i, v)| CompiledVar::new(v, self, Slot::Covariate(i)))
            .collect::<Result<Vec<_>>>()?;
        let exposure = match &self.exposure {
            ExposureLaw::Binary { p } => CompiledExposure::Binary(compile(p, self, Slot::Exposure)?),
            ExposureLaw::Categorical { levels, scores } => {
                if levels.len() < 2 || scores.len() + 1 != levels.len() {
                    return Err(Error::Schema("categorical exposure needs one score per non-reference level".into()));
                }
                CompiledExposure::Categorical(
                    levels.clone(),
                    scores.iter().map(|s| compile(s, self, Slot::Exposure)).collect::<Result<_>>()?,
                )
            }
            ExposureLaw::Continuous { mean, sd } => {
                if !(*sd > 0.0 && sd.is_finite()) {
                    return Err(Error::ImproperLaw(format!("exposure sd {sd}")));
                }
                CompiledExposure::Continuous(compile(mean, self, Slot::Exposure)?, *sd)
            }
        };
        let censoring = self.censoring.as_ref().map(|c| compile(c, self, Slot::After)).transpose()?;
        let outcome = match &self.outcome {
            OutcomeLaw::Binary { p } => CompiledOutcome::Binary(compile(p, self, Slot::After)?),
            OutcomeLaw::Continuous { mean, sd } => {
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::ImproperLaw(format!("outcome sd {sd}")));
                }
                CompiledOutcome::Continuous(compile(mean, self, Slot::After)?, *sd)
            }
            OutcomeLaw::Survival { hazard } => CompiledOutcome::Survival(compile(hazard, self, Slot::After)?),
        };
        Ok(CompiledSpec {
            baseline,
            covariates,
            exposure,
            censoring,
            outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::presets;

    #[test]
    fn lagged_and_indicator_factors_parse() {
        let spec = presets::survival();
        let tr = Trajectory {
            baseline: vec![1.0],
            covariates: vec![vec![0.0], vec![1.0]],
            exposure: vec![2.0, 1.0],
        };
        let p = Predictor::logit(0.0, &[("a[t-1]=2", 1.0), ("severity[t-1]*a", 2.0)]);
        let c = compile(&p, &spec, Slot::After).unwrap();
        assert_eq!(c.linear(&tr, 1), 1.0 + 0.0);
        assert_eq!(c.linear(&tr, 0), 0.0);
    }

    #[test]
    fn forward_references_are_rejected() {
        let spec = presets::two_period();
        let p = Predictor::logit(0.0, &[("a", 1.0)]);
        assert!(compile(&p, &spec, Slot::Exposure).is_err());
        assert!(compile(&p, &spec, Slot::Covariate(0)).is_err());
        assert!(compile(&Predictor::logit(0.0, &[("bogus", 1.0)]), &spec, Slot::After).is_err());
    }

    #[test]
    fn specs_round_trip_through_toml() {
        let spec = presets::survival();
        let s = toml::to_string(&spec).unwrap();
        let back: DgpSpec = toml::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
