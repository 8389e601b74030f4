//! Estimators of `E[Y(d)]`: sequential-regression g-computation, IPW,
//! TMLE and SDR, with influence-based inference, a unit bootstrap for the
//! plug-in estimators, contrasts, and survival curves with simultaneous
//! bands.

mod bootstrap;
mod contrast;
mod fluctuation;
mod recursion;
mod survival;

pub use bootstrap::bootstrap_se;
pub use contrast::{contrast, ContrastKind};
pub use fluctuation::fluctuate;
pub use survival::{curve_difference, simultaneous_band, survival_curve, survival_curve_with, SurvivalCurve};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{folds_or_single, FoldAssignment, StackPlan, StackSpec};
use crate::panel::PanelDataset;
use crate::policy::Policy;
use crate::ratio::{estimate_ratios_with, RatioConfig, RatioEstimates};
use crate::{rng, stats};

use recursion::Recursion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Gcomp,
    Ipw,
    Tmle,
    Sdr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Gcomp, EstimatorKind::Ipw, EstimatorKind::Tmle, EstimatorKind::Sdr];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Gcomp => "gcomp",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Tmle => "tmle",
            EstimatorKind::Sdr => "sdr",
        }
    }

    pub fn needs_ratios(self) -> bool {
        self != EstimatorKind::Gcomp
    }

    pub fn needs_outcome(self) -> bool {
        self != EstimatorKind::Ipw
    }

    /// Whether the estimate carries influence values by construction.
    pub fn has_influence(self) -> bool {
        matches!(self, EstimatorKind::Tmle | EstimatorKind::Sdr)
    }
}

/// How the standard error and interval were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interval {
    Influence,
    Bootstrap,
    None,
}

/// Min-max map of the outcome onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.min) / self.range()
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * self.range()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    /// Cross-fitting folds and the seed that drew them.
    pub folds: usize,
    pub fold_seed: u64,
    pub truncation: Option<f64>,
    pub outcome_learners: Vec<String>,
    pub ratio_learners: Vec<String>,
    /// TMLE fluctuation coefficients by time.
    pub fluctuation: Vec<f64>,
    /// Last time index of the recursion.
    pub last_time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub estimator: EstimatorKind,
    /// Set when this estimate is a contrast of two others.
    pub contrast: Option<ContrastKind>,
    pub psi: f64,
    /// Per-unit influence values on the outcome scale; empty when the
    /// estimator provides none.
    pub influence: Vec<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub alpha: f64,
    pub interval: Interval,
    pub n: usize,
    /// All observed outcomes were equal.
    pub degenerate: bool,
    pub scaling: Scaling,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl Estimate {
    /// SE and Wald interval from the current influence values.
    fn with_influence(mut self, influence: Vec<f64>) -> Estimate {
        let n = influence.len();
        let se = if n > 1 { stats::sd(&influence) / (n as f64).sqrt() } else { 0.0 };
        let z = stats::z_critical(self.alpha);
        self.influence = influence;
        self.se = Some(se);
        self.ci = Some((self.psi - z * se, self.psi + z * se));
        self.interval = Interval::Influence;
        self
    }

    pub fn ci_half_width(&self) -> Option<f64> {
        self.ci.map(|(lo, hi)| (hi - lo) / 2.0)
    }

    pub fn label(&self) -> String {
        match self.contrast {
            Some(c) => format!("{}-{}", self.estimator.name(), c.name()),
            None => self.estimator.name().to_string(),
        }
    }
}

/// Settings shared by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub outcome: StackPlan,
    pub ratio: StackPlan,
    /// Cross-fitting folds; 1 trains and predicts on the full sample.
    pub crossfit_folds: usize,
    /// Per-time ratio truncation quantile in `(0.5, 1]`.
    pub truncation: Option<f64>,
    pub alpha: f64,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(outcome: StackSpec, ratio: StackSpec) -> EstimatorConfig {
        EstimatorConfig {
            outcome: outcome.into(),
            ratio: ratio.into(),
            crossfit_folds: 5,
            truncation: None,
            alpha: 0.05,
            seed: 0,
        }
    }

    pub fn with_folds(mut self, k: usize) -> EstimatorConfig {
        self.crossfit_folds = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> EstimatorConfig {
        self.seed = seed;
        self
    }

    pub fn with_truncation(mut self, q: Option<f64>) -> EstimatorConfig {
        self.truncation = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Schema(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(q) = self.truncation {
            if !(q > 0.5 && q <= 1.0) {
                return Err(Error::Schema(format!("truncation quantile must lie in (0.5, 1], got {q}")));
            }
        }
        for s in std::iter::once(&self.outcome.default)
            .chain(self.outcome.by_time.values())
            .chain(std::iter::once(&self.ratio.default))
            .chain(self.ratio.by_time.values())
        {
            if s.learners.is_empty() {
                return Err(Error::LearnerSpec("empty learner stack".into()));
            }
            for l in &s.learners {
                l.validate()?;
            }
        }
        Ok(())
    }

    fn provenance(&self, folds: &FoldAssignment, last_time: usize) -> Provenance {
        Provenance {
            folds: folds.k(),
            fold_seed: folds.seed(),
            truncation: self.truncation,
            outcome_learners: self.outcome.labels(),
            ratio_learners: self.ratio.labels(),
            fluctuation: Vec::new(),
            last_time,
        }
    }
}

/// Policy exposures, folds and (optionally) ratios for one policy on one
/// dataset, shared across estimators and horizons.
#[derive(Debug, Clone)]
pub struct Nuisance {
    /// `A_t^d`, `[t][unit]`.
    pub shifted: Vec<Vec<f64>>,
    pub folds: FoldAssignment,
    pub ratios: Option<RatioEstimates>,
}

impl Nuisance {
    pub fn ratios(&self) -> Result<&RatioEstimates> {
        self.ratios.as_ref().ok_or(Error::MissingRatios(0))
    }
}

/// Evaluate the policy, draw folds and fit ratios if `with_ratios`.
pub fn prepare(data: &PanelDataset, policy: &Policy, cfg: &EstimatorConfig, with_ratios: bool) -> Result<Nuisance> {
    cfg.validate()?;
    let policy = policy.bind(data.exposure_kind())?;
    let shifted = policy.exposures_under(data, false)?;
    let folds = folds_or_single(
        data.n_units(),
        cfg.crossfit_folds,
        rng::derive(cfg.seed, &[rng::streams::FOLDS]),
    )?;
    let ratios = if with_ratios {
        let rc = RatioConfig {
            stack: cfg.ratio.clone(),
            counterfactual_history: false,
            truncation: cfg.truncation,
            seed: cfg.seed,
        };
        Some(estimate_ratios_with(data, &shifted, &rc, &folds)?)
    } else {
        None
    };
    Ok(Nuisance { shifted, folds, ratios })
}

/// Fit nuisances and run one estimator on the terminal (or final-horizon)
/// outcome.
pub fn estimate(kind: EstimatorKind, data: &PanelDataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<Estimate> {
    let nuis = prepare(data, policy, cfg, kind.needs_ratios())?;
    estimate_with(kind, data, &nuis, cfg)
}

/// Run every estimator in `kinds` on shared nuisances.
pub fn estimate_all(
    kinds: &[EstimatorKind],
    data: &PanelDataset,
    policy: &Policy,
    cfg: &EstimatorConfig,
) -> Result<Vec<Estimate>> {
    let nuis = prepare(data, policy, cfg, kinds.iter().any(|k| k.needs_ratios()))?;
    kinds.iter().map(|&k| estimate_with(k, data, &nuis, cfg)).collect()
}

pub fn estimate_with(kind: EstimatorKind, data: &PanelDataset, nuis: &Nuisance, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_at(kind, data, nuis, cfg, data.horizon())
}

/// Scaling for the outcome measured at `last`.
fn outcome_scaling(data: &PanelDataset) -> Scaling {
    let (min, max) = data.outcome_range();
    Scaling { min, max }
}

/// Estimate `E[Y_{last}(d)]`, with the recursion running over `0..=last`.
pub(crate) fn estimate_at(
    kind: EstimatorKind,
    data: &PanelDataset,
    nuis: &Nuisance,
    cfg: &EstimatorConfig,
    last: usize,
) -> Result<Estimate> {
    if last > data.horizon() {
        return Err(Error::Horizon(format!("time {last} beyond horizon {}", data.horizon())));
    }
    if !data.is_survival() && last != data.horizon() {
        return Err(Error::Horizon("a terminal outcome is only measured at the horizon".into()));
    }
    let n = data.n_units();
    let scaling = outcome_scaling(data);
    let y_raw = data.outcome_through(last);
    let observed: Vec<f64> = y_raw.iter().copied().filter(|v| !v.is_nan()).collect();
    if observed.is_empty() {
        return Err(Error::EmptyRiskSet(last));
    }
    let mut est = Estimate {
        estimator: kind,
        contrast: None,
        psi: f64::NAN,
        influence: Vec::new(),
        se: None,
        ci: None,
        alpha: cfg.alpha,
        interval: Interval::None,
        n,
        degenerate: false,
        scaling,
        provenance: cfg.provenance(&nuis.folds, last),
        warnings: Vec::new(),
    };
    if observed.iter().all(|&v| v == observed[0]) {
        est.psi = observed[0];
        est.degenerate = true;
        est.warnings.push(format!("every observed outcome equals {}", observed[0]));
        return Ok(est.with_influence(vec![0.0; n]));
    }
    if !(scaling.range() > 0.0) {
        return Err(Error::Schema("outcome range is empty".into()));
    }
    let y: Vec<f64> = y_raw.iter().map(|&v| if v.is_nan() { v } else { scaling.scale(v) }).collect();
    let rec = Recursion {
        data,
        shifted: &nuis.shifted,
        folds: &nuis.folds,
        outcome: &cfg.outcome,
        seed: cfg.seed,
        last,
        y: &y,
    };
    let range = scaling.range();
    match kind {
        EstimatorKind::Gcomp => {
            let b = rec.gcomp()?;
            est.psi = scaling.unscale(b.psi);
            est.warnings = b.warnings;
            Ok(est)
        }
        EstimatorKind::Ipw => {
            let r = nuis.ratios()?;
            if r.n_times() <= last {
                return Err(Error::MissingRatios(last));
            }
            let terms: Vec<f64> = (0..n)
                .map(|i| {
                    let w = r.cumulative[last][i];
                    if w == 0.0 {
                        0.0
                    } else {
                        w * y[i]
                    }
                })
                .collect();
            est.psi = scaling.unscale(stats::mean(&terms));
            est.warnings = r.warnings.clone();
            Ok(est)
        }
        EstimatorKind::Tmle | EstimatorKind::Sdr => {
            let r = nuis.ratios()?;
            if r.n_times() <= last {
                return Err(Error::MissingRatios(last));
            }
            let b = if kind == EstimatorKind::Tmle { rec.tmle(r)? } else { rec.sdr(r)? };
            est.psi = scaling.unscale(b.psi);
            est.provenance.fluctuation = b.fluctuation;
            est.warnings = b.warnings;
            Ok(est.with_influence(b.influence.iter().map(|d| d * range).collect()))
        }
    }
}

pub fn estimate_gcomp(data: &PanelDataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate(EstimatorKind::Gcomp, data, policy, cfg)
}

/// IPW from precomputed ratios; `policy` is only checked against the data.
pub fn estimate_ipw(data: &PanelDataset, policy: &Policy, ratios: &RatioEstimates, cfg: &EstimatorConfig) -> Result<Estimate> {
    policy.bind(data.exposure_kind())?;
    let nuis = Nuisance {
        shifted: Vec::new(),
        folds: ratios.folds.clone(),
        ratios: Some(ratios.clone()),
    };
    estimate_with(EstimatorKind::Ipw, data, &nuis, cfg)
}

pub fn estimate_tmle(data: &PanelDataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate(EstimatorKind::Tmle, data, policy, cfg)
}

pub fn estimate_sdr(data: &PanelDataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate(EstimatorKind::Sdr, data, policy, cfg)
}
