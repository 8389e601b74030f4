use rand::Rng;

use super::{estimate, EstimatorConfig, EstimatorKind, Interval};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::policy::Policy;
use crate::{exec, rng, stats};

/// Unit-level nonparametric bootstrap for the plug-in estimators.
///
/// Only parametric (GLM-only) stacks are accepted: the bootstrap is not a
/// valid variance estimator once a nuisance is fit by a data-adaptive
/// learner.
pub fn bootstrap_se(
    kind: EstimatorKind,
    data: &PanelDataset,
    policy: &Policy,
    cfg: &EstimatorConfig,
    replicates: usize,
    seed: u64,
) -> Result<super::Estimate> {
    let plan = match kind {
        EstimatorKind::Gcomp => &cfg.outcome,
        EstimatorKind::Ipw => &cfg.ratio,
        _ => {
            return Err(Error::BootstrapRefused(format!(
                "{} already provides influence-based standard errors; the bootstrap is offered for gcomp and ipw",
                kind.name()
            )))
        }
    };
    if !plan.all_glm() {
        let bad: Vec<String> = std::iter::once(&plan.default)
            .chain(plan.by_time.values())
            .flat_map(|s| &s.learners)
            .filter(|l| !l.family.is_glm())
            .map(|l| l.label())
            .collect();
        return Err(Error::BootstrapRefused(format!(
            "data-adaptive learners ({}) make bootstrap standard errors invalid; use a GLM-only stack or tmle/sdr",
            bad.join(", ")
        )));
    }
    if replicates == 0 {
        return Err(Error::BootstrapRefused("at least one replicate is required".into()));
    }
    let mut est = estimate(kind, data, policy, cfg)?;
    let n = data.n_units();
    let psis = exec::try_map_range(replicates, |b| -> Result<f64> {
        let mut r = rng::stream(seed, &[rng::streams::BOOTSTRAP, b as u64]);
        let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        let boot = data.resample(&idx);
        let cfg_b = EstimatorConfig {
            seed: rng::derive(cfg.seed, &[rng::streams::BOOTSTRAP, b as u64]),
            ..cfg.clone()
        };
        Ok(estimate(kind, &boot, policy, &cfg_b)?.psi)
    })?;
    let se = if replicates == 1 {
        est.warnings.push("one bootstrap replicate: standard error reported as 0".into());
        0.0
    } else {
        stats::sd(&psis)
    };
    let mut sorted = psis;
    sorted.sort_by(|a, b| a.total_cmp(b));
    est.se = Some(se);
    est.ci = Some((
        stats::quantile_linear(&sorted, cfg.alpha / 2.0),
        stats::quantile_linear(&sorted, 1.0 - cfg.alpha / 2.0),
    ));
    est.interval = Interval::Bootstrap;
    Ok(est)
}
