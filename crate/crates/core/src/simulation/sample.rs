use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spec::{CompiledExposure, CompiledOutcome, CompiledSpec, CompiledVar, Trajectory};
use super::DgpSpec;
use crate::error::{Error, Result};
use crate::panel::{BaselineColumn, History, Outcome, OutcomeKind, PanelDataset, PanelParts, TimeVaryingColumn};
use crate::{exec, rng};

/// Policy-facing view of a trajectory at time `t`.
pub(crate) struct TrajHistory<'a> {
    pub spec: &'a DgpSpec,
    pub tr: &'a Trajectory,
    pub t: usize,
}

impl History for TrajHistory<'_> {
    fn time(&self) -> usize {
        self.t
    }

    fn covariate(&self, name: &str, time: usize) -> Option<f64> {
        if time > self.t {
            return None;
        }
        if let Some(j) = self.spec.baseline.iter().position(|b| b.name() == name) {
            return self.tr.baseline.get(j).copied();
        }
        let j = self.spec.covariates.iter().position(|c| c.name() == name)?;
        self.tr.covariates.get(time).and_then(|row| row.get(j)).copied()
    }

    fn exposure(&self, time: usize) -> Option<f64> {
        if time >= self.t {
            return None;
        }
        self.tr.exposure.get(time).copied()
    }
}

pub(crate) fn draw_var(v: &CompiledVar, tr: &Trajectory, t: usize, r: &mut ChaCha8Rng) -> Result<f64> {
    Ok(match v {
        CompiledVar::Bernoulli(c) => {
            let p = c.probability(tr, t)?;
            f64::from(u8::from(r.random::<f64>() < p))
        }
        CompiledVar::Normal(c, sd) => {
            let z: f64 = StandardNormal.sample(r);
            c.linear(tr, t) + sd * z
        }
    })
}

pub(crate) fn draw_exposure(e: &CompiledExposure, tr: &Trajectory, t: usize, r: &mut ChaCha8Rng) -> Result<f64> {
    match e {
        CompiledExposure::Continuous(c, sd) => {
            let z: f64 = StandardNormal.sample(r);
            Ok(c.linear(tr, t) + sd * z)
        }
        _ => {
            let support = e.support(tr, t)?;
            let u: f64 = r.random();
            let mut acc = 0.0;
            for &(a, p) in &support {
                acc += p;
                if u < acc {
                    return Ok(a);
                }
            }
            Ok(support.last().map(|s| s.0).unwrap_or(f64::NAN))
        }
    }
}

/// Baseline values and covariates at `t` (appended to the trajectory).
pub(crate) fn draw_covariates(cs: &CompiledSpec, tr: &mut Trajectory, t: usize, r: &mut ChaCha8Rng) -> Result<()> {
    if t == 0 {
        for b in &cs.baseline {
            let v = draw_var(b, tr, 0, r)?;
            tr.baseline.push(v);
        }
    }
    tr.covariates.push(Vec::with_capacity(cs.covariates.len()));
    for c in &cs.covariates {
        let v = draw_var(c, tr, t, r)?;
        tr.covariates[t].push(v);
    }
    Ok(())
}

struct Unit {
    tr: Trajectory,
    censoring: Vec<f64>,
    events: Vec<f64>,
    y: f64,
}

fn sample_unit(spec: &DgpSpec, cs: &CompiledSpec, seed: u64, i: usize) -> Result<Unit> {
    let tau = spec.horizon;
    let mut r = rng::stream(seed, &[rng::streams::SAMPLE, i as u64]);
    let mut tr = Trajectory::new(cs.baseline.len());
    let mut censoring = vec![f64::NAN; tau + 1];
    let mut events = vec![f64::NAN; tau + 1];
    let mut y = f64::NAN;
    for t in 0..=tau {
        draw_covariates(cs, &mut tr, t, &mut r)?;
        let a = draw_exposure(&cs.exposure, &tr, t, &mut r)?;
        tr.exposure.push(a);
        if let Some(c) = &cs.censoring {
            let p = c.probability(&tr, t)?;
            let stays = r.random::<f64>() < p;
            censoring[t] = f64::from(u8::from(stays));
            if !stays {
                break;
            }
        }
        match &cs.outcome {
            CompiledOutcome::Survival(h) => {
                let p = h.probability(&tr, t)?;
                let ev = r.random::<f64>() < p;
                events[t] = f64::from(u8::from(ev));
                if ev {
                    break;
                }
            }
            CompiledOutcome::Binary(c) if t == tau => {
                let p = c.probability(&tr, t)?;
                y = f64::from(u8::from(r.random::<f64>() < p));
            }
            CompiledOutcome::Continuous(c, sd) if t == tau => {
                let z: f64 = StandardNormal.sample(&mut r);
                y = c.linear(&tr, t) + sd * z;
            }
            _ => {}
        }
    }
    Ok(Unit {
        tr,
        censoring,
        events,
        y,
    })
}

/// `n` i.i.d. trajectories; unit `i` draws from its own counter-based
/// stream, so the result does not depend on scheduling.
pub fn sample_dgp(spec: &DgpSpec, n: usize, seed: u64) -> Result<PanelDataset> {
    if n == 0 {
        return Err(Error::Schema("sample size must be positive".into()));
    }
    let cs = spec.compile()?;
    let units = exec::try_map_range(n, |i| sample_unit(spec, &cs, seed, i))?;
    let tau = spec.horizon;
    let grid = |f: &dyn Fn(&Unit, usize) -> f64| -> Vec<Vec<f64>> {
        (0..=tau).map(|t| units.iter().map(|u| f(u, t)).collect()).collect()
    };
    let baseline = spec
        .baseline
        .iter()
        .enumerate()
        .map(|(j, b)| BaselineColumn {
            name: b.name().to_string(),
            values: units.iter().map(|u| u.tr.baseline[j]).collect(),
        })
        .collect();
    let covariates = spec
        .covariates
        .iter()
        .enumerate()
        .map(|(j, c)| TimeVaryingColumn {
            name: c.name().to_string(),
            values: grid(&|u, t| u.tr.covariates.get(t).map_or(f64::NAN, |row| row[j])),
            indicator_of: None,
        })
        .collect();
    let exposure = grid(&|u, t| u.tr.exposure.get(t).copied().unwrap_or(f64::NAN));
    let censoring = spec
        .censoring
        .as_ref()
        .map(|_| (spec.censoring_name.clone(), grid(&|u, t| u.censoring[t])));
    let outcome = match &cs.outcome {
        CompiledOutcome::Survival(_) => Outcome::Survival {
            name: spec.outcome_name.clone(),
            events: grid(&|u, t| u.events[t]),
        },
        CompiledOutcome::Binary(_) | CompiledOutcome::Continuous(..) => Outcome::Terminal {
            name: spec.outcome_name.clone(),
            kind: if matches!(cs.outcome, CompiledOutcome::Binary(_)) {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
            values: units.iter().map(|u| u.y).collect(),
            min: 0.0,
            max: 1.0,
        },
    };
    PanelDataset::from_parts(PanelParts {
        unit_ids: (1..=n).map(|i| i.to_string()).collect(),
        horizon: tau,
        baseline,
        covariates,
        exposure_name: spec.exposure_name.clone(),
        exposure_kind: spec.exposure_kind(),
        exposure,
        censoring,
        outcome,
    })
}
