//! Counterfactual truth under a policy: exact enumeration for finite
//! supports and Monte Carlo otherwise. Censoring is switched off in both,
//! so censored designs target the fully observed counterfactual.

use super::sample::{draw_covariates, draw_exposure, TrajHistory};
use super::spec::{CompiledExposure, CompiledOutcome, CompiledSpec, CompiledVar, Trajectory};
use super::DgpSpec;
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::policy::{Policy, RandomizerDraw};
use crate::{exec, rng, stats};

/// Upper bound on enumerated paths.
pub const MAX_PATHS: f64 = 5e6;

fn var_support(v: &CompiledVar, tr: &Trajectory, t: usize) -> Result<Vec<(f64, f64)>> {
    match v {
        CompiledVar::Bernoulli(c) => {
            let p = c.probability(tr, t)?;
            Ok(vec![(0.0, 1.0 - p), (1.0, p)])
        }
        CompiledVar::Normal(..) => Err(Error::OracleUnsupported("normal covariate".into())),
    }
}

/// Value of the outcome functional once a full trajectory is fixed:
/// `E[Y | path]` for terminal outcomes, cumulative incidence by the end of
/// each interval for survival.
fn leaf(cs: &CompiledSpec, tr: &Trajectory, tau: usize) -> Result<Vec<f64>> {
    match &cs.outcome {
        CompiledOutcome::Binary(c) => Ok(vec![c.probability(tr, tau)?]),
        CompiledOutcome::Continuous(c, _) => Ok(vec![c.linear(tr, tau)]),
        CompiledOutcome::Survival(h) => {
            let mut surv = 1.0;
            let mut out = Vec::with_capacity(tau + 1);
            for t in 0..=tau {
                surv *= 1.0 - h.probability(tr, t)?;
                out.push(1.0 - surv);
            }
            Ok(out)
        }
    }
}

/// Randomizer pieces at `t` as `(draw, probability)`.
fn pieces(policy: &Policy, t: usize) -> Result<Vec<(Option<RandomizerDraw>, f64)>> {
    let rule = policy.rule_at(t);
    let part = rule
        .randomizer_partition()
        .ok_or_else(|| Error::OracleUnsupported(format!("randomizer at t={t} has continuous effect")))?;
    Ok(match rule.randomizer() {
        None => vec![(None, 1.0)],
        Some(law) => part
            .into_iter()
            .map(|(u, p)| {
                let draw = RandomizerDraw {
                    unit: 0,
                    t,
                    uniform: u,
                    value: law.from_uniform(u),
                };
                (Some(draw), p)
            })
            .collect(),
    })
}

struct Walker<'a> {
    spec: &'a DgpSpec,
    cs: &'a CompiledSpec,
    policy: &'a Policy,
    acc: Vec<f64>,
}

impl Walker<'_> {
    fn baseline(&mut self, j: usize, tr: &mut Trajectory, prob: f64) -> Result<()> {
        if j == self.cs.baseline.len() {
            return self.time(0, tr, prob);
        }
        for (v, p) in var_support(&self.cs.baseline[j], tr, 0)? {
            if p == 0.0 {
                continue;
            }
            tr.baseline.push(v);
            self.baseline(j + 1, tr, prob * p)?;
            tr.baseline.pop();
        }
        Ok(())
    }

    fn time(&mut self, t: usize, tr: &mut Trajectory, prob: f64) -> Result<()> {
        if t > self.spec.horizon {
            for (a, v) in self.acc.iter_mut().zip(leaf(self.cs, tr, self.spec.horizon)?) {
                *a += prob * v;
            }
            return Ok(());
        }
        tr.covariates.push(Vec::new());
        self.covariate(t, 0, tr, prob)?;
        tr.covariates.pop();
        Ok(())
    }

    fn covariate(&mut self, t: usize, j: usize, tr: &mut Trajectory, prob: f64) -> Result<()> {
        if j == self.cs.covariates.len() {
            return self.exposure(t, tr, prob);
        }
        for (v, p) in var_support(&self.cs.covariates[j], tr, t)? {
            if p == 0.0 {
                continue;
            }
            tr.covariates[t].push(v);
            self.covariate(t, j + 1, tr, prob * p)?;
            tr.covariates[t].pop();
        }
        Ok(())
    }

    fn exposure(&mut self, t: usize, tr: &mut Trajectory, prob: f64) -> Result<()> {
        let natural = self.cs.exposure.support(tr, t)?;
        let eps = pieces(self.policy, t)?;
        // merge paths that land on the same intervened value
        let mut by_value: Vec<(f64, f64)> = Vec::new();
        for (a, pa) in natural {
            if pa == 0.0 {
                continue;
            }
            for (draw, pe) in &eps {
                let h = TrajHistory {
                    spec: self.spec,
                    tr,
                    t,
                };
                let ad = self.policy.evaluate(t, a, &h, draw.as_ref())?;
                match by_value.iter_mut().find(|(v, _)| *v == ad) {
                    Some(slot) => slot.1 += pa * pe,
                    None => by_value.push((ad, pa * pe)),
                }
            }
        }
        for (ad, p) in by_value {
            tr.exposure.push(ad);
            self.time(t + 1, tr, prob * p)?;
            tr.exposure.pop();
        }
        Ok(())
    }
}

fn path_count(spec: &DgpSpec, policy: &Policy) -> f64 {
    let levels = spec.exposure_kind().levels().map_or(f64::INFINITY, |l| l.len() as f64);
    let mut count = 2f64.powi(spec.baseline.len() as i32);
    for t in 0..=spec.horizon {
        // intervened values are merged, so each interval branches at most `levels` ways
        if policy.rule_at(t).randomizer_partition().is_none() {
            return f64::INFINITY;
        }
        count *= 2f64.powi(spec.covariates.len() as i32) * levels;
    }
    count
}

/// Exact `E[Y(d)]` (survival: incidence by the end of every interval) by
/// enumerating all paths of a finite-support DGP.
pub fn oracle_exact_curve(spec: &DgpSpec, policy: &Policy) -> Result<Vec<f64>> {
    if !spec.is_discrete() {
        return Err(Error::OracleUnsupported("continuous variables present; use oracle_mc".into()));
    }
    let paths = path_count(spec, policy);
    if paths > MAX_PATHS {
        return Err(Error::OracleUnsupported(format!("{paths:.0} paths to enumerate; use oracle_mc")));
    }
    let cs = spec.compile()?;
    let policy = policy.bind(&spec.exposure_kind())?;
    let width = if spec.is_survival() { spec.horizon + 1 } else { 1 };
    let mut w = Walker {
        spec,
        cs: &cs,
        policy: &policy,
        acc: vec![0.0; width],
    };
    w.baseline(0, &mut Trajectory::new(cs.baseline.len()), 1.0)?;
    Ok(w.acc)
}

/// Exact `E[Y(d)]`; for survival specs the incidence at `τ + 1`.
pub fn oracle_exact(spec: &DgpSpec, policy: &Policy) -> Result<f64> {
    Ok(*oracle_exact_curve(spec, policy)?.last().unwrap())
}

/// One counterfactual trajectory's outcome functional under each policy,
/// sharing the natural-value draws across policies.
fn simulate_one(spec: &DgpSpec, cs: &CompiledSpec, policies: &[Policy], seed: u64, j: usize) -> Result<Vec<Vec<f64>>> {
    policies
        .iter()
        .map(|policy| {
            let mut r = rng::stream(seed, &[rng::streams::ORACLE, j as u64]);
            let mut tr = Trajectory::new(cs.baseline.len());
            for t in 0..=spec.horizon {
                draw_covariates(cs, &mut tr, t, &mut r)?;
                let a = draw_exposure(&cs.exposure, &tr, t, &mut r)?;
                let ad = {
                    let h = TrajHistory { spec, tr: &tr, t };
                    policy.apply(t, a, &h, j as u64)?
                };
                tr.exposure.push(ad);
            }
            let mut v = leaf(cs, &tr, spec.horizon)?;
            if let CompiledOutcome::Continuous(_, sd) = cs.outcome {
                // add the outcome noise so the MC SE reflects Var(Y(d))
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
                v[0] += sd * z;
            }
            Ok(v)
        })
        .collect()
}

/// Monte Carlo truth with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McTruth {
    /// Per horizon for survival specs, else a single entry.
    pub psi: Vec<f64>,
    pub se: Vec<f64>,
    pub replicates: usize,
}

impl McTruth {
    pub fn last(&self) -> (f64, f64) {
        (*self.psi.last().unwrap(), *self.se.last().unwrap())
    }
}

fn summarize(values: Vec<Vec<f64>>) -> McTruth {
    let m = values.len();
    let width = values.first().map_or(0, Vec::len);
    let mut psi = Vec::with_capacity(width);
    let mut se = Vec::with_capacity(width);
    for h in 0..width {
        let col: Vec<f64> = values.iter().map(|v| v[h]).collect();
        psi.push(stats::mean(&col));
        se.push(if m > 1 { stats::sd(&col) / (m as f64).sqrt() } else { f64::NAN });
    }
    McTruth { psi, se, replicates: m }
}

/// Simulate `m` counterfactual trajectories: draw each natural value, apply
/// the policy against the counterfactual history, carry the result forward.
/// Outcomes enter through their conditional mean given the path (incidence
/// for survival), which keeps the estimate unbiased with less noise.
pub fn oracle_mc(spec: &DgpSpec, policy: &Policy, m: usize, seed: u64) -> Result<McTruth> {
    Ok(oracle_mc_many(spec, std::slice::from_ref(policy), m, seed)?.remove(0))
}

/// `oracle_mc` for several policies on common random numbers.
pub fn oracle_mc_many(spec: &DgpSpec, policies: &[Policy], m: usize, seed: u64) -> Result<Vec<McTruth>> {
    if m == 0 {
        return Err(Error::Schema("at least one Monte Carlo replicate is required".into()));
    }
    let cs = spec.compile()?;
    let bound = policies
        .iter()
        .map(|p| p.bind(&spec.exposure_kind()))
        .collect::<Result<Vec<_>>>()?;
    let sims = exec::try_map_range(m, |j| simulate_one(spec, &cs, &bound, seed, j))?;
    Ok((0..bound.len())
        .map(|k| summarize(sims.iter().map(|s| s[k].clone()).collect()))
        .collect())
}

/// MC truth of `E[Y(a)] − E[Y(b)]` with the SE of the paired differences.
pub fn oracle_mc_contrast(spec: &DgpSpec, a: &Policy, b: &Policy, m: usize, seed: u64) -> Result<McTruth> {
    let cs = spec.compile()?;
    let bound = [a.bind(&spec.exposure_kind())?, b.bind(&spec.exposure_kind())?];
    let sims = exec::try_map_range(m, |j| simulate_one(spec, &cs, &bound, seed, j))?;
    Ok(summarize(
        sims.into_iter()
            .map(|s| s[0].iter().zip(&s[1]).map(|(x, y)| x - y).collect())
            .collect(),
    ))
}

/// True `g_t^d(A_t | H_t) / g_t(A_t | H_t)` for every unit at risk at `t`
/// of data sampled from `spec` (`NaN` elsewhere), with `H_t` the observed
/// history.
pub fn true_ratios(spec: &DgpSpec, policy: &Policy, data: &PanelDataset, t: usize) -> Result<Vec<f64>> {
    let cs = spec.compile()?;
    if matches!(cs.exposure, CompiledExposure::Continuous(..)) {
        return Err(Error::OracleUnsupported("continuous exposure".into()));
    }
    let policy = policy.bind(&spec.exposure_kind())?;
    let eps = pieces(&policy, t)?;
    let cov_idx: Vec<usize> = spec
        .covariates
        .iter()
        .map(|c| {
            data.covariates()
                .iter()
                .position(|d| d.name == c.name())
                .ok_or_else(|| Error::Schema(format!("data has no covariate '{}'", c.name())))
        })
        .collect::<Result<_>>()?;
    let base_idx: Vec<usize> = spec
        .baseline
        .iter()
        .map(|b| {
            data.baseline()
                .iter()
                .position(|d| d.name == b.name())
                .ok_or_else(|| Error::Schema(format!("data has no baseline column '{}'", b.name())))
        })
        .collect::<Result<_>>()?;
    exec::try_map_range(data.n_units(), |i| {
        if !data.is_at_risk(i, t) {
            return Ok(f64::NAN);
        }
        let tr = Trajectory {
            baseline: base_idx.iter().map(|&k| data.baseline()[k].values[i]).collect(),
            covariates: (0..=t)
                .map(|s| cov_idx.iter().map(|&k| data.covariates()[k].values[s][i]).collect())
                .collect(),
            exposure: (0..t).map(|s| data.exposure_at(s)[i]).collect(),
        };
        let a_obs = data.exposure_at(t)[i];
        let support = cs.exposure.support(&tr, t)?;
        let h = TrajHistory { spec, tr: &tr, t };
        let mut gd = 0.0;
        for &(a, pa) in &support {
            for (draw, pe) in &eps {
                if policy.evaluate(t, a, &h, draw.as_ref())? == a_obs {
                    gd += pa * pe;
                }
            }
        }
        let g = support.iter().find(|(a, _)| *a == a_obs).map_or(0.0, |s| s.1);
        Ok(gd / g)
    })
}
