//! Backward sequential regression shared by g-computation, TMLE and SDR.
//!
//! At each `t` the outcome model is fit on units at risk and uncensored
//! through `t` against the pseudo-outcome carried back from `t + 1` (the
//! scaled outcome at `t = last`, and 1 for units whose event happened in
//! interval `t`). Predictions are cross-fitted for every unit at risk, at
//! both the observed and the policy exposure.

use super::fluctuation::fluctuate;
use crate::error::Result;
use crate::learners::{cross_fit, history_design, with_current_exposure, FoldAssignment, Loss, StackPlan};
use crate::panel::PanelDataset;
use crate::ratio::RatioEstimates;
use crate::{rng, stats};

pub(crate) struct Recursion<'a> {
    pub data: &'a PanelDataset,
    pub shifted: &'a [Vec<f64>],
    pub folds: &'a FoldAssignment,
    pub outcome: &'a StackPlan,
    pub seed: u64,
    pub last: usize,
    /// Scaled outcome at `last`; `NaN` where unobserved.
    pub y: &'a [f64],
}

/// Result on the scaled outcome.
pub(crate) struct Backward {
    pub psi: f64,
    pub influence: Vec<f64>,
    pub fluctuation: Vec<f64>,
    pub warnings: Vec<String>,
}

pub(crate) struct Step {
    /// Units at risk at `t`.
    pub risk: Vec<usize>,
    /// Positions in `risk` of units uncensored through `t`.
    pub fit: Vec<usize>,
    /// Regression target, aligned with `fit`.
    pub target: Vec<f64>,
    /// `Q̂_t(A_t, H_t)` and `Q̂_t(A_t^d, H_t)`, aligned with `risk`.
    pub q_obs: Vec<f64>,
    pub q_d: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Recursion<'_> {
    /// Fit `Q̂_t` against `next` (`[unit]`, pseudo-outcome at `t + 1`).
    /// With `unbounded` the target may leave `[0, 1]`: the stack switches to
    /// gaussian counterparts under squared loss and predictions are not
    /// clamped.
    pub fn step(&self, t: usize, next: &[f64], unbounded: bool) -> Result<Step> {
        let data = self.data;
        let risk: Vec<usize> = (0..data.n_units()).filter(|&i| data.is_at_risk(i, t)).collect();
        if risk.is_empty() {
            return Err(crate::Error::EmptyRiskSet(t));
        }
        let fit: Vec<usize> = (0..risk.len()).filter(|&p| data.observed_through(risk[p], t)).collect();
        if fit.is_empty() {
            return Err(crate::Error::EmptyRiskSet(t));
        }
        let target: Vec<f64> = fit
            .iter()
            .map(|&p| {
                let i = risk[p];
                if t == self.last {
                    self.y[i]
                } else if data.is_at_risk(i, t + 1) {
                    next[i]
                } else {
                    // event during interval t
                    1.0
                }
            })
            .collect();
        let x_obs = history_design(data, t, &risk, None)?;
        let shifted: Vec<f64> = risk.iter().map(|&i| self.shifted[t][i]).collect();
        let x_d = with_current_exposure(&x_obs, data.exposure_kind(), &shifted)?;
        let x_fit = x_obs.subset(&fit);
        let risk_folds: Vec<usize> = risk.iter().map(|&i| self.folds.fold_of(i)).collect();
        let fit_folds: Vec<usize> = fit.iter().map(|&p| risk_folds[p]).collect();
        let (stack, loss) = if unbounded {
            (self.outcome.at(t).for_unbounded_target(), Loss::Squared)
        } else {
            (self.outcome.at(t).clone(), Loss::Log)
        };
        let cf = cross_fit(
            &stack,
            loss,
            rng::derive(self.seed, &[rng::streams::OUTCOME, self.last as u64, t as u64]),
            self.folds.k(),
            &x_fit,
            &target,
            None,
            &fit_folds,
            &[(&x_obs, &risk_folds), (&x_d, &risk_folds)],
        )?;
        let mut preds = cf.predictions.into_iter();
        let (mut q_obs, mut q_d) = (preds.next().unwrap(), preds.next().unwrap());
        if !unbounded {
            for q in q_obs.iter_mut().chain(q_d.iter_mut()) {
                *q = q.clamp(0.0, 1.0);
            }
        }
        Ok(Step {
            risk,
            fit,
            target,
            q_obs,
            q_d,
            warnings: cf.warnings,
        })
    }

    fn finish(&self, pseudo0: &[f64]) -> f64 {
        stats::mean(pseudo0)
    }

    pub fn gcomp(&self) -> Result<Backward> {
        let n = self.data.n_units();
        let mut next = vec![f64::NAN; n];
        let mut warnings = Vec::new();
        for t in (0..=self.last).rev() {
            let s = self.step(t, &next, false)?;
            let mut cur = vec![f64::NAN; n];
            for (p, &i) in s.risk.iter().enumerate() {
                cur[i] = s.q_d[p];
            }
            warnings.extend(s.warnings);
            next = cur;
        }
        Ok(Backward {
            psi: self.finish(&next),
            influence: Vec::new(),
            fluctuation: Vec::new(),
            warnings,
        })
    }

    pub fn tmle(&self, ratios: &RatioEstimates) -> Result<Backward> {
        let n = self.data.n_units();
        let mut next = vec![f64::NAN; n];
        let mut eif = vec![0.0; n];
        let mut eps = vec![0.0; self.last + 1];
        let mut warnings = Vec::new();
        for t in (0..=self.last).rev() {
            let s = self.step(t, &next, false)?;
            let offset: Vec<f64> = s.fit.iter().map(|&p| stats::logit(stats::clip_prob(s.q_obs[p]))).collect();
            let w: Vec<f64> = s.fit.iter().map(|&p| ratios.cumulative[t][s.risk[p]]).collect();
            let e = fluctuate(t, &offset, &s.target, &w)?;
            eps[t] = e;
            let target = |q: f64| stats::expit(stats::logit(stats::clip_prob(q)) + e);
            for (k, &p) in s.fit.iter().enumerate() {
                let i = s.risk[p];
                eif[i] += w[k] * (s.target[k] - target(s.q_obs[p]));
            }
            let mut cur = vec![f64::NAN; n];
            for (p, &i) in s.risk.iter().enumerate() {
                cur[i] = target(s.q_d[p]);
            }
            warnings.extend(s.warnings);
            next = cur;
        }
        let psi = self.finish(&next);
        for (d, q) in eif.iter_mut().zip(&next) {
            *d += q - psi;
        }
        Ok(Backward {
            psi,
            influence: eif,
            fluctuation: eps,
            warnings,
        })
    }

    /// `φ_t = Q̂_t(A_t^d) + r̂_t c_t (φ_{t+1} − Q̂_t(A_t))`, where `c_t` is the
    /// inverse probability of remaining uncensored through `t` (0 if censored).
    pub fn sdr(&self, ratios: &RatioEstimates) -> Result<Backward> {
        let n = self.data.n_units();
        let mut next = vec![f64::NAN; n];
        let mut warnings = Vec::new();
        for t in (0..=self.last).rev() {
            let s = self.step(t, &next, t < self.last)?;
            let mut cur = vec![f64::NAN; n];
            for (p, &i) in s.risk.iter().enumerate() {
                cur[i] = s.q_d[p];
            }
            for (k, &p) in s.fit.iter().enumerate() {
                let i = s.risk[p];
                let factor = ratios.ratios[t][i] / ratios.censoring[t][i];
                cur[i] += factor * (s.target[k] - s.q_obs[p]);
            }
            warnings.extend(s.warnings);
            next = cur;
        }
        let psi = self.finish(&next);
        Ok(Backward {
            psi,
            influence: next.iter().map(|v| v - psi).collect(),
            fluctuation: Vec::new(),
            warnings,
        })
    }
}
