//! Density ratios `r_t = g_t^d / g_t` by classifying duplicated rows,
//! cumulative weights with censoring factors, and positivity diagnostics.

mod diagnostics;

pub use diagnostics::{positivity_report, HistogramBin, PositivityReport, PositivityRow};

use crate::error::{Error, Result};
use crate::learners::{cross_fit, history_design, with_current_exposure, Design, FoldAssignment, Loss, StackPlan, StackSpec, StackWeights};
use crate::panel::PanelDataset;
use crate::policy::Policy;
use crate::{exec, rng, stats};

/// Observed rows (`Λ = 0`) stacked over their policy-shifted copies (`Λ = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationFrame {
    pub t: usize,
    /// At-risk units, in row order within each half.
    pub units: Vec<usize>,
    /// `2m` rows: the first `m` observed, the next `m` shifted.
    pub design: Design,
    pub labels: Vec<f64>,
    pub observed: Vec<f64>,
    pub shifted: Vec<f64>,
}

impl ClassificationFrame {
    pub fn n_pairs(&self) -> usize {
        self.units.len()
    }

    /// The observed half of the frame.
    pub fn observed_design(&self) -> Design {
        let m = self.units.len();
        self.design.subset(&(0..m).collect::<Vec<_>>())
    }
}

/// Frame from precomputed shifted exposures (`[unit]`, `NaN` when not at risk).
pub fn frame_from_shifted(data: &PanelDataset, t: usize, shifted_all: &[f64]) -> Result<ClassificationFrame> {
    let units: Vec<usize> = (0..data.n_units()).filter(|&i| data.is_at_risk(i, t)).collect();
    if units.is_empty() {
        return Err(Error::EmptyRiskSet(t));
    }
    let obs = history_design(data, t, &units, None)?;
    let shifted: Vec<f64> = units.iter().map(|&i| shifted_all[i]).collect();
    let observed: Vec<f64> = units.iter().map(|&i| data.exposure_at(t)[i]).collect();
    let dup = with_current_exposure(&obs, data.exposure_kind(), &shifted)?;
    let m = units.len();
    let mut labels = vec![0.0; m];
    labels.extend(std::iter::repeat_n(1.0, m));
    Ok(ClassificationFrame {
        t,
        design: obs.vstack(&dup)?,
        units,
        labels,
        observed,
        shifted,
    })
}

/// Duplicate the at-risk rows at `t`, replacing `A_t` by `A_t^d` in the
/// copies. With `counterfactual_history` the policy sees earlier exposures
/// already replaced by their policy values.
pub fn build_ratio_frame(
    data: &PanelDataset,
    policy: &Policy,
    t: usize,
    counterfactual_history: bool,
) -> Result<ClassificationFrame> {
    if t > data.horizon() {
        return Err(Error::Horizon(format!("t={t} beyond horizon {}", data.horizon())));
    }
    let policy = policy.bind(data.exposure_kind())?;
    let shifted = if counterfactual_history {
        policy.counterfactual_history_exposures(data)?.swap_remove(t)
    } else {
        policy.shifted_exposures(data, t)?
    };
    frame_from_shifted(data, t, &shifted)
}

/// Cross-fitted ratios for one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioFit {
    pub t: usize,
    pub units: Vec<usize>,
    /// Clipped `P̂(Λ = 1 | A_t, H_t)` on the observed rows.
    pub probability: Vec<f64>,
    pub ratios: Vec<f64>,
    pub weights: Vec<StackWeights>,
    pub warnings: Vec<String>,
}

/// Classifier odds on the observed rows; both copies of a unit share its fold.
pub fn fit_ratio(frame: &ClassificationFrame, stack: &StackSpec, folds: &FoldAssignment, seed: u64) -> Result<RatioFit> {
    let m = frame.n_pairs();
    if m == 0 {
        return Err(Error::EmptyRiskSet(frame.t));
    }
    let ones = frame.labels.iter().filter(|&&l| l == 1.0).count();
    if ones == 0 || ones == frame.labels.len() {
        return Err(Error::DegenerateClassifier {
            t: frame.t,
            message: "only one label present".into(),
        });
    }
    let unit_folds: Vec<usize> = frame.units.iter().map(|&i| folds.fold_of(i)).collect();
    let train_folds: Vec<usize> = unit_folds.iter().chain(&unit_folds).copied().collect();
    let obs = frame.observed_design();
    let cf = cross_fit(
        stack,
        Loss::Log,
        seed,
        folds.k(),
        &frame.design,
        &frame.labels,
        None,
        &train_folds,
        &[(&obs, &unit_folds)],
    )?;
    let probability: Vec<f64> = cf.predictions[0].iter().map(|&p| stats::clip_prob(p)).collect();
    let ratios = probability.iter().map(|p| p / (1.0 - p)).collect();
    Ok(RatioFit {
        t: frame.t,
        units: frame.units.clone(),
        probability,
        ratios,
        weights: cf.weights,
        warnings: cf.warnings,
    })
}

/// Cross-fitted `P̂(C_t = 1 | A_t, H_t)` for the at-risk units at `t`;
/// `[unit]`, `NaN` off the risk set.
pub fn fit_censoring(
    data: &PanelDataset,
    t: usize,
    stack: &StackSpec,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<(Vec<f64>, Vec<StackWeights>)> {
    let n = data.n_units();
    let mut out = vec![f64::NAN; n];
    let Some(c) = data.censoring_at(t) else {
        for (i, o) in out.iter_mut().enumerate() {
            if data.is_at_risk(i, t) {
                *o = 1.0;
            }
        }
        return Ok((out, Vec::new()));
    };
    let units: Vec<usize> = (0..n).filter(|&i| data.is_at_risk(i, t)).collect();
    if units.is_empty() {
        return Err(Error::EmptyRiskSet(t));
    }
    let y: Vec<f64> = units.iter().map(|&i| c[i]).collect();
    let observed = y.iter().filter(|&&v| v == 1.0).count();
    if observed == units.len() {
        for &i in &units {
            out[i] = 1.0;
        }
        return Ok((out, Vec::new()));
    }
    if observed == 0 {
        return Err(Error::Positivity {
            unit: data.unit_ids()[units[0]].clone(),
            t,
            message: "every at-risk unit is censored".into(),
        });
    }
    let x = history_design(data, t, &units, None)?;
    let uf: Vec<usize> = units.iter().map(|&i| folds.fold_of(i)).collect();
    let cf = cross_fit(stack, Loss::Log, seed, folds.k(), &x, &y, None, &uf, &[(&x, &uf)])?;
    for (k, &i) in units.iter().enumerate() {
        let p = cf.predictions[0][k];
        if c[i] == 1.0 && !(p > 0.0) {
            return Err(Error::Positivity {
                unit: data.unit_ids()[i].clone(),
                t,
                message: "estimated probability of remaining uncensored is 0".into(),
            });
        }
        out[i] = p.clamp(stats::PROB_CLIP, 1.0);
    }
    Ok((out, cf.weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub quantile: f64,
    /// Per-time cap on `r_t`.
    pub caps: Vec<f64>,
}

/// Ratios, censoring probabilities and cumulative weights, `[t][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimates {
    /// `r̂_t`; `NaN` when the unit is not at risk at `t`.
    pub ratios: Vec<Vec<f64>>,
    /// `P̂(C_t = 1 | A_t, H_t)`, 1 without censoring; `NaN` off the risk set.
    pub censoring: Vec<Vec<f64>>,
    /// Observed-through indicator `C_t` for at-risk units.
    pub observed: Vec<Vec<bool>>,
    /// Status at each `t`: at risk, or not (failed or censored earlier).
    pub at_risk: Vec<Vec<bool>>,
    /// `w_t = Π_{s≤t} r̂_s · I(C_s = 1) / P̂(C_s = 1)`.
    pub cumulative: Vec<Vec<f64>>,
    pub truncation: Option<Truncation>,
    pub folds: FoldAssignment,
    pub stack_weights: Vec<Vec<StackWeights>>,
    pub warnings: Vec<String>,
}

impl RatioEstimates {
    pub fn n_times(&self) -> usize {
        self.ratios.len()
    }

    pub fn n_units(&self) -> usize {
        self.folds.n()
    }

    /// Recompute cumulative weights from the current ratios.
    fn recumulate(&mut self) {
        self.cumulative = cumulate(&self.ratios, &self.censoring, &self.observed, &self.at_risk);
    }
}

/// Product of per-time factors. Units that failed earlier keep their
/// weight; units censored earlier have weight 0.
pub fn cumulate(
    ratios: &[Vec<f64>],
    censoring: &[Vec<f64>],
    observed: &[Vec<bool>],
    at_risk: &[Vec<bool>],
) -> Vec<Vec<f64>> {
    let n_t = ratios.len();
    let n = ratios.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; n]; n_t];
    for i in 0..n {
        let mut w = 1.0;
        for t in 0..n_t {
            if at_risk[t][i] {
                w *= ratios[t][i];
                w = if observed[t][i] { w / censoring[t][i] } else { 0.0 };
            }
            out[t][i] = w;
        }
    }
    out
}

/// Assemble estimates from per-time fits.
pub fn cumulate_ratios(
    data: &PanelDataset,
    fits: Vec<RatioFit>,
    censoring: Vec<Vec<f64>>,
    folds: FoldAssignment,
) -> Result<RatioEstimates> {
    let n = data.n_units();
    let n_t = data.n_times();
    if fits.len() != n_t {
        return Err(Error::MissingRatios(fits.len()));
    }
    let mut ratios = vec![vec![f64::NAN; n]; n_t];
    let mut stack_weights = Vec::with_capacity(n_t);
    let mut warnings = Vec::new();
    for (t, f) in fits.into_iter().enumerate() {
        if f.t != t {
            return Err(Error::MissingRatios(t));
        }
        for (k, &i) in f.units.iter().enumerate() {
            ratios[t][i] = f.ratios[k];
        }
        stack_weights.push(f.weights);
        warnings.extend(f.warnings);
    }
    let at_risk: Vec<Vec<bool>> = (0..n_t).map(|t| (0..n).map(|i| data.is_at_risk(i, t)).collect()).collect();
    let observed: Vec<Vec<bool>> = (0..n_t)
        .map(|t| (0..n).map(|i| at_risk[t][i] && data.observed_through(i, t)).collect())
        .collect();
    let mut est = RatioEstimates {
        ratios,
        censoring,
        observed,
        at_risk,
        cumulative: Vec::new(),
        truncation: None,
        folds,
        stack_weights,
        warnings,
    };
    est.recumulate();
    Ok(est)
}

/// Cap each time's ratios at their empirical `q`-quantile over the risk
/// set, then recompute the cumulative weights.
pub fn truncate_ratios(estimates: &RatioEstimates, q: f64) -> Result<RatioEstimates> {
    if !(q > 0.5 && q <= 1.0) {
        return Err(Error::Positivity {
            unit: String::new(),
            t: 0,
            message: format!("truncation quantile must lie in (0.5, 1], got {q}"),
        });
    }
    let mut out = estimates.clone();
    let mut caps = Vec::with_capacity(out.n_times());
    for t in 0..out.n_times() {
        let vals: Vec<f64> = out.ratios[t].iter().copied().filter(|v| !v.is_nan()).collect();
        let cap = if vals.is_empty() || q == 1.0 {
            f64::INFINITY
        } else {
            stats::quantile_inverse_cdf(&vals, q)
        };
        for r in &mut out.ratios[t] {
            if *r > cap {
                *r = cap;
            }
        }
        caps.push(cap);
    }
    out.truncation = Some(Truncation { quantile: q, caps });
    out.recumulate();
    Ok(out)
}

/// Ratio settings used by [`estimate_ratios`].
#[derive(Debug, Clone, PartialEq)]
pub struct RatioConfig {
    /// Censoring models use the default stack.
    pub stack: StackPlan,
    pub counterfactual_history: bool,
    pub truncation: Option<f64>,
    pub seed: u64,
}

/// Fit ratios and censoring models at every time and cumulate them.
/// `shifted` holds `A_t^d`, `[t][unit]`.
pub fn estimate_ratios_with(
    data: &PanelDataset,
    shifted: &[Vec<f64>],
    cfg: &RatioConfig,
    folds: &FoldAssignment,
) -> Result<RatioEstimates> {
    let n_t = data.n_times();
    let fits = exec::try_map_range(n_t, |t| -> Result<(RatioFit, Vec<f64>)> {
        let frame = frame_from_shifted(data, t, &shifted[t])?;
        let fit = fit_ratio(&frame, cfg.stack.at(t), folds, rng::derive(cfg.seed, &[rng::streams::RATIO, t as u64]))?;
        let (cens, _) = fit_censoring(data, t, &cfg.stack.default, folds, rng::derive(cfg.seed, &[rng::streams::CENSORING, t as u64]))?;
        Ok((fit, cens))
    })?;
    let (fits, censoring): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let est = cumulate_ratios(data, fits, censoring, folds.clone())?;
    match cfg.truncation {
        Some(q) if q < 1.0 => truncate_ratios(&est, q),
        _ => Ok(est),
    }
}

/// Fit ratios for `policy` on `data`.
pub fn estimate_ratios(
    data: &PanelDataset,
    policy: &Policy,
    cfg: &RatioConfig,
    folds: &FoldAssignment,
) -> Result<RatioEstimates> {
    let policy = policy.bind(data.exposure_kind())?;
    let shifted = policy.exposures_under(data, cfg.counterfactual_history)?;
    estimate_ratios_with(data, &shifted, cfg, folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn cumulative_product_of_two_ratios() {
        let w = cumulate(
            &grid(&[&[1.5], &[2.0]]),
            &grid(&[&[1.0], &[1.0]]),
            &[vec![true], vec![true]],
            &[vec![true], vec![true]],
        );
        assert_abs_diff_eq!(w[1][0], 3.0);
    }

    #[test]
    fn censoring_factors_compound() {
        let w = cumulate(
            &grid(&[&[1.0], &[1.0]]),
            &grid(&[&[0.8], &[0.8]]),
            &[vec![true], vec![true]],
            &[vec![true], vec![true]],
        );
        assert_abs_diff_eq!(w[1][0], 1.5625, epsilon = 1e-12);
    }

    #[test]
    fn censored_units_drop_to_zero() {
        let w = cumulate(
            &grid(&[&[2.0], &[f64::NAN]]),
            &grid(&[&[0.5], &[f64::NAN]]),
            &[vec![false], vec![false]],
            &[vec![true], vec![false]],
        );
        assert_eq!(w[0][0], 0.0);
        assert_eq!(w[1][0], 0.0);
    }

    fn fake(ratios: Vec<f64>) -> RatioEstimates {
        let n = ratios.len();
        let mut e = RatioEstimates {
            censoring: vec![vec![1.0; n]],
            observed: vec![vec![true; n]],
            at_risk: vec![vec![true; n]],
            ratios: vec![ratios],
            cumulative: Vec::new(),
            truncation: None,
            folds: FoldAssignment::single(n),
            stack_weights: Vec::new(),
            warnings: Vec::new(),
        };
        e.recumulate();
        e
    }

    #[test]
    fn truncation_caps_at_empirical_quantile() {
        let e = fake(vec![1.0, 1.0, 1.0, 100.0]);
        let t = truncate_ratios(&e, 0.75).unwrap();
        assert_eq!(t.ratios[0], vec![1.0; 4]);
        assert_eq!(truncate_ratios(&e, 1.0).unwrap().ratios, e.ratios);
        assert!(truncate_ratios(&e, 0.4).is_err());
    }
}
