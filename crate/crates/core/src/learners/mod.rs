//! Nuisance learners, cross-validated stacking and cross-fitting.

mod design;
mod folds;
mod glm;
mod knn;
mod stack;
mod tree;

pub use design::{history_design, with_current_exposure, Design, FeatureSet};
pub use folds::{folds_or_single, make_folds, FoldAssignment};
pub use glm::{fit_glm, CellMeans, GlmFit};
pub use knn::Knn;
pub use stack::{project_simplex, simplex_weights, stack_superlearner, Ensemble, Loss, StackWeights};
pub use tree::Tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{exec, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gaussian-glm")]
    GaussianGlm,
    #[serde(rename = "binomial-glm")]
    BinomialGlm,
    #[serde(rename = "knn", alias = "k-nearest-neighbor")]
    Knn,
    #[serde(rename = "regression-tree", alias = "tree")]
    RegressionTree,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianGlm => "gaussian-glm",
            Family::BinomialGlm => "binomial-glm",
            Family::Knn => "knn",
            Family::RegressionTree => "regression-tree",
        }
    }

    pub fn is_glm(self) -> bool {
        matches!(self, Family::GaussianGlm | Family::BinomialGlm)
    }
}

fn default_k() -> usize {
    10
}
fn default_depth() -> usize {
    4
}
fn default_leaf() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub family: Family,
    /// Ridge penalty for GLMs; for saturated fits, the pseudo-weight at the
    /// pooled mean added to each cell.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_leaf")]
    pub min_leaf: usize,
    /// GLM with one parameter per distinct feature cell.
    #[serde(default)]
    pub saturated: bool,
    #[serde(default)]
    pub features: FeatureSet,
    /// Variables dropped from the feature set (all lags and levels).
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub name: Option<String>,
}

impl LearnerSpec {
    pub fn new(family: Family) -> LearnerSpec {
        LearnerSpec {
            family,
            lambda: 0.0,
            k: default_k(),
            max_depth: default_depth(),
            min_leaf: default_leaf(),
            saturated: false,
            features: FeatureSet::All,
            exclude: Vec::new(),
            name: None,
        }
    }

    pub fn glm(binomial: bool) -> LearnerSpec {
        LearnerSpec::new(if binomial { Family::BinomialGlm } else { Family::GaussianGlm })
    }

    pub fn with_features(mut self, f: FeatureSet) -> LearnerSpec {
        self.features = f;
        self
    }

    pub fn excluding(mut self, names: &[&str]) -> LearnerSpec {
        self.exclude.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn saturated(mut self) -> LearnerSpec {
        self.saturated = true;
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let mut s = self.family.name().to_string();
            if self.saturated {
                s.push_str("-saturated");
            }
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::LearnerSpec(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.family == Family::Knn && self.k == 0 {
            return Err(Error::LearnerSpec("k must be >= 1".into()));
        }
        if self.family == Family::RegressionTree && self.min_leaf == 0 {
            return Err(Error::LearnerSpec("min_leaf must be >= 1".into()));
        }
        if self.saturated && !self.family.is_glm() {
            return Err(Error::LearnerSpec("only GLM families can be saturated".into()));
        }
        Ok(())
    }

    /// The same learner for an unbounded continuous target: binomial GLMs
    /// become gaussian GLMs, other families are unchanged.
    pub fn for_unbounded_target(&self) -> LearnerSpec {
        let mut s = self.clone();
        if s.family == Family::BinomialGlm {
            s.family = Family::GaussianGlm;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Glm(GlmFit),
    Cells(CellMeans),
    Knn(Knn),
    Tree(Tree),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: LearnerSpec,
    /// Feature columns, in training order.
    pub signature: Vec<String>,
    model: Model,
    pub warnings: Vec<String>,
}

impl FittedModel {
    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        let cols = x.select(&self.signature)?;
        let n = x.n_rows();
        Ok(match &self.model {
            Model::Glm(g) => g.predict(&cols, n),
            Model::Cells(c) => c.predict(&cols, n),
            Model::Knn(k) => k.predict(&cols, n),
            Model::Tree(t) => t.predict(&cols, n),
        })
    }

    /// GLM coefficients, intercept first.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Glm(g) => Some(&g.coef),
            _ => None,
        }
    }
}

/// Fit one learner on `x`, `y` with optional non-negative weights.
pub fn fit_learner(spec: &LearnerSpec, x: &Design, y: &[f64], w: Option<&[f64]>) -> Result<FittedModel> {
    spec.validate()?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} rows", y.len())));
    }
    let ones;
    let w = match w {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension(format!("{} weights for {n} rows", w.len())));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::NonFinite("weights"));
            }
            w
        }
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    if w.contains(&0.0) {
        // zero-weight rows may carry unavailable values; drop them outright
        let keep: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
        let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
        return fit_learner(spec, &x.subset(&keep), &ys, Some(&ws));
    }
    let signature = spec.features.resolve(x.names(), &spec.exclude)?;
    let cols = x.select(&signature)?;
    if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    if spec.family == Family::BinomialGlm && y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::LearnerSpec("binomial targets must lie in [0, 1]".into()));
    }
    let mut warnings = Vec::new();
    let model = match spec.family {
        Family::GaussianGlm | Family::BinomialGlm if spec.saturated => Model::Cells(CellMeans::fit(&cols, y, w, spec.lambda)?),
        Family::GaussianGlm | Family::BinomialGlm => {
            let fit = fit_glm(&cols, y, w, spec.family == Family::BinomialGlm, spec.lambda)?;
            if fit.ridge_fallback {
                warnings.push(format!("{}: singular design, ridge fallback applied", spec.label()));
            }
            if !fit.converged {
                warnings.push(format!("{}: IRLS stopped after {} iterations", spec.label(), fit.iterations));
            }
            Model::Glm(fit)
        }
        Family::Knn => Model::Knn(Knn::fit(&cols, y, w, spec.k)?),
        Family::RegressionTree => Model::Tree(Tree::fit(&cols, y, w, spec.max_depth, spec.min_leaf)?),
    };
    for m in &warnings {
        log::debug!("{m}");
    }
    Ok(FittedModel {
        spec: spec.clone(),
        signature,
        model,
        warnings,
    })
}

/// Fit a stack: a single learner directly, several by stacking.
pub fn fit_stack(
    specs: &[LearnerSpec],
    x: &Design,
    y: &[f64],
    w: Option<&[f64]>,
    cv_folds: usize,
    loss: Loss,
    seed: u64,
) -> Result<Ensemble> {
    stack_superlearner(specs, x, y, w, cv_folds, loss, seed)
}

/// Learner stack with its stacking settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSpec {
    pub learners: Vec<LearnerSpec>,
    pub cv_folds: usize,
}

impl StackSpec {
    pub fn new(learners: Vec<LearnerSpec>) -> StackSpec {
        StackSpec { learners, cv_folds: 5 }
    }

    pub fn single(spec: LearnerSpec) -> StackSpec {
        StackSpec::new(vec![spec])
    }

    pub fn for_unbounded_target(&self) -> StackSpec {
        StackSpec {
            learners: self.learners.iter().map(LearnerSpec::for_unbounded_target).collect(),
            cv_folds: self.cv_folds,
        }
    }

    pub fn all_glm(&self) -> bool {
        self.learners.iter().all(|l| l.family.is_glm())
    }
}

/// A default stack with optional per-time replacements.
#[derive(Debug, Clone, PartialEq)]
pub struct StackPlan {
    pub default: StackSpec,
    pub by_time: BTreeMap<usize, StackSpec>,
}

impl StackPlan {
    pub fn at(&self, t: usize) -> &StackSpec {
        self.by_time.get(&t).unwrap_or(&self.default)
    }

    pub fn with_override(mut self, t: usize, stack: StackSpec) -> StackPlan {
        self.by_time.insert(t, stack);
        self
    }

    pub fn all_glm(&self) -> bool {
        self.default.all_glm() && self.by_time.values().all(StackSpec::all_glm)
    }

    pub fn labels(&self) -> Vec<String> {
        self.default.learners.iter().map(LearnerSpec::label).collect()
    }
}

impl From<StackSpec> for StackPlan {
    fn from(default: StackSpec) -> StackPlan {
        StackPlan {
            default,
            by_time: BTreeMap::new(),
        }
    }
}

/// Out-of-fold predictions from a cross-fitted stack.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    /// One vector per prediction set, aligned with its rows.
    pub predictions: Vec<Vec<f64>>,
    /// Stack weights of each fold's fit.
    pub weights: Vec<StackWeights>,
    pub warnings: Vec<String>,
}

/// Cross-fit: for each fold `j`, train on training rows outside `j` and
/// predict the rows of each prediction set that belong to `j`. With one
/// fold the model is trained and evaluated on everything.
#[allow(clippy::too_many_arguments)]
pub fn cross_fit(
    stack: &StackSpec,
    loss: Loss,
    seed: u64,
    k: usize,
    train: &Design,
    y: &[f64],
    w: Option<&[f64]>,
    train_folds: &[usize],
    predict_sets: &[(&Design, &[usize])],
) -> Result<CrossFit> {
    let fits = exec::try_map_range(k, |j| {
        let rows: Vec<usize> = (0..train.n_rows()).filter(|&i| k == 1 || train_folds[i] != j).collect();
        if rows.is_empty() {
            return Err(Error::Folds(format!("fold {j} leaves no training rows")));
        }
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let ws: Option<Vec<f64>> = w.map(|w| rows.iter().map(|&i| w[i]).collect());
        let ens = fit_stack(
            &stack.learners,
            &train.subset(&rows),
            &ys,
            ws.as_deref(),
            stack.cv_folds,
            loss,
            rng::derive(seed, &[j as u64]),
        )?;
        let preds = predict_sets
            .iter()
            .map(|(x, folds)| {
                let rows: Vec<usize> = (0..x.n_rows()).filter(|&i| k == 1 || folds[i] == j).collect();
                ens.predict(&x.subset(&rows)).map(|p| (rows, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ens, preds))
    })?;
    let mut predictions: Vec<Vec<f64>> = predict_sets.iter().map(|(x, _)| vec![f64::NAN; x.n_rows()]).collect();
    let mut weights = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    for (ens, preds) in fits {
        for (s, (rows, p)) in preds.into_iter().enumerate() {
            for (i, v) in rows.into_iter().zip(p) {
                predictions[s][i] = v;
            }
        }
        warnings.extend(ens.warnings());
        weights.push(ens.weights);
    }
    Ok(CrossFit {
        predictions,
        weights,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_design_predicts_nothing() {
        let x = Design::from_rows(&["x"], &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let m = fit_learner(&LearnerSpec::glm(false), &x, &[0.0, 1.0, 2.0], None).unwrap();
        let empty = Design::from_rows(&["x"], &[]).unwrap();
        assert!(m.predict(&empty).unwrap().is_empty());
    }

    #[test]
    fn knn_k1_interpolates_training_rows() {
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![(i * 3 % 25) as f64, (i % 4) as f64]).collect();
        let x = Design::from_rows(&["u", "v"], &rows).unwrap();
        let y: Vec<f64> = (0..25).map(|i| i as f64 * 0.1).collect();
        let mut spec = LearnerSpec::new(Family::Knn);
        spec.k = 1;
        let m = fit_learner(&spec, &x, &y, None).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn exposure_swap_moves_prediction_by_its_coefficient() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 5) as f64, (i % 2) as f64]).collect();
        let x = Design::from_rows(&["L", "a"], &rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 0.5 * r[0] - 2.0 * r[1] + ((r[0] * 7.0).sin() * 0.1)).collect();
        let m = fit_learner(&LearnerSpec::glm(false), &x, &y, None).unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], 1.0 - r[1]]).collect();
        let xs = Design::from_rows(&["L", "a"], &shifted).unwrap();
        let (p, q) = (m.predict(&x).unwrap(), m.predict(&xs).unwrap());
        let b = m.coefficients().unwrap()[2];
        for i in 0..60 {
            assert_abs_diff_eq!(q[i] - p[i], b * (shifted[i][1] - rows[i][1]), epsilon = 1e-10);
        }
    }

    #[test]
    fn signature_mismatch_is_an_error() {
        let x = Design::from_rows(&["x"], &[vec![0.0], vec![1.0]]).unwrap();
        let m = fit_learner(&LearnerSpec::glm(false), &x, &[0.0, 1.0], None).unwrap();
        let other = Design::from_rows(&["z"], &[vec![0.0]]).unwrap();
        assert!(matches!(m.predict(&other), Err(Error::Signature { .. })));
    }

    #[test]
    fn single_candidate_gets_full_weight() {
        let x = Design::from_rows(&["x"], &(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let e = stack_superlearner(&[LearnerSpec::glm(false)], &x, &y, None, 5, Loss::Squared, 1).unwrap();
        assert_eq!(e.weights.weights, vec![1.0]);
    }

    #[test]
    fn cross_fit_predicts_every_row_out_of_fold() {
        let x = Design::from_rows(&["x"], &(0..30).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..30).map(|i| 2.0 * i as f64).collect();
        let folds = make_folds(30, 3, 4).unwrap();
        let cf = cross_fit(
            &StackSpec::single(LearnerSpec::glm(false)),
            Loss::Squared,
            1,
            3,
            &x,
            &y,
            None,
            folds.as_slice(),
            &[(&x, folds.as_slice())],
        )
        .unwrap();
        for (p, t) in cf.predictions[0].iter().zip(&y) {
            assert_abs_diff_eq!(p, t, epsilon = 1e-8);
        }
        assert_eq!(cf.weights.len(), 3);
    }
}
