use serde::{Deserialize, Serialize};

use super::{fit_learner, Design, FittedModel, LearnerSpec};
use crate::error::{Error, Result};
use crate::{exec, rng, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Log,
}

impl Loss {
    fn pointwise(self, y: f64, p: f64) -> f64 {
        match self {
            Loss::Squared => (y - p) * (y - p),
            Loss::Log => {
                let p = stats::clip_prob(p);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
        }
    }

    /// Derivative of the pointwise loss in `p`.
    fn slope(self, y: f64, p: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * (p - y),
            Loss::Log => {
                let p = stats::clip_prob(p);
                (p - y) / (p * (1.0 - p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackWeights {
    pub names: Vec<String>,
    /// On the simplex.
    pub weights: Vec<f64>,
    /// Cross-validated risk of each candidate; infinite if it failed.
    pub cv_risk: Vec<f64>,
    /// Cross-validated risk of the weighted combination.
    pub ensemble_risk: f64,
}

/// Convex combination of full-data refits.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub weights: StackWeights,
    models: Vec<Option<FittedModel>>,
}

impl Ensemble {
    pub fn single(model: FittedModel) -> Ensemble {
        Ensemble {
            weights: StackWeights {
                names: vec![model.spec.label()],
                weights: vec![1.0],
                cv_risk: vec![f64::NAN],
                ensemble_risk: f64::NAN,
            },
            models: vec![Some(model)],
        }
    }

    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.n_rows()];
        for (w, m) in self.weights.weights.iter().zip(&self.models) {
            if *w == 0.0 {
                continue;
            }
            let m = m.as_ref().expect("positive weight implies a fitted model");
            for (o, p) in out.iter_mut().zip(m.predict(x)?) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.models.iter().flatten().flat_map(|m| m.warnings.iter().cloned()).collect()
    }
}

fn risk(loss: Loss, z: &[Vec<f64>], alpha: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    (0..y.len())
        .map(|i| {
            let p: f64 = alpha.iter().zip(z).map(|(a, c)| a * c[i]).sum();
            w[i] * loss.pointwise(y[i], p)
        })
        .sum::<f64>()
        / sw
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}

/// Minimize the cross-validated risk of a convex combination, starting at
/// the best single candidate and accepting only improving steps.
pub fn simplex_weights(loss: Loss, z: &[Vec<f64>], y: &[f64], w: &[f64], usable: &[bool]) -> Vec<f64> {
    let m = z.len();
    let sw: f64 = w.iter().sum();
    let vertex = |j: usize| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let best = (0..m)
        .filter(|&j| usable[j])
        .min_by(|&a, &b| risk(loss, z, &vertex(a), y, w).total_cmp(&risk(loss, z, &vertex(b), y, w)))
        .unwrap_or(0);
    let mut alpha = vertex(best);
    let mut f = risk(loss, z, &alpha, y, w);
    let mut step = 1.0;
    for _ in 0..500 {
        let mut g = vec![0.0; m];
        for i in 0..y.len() {
            let p: f64 = alpha.iter().zip(z).map(|(a, c)| a * c[i]).sum();
            let s = w[i] * loss.slope(y[i], p) / sw;
            for j in 0..m {
                g[j] += s * z[j][i];
            }
        }
        let mut moved = false;
        while step > 1e-16 {
            let raw: Vec<f64> = (0..m)
                .map(|j| if usable[j] { alpha[j] - step * g[j] } else { f64::NEG_INFINITY })
                .collect();
            let mut cand = project_simplex(&raw.iter().map(|v| v.max(-1e300)).collect::<Vec<_>>());
            for j in 0..m {
                if !usable[j] {
                    cand[j] = 0.0;
                }
            }
            let s: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|c| *c /= s);
            let fc = risk(loss, z, &cand, y, w);
            if fc < f {
                let delta: f64 = cand.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).sum();
                alpha = cand;
                f = fc;
                moved = delta > 1e-14;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    alpha
}

/// Cross-validated stacking over `specs`.
pub fn stack_superlearner(
    specs: &[LearnerSpec],
    x: &Design,
    y: &[f64],
    w: Option<&[f64]>,
    k: usize,
    loss: Loss,
    seed: u64,
) -> Result<Ensemble> {
    if specs.is_empty() {
        return Err(Error::LearnerSpec("empty learner stack".into()));
    }
    let n = y.len();
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    if specs.len() == 1 {
        return Ok(Ensemble::single(fit_learner(&specs[0], x, y, Some(w))?));
    }
    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let k = k.min(active.len());
    let names: Vec<String> = specs.iter().map(LearnerSpec::label).collect();
    let m = specs.len();

    let (weights, cv_risk, ensemble_risk) = if k < 2 {
        let mut wts = vec![0.0; m];
        wts[0] = 1.0;
        (wts, vec![f64::NAN; m], f64::NAN)
    } else {
        let folds = super::make_folds(active.len(), k, rng::derive(seed, &[rng::streams::STACK]))?;
        let xa = x.subset(&active);
        let ya: Vec<f64> = active.iter().map(|&i| y[i]).collect();
        let wa: Vec<f64> = active.iter().map(|&i| w[i]).collect();
        let jobs = exec::map_range(m * k, |job| {
            let (j, f) = (job / k, job % k);
            let train: Vec<usize> = (0..active.len()).filter(|&i| folds.fold_of(i) != f).collect();
            let test = folds.members(f);
            let yt: Vec<f64> = train.iter().map(|&i| ya[i]).collect();
            let wt: Vec<f64> = train.iter().map(|&i| wa[i]).collect();
            fit_learner(&specs[j], &xa.subset(&train), &yt, Some(&wt))
                .and_then(|fit| fit.predict(&xa.subset(&test)))
                .map(|p| (test, p))
        });
        let mut z = vec![vec![0.0; active.len()]; m];
        let mut usable = vec![true; m];
        for (job, r) in jobs.into_iter().enumerate() {
            let j = job / k;
            match r {
                Ok((test, p)) => {
                    for (i, v) in test.into_iter().zip(p) {
                        z[j][i] = v;
                    }
                }
                Err(e) => {
                    log::warn!("learner {} failed during cross-validation: {e}", names[j]);
                    usable[j] = false;
                }
            }
        }
        if !usable.iter().any(|&u| u) {
            return Err(Error::AllLearnersFailed(names.join(", ")));
        }
        let cv_risk: Vec<f64> = (0..m)
            .map(|j| {
                if usable[j] {
                    let v: Vec<f64> = (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
                    risk(loss, &z, &v, &ya, &wa)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let alpha = simplex_weights(loss, &z, &ya, &wa, &usable);
        let er = risk(loss, &z, &alpha, &ya, &wa);
        (alpha, cv_risk, er)
    };

    let models = exec::map_range(m, |j| {
        if weights[j] > 0.0 {
            fit_learner(&specs[j], x, y, Some(w)).map(Some)
        } else {
            Ok(None)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        weights: StackWeights {
            names,
            weights,
            cv_risk,
            ensemble_risk,
        },
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        for v in [vec![0.2, 0.3, 0.9], vec![-1.0, 5.0], vec![0.5, 0.5], vec![3.0, 3.0, 3.0]] {
            let p = project_simplex(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(project_simplex(&[-1.0, 5.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn optimizer_never_worse_than_best_vertex() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let z = vec![
            y.iter().map(|v| v + 0.3).collect::<Vec<_>>(),
            y.iter().map(|v| v - 0.3).collect::<Vec<_>>(),
        ];
        let w = vec![1.0; 50];
        let a = simplex_weights(Loss::Squared, &z, &y, &w, &[true, true]);
        assert!((a[0] - 0.5).abs() < 1e-6, "{a:?}");
    }
}
