//! Generalized linear models by iteratively reweighted least squares.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::expit;

pub(crate) const MAX_ITER: usize = 100;
pub(crate) const GRAD_TOL: f64 = 1e-8;
/// Ridge added when the normal equations are singular.
pub(crate) const FALLBACK_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Intercept first, then one coefficient per feature column.
    pub coef: Vec<f64>,
    pub binomial: bool,
    pub iterations: usize,
    pub converged: bool,
    /// The design was singular and the fallback ridge was used.
    pub ridge_fallback: bool,
}

impl GlmFit {
    pub fn linear_predictor(&self, cols: &[&[f64]], i: usize) -> f64 {
        self.coef[0] + cols.iter().zip(&self.coef[1..]).map(|(c, b)| c[i] * b).sum::<f64>()
    }

    pub fn predict(&self, cols: &[&[f64]], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let eta = self.linear_predictor(cols, i);
                if self.binomial {
                    expit(eta)
                } else {
                    eta
                }
            })
            .collect()
    }
}

fn design_matrix(cols: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

/// Solve the symmetric system `h x = g`, adding `ridge` to the non-intercept
/// diagonal first. `None` if the matrix is numerically singular.
fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    let mut h = h.clone();
    for j in 1..h.ncols() {
        h[(j, j)] += ridge;
    }
    let chol = h.clone().cholesky()?;
    let d = chol.l_dirty().diagonal();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v * v), hi.max(v * v)));
    if !(lo > hi * 1e-13) {
        return None;
    }
    let x = chol.solve(g);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn penalized_loglik(x: &DMatrix<f64>, beta: &DVector<f64>, y: &[f64], w: &[f64], pen: f64) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        if w[i] == 0.0 {
            continue;
        }
        let e = eta[i];
        // log(1 + exp(e)) computed stably
        let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        ll += w[i] * (y[i] * e - softplus);
    }
    ll - 0.5 * pen * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

/// Weighted GLM fit. `lambda` is a ridge penalty on the non-intercept
/// coefficients, scaled by the total weight.
pub fn fit_glm(cols: &[&[f64]], y: &[f64], w: &[f64], binomial: bool, lambda: f64) -> Result<GlmFit> {
    let n = y.len();
    let p = cols.len() + 1;
    let wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::LearnerSpec("total weight must be positive".into()));
    }
    let x = design_matrix(cols, n);
    let mut pen = lambda * wsum;
    let mut ridge_fallback = false;

    if !binomial {
        let xtw = DMatrix::from_fn(p, n, |j, i| x[(i, j)] * w[i]);
        let h = &xtw * &x;
        let g = &xtw * DVector::from_column_slice(y);
        let beta = match solve_spd(&h, &g, pen) {
            Some(b) => b,
            None => {
                ridge_fallback = true;
                pen = pen.max(FALLBACK_RIDGE * wsum);
                solve_spd(&h, &g, pen)
                    .or_else(|| h.clone().svd(true, true).solve(&g, 1e-12).ok())
                    .ok_or_else(|| Error::LearnerSpec("gaussian-glm normal equations unsolvable".into()))?
            }
        };
        return Ok(GlmFit {
            coef: beta.iter().copied().collect(),
            binomial,
            iterations: 1,
            converged: true,
            ridge_fallback,
        });
    }

    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut beta = DVector::zeros(p);
    beta[0] = crate::stats::logit(crate::stats::clip_prob(ybar));
    let mut ll = penalized_loglik(&x, &beta, y, w, pen);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let eta = &x * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let mut g = DVector::zeros(p);
        for i in 0..n {
            let r = w[i] * (y[i] - mu[i]);
            for j in 0..p {
                g[j] += x[(i, j)] * r;
            }
        }
        for j in 1..p {
            g[j] -= pen * beta[j];
        }
        if g.amax() / wsum <= GRAD_TOL {
            converged = true;
            break;
        }
        let xtw = DMatrix::from_fn(p, n, |j, i| x[(i, j)] * w[i] * mu[i] * (1.0 - mu[i]));
        let h = &xtw * &x;
        let step = match solve_spd(&h, &g, pen) {
            Some(s) => s,
            None => {
                ridge_fallback = true;
                pen = pen.max(FALLBACK_RIDGE * wsum);
                ll = penalized_loglik(&x, &beta, y, w, pen);
                match solve_spd(&h, &g, pen) {
                    Some(s) => s,
                    None => break,
                }
            }
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step * scale;
            let cll = penalized_loglik(&x, &cand, y, w, pen);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(GlmFit {
        coef: beta.iter().copied().collect(),
        binomial,
        iterations,
        converged,
        ridge_fallback,
    })
}

/// Saturated model: one parameter per distinct feature cell. The
/// maximum-likelihood fit of a cell-indicator GLM is the weighted cell
/// mean, for both families. A positive `lambda` adds that much pseudo-weight
/// at the pooled mean to every cell, which keeps sparse binary cells off 0
/// and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    cells: HashMap<Vec<u64>, f64>,
    /// Used for cells absent from training.
    fallback: f64,
}

fn cell_key(cols: &[&[f64]], i: usize) -> Vec<u64> {
    cols.iter().map(|c| (c[i] + 0.0).to_bits()).collect()
}

impl CellMeans {
    pub fn fit(cols: &[&[f64]], y: &[f64], w: &[f64], lambda: f64) -> Result<CellMeans> {
        let mut acc: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        let (mut sy, mut sw) = (0.0, 0.0);
        for i in 0..y.len() {
            if w[i] == 0.0 {
                continue;
            }
            let e = acc.entry(cell_key(cols, i)).or_insert((0.0, 0.0));
            e.0 += w[i] * y[i];
            e.1 += w[i];
            sy += w[i] * y[i];
            sw += w[i];
        }
        if !(sw > 0.0) {
            return Err(Error::LearnerSpec("total weight must be positive".into()));
        }
        let pooled = sy / sw;
        Ok(CellMeans {
            cells: acc
                .into_iter()
                .map(|(k, (a, b))| (k, (a + lambda * pooled) / (b + lambda)))
                .collect(),
            fallback: pooled,
        })
    }

    pub fn predict(&self, cols: &[&[f64]], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| *self.cells.get(&cell_key(cols, i)).unwrap_or(&self.fallback))
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_recovers_noiseless_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = fit_glm(&[&x], &y, &[1.0; 20], false, 0.0).unwrap();
        assert_abs_diff_eq!(fit.coef[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.coef[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn constant_feature_falls_back_to_ridge_and_predicts_mean() {
        let c = vec![1.0; 10];
        let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        for binomial in [true, false] {
            let fit = fit_glm(&[&c], &y, &[1.0; 10], binomial, 0.0).unwrap();
            for p in fit.predict(&[&c], 10) {
                assert_abs_diff_eq!(p, 0.6, epsilon = 1e-8);
            }
            // the binomial start already solves the score equation
            assert_eq!(fit.ridge_fallback, !binomial);
        }
    }

    #[test]
    fn binomial_score_equation_holds() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let y: Vec<f64> = (0..200).map(|i| if (i * 13) % 7 < 3 { 1.0 } else { 0.3 }).collect();
        let w = vec![1.0; 200];
        let fit = fit_glm(&[&x], &y, &w, true, 0.0).unwrap();
        assert!(fit.converged);
        let mp = fit.predict(&[&x], 200).iter().sum::<f64>() / 200.0;
        let my = y.iter().sum::<f64>() / 200.0;
        assert_abs_diff_eq!(mp, my, epsilon = 1e-8);
    }

    #[test]
    fn saturated_matches_irls_on_cell_indicators() {
        // cells (x1, x2) ∈ {0,1}^2 with non-degenerate outcome rates
        let n = 400;
        let x1: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| if (i * 7) % 5 < 1 + (i % 4) { 1.0 } else { 0.0 }).collect();
        let w = vec![1.0; n];
        let cells = CellMeans::fit(&[&x1, &x2], &y, &w, 0.0).unwrap();
        let inter: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a * b).collect();
        let irls = fit_glm(&[&x1, &x2, &inter], &y, &w, true, 0.0).unwrap();
        let a = cells.predict(&[&x1, &x2], n);
        let b = irls.predict(&[&x1, &x2, &inter], n);
        for (p, q) in a.iter().zip(&b) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-8);
        }
        // and both equal the group-by means
        for cell in 0..4 {
            let idx: Vec<usize> = (0..n).filter(|&i| i % 4 == cell).collect();
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            assert_abs_diff_eq!(a[idx[0]], m, epsilon = 1e-12);
        }
    }

    #[test]
    fn shrunk_cells_stay_inside_the_unit_interval() {
        let x = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let w = [1.0; 6];
        let raw = CellMeans::fit(&[&x], &y, &w, 0.0).unwrap().predict(&[&x], 6);
        assert_eq!(raw[0], 0.0);
        let shrunk = CellMeans::fit(&[&x], &y, &w, 1.0).unwrap().predict(&[&x], 6);
        // (0 + 0.5) / 3 and (3 + 0.5) / 5
        assert_abs_diff_eq!(shrunk[0], 0.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shrunk[2], 3.5 / 5.0, epsilon = 1e-12);
    }
}
