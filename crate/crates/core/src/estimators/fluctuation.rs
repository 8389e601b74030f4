use crate::error::{Error, Result};
use crate::stats::expit;

const MAX_ITER: usize = 50;
/// Mean weighted score allowed at exit.
const SCORE_TOL: f64 = 1e-6;

/// Intercept-only weighted logistic fluctuation: solve
/// `Σ w_i (y_i − expit(o_i + ε)) = 0` for `ε` by Newton's method.
///
/// Targets must lie in `[0, 1]`. When every positively weighted target is
/// 1 (or 0) no finite root exists and `+∞` (`−∞`) is returned, which maps
/// the fluctuated predictions onto that bound.
pub fn fluctuate(t: usize, offset: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Ok(0.0);
    }
    let active = || (0..y.len()).filter(|&i| w[i] > 0.0);
    if active().all(|i| y[i] == 1.0) {
        return Ok(f64::INFINITY);
    }
    if active().all(|i| y[i] == 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let score = |e: f64| -> f64 { active().map(|i| w[i] * (y[i] - expit(offset[i] + e))).sum::<f64>() };
    let mut eps = 0.0;
    let mut s = score(eps);
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if (s / sw).abs() <= 1e-14 {
            break;
        }
        iterations += 1;
        let info: f64 = active()
            .map(|i| {
                let p = expit(offset[i] + eps);
                w[i] * p * (1.0 - p)
            })
            .sum();
        if !(info > 0.0) {
            break;
        }
        let mut step = s / info;
        // halve until |score| decreases; the score is monotone in ε
        let mut moved = false;
        for _ in 0..60 {
            let cand = eps + step;
            let cs = score(cand);
            if cs.abs() < s.abs() {
                eps = cand;
                s = cs;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !((s / sw).abs() <= SCORE_TOL) {
        return Err(Error::Fluctuation {
            t,
            score: s / sw,
            iterations,
        });
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::logit;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_weighted_score() {
        let o: Vec<f64> = (0..40).map(|i| logit(0.2 + 0.015 * i as f64)).collect();
        let y: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 7) as f64).collect();
        let e = fluctuate(0, &o, &y, &w).unwrap();
        let s: f64 = (0..40).map(|i| w[i] * (y[i] - expit(o[i] + e))).sum();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn already_targeted_offset_gives_zero() {
        let o = vec![logit(0.25); 8];
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(fluctuate(0, &o, &y, &[1.0; 8]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn all_ones_is_unbounded() {
        assert_eq!(fluctuate(0, &[0.0, 0.3], &[1.0, 1.0], &[1.0, 2.0]).unwrap(), f64::INFINITY);
    }
}
