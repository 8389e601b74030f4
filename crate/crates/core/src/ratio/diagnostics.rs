use super::RatioEstimates;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityRow {
    pub t: usize,
    /// `ratio` for per-time `r̂_t`, `cumulative` for `w_t`.
    pub quantity: &'static str,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub alerts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub t: usize,
    pub quantity: &'static str,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub alert_threshold: f64,
    pub rows: Vec<PositivityRow>,
    pub histogram: Vec<HistogramBin>,
}

fn summarize(t: usize, quantity: &'static str, vals: &[f64], threshold: f64, bins: usize) -> (PositivityRow, Vec<HistogramBin>) {
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| if sorted.is_empty() { f64::NAN } else { stats::quantile_linear(&sorted, p) };
    let row = PositivityRow {
        t,
        quantity,
        n: sorted.len(),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        mean: if sorted.is_empty() { f64::NAN } else { stats::mean(&sorted) },
        alerts: sorted.iter().filter(|&&v| v > threshold).count(),
    };
    let mut hist = Vec::new();
    if !sorted.is_empty() && bins > 0 {
        let (lo, hi) = (row.min, row.max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in &sorted {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            hist.push(HistogramBin {
                t,
                quantity,
                lower: lo + b as f64 * width,
                upper: lo + (b + 1) as f64 * width,
                count,
            });
        }
    }
    (row, hist)
}

/// Per-time summaries of `r̂_t` over the risk set and of `w_t` over units
/// still observed, with alert counts above `threshold`.
pub fn positivity_report(est: &RatioEstimates, threshold: f64, bins: usize) -> PositivityReport {
    let mut rows = Vec::new();
    let mut histogram = Vec::new();
    for t in 0..est.n_times() {
        let r: Vec<f64> = est.ratios[t].iter().copied().filter(|v| !v.is_nan()).collect();
        let w: Vec<f64> = (0..est.n_units())
            .filter(|&i| est.at_risk[t][i] && est.observed[t][i])
            .map(|i| est.cumulative[t][i])
            .collect();
        for (name, vals) in [("ratio", r), ("cumulative", w)] {
            let (row, hist) = summarize(t, name, &vals, threshold, bins);
            rows.push(row);
            histogram.extend(hist);
        }
    }
    PositivityReport {
        alert_threshold: threshold,
        rows,
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_extreme_ratio_raises_one_alert() {
        let mut v = vec![1.0; 999];
        v.push(500.0);
        let (row, hist) = summarize(0, "ratio", &v, 50.0, 10);
        assert_eq!(row.alerts, 1);
        assert_eq!(row.max, 500.0);
        assert_eq!(hist.iter().map(|b| b.count).sum::<usize>(), 1000);
    }

    #[test]
    fn all_ones() {
        let (row, _) = summarize(0, "ratio", &[1.0; 20], 50.0, 5);
        assert_eq!((row.max, row.mean, row.alerts), (1.0, 1.0, 0));
    }
}
