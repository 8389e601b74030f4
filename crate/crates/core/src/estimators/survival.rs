use rand_distr::{Distribution, StandardNormal};

use super::{contrast, estimate_at, prepare, ContrastKind, Estimate, EstimatorConfig, EstimatorKind, Nuisance};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::policy::Policy;
use crate::{exec, rng, stats};

/// Cumulative incidence `P(event by h)` under a policy, for `h = 1..=τ+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub estimator: EstimatorKind,
    pub horizons: Vec<usize>,
    /// One per horizon. For incidence curves `psi` is the isotonic value
    /// and the interval is centered on it.
    pub estimates: Vec<Estimate>,
    /// Point estimates before the isotonic correction.
    pub raw: Vec<f64>,
    pub pointwise: Vec<f64>,
    pub simultaneous: Vec<f64>,
    /// Multiplier-bootstrap quantile of `max_h |Z_h|`.
    pub band_quantile: f64,
    pub alpha: f64,
}

impl SurvivalCurve {
    pub fn psi(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.psi).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.se.unwrap_or(0.0)).collect()
    }
}

/// Quantile of `max_h |Z_h|` over Gaussian-multiplier draws, where
/// `Z_h = Σ_i ξ_i D_{h,i} / (n SE_h)`. Horizons with zero SE are skipped.
pub fn simultaneous_band(influence: &[Vec<f64>], se: &[f64], alpha: f64, replicates: usize, seed: u64) -> f64 {
    let n = influence.first().map_or(0, Vec::len);
    if replicates == 0 || n == 0 {
        return stats::z_critical(alpha);
    }
    let mut maxima = exec::map_range(replicates, |b| {
        let mut r = rng::stream(seed, &[rng::streams::MULTIPLIER, b as u64]);
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        influence
            .iter()
            .zip(se)
            .filter(|(_, &s)| s > 0.0)
            .map(|(d, &s)| {
                let z: Vec<f64> = d.iter().zip(&xi).map(|(a, b)| a * b).collect();
                (stats::pairwise_sum(&z) / (n as f64 * s)).abs()
            })
            .fold(0.0, f64::max)
    });
    maxima.sort_by(|a, b| a.total_cmp(b));
    stats::quantile_linear(&maxima, 1.0 - alpha)
}

fn assemble(
    estimator: EstimatorKind,
    mut estimates: Vec<Estimate>,
    alpha: f64,
    replicates: usize,
    seed: u64,
    isotonic: bool,
) -> SurvivalCurve {
    let raw: Vec<f64> = estimates.iter().map(|e| e.psi).collect();
    let se: Vec<f64> = estimates.iter().map(|e| e.se.unwrap_or(0.0)).collect();
    let infl: Vec<Vec<f64>> = estimates.iter().map(|e| e.influence.clone()).collect();
    let q = simultaneous_band(&infl, &se, alpha, replicates, seed);
    let z = stats::z_critical(alpha);
    let center = if isotonic { stats::isotonic_non_decreasing(&raw) } else { raw.clone() };
    let pointwise: Vec<f64> = se.iter().map(|s| z * s).collect();
    let simultaneous: Vec<f64> = se.iter().map(|s| q.max(z) * s).collect();
    for (e, (&c, &h)) in estimates.iter_mut().zip(center.iter().zip(&pointwise)) {
        e.psi = c;
        e.ci = Some((c - h, c + h));
    }
    SurvivalCurve {
        estimator,
        horizons: (1..=estimates.len()).collect(),
        estimates,
        raw,
        pointwise,
        simultaneous,
        band_quantile: q,
        alpha,
    }
}

/// Incidence curve from prepared nuisances; ratios are shared across horizons.
pub fn survival_curve_with(
    data: &PanelDataset,
    nuis: &Nuisance,
    kind: EstimatorKind,
    cfg: &EstimatorConfig,
    replicates: usize,
) -> Result<SurvivalCurve> {
    if !data.is_survival() {
        return Err(Error::Unsupported("survival curves need a survival outcome".into()));
    }
    if !kind.has_influence() {
        return Err(Error::Unsupported(format!(
            "survival bands need influence values; {} provides none (use tmle or sdr)",
            kind.name()
        )));
    }
    let estimates = (0..data.n_times())
        .map(|last| estimate_at(kind, data, nuis, cfg, last))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        kind,
        estimates,
        cfg.alpha,
        replicates,
        rng::derive(cfg.seed, &[rng::streams::MULTIPLIER]),
        true,
    ))
}

pub fn survival_curve(
    data: &PanelDataset,
    policy: &Policy,
    kind: EstimatorKind,
    cfg: &EstimatorConfig,
    replicates: usize,
) -> Result<SurvivalCurve> {
    let nuis = prepare(data, policy, cfg, true)?;
    survival_curve_with(data, &nuis, kind, cfg, replicates)
}

/// `a − b` per horizon, with its own simultaneous band. The isotonic
/// correction is not applied to differences.
pub fn curve_difference(a: &SurvivalCurve, b: &SurvivalCurve, replicates: usize, seed: u64) -> Result<SurvivalCurve> {
    if a.horizons != b.horizons {
        return Err(Error::Contrast("curves cover different horizons".into()));
    }
    let mut diffs = Vec::with_capacity(a.estimates.len());
    for (ea, eb) in a.estimates.iter().zip(&b.estimates) {
        // contrast the uncorrected estimates
        let mut ra = ea.clone();
        let mut rb = eb.clone();
        let h = diffs.len();
        ra.psi = a.raw[h];
        rb.psi = b.raw[h];
        diffs.push(contrast(&ra, &rb, ContrastKind::Difference)?);
    }
    Ok(assemble(a.estimator, diffs, a.alpha, replicates, seed, false))
}
