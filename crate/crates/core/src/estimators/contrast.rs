use serde::{Deserialize, Serialize};

use super::{Estimate, Interval};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastKind {
    Difference,
    Ratio,
}

impl ContrastKind {
    pub fn name(self) -> &'static str {
        match self {
            ContrastKind::Difference => "difference",
            ContrastKind::Ratio => "ratio",
        }
    }
}

/// `a − b`, or `a / b` with a log-scale delta-method interval.
pub fn contrast(a: &Estimate, b: &Estimate, kind: ContrastKind) -> Result<Estimate> {
    if a.n != b.n || a.influence.len() != b.influence.len() {
        return Err(Error::Contrast(format!("estimates cover {} and {} units", a.n, b.n)));
    }
    if a.influence.is_empty() || a.influence.len() != a.n {
        return Err(Error::Contrast(format!(
            "{} and {} estimates need influence values; use tmle or sdr",
            a.estimator.name(),
            b.estimator.name()
        )));
    }
    if (a.alpha - b.alpha).abs() > 0.0 {
        return Err(Error::Contrast("estimates use different alpha levels".into()));
    }
    let mut out = a.clone();
    out.contrast = Some(kind);
    out.degenerate = a.degenerate && b.degenerate;
    out.warnings = a.warnings.iter().chain(&b.warnings).cloned().collect();
    match kind {
        ContrastKind::Difference => {
            out.psi = a.psi - b.psi;
            let d = a.influence.iter().zip(&b.influence).map(|(x, y)| x - y).collect();
            Ok(out.with_influence(d))
        }
        ContrastKind::Ratio => {
            if !(a.psi > 0.0 && b.psi > 0.0) {
                return Err(Error::Contrast(format!(
                    "ratio needs positive estimates, got {} and {}",
                    a.psi, b.psi
                )));
            }
            let log_d: Vec<f64> = a
                .influence
                .iter()
                .zip(&b.influence)
                .map(|(x, y)| x / a.psi - y / b.psi)
                .collect();
            let log_psi = (a.psi / b.psi).ln();
            let n = log_d.len() as f64;
            let se_log = if log_d.len() > 1 { stats::sd(&log_d) / n.sqrt() } else { 0.0 };
            let z = stats::z_critical(a.alpha);
            out.psi = log_psi.exp();
            out.se = Some(out.psi * se_log);
            out.ci = Some(((log_psi - z * se_log).exp(), (log_psi + z * se_log).exp()));
            out.influence = log_d.iter().map(|d| d * out.psi).collect();
            out.interval = Interval::Influence;
            Ok(out)
        }
    }
}
