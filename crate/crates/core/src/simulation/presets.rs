//! The shipped DGP corpus.

use super::spec::{DgpSpec, ExposureLaw, OutcomeLaw, Predictor, VarLaw};

fn bern(name: &str, p: Predictor) -> VarLaw {
    VarLaw::Bernoulli { name: name.into(), p }
}

/// Point treatment: `L ~ Bern(0.5)`, `A | L ~ Bern(0.3 + 0.4 L)`,
/// `Y | A, L ~ Bern(0.2 + 0.3 A + 0.2 L)`. Under `d ≡ 1`, `E[Y(d)] = 0.6`.
pub fn point_treatment() -> DgpSpec {
    DgpSpec {
        horizon: 0,
        baseline: Vec::new(),
        covariates: vec![bern("L", Predictor::identity(0.5, &[]))],
        exposure_name: "A".into(),
        exposure: ExposureLaw::Binary {
            p: Predictor::identity(0.3, &[("L", 0.4)]),
        },
        censoring: None,
        censoring_name: "C".into(),
        outcome_name: "Y".into(),
        outcome: OutcomeLaw::Binary {
            p: Predictor::identity(0.2, &[("a", 0.3), ("L", 0.2)]),
        },
    }
}

/// Two periods of binary treatment with a time-varying confounder that is
/// affected by earlier treatment.
pub fn two_period() -> DgpSpec {
    DgpSpec {
        horizon: 1,
        baseline: Vec::new(),
        covariates: vec![bern(
            "L",
            Predictor::logit(-0.4, &[("L[t-1]", 1.2), ("a[t-1]", -1.0), ("t", 0.3)]),
        )],
        exposure_name: "A".into(),
        exposure: ExposureLaw::Binary {
            p: Predictor::logit(-0.3, &[("L", 1.0), ("a[t-1]", 0.4)]),
        },
        censoring: None,
        censoring_name: "C".into(),
        outcome_name: "Y".into(),
        outcome: OutcomeLaw::Binary {
            p: Predictor::logit(-1.2, &[("a", 0.7), ("a[t-1]", 0.5), ("L", 1.6), ("L[t-1]", 1.0)]),
        },
    }
}

/// Fourteen daily intervals with death as the event, informative loss to
/// follow-up, and a three-level respiratory support exposure
/// (0 none, 1 non-invasive, 2 invasive) in which invasive support, once
/// started, continues.
pub fn survival() -> DgpSpec {
    DgpSpec {
        horizon: 13,
        baseline: vec![bern("old", Predictor::logit(-0.4, &[]))],
        covariates: vec![bern(
            "severity",
            Predictor::logit(
                -1.2,
                &[("old", 0.6), ("severity[t-1]", 1.8), ("a[t-1]=1", -0.4), ("a[t-1]=2", 0.3)],
            ),
        )],
        exposure_name: "support".into(),
        exposure: ExposureLaw::Categorical {
            levels: vec![0.0, 1.0, 2.0],
            scores: vec![
                Predictor::logit(-0.8, &[("severity", 1.5), ("old", 0.3), ("a[t-1]=1", 1.2)]),
                Predictor::logit(-3.6, &[("severity", 2.0), ("old", 0.4), ("a[t-1]=1", 1.0), ("a[t-1]=2", 40.0)]),
            ],
        },
        censoring: Some(Predictor::logit(3.0, &[("severity", 0.8), ("a=2", 1.0), ("old", -0.3)])),
        censoring_name: "observed".into(),
        outcome_name: "death".into(),
        outcome: OutcomeLaw::Survival {
            hazard: Predictor::logit(-4.6, &[("severity", 1.4), ("old", 0.7), ("a=2", 0.6), ("a=1", -0.3)]),
        },
    }
}

/// Point-treatment continuous exposure: `L ~ Bern(0.5)`,
/// `A | L ~ N(1 + L, 1)`, `Y | A, L ~ N(2 + β A + L, 1)` with `β = 0.5`.
pub fn continuous_shift() -> DgpSpec {
    DgpSpec {
        horizon: 0,
        baseline: Vec::new(),
        covariates: vec![bern("L", Predictor::identity(0.5, &[]))],
        exposure_name: "dose".into(),
        exposure: ExposureLaw::Continuous {
            mean: Predictor::identity(1.0, &[("L", 1.0)]),
            sd: 1.0,
        },
        censoring: None,
        censoring_name: "C".into(),
        outcome_name: "Y".into(),
        outcome: OutcomeLaw::Continuous {
            mean: Predictor::identity(2.0, &[("a", CONTINUOUS_BETA), ("L", 1.0)]),
            sd: 1.0,
        },
    }
}

/// Exposure coefficient of [`continuous_shift`].
pub const CONTINUOUS_BETA: f64 = 0.5;

/// Preset by name.
pub fn by_name(name: &str) -> Option<DgpSpec> {
    match name {
        "point-treatment" => Some(point_treatment()),
        "two-period" => Some(two_period()),
        "survival" => Some(survival()),
        "continuous-shift" => Some(continuous_shift()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["point-treatment", "two-period", "survival", "continuous-shift"];
