use proptest::prelude::*;

use lmtp::estimators::{estimate, EstimatorConfig, EstimatorKind};
use lmtp::learners::{cross_fit, make_folds, Design, Family, LearnerSpec, Loss, StackPlan, StackSpec};
use lmtp::policy::{parse_policy_spec, Policy};
use lmtp::ratio::{estimate_ratios, truncate_ratios, RatioConfig};
use lmtp::simulation::{presets, sample_dgp, DgpSpec, ExposureLaw, OutcomeLaw, Predictor, VarLaw};

fn small_law(horizon: usize, exposure: (f64, f64), outcome: (f64, f64, f64), sd: f64) -> DgpSpec {
    DgpSpec {
        horizon,
        baseline: Vec::new(),
        covariates: vec![VarLaw::Normal {
            name: "L".into(),
            mean: Predictor::identity(0.0, &[("a[t-1]", 0.5)]),
            sd: 1.0,
        }],
        exposure_name: "A".into(),
        exposure: ExposureLaw::Binary {
            p: Predictor::logit(exposure.0, &[("L", exposure.1)]),
        },
        censoring: None,
        censoring_name: "C".into(),
        outcome_name: "Y".into(),
        outcome: OutcomeLaw::Continuous {
            mean: Predictor::identity(outcome.0, &[("a", outcome.1), ("L", outcome.2)]),
            sd,
        },
    }
}

fn glm_config(seed: u64) -> EstimatorConfig {
    EstimatorConfig::new(StackSpec::single(LearnerSpec::glm(false)), StackSpec::single(LearnerSpec::glm(true)))
        .with_seed(seed)
        .with_truncation(None)
}

fn rule() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("static: 1"), Just("static: 0"), Just("dynamic: 1 if L > 0 else 0"), Just("natural")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tmle_stays_inside_the_observed_outcome_range(
        seed in any::<u64>(),
        n in 30usize..90,
        horizon in 0usize..3,
        ex in (-4.0..4.0f64, -8.0..8.0f64),
        out in (-5.0..5.0f64, -10.0..10.0f64, -10.0..10.0f64),
        sd in 0.01..5.0f64,
        rule in rule(),
    ) {
        let spec = small_law(horizon, ex, out, sd);
        let data = sample_dgp(&spec, n, seed).unwrap();
        let y = data.outcome_through(horizon);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let policy = parse_policy_spec(rule).unwrap();
        if let Ok(e) = estimate(EstimatorKind::Tmle, &data, &policy, &glm_config(seed)) {
            prop_assert!(lo <= e.psi && e.psi <= hi, "{} outside [{lo}, {hi}]", e.psi);
        }
    }

    #[test]
    fn truncation_never_increases_weights(seed in any::<u64>(), q in 0.51..=1.0f64, rule in rule()) {
        let spec = small_law(1, (0.0, 3.0), (0.0, 1.0, 1.0), 1.0);
        let data = sample_dgp(&spec, 200, seed).unwrap();
        let cfg = RatioConfig {
            stack: StackPlan::from(StackSpec::single(LearnerSpec::glm(true))),
            counterfactual_history: false,
            truncation: None,
            seed,
        };
        let folds = make_folds(200, 3, seed).unwrap();
        let policy = parse_policy_spec(rule).unwrap();
        let raw = estimate_ratios(&data, &policy, &cfg, &folds).unwrap();
        let cut = truncate_ratios(&raw, q).unwrap();
        for t in 0..raw.ratios.len() {
            for i in 0..200 {
                prop_assert!(cut.ratios[t][i] <= raw.ratios[t][i]);
                prop_assert!(cut.cumulative[t][i] <= raw.cumulative[t][i]);
            }
        }
    }

    #[test]
    fn fixed_seed_estimates_are_reproducible(seed in any::<u64>(), kind in 0usize..4) {
        let data = sample_dgp(&presets::two_period(), 300, seed).unwrap();
        let kind = EstimatorKind::ALL[kind];
        let cfg = glm_config(seed);
        let a = estimate(kind, &data, &Policy::static_value(1.0), &cfg).unwrap();
        let b = estimate(kind, &data, &Policy::static_value(1.0), &cfg).unwrap();
        prop_assert_eq!(a.psi.to_bits(), b.psi.to_bits());
        prop_assert_eq!(a.influence, b.influence);
    }

    #[test]
    fn held_out_predictions_ignore_their_own_fold(
        seed in any::<u64>(),
        k in 2usize..6,
        fold in 0usize..6,
        bump in -50.0..50.0f64,
    ) {
        let n = 120;
        let fold = fold % k;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![lmtp::rng::uniform(seed, &[i as u64, 0]), lmtp::rng::uniform(seed, &[i as u64, 1])])
            .collect();
        let x = Design::from_rows(&["x1", "x2"], &rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 2.0 * r[1]).collect();
        let folds = make_folds(n, k, seed).unwrap();
        let f = folds.as_slice();
        let stack = StackSpec::new(vec![
            LearnerSpec::glm(false),
            LearnerSpec::new(Family::Knn),
            LearnerSpec::new(Family::RegressionTree),
        ]);
        let fit = |y: &[f64]| cross_fit(&stack, Loss::Squared, seed, k, &x, y, None, f, &[(&x, f)]).unwrap();
        let base = fit(&y);
        let moved: Vec<f64> = (0..n).map(|i| if f[i] == fold { y[i] + bump } else { y[i] }).collect();
        let after = fit(&moved);
        for i in (0..n).filter(|&i| f[i] == fold) {
            prop_assert_eq!(base.predictions[0][i].to_bits(), after.predictions[0][i].to_bits());
        }
    }
}
