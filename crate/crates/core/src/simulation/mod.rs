//! Known data-generating processes, counterfactual oracles and the
//! misspecification scenario harness.

mod oracle;
pub mod presets;
mod sample;
mod scenario;
mod spec;

pub use oracle::{oracle_exact, oracle_exact_curve, oracle_mc, oracle_mc_contrast, oracle_mc_many, true_ratios, McTruth, MAX_PATHS};
pub use sample::sample_dgp;
pub use scenario::{run_scenario_matrix, truth, Keyword, Scenario, ScenarioResult, TimeSet};
pub use spec::{DgpSpec, ExposureLaw, Link, OutcomeLaw, Predictor, VarLaw};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy_spec as parse_policy;
    use crate::policy::Policy;
    use crate::stats;
    use approx::assert_abs_diff_eq;

    /// Direct g-formula sum for the point-treatment preset, written out
    /// independently of the path walker.
    #[test]
    fn point_treatment_truth_by_hand() {
        let mut psi = 0.0;
        for l in [0.0, 1.0] {
            let pl = 0.5;
            let py = 0.2 + 0.3 * 1.0 + 0.2 * l;
            psi += pl * py;
        }
        assert_abs_diff_eq!(psi, 0.6, epsilon = 1e-15);
        let exact = oracle_exact(&presets::point_treatment(), &Policy::static_value(1.0)).unwrap();
        assert_abs_diff_eq!(exact, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn identity_policy_recovers_marginal_mean() {
        // E[Y] = Σ_l P(l) Σ_a P(a|l) P(Y|a,l)
        let mut ey = 0.0;
        for l in [0.0, 1.0] {
            let pa1 = 0.3 + 0.4 * l;
            for (a, pa) in [(0.0, 1.0 - pa1), (1.0, pa1)] {
                ey += 0.5 * pa * (0.2 + 0.3 * a + 0.2 * l);
            }
        }
        let exact = oracle_exact(&presets::point_treatment(), &Policy::identity()).unwrap();
        assert_abs_diff_eq!(exact, ey, epsilon = 1e-12);
    }

    #[test]
    fn randomized_policy_is_a_mixture() {
        let spec = presets::two_period();
        let mixed = parse_policy("randomized: 0 if eps < 0.5 else a with eps ~ uniform").unwrap();
        let quit = oracle_exact(&spec, &Policy::static_value(0.0)).unwrap();
        let natural = oracle_exact(&spec, &Policy::identity()).unwrap();
        let both = oracle_exact(&spec, &mixed).unwrap();
        // per-period coin flips: enumerate the four coin patterns separately
        let fixed = |t0: bool, t1: bool| {
            let rule = |q: bool| if q { "static: 0" } else { "natural" };
            let src = format!("natural; {} at t=0; {} at t=1", rule(t0), rule(t1));
            oracle_exact(&spec, &parse_policy(&src).unwrap()).unwrap()
        };
        let avg = (fixed(true, true) + fixed(true, false) + fixed(false, true) + fixed(false, false)) / 4.0;
        assert_abs_diff_eq!(both, avg, epsilon = 1e-12);
        assert!(quit != natural);
    }

    #[test]
    fn mc_agrees_with_enumeration() {
        let spec = presets::two_period();
        for src in ["static: 1", "natural", "shift: add 1 when a == 0"] {
            let p = parse_policy(src).unwrap();
            let exact = oracle_exact(&spec, &p).unwrap();
            let mc = oracle_mc(&spec, &p, 40_000, 3).unwrap();
            let (m, se) = mc.last();
            assert!((m - exact).abs() <= 3.0 * se, "{src}: {m} vs {exact} (se {se})");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let spec = presets::point_treatment();
        let a = sample_dgp(&spec, 100_000, 9).unwrap();
        let b = sample_dgp(&spec, 100_000, 9).unwrap();
        assert_eq!(a.covariates()[0].values, b.covariates()[0].values);
        let m = stats::mean(&a.covariates()[0].values[0]);
        assert!((m - 0.5).abs() < 0.005, "{m}");
    }

    #[test]
    fn certain_exposure_is_always_taken() {
        let mut spec = presets::point_treatment();
        spec.exposure = ExposureLaw::Binary {
            p: Predictor::identity(1.0, &[]),
        };
        let d = sample_dgp(&spec, 500, 1).unwrap();
        assert!(d.exposure_at(0).iter().all(|&a| a == 1.0));
        // and the static policy at the observed value recovers E[Y]
        let ey = 0.5 * (0.5 + 0.7);
        assert_abs_diff_eq!(oracle_exact(&spec, &Policy::static_value(1.0)).unwrap(), ey, epsilon = 1e-12);
    }

    #[test]
    fn improper_identity_probability_is_reported() {
        let mut spec = presets::point_treatment();
        spec.exposure = ExposureLaw::Binary {
            p: Predictor::identity(0.8, &[("L", 0.4)]),
        };
        assert!(matches!(sample_dgp(&spec, 200, 1), Err(crate::Error::ImproperLaw(_))));
    }

    #[test]
    fn continuous_shift_moves_mean_by_beta_delta_guard() {
        let spec = presets::continuous_shift();
        let shift = parse_policy("shift: add 1.5 when L == 1").unwrap();
        let base = oracle_mc_contrast(&spec, &shift, &Policy::identity(), 20_000, 5).unwrap();
        let (d, se) = base.last();
        let closed = presets::CONTINUOUS_BETA * 1.5 * 0.5;
        assert!((d - closed).abs() <= 3.0 * se.max(1e-12), "{d} vs {closed}");
        // the natural mean: 2 + β (1 + 0.5) + 0.5
        let nat = oracle_mc(&spec, &Policy::identity(), 40_000, 6).unwrap().last();
        assert!((nat.0 - (2.0 + 0.5 * 1.5 + 0.5)).abs() <= 3.0 * nat.1);
        assert!(oracle_exact(&spec, &shift).is_err());
    }

    #[test]
    fn survival_sample_respects_structure() {
        let spec = presets::survival();
        let d = sample_dgp(&spec, 3000, 2).unwrap();
        assert!(d.is_survival() && d.has_censoring());
        // invasive support never stops once started
        for i in 0..d.n_units() {
            for t in 1..=d.horizon() {
                let (prev, cur) = (d.exposure_at(t - 1)[i], d.exposure_at(t)[i]);
                if prev == 2.0 && !cur.is_nan() {
                    assert_eq!(cur, 2.0);
                }
            }
        }
        let inc = stats::mean(&d.outcome_through(13).iter().copied().filter(|v| !v.is_nan()).collect::<Vec<_>>());
        assert!(inc > 0.05 && inc < 0.6, "incidence {inc}");
    }
}
