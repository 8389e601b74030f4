use lmtp::estimators::{contrast, estimate, estimate_all, ContrastKind, EstimatorConfig, EstimatorKind};
use lmtp::learners::{LearnerSpec, StackSpec};
use lmtp::policy::{parse_policy_spec, Policy};
use lmtp::simulation::{oracle_exact, presets, sample_dgp};
use lmtp::stats;

fn saturated() -> EstimatorConfig {
    EstimatorConfig::new(
        StackSpec::single(LearnerSpec::glm(true).saturated()),
        StackSpec::single(LearnerSpec::glm(true).saturated()),
    )
}

fn within(est: f64, se: f64, truth: f64, k: f64) -> bool {
    (est - truth).abs() <= k * se
}

#[test]
fn point_treatment_estimators_recover_truth() {
    let spec = presets::point_treatment();
    let policy = Policy::static_value(1.0);
    let truth = oracle_exact(&spec, &policy).unwrap();
    let data = sample_dgp(&spec, 4000, 11).unwrap();
    let cfg = saturated().with_seed(4);
    let ests = estimate_all(&EstimatorKind::ALL, &data, &policy, &cfg).unwrap();
    let tmle_se = ests.iter().find(|e| e.estimator == EstimatorKind::Tmle).unwrap().se.unwrap();
    for e in &ests {
        let se = e.se.unwrap_or(tmle_se);
        assert!(within(e.psi, se, truth, 4.0), "{}: {} vs {truth} (se {se})", e.label(), e.psi);
    }
}

/// With one fold, saturated g-computation is the plug-in g-formula on the
/// empirical cell means.
#[test]
fn single_fold_gcomp_is_the_plugin_formula() {
    let spec = presets::point_treatment();
    let data = sample_dgp(&spec, 3000, 2).unwrap();
    let l = &data.covariates()[0].values[0];
    let a = data.exposure_at(0);
    let y = data.outcome_through(0);
    let mut plugin = 0.0;
    for lv in [0.0, 1.0] {
        let p_l = l.iter().filter(|&&x| x == lv).count() as f64 / l.len() as f64;
        let ys: Vec<f64> = (0..l.len()).filter(|&i| l[i] == lv && a[i] == 1.0).map(|i| y[i]).collect();
        plugin += p_l * stats::mean(&ys);
    }
    let est = estimate(EstimatorKind::Gcomp, &data, &Policy::static_value(1.0), &saturated().with_folds(1)).unwrap();
    assert!((est.psi - plugin).abs() < 1e-9, "{} vs {plugin}", est.psi);
}

#[test]
fn natural_policy_reproduces_the_sample_mean() {
    let spec = presets::two_period();
    let data = sample_dgp(&spec, 1500, 8).unwrap();
    let ybar = stats::mean(&data.outcome_through(1));
    let cfg = saturated();
    for kind in [EstimatorKind::Ipw, EstimatorKind::Tmle, EstimatorKind::Sdr] {
        let e = estimate(kind, &data, &Policy::identity(), &cfg).unwrap();
        assert!((e.psi - ybar).abs() < 1e-6, "{kind:?}: {} vs {ybar}", e.psi);
    }
}

#[test]
fn two_period_doubly_robust_estimators_cover_truth() {
    let spec = presets::two_period();
    let policy = parse_policy_spec("static: 1").unwrap();
    let truth = oracle_exact(&spec, &policy).unwrap();
    let data = sample_dgp(&spec, 5000, 21).unwrap();
    for kind in [EstimatorKind::Tmle, EstimatorKind::Sdr] {
        let e = estimate(kind, &data, &policy, &saturated().with_seed(5)).unwrap();
        let (lo, hi) = e.ci.unwrap();
        assert!(within(e.psi, e.se.unwrap(), truth, 4.0), "{kind:?}: {} [{lo}, {hi}] vs {truth}", e.psi);
        assert!(lo < e.psi && e.psi < hi);
    }
}

#[test]
fn same_seed_same_estimate() {
    let spec = presets::two_period();
    let data = sample_dgp(&spec, 600, 3).unwrap();
    let policy = parse_policy_spec("shift: add 1 when a == 0 and L == 1").unwrap();
    let cfg = saturated().with_seed(99);
    let a = estimate(EstimatorKind::Sdr, &data, &policy, &cfg).unwrap();
    let b = estimate(EstimatorKind::Sdr, &data, &policy, &cfg).unwrap();
    assert_eq!(a.psi.to_bits(), b.psi.to_bits());
    assert_eq!(a.influence, b.influence);
}

#[test]
fn contrast_of_identical_policies_is_null() {
    let spec = presets::point_treatment();
    let data = sample_dgp(&spec, 800, 5).unwrap();
    let cfg = saturated();
    let a = estimate(EstimatorKind::Tmle, &data, &Policy::static_value(1.0), &cfg).unwrap();
    let d = contrast(&a, &a, ContrastKind::Difference).unwrap();
    assert_eq!(d.psi, 0.0);
    assert_eq!(d.se, Some(0.0));
    let r = contrast(&a, &a, ContrastKind::Ratio).unwrap();
    assert!((r.psi - 1.0).abs() < 1e-12);
}

#[test]
fn continuous_outcome_is_rescaled_back() {
    let spec = presets::continuous_shift();
    let data = sample_dgp(&spec, 2000, 4).unwrap();
    let cfg = EstimatorConfig::new(
        StackSpec::single(LearnerSpec::glm(false)),
        StackSpec::single(LearnerSpec::glm(true)),
    );
    let policy = parse_policy_spec("shift: add 1 when L == 1").unwrap();
    let nat = estimate(EstimatorKind::Tmle, &data, &Policy::identity(), &cfg).unwrap();
    let sh = estimate(EstimatorKind::Tmle, &data, &policy, &cfg).unwrap();
    let ybar = stats::mean(&data.outcome_through(0));
    assert!((nat.psi - ybar).abs() < 1e-6);
    // truth of the difference is 0.5 * 1 * P(L = 1) = 0.25
    let d = contrast(&sh, &nat, ContrastKind::Difference).unwrap();
    assert!(within(d.psi, d.se.unwrap(), 0.25, 4.0), "{} (se {:?})", d.psi, d.se);
}
