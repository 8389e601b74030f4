use std::fmt;

use super::{Assign, Cond, Policy, Rule, ShiftOp};
use crate::panel::ExposureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    /// `d` may not depend on the distribution of the data.
    DistributionFree,
    /// Continuous exposures need `d` piecewise smooth invertible in `a`.
    PiecewiseSmoothInvertible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequirementViolation {
    pub requirement: Requirement,
    /// `None` for the default rule.
    pub t: Option<usize>,
    pub rule: String,
    pub reason: String,
    pub consequence: String,
}

impl fmt::Display for RequirementViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = match self.t {
            None => "all t".to_string(),
            Some(t) => format!("t={t}"),
        };
        write!(f, "rule '{}' ({at}): {}; {}", self.rule, self.reason, self.consequence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequirementReport {
    pub exposure: String,
    pub violations: Vec<RequirementViolation>,
}

impl RequirementReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// One line per violation, or `PASS`.
    pub fn summary(&self) -> String {
        if self.passed() {
            return "PASS".into();
        }
        let mut s = String::from("FAIL");
        for v in &self.violations {
            s.push_str("\n  ");
            s.push_str(&v.to_string());
        }
        s
    }
}

const INVERTIBILITY_CONSEQUENCE: &str = "influence-function standard errors and confidence intervals \
     for this policy will be incorrect, so it is refused for continuous exposures";

/// Check both requirements for a policy against an exposure kind.
pub fn validate_policy_requirements(policy: &Policy, kind: &ExposureKind) -> RequirementReport {
    let mut violations = Vec::new();
    let rules = std::iter::once((None, policy.default_rule()))
        .chain(policy.overrides().iter().map(|(t, r)| (Some(*t), r)));
    for (t, rule) in rules {
        if let Some(reason) = distribution_dependence(rule) {
            violations.push(RequirementViolation {
                requirement: Requirement::DistributionFree,
                t,
                rule: rule.to_string(),
                reason,
                consequence: "the estimand is not identified by these estimators".into(),
            });
        }
        if !kind.is_discrete() {
            if let Some(reason) = non_invertible(rule) {
                violations.push(RequirementViolation {
                    requirement: Requirement::PiecewiseSmoothInvertible,
                    t,
                    rule: rule.to_string(),
                    reason,
                    consequence: INVERTIBILITY_CONSEQUENCE.into(),
                });
            }
        }
    }
    RequirementReport {
        exposure: kind.name().to_string(),
        violations,
    }
}

/// Rules only carry literal constants; re-check that they are usable.
fn distribution_dependence(rule: &Rule) -> Option<String> {
    let mut params: Vec<f64> = Vec::new();
    match rule {
        Rule::Constant(v) => params.push(*v),
        Rule::Natural => {}
        Rule::Switch { when, then, otherwise, .. } => {
            cond_constants(when, &mut params);
            for a in [then, otherwise] {
                if let Assign::Value(v) | Assign::Add(v) | Assign::Mul(v) = a {
                    params.push(*v);
                }
            }
        }
        Rule::Shift { op, guard } => {
            params.push(match op {
                ShiftOp::Add(d) | ShiftOp::Mul(d) => *d,
            });
            if let Some(g) = guard {
                cond_constants(g, &mut params);
            }
        }
        Rule::Threshold { bound, .. } => params.push(*bound),
        Rule::RiskRatioIpsi { delta, fallback } => params.extend([*delta, *fallback]),
        Rule::DelayDiscrete { trigger, fallback } => params.extend([*trigger, *fallback]),
    }
    params
        .iter()
        .any(|v| !v.is_finite())
        .then(|| "parameters must be finite constants fixed before seeing the data".to_string())
}

fn cond_constants(c: &Cond, out: &mut Vec<f64>) {
    match c {
        Cond::Cmp { rhs, .. } | Cond::AnyInWindow { rhs, .. } => out.push(*rhs),
        Cond::And(l, r) | Cond::Or(l, r) => {
            cond_constants(l, out);
            cond_constants(r, out);
        }
        Cond::Not(x) => cond_constants(x, out),
    }
}

fn invertible_branch(a: &Assign) -> bool {
    match a {
        Assign::Natural | Assign::Add(_) => true,
        Assign::Mul(m) => *m != 0.0,
        Assign::Value(_) | Assign::Draw(_) => false,
    }
}

/// Whitelist: identity, additive or non-zero multiplicative shifts, and
/// switches between such maps, with guards that do not read `ε`. Each
/// guard splits the domain into pieces on which the map is strictly
/// monotone.
fn non_invertible(rule: &Rule) -> Option<String> {
    const REASON: &str = "not piecewise smooth invertible";
    match rule {
        Rule::Natural => None,
        Rule::Shift { op, guard } => {
            if let ShiftOp::Mul(m) = op {
                if *m == 0.0 {
                    return Some(format!("{REASON}: multiplying by 0 collapses the exposure"));
                }
            }
            if guard.as_ref().is_some_and(|g| g.reads().eps) {
                return Some(format!("{REASON}: guard reads the randomizer"));
            }
            None
        }
        Rule::Switch {
            when, then, otherwise, ..
        } => {
            if when.reads().eps {
                Some(format!("{REASON}: branch choice depends on the randomizer"))
            } else if !invertible_branch(then) || !invertible_branch(otherwise) {
                Some(format!("{REASON}: a branch assigns a value that does not depend on a invertibly"))
            } else {
                None
            }
        }
        Rule::Constant(_) => Some(format!("{REASON}: constant assignment maps every a to one value")),
        Rule::Threshold { .. } => Some(format!("{REASON}: the capped region maps to a single value")),
        Rule::RiskRatioIpsi { .. } => Some(format!("{REASON}: randomized fallback to a constant")),
        Rule::DelayDiscrete { .. } => Some(format!("{REASON}: delay rules apply to discrete exposures only")),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_policy_spec;
    use super::*;

    #[test]
    fn threshold_on_continuous_exposure_fails() {
        let p = parse_policy_spec("threshold: cap above 25").unwrap();
        let r = validate_policy_requirements(&p, &ExposureKind::Continuous);
        assert!(!r.passed());
        assert!(r.violations[0].reason.contains("not piecewise smooth invertible"));
        assert!(r.summary().contains("confidence intervals"));
    }

    #[test]
    fn guarded_shift_on_continuous_exposure_passes() {
        for spec in ["shift: add 5 when a <= 95", "shift: multiply by 0.9 when a > 20", "modified: a - 15 if a >= 60 else a"] {
            let p = parse_policy_spec(spec).unwrap();
            assert!(validate_policy_requirements(&p, &ExposureKind::Continuous).passed(), "{spec}");
        }
    }

    #[test]
    fn binary_exposure_always_passes() {
        for spec in [
            "static: 1",
            "threshold: cap above 0",
            "ipsi-rr: delta 0.5 fallback 0",
            "delay: trigger 1 fallback 0",
            "randomized: draw bernoulli(0.5) if L == 1 else 0",
        ] {
            let p = parse_policy_spec(spec).unwrap();
            assert!(validate_policy_requirements(&p, &ExposureKind::Binary).passed(), "{spec}");
        }
    }

    #[test]
    fn overrides_are_checked_too() {
        let p = parse_policy_spec("natural; static: 3 at t=1").unwrap();
        let r = validate_policy_requirements(&p, &ExposureKind::Continuous);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].t, Some(1));
    }
}
