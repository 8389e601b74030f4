//! Intervention policies `d_t(a_t, h_t, ε_t)`.
//!
//! A [`Policy`] is a default [`Rule`] plus optional per-time overrides.
//! Rules only hold constants; anything they read comes from the natural
//! value `a_t`, the history `h_t`, the randomizer `ε_t` or the time index.
//! The category tag (static, dynamic, stochastic, mtp) is the minimal one
//! consistent with what the rules read.

mod cond;
mod parse;
mod validate;

pub use cond::{CmpOp, Cond, Operand, Reads};
pub use parse::parse_policy_spec;
pub use validate::{validate_policy_requirements, Requirement, RequirementReport, RequirementViolation};

use std::fmt;

use crate::error::{Error, Result};
use crate::panel::{ExposureKind, History, PanelDataset};
use crate::rng;
use crate::stats;
use cond::EvalInputs;

/// Declared law of a randomizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Uniform,
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Law {
    /// Inverse-CDF transform of an underlying uniform draw.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match *self {
            Law::Uniform => u,
            Law::Bernoulli { p } => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Normal { mean, sd } => mean + sd * stats::normal_quantile(u),
        }
    }

    /// Finite support with probabilities, for discrete laws.
    pub fn discrete_support(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            Law::Bernoulli { p } => Some(vec![(1.0, p), (0.0, 1.0 - p)]),
            _ => None,
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Uniform => write!(f, "uniform"),
            Law::Bernoulli { p } => write!(f, "bernoulli({p})"),
            Law::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
        }
    }
}

/// One randomizer realization `ε_t` for a unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizerDraw {
    pub unit: u64,
    pub t: usize,
    /// Underlying uniform; other laws in the same rule transform this.
    pub uniform: f64,
    /// `ε_t` on the rule's declared law.
    pub value: f64,
}

impl RandomizerDraw {
    pub fn under(&self, law: Law) -> f64 {
        law.from_uniform(self.uniform)
    }
}

/// Value assigned by a branch of a switch rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assign {
    Value(f64),
    Natural,
    Draw(Law),
    Add(f64),
    Mul(f64),
}

impl Assign {
    fn reads(&self) -> Reads {
        match self {
            Assign::Value(_) => Reads::default(),
            Assign::Natural | Assign::Add(_) | Assign::Mul(_) => Reads {
                natural: true,
                ..Reads::default()
            },
            Assign::Draw(_) => Reads {
                eps: true,
                ..Reads::default()
            },
        }
    }

    fn apply(&self, a: f64, eps: Option<&RandomizerDraw>, t: usize) -> Result<f64> {
        Ok(match *self {
            Assign::Value(v) => v,
            Assign::Natural => a,
            Assign::Add(d) => a + d,
            Assign::Mul(d) => a * d,
            Assign::Draw(law) => eps.ok_or(Error::NoRandomizer { t })?.under(law),
        })
    }
}

impl fmt::Display for Assign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assign::Value(v) => write!(f, "{v}"),
            Assign::Natural => write!(f, "a"),
            Assign::Add(d) => write!(f, "a + {d}"),
            Assign::Mul(d) => write!(f, "a * {d}"),
            Assign::Draw(l) => write!(f, "draw {l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftOp {
    Add(f64),
    Mul(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Values above the bound are set to the bound.
    CapAbove,
    /// Values below the bound are set to the bound.
    CapBelow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Constant(f64),
    /// Identity on the natural value.
    Natural,
    /// `then` if `when` holds, else `otherwise`. `eps` declares the law of
    /// `ε_t` read by the condition.
    Switch {
        when: Cond,
        then: Assign,
        otherwise: Assign,
        eps: Option<Law>,
    },
    /// Additive or multiplicative shift, applied where the guard holds.
    Shift { op: ShiftOp, guard: Option<Cond> },
    Threshold { bound: f64, direction: Direction },
    /// Keep the natural value when `ε_t < δ` (ε uniform), else `fallback`.
    RiskRatioIpsi { delta: f64, fallback: f64 },
    /// At the first time the natural value reaches `trigger` (no earlier
    /// exposure at or above it), assign `fallback` instead.
    DelayDiscrete { trigger: f64, fallback: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Static,
    Dynamic,
    Stochastic,
    Mtp,
}

impl Category {
    pub fn from_reads(r: Reads) -> Category {
        if r.natural {
            Category::Mtp
        } else if r.eps {
            Category::Stochastic
        } else if r.history {
            Category::Dynamic
        } else {
            Category::Static
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Static => "static",
            Category::Dynamic => "dynamic",
            Category::Stochastic => "stochastic",
            Category::Mtp => "mtp",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Rule {
    pub fn reads(&self) -> Reads {
        let natural = Reads {
            natural: true,
            ..Reads::default()
        };
        match self {
            Rule::Constant(_) => Reads::default(),
            Rule::Natural | Rule::Threshold { .. } => natural,
            Rule::Switch {
                when, then, otherwise, ..
            } => when.reads().union(then.reads()).union(otherwise.reads()),
            Rule::Shift { guard, .. } => guard.as_ref().map_or(natural, |g| g.reads().union(natural)),
            Rule::RiskRatioIpsi { .. } => Reads {
                natural: true,
                eps: true,
                ..Reads::default()
            },
            Rule::DelayDiscrete { .. } => Reads {
                natural: true,
                history: true,
                ..Reads::default()
            },
        }
    }

    pub fn category(&self) -> Category {
        Category::from_reads(self.reads())
    }

    /// Law of `ε_t`, if the rule reads one.
    pub fn randomizer(&self) -> Option<Law> {
        match self {
            Rule::Switch { eps: Some(l), .. } => Some(*l),
            Rule::Switch { then, otherwise, .. } => match (then, otherwise) {
                (Assign::Draw(l), _) | (_, Assign::Draw(l)) => Some(*l),
                _ => None,
            },
            Rule::RiskRatioIpsi { .. } => Some(Law::Uniform),
            _ => None,
        }
    }

    /// Finite partition of the randomizer's support that fully determines
    /// the rule's output, as `(representative uniform, probability)` pairs.
    /// `None` when the output varies continuously in `ε_t`.
    pub fn randomizer_partition(&self) -> Option<Vec<(f64, f64)>> {
        let law = match self.randomizer() {
            None => return Some(vec![(0.5, 1.0)]),
            Some(l) => l,
        };
        if let Rule::Switch { then, otherwise, .. } = self {
            if matches!(then, Assign::Draw(Law::Uniform | Law::Normal { .. }))
                || matches!(otherwise, Assign::Draw(Law::Uniform | Law::Normal { .. }))
            {
                return None;
            }
        }
        // Breakpoints on the uniform scale where the output can change.
        let mut cuts: Vec<f64> = Vec::new();
        match (self, law) {
            (_, Law::Bernoulli { p }) => cuts.push(p),
            (Rule::RiskRatioIpsi { delta, .. }, Law::Uniform) => cuts.push(*delta),
            (Rule::Switch { when, .. }, Law::Uniform) => {
                collect_eps_cuts(when, &mut cuts, |c| c)?;
            }
            (Rule::Switch { when, .. }, Law::Normal { mean, sd }) => {
                collect_eps_cuts(when, &mut cuts, |c| stats::normal_cdf((c - mean) / sd))?;
            }
            _ => return None,
        }
        cuts.retain(|c| *c > 0.0 && *c < 1.0);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut edges = vec![0.0];
        edges.extend(cuts);
        edges.push(1.0);
        Some(
            edges
                .windows(2)
                .filter(|w| w[1] > w[0])
                .map(|w| ((w[0] + w[1]) / 2.0, w[1] - w[0]))
                .collect(),
        )
    }

    fn evaluate(&self, t: usize, a: f64, h: &dyn History, eps: Option<&RandomizerDraw>) -> Result<f64> {
        let x = EvalInputs {
            t,
            a,
            eps: eps.map(|e| e.value),
            history: h,
        };
        match self {
            Rule::Constant(v) => Ok(*v),
            Rule::Natural => Ok(a),
            Rule::Switch {
                when, then, otherwise, ..
            } => {
                if when.reads().eps && eps.is_none() {
                    return Err(Error::NoRandomizer { t });
                }
                if when.eval(&x) {
                    then.apply(a, eps, t)
                } else {
                    otherwise.apply(a, eps, t)
                }
            }
            Rule::Shift { op, guard } => {
                if guard.as_ref().is_some_and(|g| !g.eval(&x)) {
                    return Ok(a);
                }
                Ok(match op {
                    ShiftOp::Add(d) => a + d,
                    ShiftOp::Mul(d) => a * d,
                })
            }
            Rule::Threshold { bound, direction } => Ok(match direction {
                Direction::CapAbove => a.min(*bound),
                Direction::CapBelow => a.max(*bound),
            }),
            Rule::RiskRatioIpsi { delta, fallback } => {
                let e = eps.ok_or(Error::NoRandomizer { t })?;
                Ok(if e.value < *delta { a } else { *fallback })
            }
            Rule::DelayDiscrete { trigger, fallback } => {
                if a == *trigger && (0..t).all(|s| h.exposure(s).is_none_or(|v| v < *trigger)) {
                    Ok(*fallback)
                } else {
                    Ok(a)
                }
            }
        }
    }

    pub(crate) fn covariate_names(&self, out: &mut Vec<String>) {
        match self {
            Rule::Switch { when, .. } => when.covariate_names(out),
            Rule::Shift { guard: Some(g), .. } => g.covariate_names(out),
            _ => {}
        }
    }
}

fn collect_eps_cuts(c: &Cond, cuts: &mut Vec<f64>, to_u: impl Fn(f64) -> f64 + Copy) -> Option<()> {
    match c {
        Cond::Cmp { lhs: Operand::Eps, rhs, .. } => {
            cuts.push(to_u(*rhs));
            Some(())
        }
        Cond::Cmp { .. } | Cond::AnyInWindow { .. } => Some(()),
        Cond::And(l, r) | Cond::Or(l, r) => {
            collect_eps_cuts(l, cuts, to_u)?;
            collect_eps_cuts(r, cuts, to_u)
        }
        Cond::Not(x) => collect_eps_cuts(x, cuts, to_u),
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Constant(v) => write!(f, "static: {v}"),
            Rule::Natural => write!(f, "natural"),
            Rule::Switch {
                when,
                then,
                otherwise,
                eps,
            } => {
                write!(f, "switch: {then} if {when} else {otherwise}")?;
                if let Some(l) = eps {
                    write!(f, " with eps ~ {l}")?;
                }
                Ok(())
            }
            Rule::Shift { op, guard } => {
                match op {
                    ShiftOp::Add(d) => write!(f, "shift: add {d}")?,
                    ShiftOp::Mul(d) => write!(f, "shift: multiply by {d}")?,
                }
                if let Some(g) = guard {
                    write!(f, " when {g}")?;
                }
                Ok(())
            }
            Rule::Threshold { bound, direction } => match direction {
                Direction::CapAbove => write!(f, "threshold: cap above {bound}"),
                Direction::CapBelow => write!(f, "threshold: cap below {bound}"),
            },
            Rule::RiskRatioIpsi { delta, fallback } => write!(f, "ipsi-rr: delta {delta} fallback {fallback}"),
            Rule::DelayDiscrete { trigger, fallback } => write!(f, "delay: trigger {trigger} fallback {fallback}"),
        }
    }
}

/// An executable intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    default: Rule,
    overrides: Vec<(usize, Rule)>,
    category: Category,
    exposure_kind: Option<ExposureKind>,
    seed: u64,
    source: String,
}

impl Policy {
    pub fn new(default: Rule) -> Policy {
        let category = default.category();
        Policy {
            source: default.to_string(),
            default,
            overrides: Vec::new(),
            category,
            exposure_kind: None,
            seed: 0,
        }
    }

    /// The identity intervention `d(a) = a`.
    pub fn identity() -> Policy {
        Policy::new(Rule::Natural)
    }

    pub fn static_value(v: f64) -> Policy {
        Policy::new(Rule::Constant(v))
    }

    /// Override the rule at time `t`.
    pub fn with_rule_at(mut self, t: usize, rule: Rule) -> Policy {
        self.overrides.retain(|(s, _)| *s != t);
        self.overrides.push((t, rule));
        self.overrides.sort_by_key(|(s, _)| *s);
        self.category = self.rules().map(Rule::category).max().unwrap_or(Category::Static);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Policy {
        self.seed = seed;
        self
    }

    pub fn with_exposure_kind(mut self, kind: ExposureKind) -> Policy {
        self.exposure_kind = Some(kind);
        self
    }

    /// Attach the data's exposure kind, refusing a conflicting declaration.
    pub fn bind(&self, kind: &ExposureKind) -> Result<Policy> {
        match &self.exposure_kind {
            Some(k) if k != kind => Err(Error::ExposureDomain(format!(
                "policy declared for a {} exposure, data exposure is {}",
                k.name(),
                kind.name()
            ))),
            _ => Ok(self.clone().with_exposure_kind(kind.clone())),
        }
    }

    pub(crate) fn with_source(mut self, source: &str) -> Policy {
        self.source = source.trim().to_string();
        self
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn exposure_kind(&self) -> Option<&ExposureKind> {
        self.exposure_kind.as_ref()
    }

    pub fn rule_at(&self, t: usize) -> &Rule {
        self.overrides
            .iter()
            .find(|(s, _)| *s == t)
            .map(|(_, r)| r)
            .unwrap_or(&self.default)
    }

    /// Default rule followed by the overrides.
    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        std::iter::once(&self.default).chain(self.overrides.iter().map(|(_, r)| r))
    }

    pub fn default_rule(&self) -> &Rule {
        &self.default
    }

    pub(crate) fn overrides(&self) -> &[(usize, Rule)] {
        &self.overrides
    }

    /// Whether any rule reads the natural value of treatment.
    pub fn reads_natural_value(&self) -> bool {
        self.rules().any(|r| r.reads().natural)
    }

    /// Counter-based `ε_t` for `(seed, unit, t)`.
    pub fn draw_randomizer(&self, seed: u64, unit: u64, t: usize) -> Result<RandomizerDraw> {
        let law = self.rule_at(t).randomizer().ok_or(Error::NoRandomizer { t })?;
        let uniform = rng::uniform(seed, &[rng::streams::RANDOMIZER, unit, t as u64]);
        Ok(RandomizerDraw {
            unit,
            t,
            uniform,
            value: law.from_uniform(uniform),
        })
    }

    /// `d_t(a, h, ε)`. Pure: identical inputs give identical outputs.
    pub fn evaluate(&self, t: usize, a: f64, h: &dyn History, eps: Option<&RandomizerDraw>) -> Result<f64> {
        if let Some(kind) = &self.exposure_kind {
            if !kind.contains(a) {
                return Err(Error::ExposureDomain(format!(
                    "natural value {a} outside the {} exposure domain",
                    kind.name()
                )));
            }
        }
        let out = self.rule_at(t).evaluate(t, a, h, eps)?;
        if let Some(kind) = &self.exposure_kind {
            if !kind.contains(out) {
                return Err(Error::ExposureDomain(format!(
                    "rule '{}' produced {out}, outside the {} exposure domain",
                    self.rule_at(t),
                    kind.name()
                )));
            }
        }
        Ok(out)
    }

    /// Evaluate with the policy's own counter-based randomizer for `unit`.
    pub fn apply(&self, t: usize, a: f64, h: &dyn History, unit: u64) -> Result<f64> {
        let eps = match self.rule_at(t).randomizer() {
            Some(_) => Some(self.draw_randomizer(self.seed, unit, t)?),
            None => None,
        };
        self.evaluate(t, a, h, eps.as_ref())
    }

    /// `A_t^d = d_t(A_t, H_t, ε_t)` on the observed rows; `NaN` for units
    /// not at risk at `t`.
    pub fn shifted_exposures(&self, data: &PanelDataset, t: usize) -> Result<Vec<f64>> {
        let a = data.exposure_at(t);
        let out = crate::exec::try_map_range(data.n_units(), |i| {
            if !data.is_at_risk(i, t) {
                return Ok(f64::NAN);
            }
            self.apply(t, a[i], &data.row_history(i, t), i as u64)
        })?;
        Ok(out)
    }

    /// `A_t^d` for every time, `[t][unit]`, with the history either
    /// observed or carried forward under the policy.
    pub fn exposures_under(&self, data: &PanelDataset, counterfactual_history: bool) -> Result<Vec<Vec<f64>>> {
        if counterfactual_history {
            self.counterfactual_history_exposures(data)
        } else {
            (0..data.n_times()).map(|t| self.shifted_exposures(data, t)).collect()
        }
    }

    /// `A_t^d` evaluated against histories in which every earlier exposure
    /// has itself been replaced by its policy value, computed forward from
    /// `t = 0`. Returns `[t][unit]`.
    pub fn counterfactual_history_exposures(&self, data: &PanelDataset) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(data.n_times());
        for t in 0..data.n_times() {
            let a = data.exposure_at(t);
            let row = (0..data.n_units())
                .map(|i| {
                    if !data.is_at_risk(i, t) {
                        return Ok(f64::NAN);
                    }
                    let h = OverlayHistory {
                        base: data.row_history(i, t),
                        exposures: out.iter().map(|col| col[i]).collect(),
                    };
                    self.apply(t, a[i], &h, i as u64)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(row);
        }
        Ok(out)
    }

    /// Covariate names read by any rule.
    pub fn covariate_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in self.rules() {
            r.covariate_names(&mut out);
        }
        out
    }
}

/// Observed history with past exposures replaced.
struct OverlayHistory<'a> {
    base: crate::panel::RowHistory<'a>,
    exposures: Vec<f64>,
}

impl History for OverlayHistory<'_> {
    fn time(&self) -> usize {
        self.base.time()
    }
    fn covariate(&self, name: &str, time: usize) -> Option<f64> {
        self.base.covariate(name, time)
    }
    fn exposure(&self, time: usize) -> Option<f64> {
        self.exposures.get(time).copied().filter(|v| !v.is_nan())
    }
}

/// Empirically determine the minimal category by probing the policy over
/// grids of natural values, histories and randomizer draws.
pub fn probe_category(policy: &Policy, kind: &ExposureKind, times: usize) -> Category {
    use crate::panel::{HistoryEntry, HistoryItem, HistoryView};
    let a_grid: Vec<f64> = kind
        .levels()
        .unwrap_or_else(|| vec![-20.0, 0.0, 5.0, 9.0, 12.0, 22.0, 27.0, 59.0, 61.0, 90.0, 250.0]);
    let value_grid = [0.0, 1.0, 2.0, -1.0, 150.0, 250.0, 0.5];
    let names = policy.covariate_names();
    let eps_grid = [0.05, 0.3, 0.45, 0.55, 0.7, 0.95];
    let mut varies_a = false;
    let mut varies_eps = false;
    let mut varies_h = false;
    for t in 0..times {
        let histories: Vec<HistoryView> = (0..24u64)
            .map(|k| {
                let mut entries = Vec::new();
                for s in 0..=t {
                    if s > 0 {
                        let lv = a_grid[(rng::derive(k, &[s as u64, 99]) % a_grid.len() as u64) as usize];
                        entries.push(HistoryEntry {
                            time: s - 1,
                            item: HistoryItem::Exposure("A".into()),
                            value: lv,
                        });
                    }
                    for (j, n) in names.iter().enumerate() {
                        let v = value_grid[(rng::derive(k, &[s as u64, j as u64]) % value_grid.len() as u64) as usize];
                        entries.push(HistoryEntry {
                            time: s,
                            item: HistoryItem::Covariate(n.clone()),
                            value: v,
                        });
                    }
                }
                HistoryView::from_entries("probe", t, entries)
            })
            .collect();
        let law = policy.rule_at(t).randomizer();
        let draws: Vec<Option<RandomizerDraw>> = match law {
            None => vec![None],
            Some(l) => eps_grid
                .iter()
                .map(|&u| {
                    Some(RandomizerDraw {
                        unit: 0,
                        t,
                        uniform: u,
                        value: l.from_uniform(u),
                    })
                })
                .collect(),
        };
        let rule = policy.rule_at(t);
        let eval = |a: f64, h: &HistoryView, e: &Option<RandomizerDraw>| {
            rule.evaluate(t, a, h, e.as_ref()).map(f64::to_bits).ok()
        };
        for h in &histories {
            for e in &draws {
                let outs: Vec<_> = a_grid.iter().map(|&a| eval(a, h, e)).collect();
                varies_a |= outs.windows(2).any(|w| w[0] != w[1]);
            }
            for &a in &a_grid {
                let outs: Vec<_> = draws.iter().map(|e| eval(a, h, e)).collect();
                varies_eps |= outs.windows(2).any(|w| w[0] != w[1]);
            }
        }
        for &a in &a_grid {
            for e in &draws {
                let outs: Vec<_> = histories.iter().map(|h| eval(a, h, e)).collect();
                varies_h |= outs.windows(2).any(|w| w[0] != w[1]);
            }
        }
    }
    Category::from_reads(Reads {
        natural: varies_a,
        eps: varies_eps,
        history: varies_h,
        time: false,
    })
}
