use std::fmt;

use crate::panel::History;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// A value a condition can read.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    /// Natural value of treatment `a_t`.
    Natural,
    /// Randomizer `ε_t`.
    Eps,
    /// The time index itself.
    Time,
    /// Covariate `name` at `t - lag`.
    Covariate { name: String, lag: usize },
    /// Exposure at `t - lag`, `lag >= 1`.
    PastExposure { lag: usize },
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Natural => write!(f, "a"),
            Operand::Eps => write!(f, "eps"),
            Operand::Time => write!(f, "t"),
            Operand::Covariate { name, lag: 0 } => write!(f, "{name}"),
            Operand::Covariate { name, lag } => write!(f, "{name}[t-{lag}]"),
            Operand::PastExposure { lag } => write!(f, "a[t-{lag}]"),
        }
    }
}

/// Guard language: comparisons against constants and boolean combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp { lhs: Operand, op: CmpOp, rhs: f64 },
    /// `name op rhs` holds at some `s` in `t-window ..= t`.
    AnyInWindow { name: String, window: usize, op: CmpOp, rhs: f64 },
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

/// Inputs a rule or condition reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Reads {
    pub natural: bool,
    pub eps: bool,
    pub history: bool,
    pub time: bool,
}

impl Reads {
    pub fn union(self, o: Reads) -> Reads {
        Reads {
            natural: self.natural || o.natural,
            eps: self.eps || o.eps,
            history: self.history || o.history,
            time: self.time || o.time,
        }
    }
}

pub(crate) struct EvalInputs<'a> {
    pub t: usize,
    pub a: f64,
    pub eps: Option<f64>,
    pub history: &'a dyn History,
}

impl Operand {
    fn value(&self, x: &EvalInputs<'_>) -> Option<f64> {
        match self {
            Operand::Natural => Some(x.a),
            Operand::Eps => x.eps,
            Operand::Time => Some(x.t as f64),
            Operand::Covariate { name, lag } => {
                let s = x.t.checked_sub(*lag)?;
                x.history.covariate(name, s)
            }
            Operand::PastExposure { lag } => {
                let s = x.t.checked_sub(*lag)?;
                x.history.exposure(s)
            }
        }
    }

    fn reads(&self) -> Reads {
        match self {
            Operand::Natural => Reads {
                natural: true,
                ..Reads::default()
            },
            Operand::Eps => Reads {
                eps: true,
                ..Reads::default()
            },
            Operand::Time => Reads {
                time: true,
                ..Reads::default()
            },
            Operand::Covariate { .. } | Operand::PastExposure { .. } => Reads {
                history: true,
                ..Reads::default()
            },
        }
    }
}

impl Cond {
    /// Missing operands (before the start of follow-up, unmeasured columns)
    /// make a comparison false.
    pub(crate) fn eval(&self, x: &EvalInputs<'_>) -> bool {
        match self {
            Cond::Cmp { lhs, op, rhs } => lhs.value(x).is_some_and(|v| op.apply(v, *rhs)),
            Cond::AnyInWindow { name, window, op, rhs } => {
                let start = x.t.saturating_sub(*window);
                (start..=x.t).any(|s| x.history.covariate(name, s).is_some_and(|v| op.apply(v, *rhs)))
            }
            Cond::And(l, r) => l.eval(x) && r.eval(x),
            Cond::Or(l, r) => l.eval(x) || r.eval(x),
            Cond::Not(c) => !c.eval(x),
        }
    }

    pub fn reads(&self) -> Reads {
        match self {
            Cond::Cmp { lhs, .. } => lhs.reads(),
            Cond::AnyInWindow { .. } => Reads {
                history: true,
                ..Reads::default()
            },
            Cond::And(l, r) | Cond::Or(l, r) => l.reads().union(r.reads()),
            Cond::Not(c) => c.reads(),
        }
    }

    /// Covariate names referenced anywhere in the condition.
    pub fn covariate_names(&self, out: &mut Vec<String>) {
        match self {
            Cond::Cmp {
                lhs: Operand::Covariate { name, .. },
                ..
            }
            | Cond::AnyInWindow { name, .. } => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Cond::Cmp { .. } => {}
            Cond::And(l, r) | Cond::Or(l, r) => {
                l.covariate_names(out);
                r.covariate_names(out);
            }
            Cond::Not(c) => c.covariate_names(out),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Cond::AnyInWindow { name, window, op, rhs } => {
                write!(f, "any({name} {} {rhs}, {window})", op.symbol())
            }
            Cond::And(l, r) => write!(f, "({l} and {r})"),
            Cond::Or(l, r) => write!(f, "({l} or {r})"),
            Cond::Not(c) => write!(f, "not {c}"),
        }
    }
}
