//! Declarative policy grammar.
//!
//! One rule per line (lines split on newlines or `;`). A line may end in a
//! time scope: `at all t`, `at t=3` or `at t=2..5`. Unscoped lines and
//! `at all t` set the default rule; scoped lines override it.
//!
//! ```text
//! static: 0
//! dynamic: 1 if L == 1 else 0
//! randomized: draw bernoulli(0.5) if L == 1 else 0
//! modified: draw bernoulli(0.5) if a == 1 else a
//! randomized: draw normal(40, 5) if urban == 1 else draw normal(20, 5)
//! shift: multiply by 0.9 when a > 20
//! dynamic: 1 if t <= 5 else 0
//! dynamic: 1 if any(L == 1, 5) else 0
//! modified: 0 if a == 1 and a[t-1] == 0 else a
//! threshold: cap above 25
//! shift: subtract 15 when a >= 60
//! ipsi-rr: delta 0.8 fallback 0
//! delay: trigger 2 fallback 1
//! ```
//!
//! `dynamic`, `randomized`, `modified` and `switch` share one syntax,
//! `<assign> if <cond> else <assign> [with eps ~ <law>]`; the category
//! tag is inferred from what the rule reads, not from the keyword.

use super::{Assign, CmpOp, Cond, Direction, Law, Operand, Policy, Rule, ShiftOp};
use crate::error::{Error, Result};

/// Functions of the observed data that a rule may not call.
const DATA_STATISTICS: &[&str] = &[
    "mean",
    "median",
    "quantile",
    "percentile",
    "sd",
    "var",
    "min",
    "max",
    "avg",
    "propensity",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                // `2..5` is a range, not a number
                if chars[i] == '.' && chars.get(i + 1) == Some(&'.') {
                    break;
                }
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::PolicySpec(format!("bad number '{text}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() {
                let ch = chars[i];
                let dashed_word = ch == '-'
                    && i > start
                    && chars[i - 1].is_alphabetic()
                    && chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
                if ch.is_alphanumeric() || ch == '_' || dashed_word {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "==" => Some("=="),
                "!=" => Some("!="),
                ".." => Some(".."),
                _ => None,
            };
            if let Some(s) = sym {
                out.push(Tok::Sym(s));
                i += 2;
                continue;
            }
            let sym = match c {
                '<' => "<",
                '>' => ">",
                '=' => "=",
                '(' => "(",
                ')' => ")",
                '[' => "[",
                ']' => "]",
                ',' => ",",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '~' => "~",
                ':' => ":",
                _ => return Err(Error::PolicySpec(format!("unexpected character '{c}'"))),
            };
            out.push(Tok::Sym(sym));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{w}'")))
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{s}'")))
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        match self.peek() {
            None => Error::PolicySpec(format!("expected {wanted}, found end of rule")),
            Some(t) => Error::PolicySpec(format!("expected {wanted}, found {}", show(t))),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let neg = self.eat_sym("-");
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            Some(Tok::Ident(ref s)) if is_data_statistic(s) => Err(statistic_error(s)),
            other => {
                self.pos -= 1;
                let _ = other;
                Err(self.unexpected("a number"))
            }
        }
    }

    fn integer(&mut self) -> Result<usize> {
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::PolicySpec(format!("expected a non-negative integer, found {v}")));
        }
        Ok(v as usize)
    }

    fn ident(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.unexpected("a name"))
            }
        }
    }

    fn cmp_op(&mut self) -> Result<CmpOp> {
        let op = match self.peek() {
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Sym("==")) | Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            _ => return Err(self.unexpected("a comparison")),
        };
        self.pos += 1;
        Ok(op)
    }

    /// `[t-k]` or `[t]` after an operand name.
    fn lag(&mut self) -> Result<usize> {
        if !self.eat_sym("[") {
            return Ok(0);
        }
        self.expect_word("t")?;
        let lag = if self.eat_sym("-") { self.integer()? } else { 0 };
        self.expect_sym("]")?;
        Ok(lag)
    }

    fn law(&mut self) -> Result<Law> {
        let name = self.ident()?;
        match name.as_str() {
            "uniform" => {
                if self.eat_sym("(") {
                    let lo = self.number()?;
                    self.expect_sym(",")?;
                    let hi = self.number()?;
                    self.expect_sym(")")?;
                    if lo != 0.0 || hi != 1.0 {
                        return Err(Error::PolicySpec("uniform randomizers are on (0, 1)".into()));
                    }
                }
                Ok(Law::Uniform)
            }
            "bernoulli" => {
                self.expect_sym("(")?;
                let p = self.number()?;
                self.expect_sym(")")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::PolicySpec(format!("bernoulli probability {p} outside [0, 1]")));
                }
                Ok(Law::Bernoulli { p })
            }
            "normal" => {
                self.expect_sym("(")?;
                let mean = self.number()?;
                self.expect_sym(",")?;
                let sd = self.number()?;
                self.expect_sym(")")?;
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::PolicySpec(format!("normal sd must be positive, got {sd}")));
                }
                Ok(Law::Normal { mean, sd })
            }
            s if is_data_statistic(s) => Err(statistic_error(s)),
            other => Err(Error::PolicySpec(format!(
                "unknown randomizer law '{other}' (expected uniform, bernoulli(p) or normal(mean, sd))"
            ))),
        }
    }

    fn assign(&mut self) -> Result<Assign> {
        if self.eat_word("draw") {
            return Ok(Assign::Draw(self.law()?));
        }
        if self.is_word("a") && !matches!(self.peek_at(1), Some(Tok::Sym("["))) {
            self.pos += 1;
            if self.eat_sym("+") {
                return Ok(Assign::Add(self.number()?));
            }
            if self.eat_sym("-") {
                return Ok(Assign::Add(-self.number()?));
            }
            if self.eat_sym("*") {
                return Ok(Assign::Mul(self.number()?));
            }
            return Ok(Assign::Natural);
        }
        if let Some(Tok::Ident(s)) = self.peek() {
            if is_data_statistic(s) {
                return Err(statistic_error(s));
            }
        }
        Ok(Assign::Value(self.number()?))
    }

    fn cond(&mut self) -> Result<Cond> {
        let mut lhs = self.cond_and()?;
        while self.eat_word("or") {
            let rhs = self.cond_and()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> Result<Cond> {
        let mut lhs = self.cond_not()?;
        while self.eat_word("and") {
            let rhs = self.cond_not()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_not(&mut self) -> Result<Cond> {
        if self.eat_word("not") {
            return Ok(Cond::Not(Box::new(self.cond_not()?)));
        }
        if self.eat_sym("(") {
            let c = self.cond()?;
            self.expect_sym(")")?;
            return Ok(c);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Cond> {
        let name = self.ident()?;
        if is_data_statistic(&name) && self.is_sym("(") {
            return Err(statistic_error(&name));
        }
        if name == "any" {
            self.expect_sym("(")?;
            let col = self.ident()?;
            let op = self.cmp_op()?;
            let rhs = self.number()?;
            self.expect_sym(",")?;
            let window = self.integer()?;
            self.expect_sym(")")?;
            return Ok(Cond::AnyInWindow {
                name: col,
                window,
                op,
                rhs,
            });
        }
        let lhs = match name.as_str() {
            "a" => match self.lag()? {
                0 => Operand::Natural,
                lag => Operand::PastExposure { lag },
            },
            "eps" => Operand::Eps,
            "t" => Operand::Time,
            "if" | "else" | "and" | "or" | "when" | "with" | "draw" | "at" => {
                return Err(Error::PolicySpec(format!("unexpected keyword '{name}' in condition")))
            }
            _ => {
                let lag = self.lag()?;
                Operand::Covariate { name, lag }
            }
        };
        let op = self.cmp_op()?;
        let rhs = self.number()?;
        Ok(Cond::Cmp { lhs, op, rhs })
    }

    fn switch(&mut self) -> Result<Rule> {
        let then = self.assign()?;
        self.expect_word("if")?;
        let when = self.cond()?;
        self.expect_word("else")?;
        let otherwise = self.assign()?;
        let mut eps = None;
        if self.eat_word("with") {
            self.expect_word("eps")?;
            self.expect_sym("~")?;
            eps = Some(self.law()?);
        }
        let draws: Vec<Law> = [then, otherwise]
            .iter()
            .filter_map(|a| match a {
                Assign::Draw(l) => Some(*l),
                _ => None,
            })
            .collect();
        if when.reads().eps && eps.is_none() {
            match draws.first() {
                Some(l) => eps = Some(*l),
                None => {
                    return Err(Error::PolicySpec(
                        "condition reads eps but no law is declared; add 'with eps ~ <law>'".into(),
                    ))
                }
            }
        }
        if eps.is_none() && draws.len() == 2 && draws[0] != draws[1] {
            // distinct laws in disjoint branches share one underlying uniform
            eps = Some(Law::Uniform);
        }
        Ok(Rule::Switch {
            when,
            then,
            otherwise,
            eps,
        })
    }

    fn rule(&mut self, name: &str) -> Result<Rule> {
        match name {
            "static" | "constant" => Ok(Rule::Constant(self.number()?)),
            "natural" | "identity" => Ok(Rule::Natural),
            "dynamic" | "randomized" | "stochastic" | "modified" | "switch" => self.switch(),
            "shift" => {
                let op = if self.eat_word("add") {
                    ShiftOp::Add(self.number()?)
                } else if self.eat_word("subtract") {
                    ShiftOp::Add(-self.number()?)
                } else if self.eat_word("multiply") {
                    self.eat_word("by");
                    let m = self.number()?;
                    if m == 0.0 {
                        return Err(Error::PolicySpec("multiplicative shift by 0 is a static rule".into()));
                    }
                    ShiftOp::Mul(m)
                } else {
                    return Err(self.unexpected("'add', 'subtract' or 'multiply by'"));
                };
                let guard = if self.eat_word("when") || self.eat_word("if") {
                    Some(self.cond()?)
                } else {
                    None
                };
                if guard.as_ref().is_some_and(|g| g.reads().eps) {
                    return Err(Error::PolicySpec("shift guards cannot read eps".into()));
                }
                Ok(Rule::Shift { op, guard })
            }
            "threshold" => {
                let direction = if self.eat_word("cap-above") {
                    Direction::CapAbove
                } else if self.eat_word("cap-below") {
                    Direction::CapBelow
                } else {
                    self.expect_word("cap")?;
                    if self.eat_word("above") {
                        Direction::CapAbove
                    } else if self.eat_word("below") {
                        Direction::CapBelow
                    } else {
                        return Err(self.unexpected("'above' or 'below'"));
                    }
                };
                Ok(Rule::Threshold {
                    bound: self.number()?,
                    direction,
                })
            }
            "ipsi-rr" => {
                self.expect_word("delta")?;
                let delta = self.number()?;
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(Error::PolicySpec(format!("ipsi-rr delta must lie in (0, 1], got {delta}")));
                }
                self.expect_word("fallback")?;
                Ok(Rule::RiskRatioIpsi {
                    delta,
                    fallback: self.number()?,
                })
            }
            "delay" => {
                self.expect_word("trigger")?;
                let trigger = self.number()?;
                self.expect_word("fallback")?;
                Ok(Rule::DelayDiscrete {
                    trigger,
                    fallback: self.number()?,
                })
            }
            "ipsi-or" | "ipsi" => Err(Error::PolicySpec(
                "odds-ratio IPSI depends on the fitted propensity score and is not supported".into(),
            )),
            other => Err(Error::PolicySpec(format!("unknown rule '{other}'"))),
        }
    }

    /// Optional trailing scope; `None` means every time point.
    fn scope(&mut self) -> Result<Option<(usize, usize)>> {
        if !self.eat_word("at") {
            return Ok(None);
        }
        if self.eat_word("all") {
            self.expect_word("t")?;
            return Ok(None);
        }
        self.expect_word("t")?;
        self.expect_sym("=")?;
        let lo = self.integer()?;
        let hi = if self.eat_sym("..") { self.integer()? } else { lo };
        if hi < lo {
            return Err(Error::PolicySpec(format!("empty time range {lo}..{hi}")));
        }
        Ok(Some((lo, hi)))
    }
}

fn show(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("'{v}'"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Sym(s) => format!("'{s}'"),
    }
}

fn is_data_statistic(s: &str) -> bool {
    DATA_STATISTICS.contains(&s.to_ascii_lowercase().as_str())
}

fn statistic_error(s: &str) -> Error {
    Error::PolicySpec(format!(
        "'{s}' refers to a statistic of the data; policy parameters must be constants fixed before \
         seeing the data, since an intervention that depends on the data distribution is not identified \
         by these estimators"
    ))
}

/// Parse a declarative policy.
pub fn parse_policy_spec(spec: &str) -> Result<Policy> {
    let mut default: Option<Rule> = None;
    let mut scoped: Vec<((usize, usize), Rule)> = Vec::new();
    for line in spec.split(['\n', ';']) {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, body) = match line.split_once(':') {
            Some((n, b)) => (n.trim().to_ascii_lowercase(), b),
            None => (line.split_whitespace().next().unwrap_or("").to_ascii_lowercase(), ""),
        };
        let body = if line.contains(':') {
            body.to_string()
        } else {
            line[name.len()..].to_string()
        };
        let mut p = Parser {
            toks: tokenize(&body)?,
            pos: 0,
        };
        let rule = p.rule(&name).map_err(|e| annotate(e, line))?;
        let scope = p.scope().map_err(|e| annotate(e, line))?;
        if !p.at_end() {
            return Err(annotate(p.unexpected("end of rule"), line));
        }
        match scope {
            None => {
                if default.is_some() {
                    return Err(Error::PolicySpec(format!(
                        "more than one rule applies at all t (second: '{line}')"
                    )));
                }
                default = Some(rule);
            }
            Some(range) => {
                if scoped.iter().any(|(r, _)| r.0 <= range.1 && range.0 <= r.1) {
                    return Err(Error::PolicySpec(format!("overlapping time scopes at '{line}'")));
                }
                scoped.push((range, rule));
            }
        }
    }
    let default = default.ok_or_else(|| {
        Error::PolicySpec("no default rule; add a line without a time scope or scoped 'at all t'".into())
    })?;
    let mut policy = Policy::new(default);
    for ((lo, hi), rule) in scoped {
        for t in lo..=hi {
            policy = policy.with_rule_at(t, rule.clone());
        }
    }
    Ok(policy.with_source(spec))
}

fn annotate(e: Error, line: &str) -> Error {
    match e {
        Error::PolicySpec(m) => Error::PolicySpec(format!("{m} in '{line}'")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::super::Category;
    use super::*;

    #[test]
    fn categories_of_reference_rules() {
        let cases = [
            ("static: 0 at all t", Category::Static),
            ("shift: multiply by 2 when a < 10", Category::Mtp),
            ("ipsi-rr: delta 0.8 fallback 0", Category::Mtp),
            ("dynamic: 1 if t <= 5 else 0", Category::Static),
            ("dynamic: 40 if urban == 1 else 20", Category::Dynamic),
            ("randomized: draw normal(40, 5) if urban == 1 else draw normal(20, 5)", Category::Stochastic),
            ("modified: draw bernoulli(0.5) if a == 1 else a", Category::Mtp),
            ("modified: 0 if a == 1 and a[t-1] == 0 else a", Category::Mtp),
            ("delay: trigger 2 fallback 1", Category::Mtp),
            ("threshold: cap-above 25", Category::Mtp),
            ("natural", Category::Mtp),
        ];
        for (spec, cat) in cases {
            let p = parse_policy_spec(spec).unwrap_or_else(|e| panic!("{spec}: {e}"));
            assert_eq!(p.category(), cat, "{spec}");
        }
    }

    #[test]
    fn scoped_lines_override_default() {
        let p = parse_policy_spec("static: 0\nstatic: 1 at t=0..5").unwrap();
        assert_eq!(p.rule_at(3), &Rule::Constant(1.0));
        assert_eq!(p.rule_at(6), &Rule::Constant(0.0));
        let p = parse_policy_spec("natural; static: 1 at t=2").unwrap();
        assert_eq!(p.rule_at(2), &Rule::Constant(1.0));
        assert_eq!(p.category(), Category::Mtp);
    }

    #[test]
    fn surgery_shift_reduces_long_operations() {
        let p = parse_policy_spec("shift: subtract 15 when a >= 60").unwrap();
        assert_eq!(
            p.rule_at(0),
            &Rule::Shift {
                op: ShiftOp::Add(-15.0),
                guard: Some(Cond::Cmp {
                    lhs: Operand::Natural,
                    op: CmpOp::Ge,
                    rhs: 60.0
                })
            }
        );
    }

    #[test]
    fn rejects_unknown_rules_and_bad_parameters() {
        for bad in [
            "nudge: 3",
            "ipsi-rr: delta 1.5 fallback 0",
            "ipsi-rr: delta 0 fallback 0",
            "static: 1 at t=0",
            "randomized: 1 if eps < 0.5 else 0",
            "threshold: cap sideways 3",
            "static: 0; static: 1",
            "ipsi-or: delta 2",
        ] {
            assert!(matches!(parse_policy_spec(bad), Err(Error::PolicySpec(_))), "{bad}");
        }
    }

    #[test]
    fn rejects_dataset_statistics() {
        for bad in [
            "threshold: cap above median(bmi)",
            "dynamic: 1 if L > mean(L) else 0",
            "shift: add sd(a)",
        ] {
            match parse_policy_spec(bad) {
                Err(Error::PolicySpec(m)) => assert!(m.contains("constants fixed before"), "{m}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn display_round_trips() {
        for spec in [
            "shift: multiply by 2 when a < 10",
            "dynamic: 1 if (L[t-1] >= 2 or not x == 0) and t < 4 else a + 3",
            "randomized: draw bernoulli(0.25) if any(hyp == 1, 5) else 0",
            "switch: 0 if eps < 0.5 and a == 1 else a with eps ~ uniform",
        ] {
            let p = parse_policy_spec(spec).unwrap();
            let again = parse_policy_spec(&p.rule_at(0).to_string()).unwrap();
            assert_eq!(p.rule_at(0), again.rule_at(0), "{spec}");
        }
    }
}
