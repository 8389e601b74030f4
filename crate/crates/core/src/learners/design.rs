use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{ExposureKind, PanelDataset};

/// Column-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Design {
    pub fn new(n_rows: usize) -> Design {
        Design {
            names: Vec::new(),
            cols: Vec::new(),
            n_rows,
        }
    }

    /// Build from rows; mainly for tests and small problems.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Design> {
        let mut d = Design::new(rows.len());
        for (j, n) in names.iter().enumerate() {
            let col = rows
                .iter()
                .map(|r| {
                    r.get(j)
                        .copied()
                        .ok_or_else(|| Error::Dimension(format!("row shorter than {} columns", names.len())))
                })
                .collect::<Result<Vec<_>>>()?;
            d.push(n.to_string(), col)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, name: String, col: Vec<f64>) -> Result<()> {
        if col.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "column '{name}' has {} rows, design has {}",
                col.len(),
                self.n_rows
            )));
        }
        if self.names.contains(&name) {
            return Err(Error::Dimension(format!("duplicate column '{name}'")));
        }
        self.names.push(name);
        self.cols.push(col);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| self.cols[j].as_slice())
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(&mut self.cols[j])
    }

    /// Columns in the order of `names`, or a signature error.
    pub fn select(&self, names: &[String]) -> Result<Vec<&[f64]>> {
        names
            .iter()
            .map(|n| self.column(n))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Signature {
                expected: names.to_vec(),
                found: self.names.clone(),
            })
    }

    /// Row subset, in the order given.
    pub fn subset(&self, rows: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: rows.len(),
        }
    }

    /// Stack two designs with identical columns.
    pub fn vstack(&self, other: &Design) -> Result<Design> {
        if self.names != other.names {
            return Err(Error::Signature {
                expected: self.names.clone(),
                found: other.names.clone(),
            });
        }
        Ok(Design {
            names: self.names.clone(),
            cols: self
                .cols
                .iter()
                .zip(&other.cols)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
            n_rows: self.n_rows + other.n_rows,
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.cols.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("features"))
        }
    }
}

/// Which history columns a learner sees.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "FeatureRepr", into = "FeatureRepr")]
pub enum FeatureSet {
    /// Baseline, every covariate and exposure so far, and the current exposure.
    #[default]
    All,
    /// Unlagged columns (baseline, current covariates, current exposure)
    /// plus the previous exposure.
    Markov,
    /// No features: the intercept-only (marginal) model.
    InterceptOnly,
    /// Explicit relative names, e.g. `age`, `L`, `L[t-1]`, `a`, `a[t-1]`.
    Columns(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FeatureRepr {
    Named(String),
    List(Vec<String>),
}

impl TryFrom<FeatureRepr> for FeatureSet {
    type Error = String;
    fn try_from(r: FeatureRepr) -> std::result::Result<Self, String> {
        match r {
            FeatureRepr::Named(s) => match s.as_str() {
                "all" => Ok(FeatureSet::All),
                "markov" => Ok(FeatureSet::Markov),
                "intercept" | "intercept-only" | "none" => Ok(FeatureSet::InterceptOnly),
                other => Err(format!(
                    "unknown feature set '{other}' (expected all, markov, intercept or a list of columns)"
                )),
            },
            FeatureRepr::List(v) => Ok(FeatureSet::Columns(v)),
        }
    }
}

impl From<FeatureSet> for FeatureRepr {
    fn from(f: FeatureSet) -> Self {
        match f {
            FeatureSet::All => FeatureRepr::Named("all".into()),
            FeatureSet::Markov => FeatureRepr::Named("markov".into()),
            FeatureSet::InterceptOnly => FeatureRepr::Named("intercept".into()),
            FeatureSet::Columns(v) => FeatureRepr::List(v),
        }
    }
}

/// Base of a relative column name: `L[t-1]` and `a=2` have bases `L`, `a`.
fn base_name(col: &str) -> &str {
    col.split(['[', '=']).next().unwrap_or(col)
}

fn lag_of(col: &str) -> usize {
    col.split_once("[t-")
        .and_then(|(_, r)| r.split(']').next())
        .and_then(|k| k.parse().ok())
        .unwrap_or(0)
}

/// `pattern` names `col` itself, or one of its categorical levels.
fn names_column(pattern: &str, col: &str) -> bool {
    pattern == col || col.strip_prefix(pattern).is_some_and(|r| r.starts_with('='))
}

/// Exclusion by bare name drops the variable at every lag and level.
fn excludes(pattern: &str, col: &str) -> bool {
    names_column(pattern, col) || (!pattern.contains(['[', '=']) && base_name(col) == pattern)
}

impl FeatureSet {
    /// Columns of `available` selected by this set, minus `exclude`.
    pub fn resolve(&self, available: &[String], exclude: &[String]) -> Result<Vec<String>> {
        let keep = |c: &String| !exclude.iter().any(|e| excludes(e, c));
        let out: Vec<String> = match self {
            FeatureSet::All => available.to_vec(),
            FeatureSet::InterceptOnly => Vec::new(),
            FeatureSet::Markov => available
                .iter()
                .filter(|c| {
                    let lag = lag_of(c);
                    lag == 0 || (base_name(c) == "a" && lag == 1)
                })
                .cloned()
                .collect(),
            FeatureSet::Columns(list) => {
                let mut out = Vec::new();
                for pat in list {
                    let hits: Vec<&String> = available.iter().filter(|c| names_column(pat, c)).collect();
                    let known_base = available.iter().any(|c| base_name(c) == base_name(pat));
                    if hits.is_empty() && !known_base {
                        return Err(Error::LearnerSpec(format!("unknown feature '{pat}'")));
                    }
                    // lags reaching before t = 0 are silently absent
                    for h in hits {
                        if !out.contains(h) {
                            out.push(h.clone());
                        }
                    }
                }
                out
            }
        };
        Ok(out.into_iter().filter(keep).collect())
    }
}

fn lagged(name: &str, lag: usize) -> String {
    if lag == 0 {
        name.to_string()
    } else {
        format!("{name}[t-{lag}]")
    }
}

/// Exposure columns for one time: numeric, or one-hot over non-reference
/// levels for categorical exposures.
fn push_exposure(d: &mut Design, kind: &ExposureKind, name: &str, values: Vec<f64>) -> Result<()> {
    match kind {
        ExposureKind::Categorical { levels } => {
            for lvl in levels.iter().skip(1) {
                let col = values.iter().map(|v| if v == lvl { 1.0 } else { 0.0 }).collect();
                d.push(format!("{name}={lvl}"), col)?;
            }
            Ok(())
        }
        _ => d.push(name.to_string(), values),
    }
}

/// Full history design at time `t` for `units`: baseline columns, every
/// covariate at lags `0..=t`, past exposures `a[t-k]`, and the current
/// exposure `a` taken from `current` (indexed by unit) when given.
pub fn history_design(data: &PanelDataset, t: usize, units: &[usize], current: Option<&[f64]>) -> Result<Design> {
    let mut d = Design::new(units.len());
    for b in data.baseline() {
        d.push(b.name.clone(), units.iter().map(|&i| b.values[i]).collect())?;
    }
    for lag in 0..=t {
        let s = t - lag;
        for c in data.covariates() {
            d.push(lagged(&c.name, lag), units.iter().map(|&i| c.values[s][i]).collect())?;
        }
    }
    let kind = data.exposure_kind();
    for lag in 1..=t {
        let col = data.exposure_at(t - lag);
        push_exposure(&mut d, kind, &lagged("a", lag), units.iter().map(|&i| col[i]).collect())?;
    }
    let cur = current.unwrap_or_else(|| data.exposure_at(t));
    push_exposure(&mut d, kind, "a", units.iter().map(|&i| cur[i]).collect())?;
    Ok(d)
}

/// Replace the current-exposure columns of a history design.
pub fn with_current_exposure(design: &Design, kind: &ExposureKind, values: &[f64]) -> Result<Design> {
    if values.len() != design.n_rows() {
        return Err(Error::Dimension("exposure length differs from design rows".into()));
    }
    let mut d = design.clone();
    match kind {
        ExposureKind::Categorical { levels } => {
            for lvl in levels.iter().skip(1) {
                let col = d
                    .column_mut(&format!("a={lvl}"))
                    .ok_or_else(|| Error::Dimension("design has no current exposure column".into()))?;
                for (c, v) in col.iter_mut().zip(values) {
                    *c = if v == lvl { 1.0 } else { 0.0 };
                }
            }
        }
        _ => {
            let col = d
                .column_mut("a")
                .ok_or_else(|| Error::Dimension("design has no current exposure column".into()))?;
            col.copy_from_slice(values);
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn feature_sets_resolve_relative_names() {
        let avail = names(&["age", "L", "L_missing", "L[t-1]", "a[t-1]=1", "a[t-1]=2", "a=1", "a=2"]);
        let markov = FeatureSet::Markov.resolve(&avail, &[]).unwrap();
        assert_eq!(markov, names(&["age", "L", "L_missing", "a[t-1]=1", "a[t-1]=2", "a=1", "a=2"]));
        let cols = FeatureSet::Columns(names(&["L[t-1]", "a", "L[t-3]"])).resolve(&avail, &[]).unwrap();
        assert_eq!(cols, names(&["L[t-1]", "a=1", "a=2"]));
        let ex = FeatureSet::All.resolve(&avail, &names(&["L"])).unwrap();
        assert_eq!(ex, names(&["age", "L_missing", "a[t-1]=1", "a[t-1]=2", "a=1", "a=2"]));
        assert!(FeatureSet::Columns(names(&["bogus"])).resolve(&avail, &[]).is_err());
    }

    #[test]
    fn select_reports_signature_mismatch() {
        let d = Design::from_rows(&["x"], &[vec![1.0]]).unwrap();
        assert!(matches!(d.select(&names(&["y"])), Err(Error::Signature { .. })));
    }
}
