//! Longitudinal observed data in the canonical wide layout.
//!
//! Time is indexed `t = 0..=horizon`. At each `t` a unit contributes
//! covariates `L_t`, exposure `A_t` and, optionally, a censoring indicator
//! `C_t` (1 = still observed at `t + 1`). The outcome is either one terminal
//! value `Y` or, for survival data, one event indicator per interval
//! (`events[t]` is measured after `A_t` and is exposed as `Y_{t+1}`).
//!
//! Unavailable cells are stored as `NaN`.

mod history;
mod io;

pub use history::{History, HistoryEntry, HistoryItem, HistoryView, RowHistory};
pub use io::{load_panel, read_panel, write_wide, ExposureType, Layout, OutcomeType, PanelSchema};

use crate::error::{Error, Result};

/// Declared domain of the exposure column.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExposureKind {
    Binary,
    Categorical { levels: Vec<f64> },
    Continuous,
}

impl ExposureKind {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            ExposureKind::Binary => v == 0.0 || v == 1.0,
            ExposureKind::Categorical { levels } => levels.contains(&v),
            ExposureKind::Continuous => v.is_finite(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, ExposureKind::Continuous)
    }

    /// Support of a discrete exposure.
    pub fn levels(&self) -> Option<Vec<f64>> {
        match self {
            ExposureKind::Binary => Some(vec![0.0, 1.0]),
            ExposureKind::Categorical { levels } => Some(levels.clone()),
            ExposureKind::Continuous => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExposureKind::Binary => "binary",
            ExposureKind::Categorical { .. } => "categorical",
            ExposureKind::Continuous => "continuous",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TimeVaryingColumn {
    pub name: String,
    /// `values[t][unit]`.
    pub values: Vec<Vec<f64>>,
    /// Set on generated missingness indicators: the column they describe.
    pub indicator_of: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Terminal {
        name: String,
        kind: OutcomeKind,
        values: Vec<f64>,
        /// Observed range; `(0, 1)` for binary outcomes.
        min: f64,
        max: f64,
    },
    Survival {
        name: String,
        /// `events[t][unit]`: event by the end of interval `t`.
        events: Vec<Vec<f64>>,
    },
}

impl Outcome {
    pub fn name(&self) -> &str {
        match self {
            Outcome::Terminal { name, .. } | Outcome::Survival { name, .. } => name,
        }
    }
}

/// Where a unit stands when interval `t` opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitStatus {
    /// Observed and event-free: `H_t` and `A_t` are available.
    AtRisk,
    /// The survival event happened in an earlier interval.
    Failed,
    /// Lost to follow-up in an earlier interval.
    Censored,
}

/// What the loader did to the raw table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Pre-censoring covariate cells filled by last observation carried forward.
    pub locf_filled: usize,
    /// Names of generated missingness-indicator columns.
    pub indicator_columns: Vec<String>,
    /// Cells after censoring or failure marked unavailable.
    pub unavailable_cells: usize,
}

/// Unvalidated pieces of a panel; see [`PanelDataset::from_parts`].
#[derive(Debug, Clone)]
pub struct PanelParts {
    pub unit_ids: Vec<String>,
    pub horizon: usize,
    pub baseline: Vec<BaselineColumn>,
    pub covariates: Vec<TimeVaryingColumn>,
    pub exposure_name: String,
    pub exposure_kind: ExposureKind,
    pub exposure: Vec<Vec<f64>>,
    pub censoring: Option<(String, Vec<Vec<f64>>)>,
    pub outcome: Outcome,
}

/// Validated, immutable panel data.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    horizon: usize,
    baseline: Vec<BaselineColumn>,
    covariates: Vec<TimeVaryingColumn>,
    exposure_name: String,
    exposure_kind: ExposureKind,
    exposure: Vec<Vec<f64>>,
    censoring: Option<(String, Vec<Vec<f64>>)>,
    outcome: Outcome,
    status: Vec<Vec<UnitStatus>>,
    report: ValidationReport,
}

fn present(v: f64) -> bool {
    !v.is_nan()
}

impl PanelDataset {
    /// Validate and normalize raw parts.
    ///
    /// Censoring must be monotone and survival events non-decreasing. Cells
    /// after censoring must be empty; they (and cells after a survival event)
    /// are marked unavailable. Missing pre-censoring covariate cells are
    /// filled by last observation carried forward and flagged in a
    /// `<name>_missing` indicator column.
    // time-major grids are walked per unit, so indices read better than iterators
    #[allow(clippy::needless_range_loop)]
    pub fn from_parts(parts: PanelParts) -> Result<Self> {
        let PanelParts {
            unit_ids,
            horizon,
            mut baseline,
            mut covariates,
            exposure_name,
            exposure_kind,
            mut exposure,
            mut censoring,
            mut outcome,
        } = parts;
        let n = unit_ids.len();
        let times = horizon + 1;
        let mut report = ValidationReport::default();

        let check_grid = |name: &str, grid: &Vec<Vec<f64>>| -> Result<()> {
            if grid.len() != times || grid.iter().any(|c| c.len() != n) {
                return Err(Error::Schema(format!(
                    "column '{name}' must have {times} time points of {n} units"
                )));
            }
            Ok(())
        };
        for b in &baseline {
            if b.values.len() != n {
                return Err(Error::Schema(format!("baseline column '{}' has wrong length", b.name)));
            }
        }
        for c in &covariates {
            check_grid(&c.name, &c.values)?;
        }
        check_grid(&exposure_name, &exposure)?;
        if let Some((name, grid)) = &censoring {
            check_grid(name, grid)?;
        }
        match &outcome {
            Outcome::Terminal { name, values, .. } if values.len() != n => {
                return Err(Error::Schema(format!("outcome '{name}' has wrong length")));
            }
            Outcome::Survival { name, events } => check_grid(name, events)?,
            _ => {}
        }
        if let ExposureKind::Categorical { levels } = &exposure_kind {
            if levels.is_empty() {
                return Err(Error::Schema("categorical exposure needs at least one level".into()));
            }
        }

        let mut status = vec![vec![UnitStatus::AtRisk; n]; times];
        for i in 0..n {
            let unit = &unit_ids[i];
            let fail = |message: String| Error::Validation {
                unit: unit.clone(),
                message,
            };
            for b in &baseline {
                if !b.values[i].is_finite() {
                    return Err(fail(format!("baseline covariate '{}' missing", b.name)));
                }
            }
            // Censoring monotonicity and normalization.
            let mut censored_at: Option<usize> = None;
            if let Some((cname, grid)) = censoring.as_mut() {
                for t in 0..times {
                    let c = grid[t][i];
                    if let Some(ct) = censored_at {
                        if c == 1.0 {
                            return Err(fail(format!(
                                "non-monotone censoring: {cname}_{t} = 1 after censoring at t={ct}"
                            )));
                        }
                        grid[t][i] = 0.0;
                        continue;
                    }
                    if !present(c) {
                        // Missing censoring for an observed unit: only legal if
                        // the unit already failed (handled below).
                        continue;
                    }
                    if c != 0.0 && c != 1.0 {
                        return Err(fail(format!("{cname}_{t} = {c} is not binary")));
                    }
                    if c == 0.0 {
                        censored_at = Some(t);
                    }
                }
            }
            // Survival monotonicity.
            let mut failed_at: Option<usize> = None;
            if let Outcome::Survival { name, events } = &mut outcome {
                for t in 0..times {
                    let y = events[t][i];
                    if let Some(ct) = censored_at {
                        if t >= ct {
                            if present(y) && failed_at.is_none() {
                                return Err(fail(format!(
                                    "{name}_{} present after censoring at t={ct}",
                                    t + 1
                                )));
                            }
                            if failed_at.is_none() {
                                events[t][i] = f64::NAN;
                            }
                            continue;
                        }
                    }
                    if let Some(ft) = failed_at {
                        if present(y) && y != 1.0 {
                            return Err(fail(format!(
                                "survival outcome decreases: {name}_{} = 1 but {name}_{} = {y}",
                                ft + 1,
                                t + 1
                            )));
                        }
                        events[t][i] = 1.0;
                        continue;
                    }
                    if !present(y) {
                        return Err(fail(format!("{name}_{} missing for an observed unit", t + 1)));
                    }
                    if y != 0.0 && y != 1.0 {
                        return Err(fail(format!("{name}_{} = {y} is not binary", t + 1)));
                    }
                    if y == 1.0 {
                        failed_at = Some(t);
                    }
                }
            }
            // Units that fail are never censored afterwards.
            if let (Some(ft), Some((_, grid))) = (failed_at, censoring.as_mut()) {
                if censored_at.is_none_or(|ct| ct > ft) {
                    for row in grid.iter_mut().skip(ft) {
                        row[i] = 1.0;
                    }
                    censored_at = None;
                }
            }
            if let Some((cname, grid)) = &censoring {
                for (t, row) in grid.iter().enumerate() {
                    let is_open = censored_at.is_none_or(|ct| t <= ct) && failed_at.is_none_or(|ft| t <= ft);
                    if is_open && !present(row[i]) {
                        return Err(fail(format!("{cname}_{t} missing for an observed unit")));
                    }
                }
            }

            for t in 0..times {
                let st = if censored_at.is_some_and(|ct| t > ct) {
                    UnitStatus::Censored
                } else if failed_at.is_some_and(|ft| t > ft) {
                    UnitStatus::Failed
                } else {
                    UnitStatus::AtRisk
                };
                status[t][i] = st;
                match st {
                    UnitStatus::Censored => {
                        if present(exposure[t][i]) {
                            return Err(fail(format!(
                                "{exposure_name}_{t} present after censoring at t={}",
                                censored_at.unwrap()
                            )));
                        }
                        for c in covariates.iter() {
                            if present(c.values[t][i]) {
                                return Err(fail(format!(
                                    "{}_{t} present after censoring at t={}",
                                    c.name,
                                    censored_at.unwrap()
                                )));
                            }
                        }
                        report.unavailable_cells += 1;
                    }
                    UnitStatus::Failed => {
                        exposure[t][i] = f64::NAN;
                        for c in covariates.iter_mut() {
                            c.values[t][i] = f64::NAN;
                        }
                        report.unavailable_cells += 1;
                    }
                    UnitStatus::AtRisk => {
                        let a = exposure[t][i];
                        if !present(a) {
                            return Err(fail(format!("{exposure_name}_{t} missing for an observed unit")));
                        }
                        if !exposure_kind.contains(a) {
                            return Err(fail(format!(
                                "{exposure_name}_{t} = {a} outside the {} exposure domain",
                                exposure_kind.name()
                            )));
                        }
                    }
                }
            }
        }

        // Last observation carried forward, with indicators.
        let mut indicators = Vec::new();
        for c in covariates.iter_mut() {
            let mut ind = vec![vec![f64::NAN; n]; times];
            let mut any_missing = false;
            for i in 0..n {
                for t in 0..times {
                    if status[t][i] != UnitStatus::AtRisk {
                        continue;
                    }
                    let v = c.values[t][i];
                    if present(v) {
                        if !v.is_finite() {
                            return Err(Error::Validation {
                                unit: unit_ids[i].clone(),
                                message: format!("{}_{t} is not finite", c.name),
                            });
                        }
                        ind[t][i] = 0.0;
                        continue;
                    }
                    if t == 0 {
                        return Err(Error::Validation {
                            unit: unit_ids[i].clone(),
                            message: format!("{}_0 missing with no earlier value to carry forward", c.name),
                        });
                    }
                    c.values[t][i] = c.values[t - 1][i];
                    ind[t][i] = 1.0;
                    any_missing = true;
                    report.locf_filled += 1;
                }
            }
            if any_missing {
                indicators.push(TimeVaryingColumn {
                    name: format!("{}_missing", c.name),
                    values: ind,
                    indicator_of: Some(c.name.clone()),
                });
            }
        }
        report.indicator_columns = indicators.iter().map(|c| c.name.clone()).collect();
        covariates.extend(indicators);

        if let Outcome::Terminal { name, kind, values, min, max } = &mut outcome {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                let observed = status[horizon][i] == UnitStatus::AtRisk
                    && censoring.as_ref().is_none_or(|(_, g)| g[horizon][i] == 1.0);
                let y = values[i];
                if !observed {
                    if present(y) {
                        return Err(Error::Validation {
                            unit: unit_ids[i].clone(),
                            message: format!("{name} present after censoring"),
                        });
                    }
                    continue;
                }
                if !y.is_finite() {
                    return Err(Error::Validation {
                        unit: unit_ids[i].clone(),
                        message: format!("{name} missing for an uncensored unit"),
                    });
                }
                if *kind == OutcomeKind::Binary && y != 0.0 && y != 1.0 {
                    return Err(Error::Validation {
                        unit: unit_ids[i].clone(),
                        message: format!("{name} = {y} is not binary"),
                    });
                }
                lo = lo.min(y);
                hi = hi.max(y);
            }
            match kind {
                OutcomeKind::Binary => {
                    *min = 0.0;
                    *max = 1.0;
                }
                OutcomeKind::Continuous => {
                    *min = if lo.is_finite() { lo } else { 0.0 };
                    *max = if hi.is_finite() { hi } else { 0.0 };
                }
            }
        }

        let mut seen = std::collections::HashSet::new();
        for u in &unit_ids {
            if !seen.insert(u) {
                return Err(Error::Schema(format!("duplicate unit id '{u}'")));
            }
        }
        baseline.shrink_to_fit();

        Ok(PanelDataset {
            unit_ids,
            horizon,
            baseline,
            covariates,
            exposure_name,
            exposure_kind,
            exposure,
            censoring,
            outcome,
            status,
            report,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    /// Last time index `τ`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of time points, `τ + 1`.
    pub fn n_times(&self) -> usize {
        self.horizon + 1
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == id)
    }

    pub fn baseline(&self) -> &[BaselineColumn] {
        &self.baseline
    }

    pub fn covariates(&self) -> &[TimeVaryingColumn] {
        &self.covariates
    }

    pub fn exposure_name(&self) -> &str {
        &self.exposure_name
    }

    pub fn exposure_kind(&self) -> &ExposureKind {
        &self.exposure_kind
    }

    /// `A_t` for all units (`NaN` where unavailable).
    pub fn exposure_at(&self, t: usize) -> &[f64] {
        &self.exposure[t]
    }

    pub fn has_censoring(&self) -> bool {
        self.censoring.is_some()
    }

    pub fn censoring_name(&self) -> Option<&str> {
        self.censoring.as_ref().map(|(n, _)| n.as_str())
    }

    /// `C_t` for all units, if the data carries censoring.
    pub fn censoring_at(&self, t: usize) -> Option<&[f64]> {
        self.censoring.as_ref().map(|(_, g)| g[t].as_slice())
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }

    pub fn is_survival(&self) -> bool {
        matches!(self.outcome, Outcome::Survival { .. })
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn status(&self, unit: usize, t: usize) -> UnitStatus {
        self.status[t][unit]
    }

    pub fn is_at_risk(&self, unit: usize, t: usize) -> bool {
        self.status[t][unit] == UnitStatus::AtRisk
    }

    /// Whether the unit remains under observation through the end of interval `t`.
    pub fn observed_through(&self, unit: usize, t: usize) -> bool {
        match self.status[t][unit] {
            UnitStatus::AtRisk => self.censoring.as_ref().is_none_or(|(_, g)| g[t][unit] == 1.0),
            UnitStatus::Failed => true,
            UnitStatus::Censored => false,
        }
    }

    /// Outcome measured at the end of interval `last` (the terminal outcome
    /// when `last == horizon` and the outcome is not survival). `NaN` where
    /// unobserved.
    pub fn outcome_through(&self, last: usize) -> Vec<f64> {
        let n = self.n_units();
        match &self.outcome {
            Outcome::Terminal { values, .. } => {
                debug_assert_eq!(last, self.horizon);
                (0..n)
                    .map(|i| if self.observed_through(i, last) { values[i] } else { f64::NAN })
                    .collect()
            }
            Outcome::Survival { events, .. } => (0..n)
                .map(|i| if self.observed_through(i, last) { events[last][i] } else { f64::NAN })
                .collect(),
        }
    }

    /// Recorded outcome range used for scaling.
    pub fn outcome_range(&self) -> (f64, f64) {
        match &self.outcome {
            Outcome::Terminal { min, max, .. } => (*min, *max),
            Outcome::Survival { .. } => (0.0, 1.0),
        }
    }

    pub(crate) fn baseline_value(&self, name: &str, unit: usize) -> Option<f64> {
        self.baseline.iter().find(|b| b.name == name).map(|b| b.values[unit])
    }

    pub(crate) fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    /// `H_t` for one unit.
    pub fn history_at(&self, unit: usize, t: usize) -> Result<HistoryView> {
        if t > self.horizon {
            return Err(Error::Horizon(format!("t={t} beyond horizon {}", self.horizon)));
        }
        if unit >= self.n_units() {
            return Err(Error::Dimension(format!("unit index {unit} out of range")));
        }
        if !self.is_at_risk(unit, t) {
            return Err(Error::UnavailableHistory {
                unit: self.unit_ids[unit].clone(),
                t,
            });
        }
        Ok(HistoryView::from_rows(self, unit, t))
    }

    /// Lightweight borrowed history, without the availability check.
    pub fn row_history(&self, unit: usize, t: usize) -> RowHistory<'_> {
        RowHistory::new(self, unit, t)
    }

    /// Copy of the data with column `A_t` replaced.
    ///
    /// Values for units not at risk at `t` are ignored (the cell stays
    /// unavailable).
    pub fn with_exposure_replaced(&self, t: usize, new_values: &[f64]) -> Result<PanelDataset> {
        if t > self.horizon {
            return Err(Error::Horizon(format!("t={t} beyond horizon {}", self.horizon)));
        }
        if new_values.len() != self.n_units() {
            return Err(Error::Dimension(format!(
                "expected {} exposure values, got {}",
                self.n_units(),
                new_values.len()
            )));
        }
        let mut out = self.clone();
        for (i, &v) in new_values.iter().enumerate() {
            if !self.is_at_risk(i, t) {
                continue;
            }
            if !self.exposure_kind.contains(v) {
                return Err(Error::ExposureDomain(format!(
                    "value {v} for unit {} is outside the {} exposure domain",
                    self.unit_ids[i],
                    self.exposure_kind.name()
                )));
            }
            out.exposure[t][i] = v;
        }
        Ok(out)
    }

    /// Unit-level resample (bootstrap). Duplicated units get suffixed ids.
    pub fn resample(&self, indices: &[usize]) -> PanelDataset {
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_grid = |g: &Vec<Vec<f64>>| g.iter().map(pick).collect::<Vec<_>>();
        let mut counts = std::collections::HashMap::new();
        let unit_ids = indices
            .iter()
            .map(|&i| {
                let c = counts.entry(i).or_insert(0usize);
                *c += 1;
                if *c == 1 {
                    self.unit_ids[i].clone()
                } else {
                    format!("{}#{}", self.unit_ids[i], c)
                }
            })
            .collect();
        PanelDataset {
            unit_ids,
            horizon: self.horizon,
            baseline: self
                .baseline
                .iter()
                .map(|b| BaselineColumn {
                    name: b.name.clone(),
                    values: pick(&b.values),
                })
                .collect(),
            covariates: self
                .covariates
                .iter()
                .map(|c| TimeVaryingColumn {
                    name: c.name.clone(),
                    values: pick_grid(&c.values),
                    indicator_of: c.indicator_of.clone(),
                })
                .collect(),
            exposure_name: self.exposure_name.clone(),
            exposure_kind: self.exposure_kind.clone(),
            exposure: pick_grid(&self.exposure),
            censoring: self.censoring.as_ref().map(|(n, g)| (n.clone(), pick_grid(g))),
            outcome: match &self.outcome {
                Outcome::Terminal { name, kind, values, min, max } => Outcome::Terminal {
                    name: name.clone(),
                    kind: *kind,
                    values: pick(values),
                    min: *min,
                    max: *max,
                },
                Outcome::Survival { name, events } => Outcome::Survival {
                    name: name.clone(),
                    events: pick_grid(events),
                },
            },
            status: self
                .status
                .iter()
                .map(|row| indices.iter().map(|&i| row[i]).collect())
                .collect(),
            report: self.report.clone(),
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn same_vec(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(*x, *y))
}

fn same_grid(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same_vec(x, y))
}

/// Cell-for-cell equality, treating unavailable cells as equal.
impl PartialEq for PanelDataset {
    fn eq(&self, other: &Self) -> bool {
        self.unit_ids == other.unit_ids
            && self.horizon == other.horizon
            && self.exposure_name == other.exposure_name
            && self.exposure_kind == other.exposure_kind
            && same_grid(&self.exposure, &other.exposure)
            && self.baseline.len() == other.baseline.len()
            && self
                .baseline
                .iter()
                .zip(&other.baseline)
                .all(|(a, b)| a.name == b.name && same_vec(&a.values, &b.values))
            && self.covariates.len() == other.covariates.len()
            && self
                .covariates
                .iter()
                .zip(&other.covariates)
                .all(|(a, b)| a.name == b.name && same_grid(&a.values, &b.values))
            && match (&self.censoring, &other.censoring) {
                (None, None) => true,
                (Some((na, a)), Some((nb, b))) => na == nb && same_grid(a, b),
                _ => false,
            }
            && match (&self.outcome, &other.outcome) {
                (
                    Outcome::Terminal { name: na, kind: ka, values: va, .. },
                    Outcome::Terminal { name: nb, kind: kb, values: vb, .. },
                ) => na == nb && ka == kb && same_vec(va, vb),
                (Outcome::Survival { name: na, events: ea }, Outcome::Survival { name: nb, events: eb }) => {
                    na == nb && same_grid(ea, eb)
                }
                _ => false,
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_period(censor: Option<Vec<Vec<f64>>>) -> PanelParts {
        PanelParts {
            unit_ids: vec!["u1".into(), "u2".into(), "u3".into()],
            horizon: 1,
            baseline: vec![BaselineColumn {
                name: "age".into(),
                values: vec![50.0, 60.0, 70.0],
            }],
            covariates: vec![TimeVaryingColumn {
                name: "L".into(),
                values: vec![vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]],
                indicator_of: None,
            }],
            exposure_name: "A".into(),
            exposure_kind: ExposureKind::Binary,
            exposure: vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
            censoring: censor.map(|g| ("C".to_string(), g)),
            outcome: Outcome::Terminal {
                name: "Y".into(),
                kind: OutcomeKind::Binary,
                values: vec![1.0, 0.0, 1.0],
                min: 0.0,
                max: 1.0,
            },
        }
    }

    #[test]
    fn history_at_zero_is_baseline_covariates() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        let h = d.history_at(0, 0).unwrap();
        let labels: Vec<String> = h.entries().iter().map(|e| e.label()).collect();
        assert_eq!(labels, vec!["age", "L_0"]);
    }

    #[test]
    fn history_at_one_is_l0_a0_l1() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        let h = d.history_at(0, 1).unwrap();
        let labels: Vec<String> = h.entries().iter().map(|e| e.label()).collect();
        assert_eq!(labels, vec!["age", "L_0", "A_0", "L_1"]);
        let values: Vec<f64> = h.entries().iter().map(|e| e.value).collect();
        assert_eq!(values, vec![50.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn censored_history_is_unavailable() {
        let mut p = two_period(Some(vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]]));
        p.exposure[1][1] = f64::NAN;
        p.covariates[0].values[1][1] = f64::NAN;
        if let Outcome::Terminal { values, .. } = &mut p.outcome {
            values[1] = f64::NAN;
        }
        let d = PanelDataset::from_parts(p).unwrap();
        assert!(matches!(d.history_at(1, 1), Err(Error::UnavailableHistory { .. })));
        assert!(d.history_at(1, 0).is_ok());
    }

    #[test]
    fn exposure_after_censoring_names_the_unit() {
        let p = two_period(Some(vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]]));
        match PanelDataset::from_parts(p) {
            Err(Error::Validation { unit, .. }) => assert_eq!(unit, "u2"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_monotone_censoring_is_rejected() {
        let mut p = two_period(Some(vec![vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]]));
        p.exposure[1][1] = f64::NAN;
        p.covariates[0].values[1][1] = f64::NAN;
        assert!(matches!(PanelDataset::from_parts(p), Err(Error::Validation { .. })));
    }

    #[test]
    fn survival_decrease_is_rejected() {
        let mut p = two_period(None);
        p.horizon = 4;
        p.exposure = vec![vec![0.0; 3]; 5];
        p.covariates[0].values = vec![vec![0.0; 3]; 5];
        let mut events = vec![vec![0.0; 3]; 5];
        events[2][0] = 1.0; // Y_3 = 1
        events[3][0] = 0.0; // Y_4 = 0
        p.outcome = Outcome::Survival {
            name: "Y".into(),
            events,
        };
        assert!(matches!(PanelDataset::from_parts(p), Err(Error::Validation { .. })));
    }

    #[test]
    fn locf_fills_and_flags() {
        let mut p = two_period(None);
        p.covariates[0].values[1][2] = f64::NAN;
        let d = PanelDataset::from_parts(p).unwrap();
        assert_eq!(d.covariates()[0].values[1][2], 0.0);
        let ind = &d.covariates()[1];
        assert_eq!(ind.name, "L_missing");
        assert_eq!(ind.values[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(d.report().locf_filled, 1);
    }

    #[test]
    fn replace_all_ones() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        let r = d.with_exposure_replaced(1, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.exposure_at(1), &[1.0, 1.0, 1.0]);
        assert_eq!(d.exposure_at(1), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn replace_with_same_column_is_identity() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        let r = d.with_exposure_replaced(0, d.exposure_at(0)).unwrap();
        assert_eq!(r, d);
    }

    #[test]
    fn replace_categorical_values() {
        let mut p = two_period(None);
        p.exposure_kind = ExposureKind::Categorical {
            levels: vec![0.0, 1.0, 2.0],
        };
        let d = PanelDataset::from_parts(p).unwrap();
        let r = d.with_exposure_replaced(0, &[2.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.exposure_at(0), &[2.0, 0.0, 1.0]);
    }

    #[test]
    fn replace_rejects_kind_mismatch() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        assert!(matches!(
            d.with_exposure_replaced(1, &[0.5, 1.0, 1.0]),
            Err(Error::ExposureDomain(_))
        ));
    }
}
