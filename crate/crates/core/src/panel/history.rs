use super::PanelDataset;

/// Read access to a history `H_t = (L_0, A_0, ..., L_t)`.
///
/// Implemented by observed rows, materialized views and the simulator's
/// counterfactual trajectories, so policies evaluate identically on all of
/// them.
pub trait History {
    /// The `t` of `H_t`.
    fn time(&self) -> usize;
    /// Covariate `name` measured at `time <= self.time()`. Baseline columns
    /// answer for every time.
    fn covariate(&self, name: &str, time: usize) -> Option<f64>;
    /// Exposure at `time < self.time()`.
    fn exposure(&self, time: usize) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum HistoryItem {
    Baseline(String),
    Covariate(String),
    Exposure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub time: usize,
    pub item: HistoryItem,
    pub value: f64,
}

impl HistoryEntry {
    pub fn label(&self) -> String {
        match &self.item {
            HistoryItem::Baseline(n) => n.clone(),
            HistoryItem::Covariate(n) | HistoryItem::Exposure(n) => format!("{n}_{}", self.time),
        }
    }
}

/// Materialized `H_t` for one unit, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryView {
    pub unit: String,
    pub t: usize,
    entries: Vec<HistoryEntry>,
}

impl HistoryView {
    pub(super) fn from_rows(data: &PanelDataset, unit: usize, t: usize) -> Self {
        let mut entries = Vec::new();
        for b in data.baseline() {
            entries.push(HistoryEntry {
                time: 0,
                item: HistoryItem::Baseline(b.name.clone()),
                value: b.values[unit],
            });
        }
        for s in 0..=t {
            if s > 0 {
                entries.push(HistoryEntry {
                    time: s - 1,
                    item: HistoryItem::Exposure(data.exposure_name().to_string()),
                    value: data.exposure_at(s - 1)[unit],
                });
            }
            for c in data.covariates() {
                entries.push(HistoryEntry {
                    time: s,
                    item: HistoryItem::Covariate(c.name.clone()),
                    value: c.values[s][unit],
                });
            }
        }
        HistoryView {
            unit: data.unit_ids()[unit].clone(),
            t,
            entries,
        }
    }

    /// Build a view directly from entries (used for synthetic histories).
    pub fn from_entries(unit: impl Into<String>, t: usize, entries: Vec<HistoryEntry>) -> Self {
        HistoryView {
            unit: unit.into(),
            t,
            entries,
        }
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    /// `H_t` followed by `A_t`: the prefix of `H_{t+1}` before `L_{t+1}`.
    pub fn extended_with_exposure(&self, name: &str, a: f64) -> Vec<HistoryEntry> {
        let mut e = self.entries.clone();
        e.push(HistoryEntry {
            time: self.t,
            item: HistoryItem::Exposure(name.to_string()),
            value: a,
        });
        e
    }
}

impl History for HistoryView {
    fn time(&self) -> usize {
        self.t
    }

    fn covariate(&self, name: &str, time: usize) -> Option<f64> {
        if time > self.t {
            return None;
        }
        self.entries
            .iter()
            .find(|e| match &e.item {
                HistoryItem::Baseline(n) => n == name,
                HistoryItem::Covariate(n) => n == name && e.time == time,
                HistoryItem::Exposure(_) => false,
            })
            .map(|e| e.value)
            .filter(|v| !v.is_nan())
    }

    fn exposure(&self, time: usize) -> Option<f64> {
        if time >= self.t {
            return None;
        }
        self.entries
            .iter()
            .find(|e| matches!(e.item, HistoryItem::Exposure(_)) && e.time == time)
            .map(|e| e.value)
            .filter(|v| !v.is_nan())
    }
}

/// Borrowed history of one observed row; no allocation.
#[derive(Debug, Clone, Copy)]
pub struct RowHistory<'a> {
    data: &'a PanelDataset,
    unit: usize,
    t: usize,
}

impl<'a> RowHistory<'a> {
    pub fn new(data: &'a PanelDataset, unit: usize, t: usize) -> Self {
        RowHistory { data, unit, t }
    }
}

impl History for RowHistory<'_> {
    fn time(&self) -> usize {
        self.t
    }

    fn covariate(&self, name: &str, time: usize) -> Option<f64> {
        if time > self.t {
            return None;
        }
        if let Some(v) = self.data.baseline_value(name, self.unit) {
            return Some(v);
        }
        let idx = self.data.covariate_index(name)?;
        let v = self.data.covariates()[idx].values[time][self.unit];
        (!v.is_nan()).then_some(v)
    }

    fn exposure(&self, time: usize) -> Option<f64> {
        if time >= self.t {
            return None;
        }
        let v = self.data.exposure_at(time)[self.unit];
        (!v.is_nan()).then_some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_period;
    use super::*;

    #[test]
    fn views_extend_by_exposure_and_next_covariates() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        for i in 0..d.n_units() {
            let h0 = d.history_at(i, 0).unwrap();
            let h1 = d.history_at(i, 1).unwrap();
            let prefix = h0.extended_with_exposure("A", d.exposure_at(0)[i]);
            assert_eq!(&h1.entries()[..prefix.len()], prefix.as_slice());
            assert!(h1.entries()[prefix.len()..]
                .iter()
                .all(|e| e.time == 1 && matches!(e.item, HistoryItem::Covariate(_))));
        }
    }

    #[test]
    fn row_history_agrees_with_view() {
        let d = PanelDataset::from_parts(two_period(None)).unwrap();
        for i in 0..d.n_units() {
            let v = d.history_at(i, 1).unwrap();
            let r = d.row_history(i, 1);
            for name in ["age", "L"] {
                for s in 0..=1 {
                    assert_eq!(v.covariate(name, s), r.covariate(name, s));
                }
            }
            assert_eq!(v.exposure(0), r.exposure(0));
            assert_eq!(r.exposure(1), None);
        }
    }
}
