use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BaselineColumn, ExposureKind, Outcome, OutcomeKind, PanelDataset, PanelParts, TimeVaryingColumn,
    UnitStatus,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// One row per unit; time-indexed columns are named `<name>_<t>`.
    #[default]
    Wide,
    /// One row per unit and time point; pivoted to wide at load.
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeType {
    Binary,
    Continuous,
    /// Per-interval event indicators `Y_1..Y_{τ+1}`.
    Survival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureType {
    Binary,
    Categorical,
    Continuous,
}

/// Column-role mapping for a delimited file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    #[serde(default)]
    pub layout: Layout,
    pub unit: String,
    /// Time column (long layout only).
    #[serde(default)]
    pub time: Option<String>,
    /// Last time index `τ`.
    pub horizon: usize,
    pub exposure: String,
    pub exposure_type: ExposureType,
    /// Levels of a categorical exposure.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub baseline: Vec<String>,
    #[serde(default)]
    pub censoring: Option<String>,
    pub outcome: String,
    pub outcome_type: OutcomeType,
    #[serde(default)]
    pub delimiter: Option<char>,
}

impl PanelSchema {
    pub fn exposure_kind(&self) -> Result<ExposureKind> {
        match (self.exposure_type, &self.levels) {
            (ExposureType::Binary, _) => Ok(ExposureKind::Binary),
            (ExposureType::Continuous, _) => Ok(ExposureKind::Continuous),
            (ExposureType::Categorical, Some(l)) if !l.is_empty() => {
                Ok(ExposureKind::Categorical { levels: l.clone() })
            }
            (ExposureType::Categorical, _) => {
                Err(Error::Schema("categorical exposure requires 'levels'".into()))
            }
        }
    }

    /// Every column name the schema refers to.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut cols = vec![self.unit.clone()];
        let times = self.horizon + 1;
        cols.extend(self.baseline.iter().cloned());
        match self.layout {
            Layout::Long => {
                cols.extend(self.time.iter().cloned());
                cols.extend(self.covariates.iter().cloned());
                cols.push(self.exposure.clone());
                cols.extend(self.censoring.iter().cloned());
                cols.push(self.outcome.clone());
            }
            Layout::Wide => {
                for t in 0..times {
                    cols.extend(self.covariates.iter().map(|c| format!("{c}_{t}")));
                    cols.push(format!("{}_{t}", self.exposure));
                    if let Some(c) = &self.censoring {
                        cols.push(format!("{c}_{t}"));
                    }
                }
                if self.outcome_type == OutcomeType::Survival {
                    cols.extend((1..=times).map(|k| format!("{}_{k}", self.outcome)));
                } else {
                    cols.push(self.outcome.clone());
                }
            }
        }
        cols
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("column '{column}': cannot parse '{s}' as a number"),
    })
}

/// Load a delimited file according to `schema`.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_panel(file, schema)
}

/// Parse delimited text according to `schema`. Row numbers in errors are
/// file line numbers (the header is line 1).
pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(schema.delimiter.unwrap_or(',') as u8)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    for col in schema.referenced_columns() {
        if !index.contains_key(col.as_str()) {
            return Err(Error::Schema(format!("column '{col}' named by the schema is not in the header")));
        }
    }
    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push((line, rec));
    }
    match schema.layout {
        Layout::Wide => read_wide(&rows, &index, schema),
        Layout::Long => read_long(&rows, &index, schema),
    }
}

fn read_wide(
    rows: &[(usize, csv::StringRecord)],
    index: &HashMap<&str, usize>,
    schema: &PanelSchema,
) -> Result<PanelDataset> {
    let n = rows.len();
    let times = schema.horizon + 1;
    let cell = |r: usize, col: &str| -> Result<f64> {
        let (line, rec) = &rows[r];
        parse_cell(&rec[index[col]], *line, col)
    };
    let grid = |name: &str, offset: usize| -> Result<Vec<Vec<f64>>> {
        (0..times)
            .map(|t| {
                let col = format!("{name}_{}", t + offset);
                (0..n).map(|r| cell(r, &col)).collect()
            })
            .collect()
    };
    let unit_ids = rows
        .iter()
        .map(|(_, rec)| rec[index[schema.unit.as_str()]].trim().to_string())
        .collect();
    let baseline = schema
        .baseline
        .iter()
        .map(|b| {
            Ok(BaselineColumn {
                name: b.clone(),
                values: (0..n).map(|r| cell(r, b)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    let covariates = schema
        .covariates
        .iter()
        .map(|c| {
            Ok(TimeVaryingColumn {
                name: c.clone(),
                values: grid(c, 0)?,
                indicator_of: None,
            })
        })
        .collect::<Result<_>>()?;
    let exposure = grid(&schema.exposure, 0)?;
    let censoring = match &schema.censoring {
        Some(c) => Some((c.clone(), grid(c, 0)?)),
        None => None,
    };
    let outcome = match schema.outcome_type {
        OutcomeType::Survival => Outcome::Survival {
            name: schema.outcome.clone(),
            events: grid(&schema.outcome, 1)?,
        },
        kind => Outcome::Terminal {
            name: schema.outcome.clone(),
            kind: if kind == OutcomeType::Binary {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
            values: (0..n).map(|r| cell(r, &schema.outcome)).collect::<Result<_>>()?,
            min: 0.0,
            max: 0.0,
        },
    };
    PanelDataset::from_parts(PanelParts {
        unit_ids,
        horizon: schema.horizon,
        baseline,
        covariates,
        exposure_name: schema.exposure.clone(),
        exposure_kind: schema.exposure_kind()?,
        exposure,
        censoring,
        outcome,
    })
}

fn read_long(
    rows: &[(usize, csv::StringRecord)],
    index: &HashMap<&str, usize>,
    schema: &PanelSchema,
) -> Result<PanelDataset> {
    let time_col = schema
        .time
        .as_deref()
        .ok_or_else(|| Error::Schema("long layout requires a 'time' column".into()))?;
    let times = schema.horizon + 1;
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, Vec<Option<usize>>> = HashMap::new();
    for (r, (line, rec)) in rows.iter().enumerate() {
        let unit = rec[index[schema.unit.as_str()]].trim().to_string();
        let raw_t = rec[index[time_col]].trim();
        let t: usize = raw_t.parse().map_err(|_| Error::Parse {
            row: *line,
            message: format!("time '{raw_t}' is not a non-negative integer"),
        })?;
        if t >= times {
            return Err(Error::Parse {
                row: *line,
                message: format!("time {t} beyond horizon {}", schema.horizon),
            });
        }
        let entry = slots.entry(unit.clone()).or_insert_with(|| {
            order.push(unit.clone());
            vec![None; times]
        });
        if entry[t].replace(r).is_some() {
            return Err(Error::Parse {
                row: *line,
                message: format!("duplicate row for unit '{unit}' at time {t}"),
            });
        }
    }
    let value = |unit: &str, t: usize, col: &str| -> Result<f64> {
        match slots[unit][t] {
            Some(r) => {
                let (line, rec) = &rows[r];
                parse_cell(&rec[index[col]], *line, col)
            }
            None => Ok(f64::NAN),
        }
    };
    let grid = |col: &str| -> Result<Vec<Vec<f64>>> {
        (0..times)
            .map(|t| order.iter().map(|u| value(u, t, col)).collect())
            .collect()
    };
    let baseline = schema
        .baseline
        .iter()
        .map(|b| {
            Ok(BaselineColumn {
                name: b.clone(),
                values: order.iter().map(|u| value(u, 0, b)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    let covariates = schema
        .covariates
        .iter()
        .map(|c| {
            Ok(TimeVaryingColumn {
                name: c.clone(),
                values: grid(c)?,
                indicator_of: None,
            })
        })
        .collect::<Result<_>>()?;
    let censoring = match &schema.censoring {
        Some(c) => Some((c.clone(), grid(c)?)),
        None => None,
    };
    let outcome = match schema.outcome_type {
        OutcomeType::Survival => Outcome::Survival {
            name: schema.outcome.clone(),
            events: grid(&schema.outcome)?,
        },
        kind => Outcome::Terminal {
            name: schema.outcome.clone(),
            kind: if kind == OutcomeType::Binary {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
            values: order
                .iter()
                .map(|u| value(u, schema.horizon, &schema.outcome))
                .collect::<Result<_>>()?,
            min: 0.0,
            max: 0.0,
        },
    };
    PanelDataset::from_parts(PanelParts {
        unit_ids: order.clone(),
        horizon: schema.horizon,
        baseline,
        covariates,
        exposure_name: schema.exposure.clone(),
        exposure_kind: schema.exposure_kind()?,
        exposure: grid(&schema.exposure)?,
        censoring,
        outcome,
    })
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Serialize in the canonical wide layout. Generated indicator columns are
/// dropped and carried-forward cells are written back as empty, so the
/// output reloads to the same dataset.
pub fn write_wide<W: Write>(data: &PanelDataset, unit_column: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let originals: Vec<&TimeVaryingColumn> =
        data.covariates().iter().filter(|c| c.indicator_of.is_none()).collect();
    let indicator_for = |name: &str| {
        data.covariates()
            .iter()
            .find(|c| c.indicator_of.as_deref() == Some(name))
    };
    let mut header = vec![unit_column.to_string()];
    header.extend(data.baseline().iter().map(|b| b.name.clone()));
    for t in 0..data.n_times() {
        header.extend(originals.iter().map(|c| format!("{}_{t}", c.name)));
        header.push(format!("{}_{t}", data.exposure_name()));
        if let Some(c) = data.censoring_name() {
            header.push(format!("{c}_{t}"));
        }
    }
    match data.outcome() {
        Outcome::Terminal { name, .. } => header.push(name.clone()),
        Outcome::Survival { name, .. } => header.extend((1..=data.n_times()).map(|k| format!("{name}_{k}"))),
    }
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n_units() {
        let mut rec = vec![data.unit_ids()[i].clone()];
        rec.extend(data.baseline().iter().map(|b| fmt_cell(b.values[i])));
        for t in 0..data.n_times() {
            for c in &originals {
                let filled = indicator_for(&c.name).is_some_and(|ind| ind.values[t][i] == 1.0);
                rec.push(if filled { String::new() } else { fmt_cell(c.values[t][i]) });
            }
            rec.push(fmt_cell(data.exposure_at(t)[i]));
            if let Some(cens) = data.censoring_at(t) {
                let v = if data.status(i, t) == UnitStatus::Censored {
                    f64::NAN
                } else {
                    cens[i]
                };
                rec.push(fmt_cell(v));
            }
        }
        match data.outcome() {
            Outcome::Terminal { values, .. } => rec.push(fmt_cell(values[i])),
            Outcome::Survival { events, .. } => rec.extend(events.iter().map(|row| fmt_cell(row[i]))),
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_schema() -> PanelSchema {
        PanelSchema {
            layout: Layout::Long,
            unit: "id".into(),
            time: Some("t".into()),
            horizon: 1,
            exposure: "A".into(),
            exposure_type: ExposureType::Binary,
            levels: None,
            covariates: vec!["L".into()],
            baseline: vec![],
            censoring: None,
            outcome: "Y".into(),
            outcome_type: OutcomeType::Binary,
            delimiter: None,
        }
    }

    #[test]
    fn six_row_long_file_pivots_to_three_units() {
        let text = "id,t,L,A,Y\n1,0,0,1,\n1,1,1,0,1\n2,0,1,0,\n2,1,0,0,0\n3,0,0,1,\n3,1,1,1,1\n";
        let d = read_panel(text.as_bytes(), &long_schema()).unwrap();
        assert_eq!(d.n_units(), 3);
        assert_eq!(d.horizon(), 1);
        assert_eq!(d.exposure_at(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "id,t,L,A,Y\n1,0,0,1,\n1,1,x,0,1\n";
        match read_panel(text.as_bytes(), &long_schema()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "id,t,L,A\n1,0,0,1\n";
        assert!(matches!(read_panel(text.as_bytes(), &long_schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn wide_censoring_violation_names_unit() {
        let schema = PanelSchema {
            layout: Layout::Wide,
            time: None,
            censoring: Some("C".into()),
            ..long_schema()
        };
        let text = "id,L_0,A_0,C_0,L_1,A_1,C_1,Y\na,0,1,1,1,1,1,1\nb,0,1,0,,1,,\n";
        match read_panel(text.as_bytes(), &schema) {
            Err(Error::Validation { unit, .. }) => assert_eq!(unit, "b"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn wide_round_trip_is_textually_identical() {
        let schema = PanelSchema {
            layout: Layout::Wide,
            time: None,
            censoring: Some("C".into()),
            baseline: vec!["W".into()],
            ..long_schema()
        };
        let text = "id,W,L_0,A_0,C_0,L_1,A_1,C_1,Y\na,2.5,0,1,1,1,1,1,1\nb,-1,0,1,0,,,,\nc,0,1,0,1,,0,1,0\n";
        let d = read_panel(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.report().locf_filled, 1);
        let mut out = Vec::new();
        write_wide(&d, "id", &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        let again = read_panel(out.as_slice(), &schema).unwrap();
        assert_eq!(again, d);
    }
}
