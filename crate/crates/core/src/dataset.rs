//! Indicator panels: CSV ingestion, net premium margin, min-max
//! normalization and per-indicator deviations.
//!
//! The CSV dialect is fixed: comma separated, `.` as decimal point, a
//! mandatory header row, and the first column holding the row identifier
//! (a year or an entity name). Lines starting with `#` are comments.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::f64_17;
use crate::warning::Warning;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing value in column `{column}` at row {row}")]
    MissingCell { column: String, row: usize },
    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("no direction assigned to column `{0}`")]
    DirectionUnassigned(String),
    #[error("schema references unknown column `{0}`")]
    UnknownColumn(String),
    #[error("panel has no indicator columns")]
    NoIndicators,
    #[error("total premium must be positive, got {0}")]
    NonPositivePremium(f64),
    #[error("panel has no rows")]
    EmptyPanel,
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Whether larger raw values of an indicator are better (`Positive`) or worse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Positive,
    Negative,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub name: String,
    pub direction: Direction,
}

/// Column direction map used when loading a panel.
///
/// Columns absent from `directions` fall back to `default`; with
/// `default: None` every column must be listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default)]
    pub directions: BTreeMap<String, Direction>,
    #[serde(default = "default_direction")]
    pub default: Option<Direction>,
}

fn default_direction() -> Option<Direction> {
    Some(Direction::Positive)
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            directions: BTreeMap::new(),
            default: default_direction(),
        }
    }
}

impl Schema {
    pub fn strict(directions: BTreeMap<String, Direction>) -> Self {
        Schema {
            directions,
            default: None,
        }
    }
}

/// Rectangular row x indicator table of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    pub id_column: String,
    pub row_ids: Vec<String>,
    pub indicators: Vec<Indicator>,
    pub values: Vec<Vec<f64>>,
}

impl IndicatorPanel {
    pub fn new(
        id_column: impl Into<String>,
        row_ids: Vec<String>,
        indicators: Vec<Indicator>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if indicators.is_empty() {
            return Err(DatasetError::NoIndicators);
        }
        let mut seen = HashSet::new();
        for ind in &indicators {
            if !seen.insert(ind.name.as_str()) {
                return Err(DatasetError::DuplicateColumn(ind.name.clone()));
            }
        }
        let m = indicators.len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(DatasetError::Ragged {
                    row: i + 1,
                    found: row.len(),
                    expected: m,
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    column: indicators[j].name.clone(),
                    row: i + 1,
                });
            }
        }
        assert_eq!(row_ids.len(), values.len(), "row ids must align with rows");
        Ok(IndicatorPanel {
            id_column: id_column.into(),
            row_ids,
            indicators,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|i| i.name == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))?;
        Ok(self.column(j))
    }

    /// Sub-panel restricted to `names`, in the given order.
    pub fn select(&self, names: &[String]) -> Result<IndicatorPanel> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| DatasetError::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        IndicatorPanel::new(
            self.id_column.clone(),
            self.row_ids.clone(),
            idx.iter().map(|&j| self.indicators[j].clone()).collect(),
            self.values
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
        )
    }

    /// Appends a derived column.
    pub fn with_column(&self, indicator: Indicator, column: &[f64]) -> Result<IndicatorPanel> {
        assert_eq!(column.len(), self.n_rows(), "column length must match rows");
        let mut indicators = self.indicators.clone();
        indicators.push(indicator);
        let values = self
            .values
            .iter()
            .zip(column)
            .map(|(r, &v)| {
                let mut r = r.clone();
                r.push(v);
                r
            })
            .collect();
        IndicatorPanel::new(
            self.id_column.clone(),
            self.row_ids.clone(),
            indicators,
            values,
        )
    }
}

/// Reads a panel from CSV, assigning directions from `schema`.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<IndicatorPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let mut names = headers.iter();
    let id_column = names.next().unwrap_or("id").to_string();
    let mut indicators = Vec::new();
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.to_string()) || name == id_column {
            return Err(DatasetError::DuplicateColumn(name.to_string()));
        }
        let direction = schema
            .directions
            .get(name)
            .copied()
            .or(schema.default)
            .ok_or_else(|| DatasetError::DirectionUnassigned(name.to_string()))?;
        indicators.push(Indicator {
            name: name.to_string(),
            direction,
        });
    }
    if indicators.is_empty() {
        return Err(DatasetError::NoIndicators);
    }
    if let Some(unknown) = schema.directions.keys().find(|k| !seen.contains(*k)) {
        return Err(DatasetError::UnknownColumn(unknown.clone()));
    }

    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let mut fields = record.iter();
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(DatasetError::MissingCell {
                column: id_column.clone(),
                row,
            });
        }
        let mut parsed = Vec::with_capacity(indicators.len());
        for (field, ind) in fields.zip(&indicators) {
            if field.is_empty() {
                return Err(DatasetError::MissingCell {
                    column: ind.name.clone(),
                    row,
                });
            }
            let v: f64 = field.parse().map_err(|_| DatasetError::NonNumeric {
                column: ind.name.clone(),
                row,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::NonFinite {
                    column: ind.name.clone(),
                    row,
                });
            }
            parsed.push(v);
        }
        row_ids.push(id.to_string());
        values.push(parsed);
    }

    IndicatorPanel::new(id_column, row_ids, indicators, values)
}

/// Relative profitability: `(premium - payout) / premium`.
pub fn net_premium_margin(total_premium: f64, claim_payout: f64) -> Result<f64> {
    if !(total_premium > 0.0) {
        return Err(DatasetError::NonPositivePremium(total_premium));
    }
    Ok((total_premium - claim_payout) / total_premium)
}

/// Column extremes recorded from the source panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
}

impl Extremes {
    pub fn of(column: &[f64]) -> Extremes {
        column.iter().fold(
            Extremes {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |e, &x| Extremes {
                min: e.min.min(x),
                max: e.max.max(x),
            },
        )
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max > self.min)
    }

    /// Maps a raw value into the unit scale of this column. Values outside
    /// the recorded range map outside [0, 1]; constant columns map to 0.5.
    pub fn scale(&self, x: f64, direction: Direction) -> f64 {
        if self.is_degenerate() {
            return 0.5;
        }
        let span = self.max - self.min;
        match direction {
            Direction::Positive => (x - self.min) / span,
            Direction::Negative => (self.max - x) / span,
        }
    }
}

/// Min-max normalized panel with the extremes it was normalized against.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPanel {
    pub id_column: String,
    pub row_ids: Vec<String>,
    pub indicators: Vec<Indicator>,
    pub values: Vec<Vec<f64>>,
    pub extremes: Vec<Extremes>,
    pub warnings: Vec<Warning>,
}

impl NormalizedPanel {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|i| i.name == name)
    }

    /// Normalizes a raw row with this panel's recorded extremes.
    pub fn scale_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.extremes.iter().zip(&self.indicators))
            .map(|(&x, (e, ind))| e.scale(x, ind.direction))
            .collect()
    }

    pub fn to_panel(&self) -> IndicatorPanel {
        IndicatorPanel {
            id_column: self.id_column.clone(),
            row_ids: self.row_ids.clone(),
            indicators: self.indicators.clone(),
            values: self.values.clone(),
        }
    }
}

/// Min-max normalization honoring each column's direction.
pub fn normalize(panel: &IndicatorPanel) -> NormalizedPanel {
    let m = panel.n_indicators();
    let extremes: Vec<Extremes> = (0..m).map(|j| Extremes::of(&panel.column(j))).collect();
    let warnings = extremes
        .iter()
        .zip(&panel.indicators)
        .filter(|(e, _)| panel.n_rows() > 0 && e.is_degenerate())
        .map(|(_, ind)| Warning::DegenerateColumn {
            column: ind.name.clone(),
        })
        .collect();
    let values = panel
        .values
        .iter()
        .map(|row| {
            row.iter()
                .zip(extremes.iter().zip(&panel.indicators))
                .map(|(&x, (e, ind))| e.scale(x, ind.direction))
                .collect()
        })
        .collect();
    NormalizedPanel {
        id_column: panel.id_column.clone(),
        row_ids: panel.row_ids.clone(),
        indicators: panel.indicators.clone(),
        values,
        extremes,
        warnings,
    }
}

/// Column means and per-entry deviations from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationTable {
    pub id_column: String,
    pub row_ids: Vec<String>,
    pub indicators: Vec<Indicator>,
    pub means: Vec<f64>,
    pub deviations: Vec<Vec<f64>>,
}

pub fn indicator_deviation(panel: &IndicatorPanel) -> Result<DeviationTable> {
    let n = panel.n_rows();
    if n == 0 {
        return Err(DatasetError::EmptyPanel);
    }
    let means: Vec<f64> = (0..panel.n_indicators())
        .map(|j| panel.values.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let deviations = panel
        .values
        .iter()
        .map(|r| r.iter().zip(&means).map(|(x, m)| x - m).collect())
        .collect();
    Ok(DeviationTable {
        id_column: panel.id_column.clone(),
        row_ids: panel.row_ids.clone(),
        indicators: panel.indicators.clone(),
        means,
        deviations,
    })
}

fn write_table<W: Write>(
    out: W,
    id_column: &str,
    row_ids: &[String],
    indicators: &[Indicator],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut out = out;
    let dirs: Vec<&str> = indicators.iter().map(|i| i.direction.as_str()).collect();
    writeln!(out, "#direction:{}", dirs.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once(id_column).chain(indicators.iter().map(|i| i.name.as_str())))?;
    for (id, row) in row_ids.iter().zip(values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|&v| f64_17(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_normalized_csv<W: Write>(out: W, panel: &NormalizedPanel) -> Result<()> {
    write_table(
        out,
        &panel.id_column,
        &panel.row_ids,
        &panel.indicators,
        &panel.values,
    )
}

pub fn write_deviation_csv<W: Write>(out: W, table: &DeviationTable) -> Result<()> {
    write_table(
        out,
        &table.id_column,
        &table.row_ids,
        &table.indicators,
        &table.deviations,
    )
}
