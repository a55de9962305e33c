use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FuzzyError;

/// Whether a larger value of a metric is preferable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Benefit,
    Cost,
}

impl FromStr for Orientation {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benefit" | "" => Ok(Orientation::Benefit),
            "cost" => Ok(Orientation::Cost),
            other => Err(FuzzyError::BadOrientation(other.to_string())),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::Benefit => f.write_str("benefit"),
            Orientation::Cost => f.write_str("cost"),
        }
    }
}

/// Candidate nodes (rows) by cross-layer metrics (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    orientations: Vec<Orientation>,
    column_names: Vec<String>,
}

impl MetricTable {
    pub fn new(
        column_names: Vec<String>,
        orientations: Vec<Orientation>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, FuzzyError> {
        let cols = column_names.len();
        if rows.is_empty() || cols == 0 {
            return Err(FuzzyError::EmptyTable);
        }
        if orientations.len() != cols {
            return Err(FuzzyError::DimensionMismatch {
                what: "orientations",
                expected: cols,
                found: orientations.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(FuzzyError::RaggedRow {
                    row: i,
                    expected: cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(FuzzyError::NonFinite { row: i, col: j });
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            values,
            rows: rows.len(),
            cols,
            orientations,
            column_names,
        })
    }

    /// Builds a table where every metric is a benefit and columns are named `metric_1..`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, FuzzyError> {
        let cols = rows.first().map_or(0, Vec::len);
        let names = (1..=cols).map(|j| format!("metric_{j}")).collect();
        Self::new(names, vec![Orientation::Benefit; cols], rows)
    }

    /// Builds a table from metric columns (each inner vector is one metric over all nodes).
    pub fn from_columns(
        column_names: Vec<String>,
        orientations: Vec<Orientation>,
        columns: &[Vec<f64>],
    ) -> Result<Self, FuzzyError> {
        let m = columns.first().map_or(0, Vec::len);
        let rows = (0..m)
            .map(|i| columns.iter().map(|c| c.get(i).copied().unwrap_or(f64::NAN)).collect())
            .collect();
        Self::new(column_names, orientations, rows)
    }

    /// Number of candidate nodes.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of metrics.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.value(i, col)).collect()
    }

    pub fn orientations(&self) -> &[Orientation] {
        &self.orientations
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Returns a copy with every entry of `col` mapped through `f`.
    pub fn map_column(&self, col: usize, f: impl Fn(f64) -> f64) -> Result<Self, FuzzyError> {
        let rows = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| if j == col { f(self.value(i, j)) } else { self.value(i, j) })
                    .collect()
            })
            .collect();
        Self::new(self.column_names.clone(), self.orientations.clone(), rows)
    }

    /// Reads a table from CSV.
    ///
    /// The first record holds metric names. If the second record consists only of
    /// `benefit`/`cost` words it is taken as the orientation row, otherwise every
    /// metric defaults to `benefit`. Remaining records are one candidate node each.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, FuzzyError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| FuzzyError::Csv(e.to_string()))?,
            None => return Err(FuzzyError::EmptyTable),
        };
        let names: Vec<String> = header.iter().map(str::to_string).collect();
        let mut orientations = vec![Orientation::Benefit; names.len()];
        let mut rows = Vec::new();
        let mut line = 1;
        for record in records {
            let record = record.map_err(|e| FuzzyError::Csv(e.to_string()))?;
            line += 1;
            let is_orientation_row = line == 2
                && record
                    .iter()
                    .all(|c| matches!(c.to_ascii_lowercase().as_str(), "benefit" | "cost"));
            if is_orientation_row {
                orientations = record
                    .iter()
                    .map(Orientation::from_str)
                    .collect::<Result<_, _>>()?;
                if orientations.len() != names.len() {
                    return Err(FuzzyError::DimensionMismatch {
                        what: "orientation row",
                        expected: names.len(),
                        found: orientations.len(),
                    });
                }
                continue;
            }
            let row = record
                .iter()
                .enumerate()
                .map(|(col, cell)| {
                    cell.parse::<f64>().map_err(|_| FuzzyError::BadNumber {
                        line,
                        col,
                        text: cell.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::new(names, orientations, rows)
    }
}
