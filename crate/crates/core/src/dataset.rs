//! Ingestion of raw indicator tables and their reduction to a binary matrix.
//!
//! A [`RawTable`] holds one row per unit (e.g. a census tract) and named
//! numeric columns. Each column is dichotomized against a resolved threshold:
//! values strictly above it become 1, values at or below it become 0, and
//! missing cells stay missing in the [`BinaryDataset`] mask.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a delimited file is read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Column holding the unit identifier; the first column when `None`.
    pub id_column: Option<String>,
    /// Cell contents (after trimming) treated as missing.
    pub missing: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            id_column: None,
            missing: vec![String::new()],
        }
    }
}

/// A named numeric column; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    unit_ids: Vec<String>,
    columns: Vec<RawColumn>,
}

impl RawTable {
    pub fn new(unit_ids: Vec<String>, columns: Vec<RawColumn>) -> Result<Self> {
        if unit_ids.is_empty() {
            return Err(Error::Validation("table has no rows".into()));
        }
        let mut seen = HashSet::new();
        for id in &unit_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate unit id {id:?}")));
            }
        }
        let mut names = HashSet::new();
        for col in &columns {
            if col.values.len() != unit_ids.len() {
                return Err(Error::Validation(format!(
                    "column {:?} has {} values, expected {}",
                    col.name,
                    col.values.len(),
                    unit_ids.len()
                )));
            }
            if !names.insert(col.name.as_str()) {
                return Err(Error::Validation(format!("duplicate column {:?}", col.name)));
            }
        }
        Ok(Self { unit_ids, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn columns(&self) -> &[RawColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Reads a delimited text table with a header row.
pub fn load_table(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, path, opts)
}

pub(crate) fn read_table<R: std::io::Read>(
    reader: R,
    path: &Path,
    opts: &LoadOptions,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() {
        return Err(Error::Validation(format!("{}: empty header", path.display())));
    }
    let id_idx = match &opts.id_column {
        None => 0,
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Validation(format!("{}: no id column {name:?}", path.display()))
        })?,
    };

    let mut unit_ids = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == id_idx {
                unit_ids.push(field.to_string());
                continue;
            }
            if opts.missing.iter().any(|m| m == field) {
                values[j].push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("column {:?}: cannot parse {field:?} as a number", headers[j]),
            })?;
            values[j].push(Some(v));
        }
    }

    let columns = headers
        .into_iter()
        .zip(values)
        .enumerate()
        .filter(|(j, _)| *j != id_idx)
        .map(|(_, (name, values))| RawColumn { name, values })
        .collect();
    RawTable::new(unit_ids, columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    MedianSplit,
    /// Threshold at zero: any positive value is a high exposure.
    PositiveSplit,
    Fixed {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    AboveIsOne,
}

/// Rule assignment: one default rule plus per-column overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdRules {
    pub default: ThresholdRule,
    pub overrides: BTreeMap<String, ThresholdRule>,
    /// Restrict to these columns, in this order. All columns when empty.
    pub columns: Vec<String>,
}

impl Default for ThresholdRules {
    fn default() -> Self {
        Self {
            default: ThresholdRule::MedianSplit,
            overrides: BTreeMap::new(),
            columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnThreshold {
    pub column: String,
    pub rule: ThresholdRule,
    pub threshold: f64,
    #[serde(default)]
    pub direction: Direction,
}

/// Resolved thresholds; serialized as the threshold manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub columns: Vec<ColumnThreshold>,
}

impl ThresholdSpec {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Sample median; even lengths average the two central order statistics.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn compute_thresholds(table: &RawTable, rules: &ThresholdRules) -> Result<ThresholdSpec> {
    for name in rules.overrides.keys().chain(&rules.columns) {
        if table.column(name).is_none() {
            return Err(Error::Validation(format!("rule names unknown column {name:?}")));
        }
    }
    let selected: Vec<&RawColumn> = if rules.columns.is_empty() {
        table.columns().iter().collect()
    } else {
        rules
            .columns
            .iter()
            .map(|n| table.column(n).expect("checked above"))
            .collect()
    };
    if selected.is_empty() {
        return Err(Error::Validation("no indicator columns selected".into()));
    }

    let mut out = Vec::with_capacity(selected.len());
    for col in selected {
        let rule = rules.overrides.get(&col.name).copied().unwrap_or(rules.default);
        let present: Vec<f64> = col.values.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(Error::Validation(format!(
                "column {:?} has no non-missing values",
                col.name
            )));
        }
        let threshold = match rule {
            ThresholdRule::MedianSplit => median(&present).expect("non-empty"),
            ThresholdRule::PositiveSplit => 0.0,
            ThresholdRule::Fixed { value } => value,
        };
        out.push(ColumnThreshold {
            column: col.name.clone(),
            rule,
            threshold,
            direction: Direction::AboveIsOne,
        });
    }
    Ok(ThresholdSpec { columns: out })
}

/// Dichotomizes every column named in `spec`: strictly above the threshold is 1.
pub fn binarize(table: &RawTable, spec: &ThresholdSpec) -> Result<BinaryDataset> {
    let n = table.n_rows();
    let p = spec.columns.len();
    let mut x = vec![0u8; n * p];
    let mut observed = vec![false; n * p];
    for (j, ct) in spec.columns.iter().enumerate() {
        let col = table.column(&ct.column).ok_or_else(|| {
            Error::Validation(format!("threshold for unknown column {:?}", ct.column))
        })?;
        for (i, v) in col.values.iter().enumerate() {
            if let Some(v) = v {
                observed[i * p + j] = true;
                x[i * p + j] = u8::from(*v > ct.threshold);
            }
        }
    }
    BinaryDataset::new(
        table.unit_ids().to_vec(),
        spec.columns.iter().map(|c| c.column.clone()).collect(),
        x,
        observed,
    )
}

/// n×p binary matrix with an observation mask, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    unit_ids: Vec<String>,
    column_names: Vec<String>,
    x: Vec<u8>,
    observed: Vec<bool>,
}

impl BinaryDataset {
    pub fn new(
        unit_ids: Vec<String>,
        column_names: Vec<String>,
        mut x: Vec<u8>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let p = column_names.len();
        if n == 0 || p == 0 {
            return Err(Error::Validation(format!(
                "binary dataset must be at least 1x1, got {n}x{p}"
            )));
        }
        if x.len() != n * p || observed.len() != n * p {
            return Err(Error::Validation("matrix size does not match n*p".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = unit_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Validation(format!("duplicate unit id {dup:?}")));
        }
        for (v, &obs) in x.iter_mut().zip(&observed) {
            if !obs {
                *v = 0;
            } else if *v > 1 {
                return Err(Error::Validation(format!("non-binary entry {v}")));
            }
        }
        Ok(Self {
            unit_ids,
            column_names,
            x,
            observed,
        })
    }

    /// Builds a dataset from rows of optional bits with generated ids `u1, u2, ...`.
    pub fn from_rows(rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Validation("ragged rows".into()));
        }
        let ids = (1..=rows.len()).map(|i| format!("u{i}")).collect();
        let names = (1..=p).map(|j| format!("v{j}")).collect();
        let x = rows.iter().flatten().map(|c| c.unwrap_or(0)).collect();
        let observed = rows.iter().flatten().map(Option::is_some).collect();
        Self::new(ids, names, x, observed)
    }

    /// Fully observed dataset from 0/1 rows.
    pub fn from_bits(rows: &[Vec<u8>]) -> Result<Self> {
        let rows: Vec<Vec<Option<u8>>> = rows
            .iter()
            .map(|r| r.iter().map(|&b| Some(b)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn p(&self) -> usize {
        self.column_names.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Row `i` of the matrix; unobserved entries read as 0.
    pub fn row(&self, i: usize) -> &[u8] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn observed_row(&self, i: usize) -> &[bool] {
        let p = self.p();
        &self.observed[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u8> {
        let idx = i * self.p() + j;
        self.observed[idx].then_some(self.x[idx])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.p() + j]
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    /// Copy with the listed rows in the given order.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut x = Vec::with_capacity(order.len() * p);
        let mut observed = Vec::with_capacity(order.len() * p);
        for &i in order {
            x.extend_from_slice(self.row(i));
            observed.extend_from_slice(self.observed_row(i));
        }
        Self::new(
            order.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            self.column_names.clone(),
            x,
            observed,
        )
    }

    /// Writes `unit_id,<columns...>` with cells `0`, `1` or `NA`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["unit_id".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.unit_ids[i].clone()];
            rec.extend((0..self.p()).map(|j| match self.get(i, j) {
                Some(b) => b.to_string(),
                None => "NA".to_string(),
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let opts = LoadOptions {
            missing: vec!["NA".into(), String::new()],
            ..LoadOptions::default()
        };
        let table = load_table(path, &opts)?;
        let n = table.n_rows();
        let p = table.columns().len();
        let mut x = vec![0u8; n * p];
        let mut observed = vec![false; n * p];
        for (j, col) in table.columns().iter().enumerate() {
            for (i, v) in col.values.iter().enumerate() {
                match v {
                    None => {}
                    Some(v) if *v == 0.0 || *v == 1.0 => {
                        x[i * p + j] = *v as u8;
                        observed[i * p + j] = true;
                    }
                    Some(v) => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            row: i + 1,
                            message: format!("column {:?}: non-binary value {v}", col.name),
                        })
                    }
                }
            }
        }
        Self::new(
            table.unit_ids().to_vec(),
            table.columns().iter().map(|c| c.name.clone()).collect(),
            x,
            observed,
        )
    }
}
