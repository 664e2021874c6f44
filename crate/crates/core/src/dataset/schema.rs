//! Dataset schema descriptors and typed CSV loading.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CountyKey;
use crate::{Error, Result};

/// What a source table contributes to the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// One row per county and date with cumulative outbreak counts.
    Outbreak,
    /// One row per county.
    Static,
    /// One row per county and date.
    Dynamic,
}

/// Semantic role of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Fips,
    State,
    Date,
    Population,
    Confirmed,
    Deaths,
    Recovered,
    /// Generic real-valued feature.
    Feature,
    /// Mobility percent change from baseline; six of these yield a compliance score.
    Mobility,
    /// Head count of one population group; a table's group columns yield a
    /// diversity index and per-group shares.
    RaceCount,
    /// Precomputed diversity index in [0, 1].
    DiversityIndex,
    Ignore,
}

impl ColumnRole {
    pub fn is_value(self) -> bool {
        !matches!(
            self,
            ColumnRole::Fips | ColumnRole::State | ColumnRole::Date | ColumnRole::Ignore
        )
    }
}

/// Value scale of a feature column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Raw,
    /// Share in [0, 1].
    Share,
    /// Percentage in [0, 100]; converted to a share on load.
    Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub scale: Scale,
    /// Optional columns may be absent from the header.
    #[serde(default)]
    pub optional: bool,
}

/// Descriptor for one CSV dataset, read from a TOML file.
///
/// ```toml
/// name = "census"
/// kind = "static"
///
/// [[columns]]
/// name = "fips"
/// role = "fips"
///
/// [[columns]]
/// name = "Transit"
/// role = "feature"
/// unit = "share of commuters"
/// scale = "percent"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    pub kind: TableKind,
    /// For mobility columns: `true` when values are already percent changes
    /// from baseline, `false` when they are indices with baseline 100.
    #[serde(default = "default_true")]
    pub mobility_baseline_relative: bool,
    /// Largest tolerated fraction of rejected rows.
    #[serde(default = "default_reject_rate")]
    pub max_reject_rate: f64,
    pub columns: Vec<ColumnSpec>,
}

fn default_true() -> bool {
    true
}

fn default_reject_rate() -> f64 {
    0.10
}

impl DatasetSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: DatasetSchema = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    fn count(&self, role: ColumnRole) -> usize {
        self.columns.iter().filter(|c| c.role == role).count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("schema `{}`: {m}", self.name)));
        if self.count(ColumnRole::Fips) != 1 {
            return bad("exactly one fips column required".into());
        }
        let dated = self.kind != TableKind::Static;
        match (dated, self.count(ColumnRole::Date)) {
            (true, 1) | (false, 0) => {}
            (true, _) => return bad("dated tables need exactly one date column".into()),
            (false, _) => return bad("static tables must not have a date column".into()),
        }
        if self.kind == TableKind::Outbreak
            && (self.count(ColumnRole::Confirmed) != 1 || self.count(ColumnRole::Deaths) != 1)
        {
            return bad("outbreak tables need confirmed and deaths columns".into());
        }
        for role in [
            ColumnRole::Population,
            ColumnRole::Confirmed,
            ColumnRole::Deaths,
            ColumnRole::Recovered,
            ColumnRole::State,
        ] {
            if self.count(role) > 1 {
                return bad(format!("duplicate {role:?} column"));
            }
        }
        if self.kind != TableKind::Outbreak
            && (self.count(ColumnRole::Confirmed) + self.count(ColumnRole::Deaths) + self.count(ColumnRole::Recovered))
                > 0
        {
            return bad("outbreak counts belong in an outbreak table".into());
        }
        if self.kind != TableKind::Dynamic && self.count(ColumnRole::Mobility) > 0 {
            return bad("mobility columns belong in a dynamic table".into());
        }
        if self.kind != TableKind::Static
            && self.count(ColumnRole::RaceCount) + self.count(ColumnRole::DiversityIndex) > 0
        {
            return bad("group counts belong in a static table".into());
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(&c.name) {
                return bad(format!("duplicate column name `{}`", c.name));
            }
        }
        if !(0.0..=1.0).contains(&self.max_reject_rate) {
            return bad("max_reject_rate must be in [0, 1]".into());
        }
        Ok(())
    }

    /// Value-bearing columns in declaration order.
    pub fn value_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.role.is_value())
    }
}

/// One typed row. `values` is aligned with [`DatasetSchema::value_columns`];
/// `None` marks an empty cell (imputable), `NaN` never appears.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub line: u64,
    pub county: CountyKey,
    pub date: Option<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

/// A loaded dataset: typed rows plus the rows that failed coercion.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: DatasetSchema,
    pub path: PathBuf,
    pub rows: Vec<RawRow>,
    pub rejects: Vec<Reject>,
}

impl RawTable {
    /// Index of a value column by name within each row's `values`.
    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.schema.value_columns().position(|c| c.name == name)
    }

    pub fn value_index_of_role(&self, role: ColumnRole) -> Option<usize> {
        self.schema.value_columns().position(|c| c.role == role)
    }
}

/// Normalizes a FIPS cell: digits only, left-padded to five characters.
pub fn normalize_fips(raw: &str) -> Option<String> {
    let s = raw.trim();
    let s = s.strip_suffix(".0").unwrap_or(s);
    if s.is_empty() || s.len() > 5 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(format!("{s:0>5}"))
}

fn parse_value(cell: &str, spec: &ColumnSpec, baseline_relative: bool) -> Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("column `{}`: `{cell}` is not numeric", spec.name))?;
    if !v.is_finite() {
        return Err(format!("column `{}`: non-finite value", spec.name));
    }
    let v = match spec.role {
        ColumnRole::Mobility if !baseline_relative => v - 100.0,
        ColumnRole::DiversityIndex if !(0.0..=1.0).contains(&v) => {
            return Err(format!("column `{}`: diversity index outside [0, 1]", spec.name))
        }
        ColumnRole::Mobility => v,
        ColumnRole::Population
        | ColumnRole::Confirmed
        | ColumnRole::Deaths
        | ColumnRole::Recovered
        | ColumnRole::RaceCount => {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(format!("column `{}`: `{cell}` is not a non-negative count", spec.name));
            }
            v
        }
        _ => match spec.scale {
            Scale::Percent => v / 100.0,
            Scale::Share | Scale::Raw => v,
        },
    };
    Ok(Some(v))
}

/// Reads a CSV file according to `schema`.
///
/// Header matching is by name and order-insensitive; extra columns are
/// ignored. Rows whose keys or numeric cells fail to parse are collected in
/// `rejects` with their line numbers. Loading aborts with a schema-mismatch
/// error when rejects exceed `ceil(max_reject_rate × rows)`.
pub fn load_dataset(schema: &DatasetSchema, path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_from_reader(schema, path, file)
}

pub(crate) fn load_from_reader<R: std::io::Read>(schema: &DatasetSchema, path: &Path, reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let positions: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let mut located: Vec<(usize, Option<usize>)> = Vec::with_capacity(schema.columns.len());
    for (ci, col) in schema.columns.iter().enumerate() {
        match positions.get(col.name.as_str()) {
            Some(&p) => located.push((ci, Some(p))),
            None if col.optional && col.role.is_value() => located.push((ci, None)),
            None if col.role == ColumnRole::Ignore || col.role == ColumnRole::State => located.push((ci, None)),
            None => {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: col.name.clone(),
                })
            }
        }
    }
    let find_role = |role: ColumnRole| {
        located
            .iter()
            .find(|(ci, _)| schema.columns[*ci].role == role)
            .and_then(|(_, p)| *p)
    };
    let fips_pos = find_role(ColumnRole::Fips).expect("validated");
    let date_pos = find_role(ColumnRole::Date);
    let value_pos: Vec<(usize, Option<usize>)> = located
        .iter()
        .filter(|(ci, _)| schema.columns[*ci].role.is_value())
        .copied()
        .collect();

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parsed = (|| -> Result<RawRow, String> {
            let fips_cell = record.get(fips_pos).unwrap_or("");
            let fips = normalize_fips(fips_cell).ok_or_else(|| format!("invalid fips `{fips_cell}`"))?;
            let county = CountyKey::from_fips(&fips).map_err(|e| e.to_string())?;
            let date = match date_pos {
                Some(p) => {
                    let cell = record.get(p).unwrap_or("").trim();
                    Some(NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| format!("invalid date `{cell}`"))?)
                }
                None => None,
            };
            let mut values = Vec::with_capacity(value_pos.len());
            for &(ci, pos) in &value_pos {
                let spec = &schema.columns[ci];
                let v = match pos {
                    Some(p) => parse_value(record.get(p).unwrap_or(""), spec, schema.mobility_baseline_relative)?,
                    None => None,
                };
                values.push(v);
            }
            Ok(RawRow {
                line,
                county,
                date,
                values,
            })
        })();
        match parsed {
            Ok(row) => rows.push(row),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }

    let total = rows.len() + rejects.len();
    let allowed = (schema.max_reject_rate * total as f64).ceil() as usize;
    if rejects.len() > allowed {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            detail: format!(
                "{} of {total} rows rejected (first at line {}: {})",
                rejects.len(),
                rejects[0].line,
                rejects[0].reason
            ),
        });
    }
    for r in &rejects {
        log::warn!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    Ok(RawTable {
        schema: schema.clone(),
        path: path.to_path_buf(),
        rows,
        rejects,
    })
}
