//! Panel directory serialization and conversion back to raw tables.
//!
//! Floating-point cells are written with Rust's shortest round-trip
//! formatting, so writing, reading and writing again is byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::schema::{ColumnRole, ColumnSpec, DatasetSchema, RawRow, RawTable, Scale, TableKind};
use super::{Block, CountyKey, FeatureKind, FeaturePanel, FeatureSpec, Flag, FlagReason, PanelParts};
use crate::{Error, Result};

/// Files making up a serialized panel.
pub const PANEL_FILES: [&str; 5] = ["static.csv", "dynamic.csv", "outbreak.csv", "schema.csv", "flags.csv"];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes the panel as five CSV files under `dir` (created if needed).
pub fn write_panel_dir(panel: &FeaturePanel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| Error::csv(p.clone(), e)
    };

    let path = dir.join("static.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["fips".to_string(), "state".into(), "population".into()];
    header.extend(panel.static_features().iter().map(|f| f.name.clone()));
    w.write_record(&header).map_err(csv_err(&path))?;
    for (c, county) in panel.counties().iter().enumerate() {
        let mut rec = vec![
            county.fips().to_string(),
            county.state().into(),
            panel.population(c).to_string(),
        ];
        rec.extend(panel.static_row(c).iter().map(|&v| num(v)));
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("dynamic.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["fips".to_string(), "date".into()];
    header.extend(panel.dynamic_features().iter().map(|f| f.name.clone()));
    w.write_record(&header).map_err(csv_err(&path))?;
    for (c, county) in panel.counties().iter().enumerate() {
        for t in 0..panel.n_days() {
            let mut rec = vec![county.fips().to_string(), panel.date(t).to_string()];
            rec.extend(panel.dynamic_row(c, t).iter().map(|&v| num(v)));
            w.write_record(&rec).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("outbreak.csv");
    let mut w = writer(&path)?;
    w.write_record(["fips", "date", "confirmed", "deaths", "recovered"])
        .map_err(csv_err(&path))?;
    for (c, county) in panel.counties().iter().enumerate() {
        let series: Vec<Vec<f64>> = super::Quantity::ALL.iter().map(|&q| panel.cumulative(c, q)).collect();
        for t in 0..panel.n_days() {
            w.write_record([
                county.fips().to_string(),
                panel.date(t).to_string(),
                num(series[0][t]),
                num(series[1][t]),
                num(series[2][t]),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("schema.csv");
    let mut w = writer(&path)?;
    w.write_record(["block", "name", "unit", "kind", "source"])
        .map_err(csv_err(&path))?;
    for (block, features) in [
        (Block::Static, panel.static_features()),
        (Block::Dynamic, panel.dynamic_features()),
    ] {
        for f in features {
            w.write_record([block.name(), &f.name, &f.unit, f.kind.name(), &f.source])
                .map_err(csv_err(&path))?;
        }
    }
    for q in super::Quantity::ALL {
        let kind = if q == super::Quantity::Recovered && !panel.recovered_available() {
            "unavailable"
        } else {
            "cumulative"
        };
        w.write_record(["outbreak", q.column(), "count", kind, "outbreak"])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("flags.csv");
    let mut w = writer(&path)?;
    w.write_record(["fips", "date", "block", "feature", "reason"])
        .map_err(csv_err(&path))?;
    for f in panel.flags() {
        w.write_record([
            f.fips.as_str(),
            &f.date.map(|d| d.to_string()).unwrap_or_default(),
            f.block.name(),
            &f.feature,
            f.reason.name(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

struct Sheet {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_sheet(path: PathBuf) -> Result<Sheet> {
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let header = r
        .headers()
        .map_err(|e| Error::csv(&path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(&path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(Sheet { path, header, rows })
}

impl Sheet {
    fn err(&self, line: u64, detail: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            detail: detail.into(),
        }
    }

    fn f64_at(&self, line: u64, cell: &str) -> Result<f64> {
        cell.parse()
            .map_err(|_| self.err(line, format!("`{cell}` is not a number")))
    }

    fn date_at(&self, line: u64, cell: &str) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| self.err(line, format!("bad date `{cell}`")))
    }
}

/// Reads a directory written by [`write_panel_dir`].
pub fn read_panel_dir(dir: impl AsRef<Path>) -> Result<FeaturePanel> {
    let dir = dir.as_ref();
    for f in PANEL_FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }

    let schema = read_sheet(dir.join("schema.csv"))?;
    let mut static_features = Vec::new();
    let mut dynamic_features = Vec::new();
    let mut recovered_available = true;
    for (line, row) in &schema.rows {
        if row.len() != 5 {
            return Err(schema.err(*line, "expected 5 columns"));
        }
        let block = Block::parse(&row[0]).ok_or_else(|| schema.err(*line, "unknown block"))?;
        if block == Block::Outbreak {
            if row[1] == "recovered" && row[3] == "unavailable" {
                recovered_available = false;
            }
            continue;
        }
        let spec = FeatureSpec {
            name: row[1].clone(),
            unit: row[2].clone(),
            kind: FeatureKind::parse(&row[3]).ok_or_else(|| schema.err(*line, "unknown feature kind"))?,
            source: row[4].clone(),
        };
        match block {
            Block::Static => static_features.push(spec),
            _ => dynamic_features.push(spec),
        }
    }

    let st = read_sheet(dir.join("static.csv"))?;
    let expect: Vec<String> = ["fips", "state", "population"]
        .into_iter()
        .map(String::from)
        .chain(static_features.iter().map(|f| f.name.clone()))
        .collect();
    if st.header != expect {
        return Err(st.err(1, "header disagrees with schema.csv"));
    }
    let mut counties = Vec::new();
    let mut population = Vec::new();
    let mut static_values = Vec::new();
    for (line, row) in &st.rows {
        counties.push(CountyKey::new(&row[0], &row[1]).map_err(|e| st.err(*line, e.to_string()))?);
        population.push(
            row[2]
                .parse()
                .map_err(|_| st.err(*line, "population is not an integer"))?,
        );
        for cell in &row[3..] {
            static_values.push(st.f64_at(*line, cell)?);
        }
    }
    let n = counties.len();

    let ob = read_sheet(dir.join("outbreak.csv"))?;
    if n == 0 || ob.rows.is_empty() || ob.rows.len() % n != 0 {
        return Err(ob.err(1, "row count is not a multiple of the county count"));
    }
    let days = ob.rows.len() / n;
    let start = ob.date_at(ob.rows[0].0, &ob.rows[0].1[1])?;
    let mut outbreak = Vec::with_capacity(ob.rows.len() * 3);
    for (i, (line, row)) in ob.rows.iter().enumerate() {
        let (c, t) = (i / days, i % days);
        if row[0] != counties[c].fips() || ob.date_at(*line, &row[1])? != start + chrono::Days::new(t as u64) {
            return Err(ob.err(*line, "rows out of county/date order"));
        }
        for cell in &row[2..5] {
            outbreak.push(ob.f64_at(*line, cell)?);
        }
    }

    let dy = read_sheet(dir.join("dynamic.csv"))?;
    if dy.rows.len() != n * days {
        return Err(dy.err(1, "row count disagrees with outbreak.csv"));
    }
    if dy.header.len() != 2 + dynamic_features.len()
        || dy.header[2..].iter().zip(&dynamic_features).any(|(h, f)| *h != f.name)
    {
        return Err(dy.err(1, "header disagrees with schema.csv"));
    }
    let mut dynamic_values = Vec::with_capacity(n * days * dynamic_features.len());
    for (i, (line, row)) in dy.rows.iter().enumerate() {
        let (c, t) = (i / days, i % days);
        if row[0] != counties[c].fips() || dy.date_at(*line, &row[1])? != start + chrono::Days::new(t as u64) {
            return Err(dy.err(*line, "rows out of county/date order"));
        }
        for cell in &row[2..] {
            dynamic_values.push(dy.f64_at(*line, cell)?);
        }
    }

    let fl = read_sheet(dir.join("flags.csv"))?;
    let mut flags = Vec::with_capacity(fl.rows.len());
    for (line, row) in &fl.rows {
        flags.push(Flag {
            fips: row[0].clone(),
            date: if row[1].is_empty() {
                None
            } else {
                Some(fl.date_at(*line, &row[1])?)
            },
            block: Block::parse(&row[2]).ok_or_else(|| fl.err(*line, "unknown block"))?,
            feature: row[3].clone(),
            reason: FlagReason::parse(&row[4]).ok_or_else(|| fl.err(*line, "unknown reason"))?,
        });
    }

    FeaturePanel::from_parts(PanelParts {
        counties,
        population,
        start,
        days,
        static_features,
        dynamic_features,
        recovered_available,
        static_values,
        dynamic_values,
        outbreak,
        flags,
    })
}

fn column(name: &str, role: ColumnRole, unit: &str, scale: Scale) -> ColumnSpec {
    ColumnSpec {
        name: name.to_string(),
        role,
        unit: unit.to_string(),
        scale,
        optional: false,
    }
}

impl FeaturePanel {
    /// Re-expresses the panel as raw tables (one outbreak table plus one
    /// table per feature source). Derived compliance columns are omitted
    /// since they are recomputed from the mobility columns.
    pub fn to_tables(&self) -> Vec<RawTable> {
        let mut tables = Vec::new();
        let days = self.n_days();

        let mut columns = vec![
            column("fips", ColumnRole::Fips, "", Scale::Raw),
            column("date", ColumnRole::Date, "", Scale::Raw),
            column("population", ColumnRole::Population, "persons", Scale::Raw),
            column("confirmed", ColumnRole::Confirmed, "count", Scale::Raw),
            column("deaths", ColumnRole::Deaths, "count", Scale::Raw),
        ];
        if self.recovered_available() {
            columns.push(column("recovered", ColumnRole::Recovered, "count", Scale::Raw));
        }
        let mut rows = Vec::new();
        for (c, county) in self.counties().iter().enumerate() {
            let cum: Vec<Vec<f64>> = super::Quantity::ALL.iter().map(|&q| self.cumulative(c, q)).collect();
            for t in 0..days {
                let mut values = vec![Some(self.population(c) as f64), Some(cum[0][t]), Some(cum[1][t])];
                if self.recovered_available() {
                    values.push(Some(cum[2][t]));
                }
                rows.push(RawRow {
                    line: rows.len() as u64 + 2,
                    county: county.clone(),
                    date: Some(self.date(t)),
                    values,
                });
            }
        }
        tables.push(RawTable {
            schema: DatasetSchema {
                name: "outbreak".into(),
                kind: TableKind::Outbreak,
                mobility_baseline_relative: true,
                max_reject_rate: 0.1,
                columns,
            },
            path: PathBuf::from("outbreak.csv"),
            rows,
            rejects: Vec::new(),
        });

        let mut sources: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, f) in self.static_features().iter().enumerate() {
            sources.entry(&f.source).or_default().push(i);
        }
        for (source, idx) in sources {
            let mut columns = vec![column("fips", ColumnRole::Fips, "", Scale::Raw)];
            for &i in &idx {
                let f = &self.static_features()[i];
                let (role, scale) = match f.kind {
                    FeatureKind::DiversityIndex => (ColumnRole::DiversityIndex, Scale::Raw),
                    FeatureKind::Share => (ColumnRole::Feature, Scale::Share),
                    _ => (ColumnRole::Feature, Scale::Raw),
                };
                columns.push(column(&f.name, role, &f.unit, scale));
            }
            let rows = self
                .counties()
                .iter()
                .enumerate()
                .map(|(c, county)| RawRow {
                    line: c as u64 + 2,
                    county: county.clone(),
                    date: None,
                    values: idx.iter().map(|&i| Some(self.static_row(c)[i])).collect(),
                })
                .collect();
            tables.push(RawTable {
                schema: DatasetSchema {
                    name: source.to_string(),
                    kind: TableKind::Static,
                    mobility_baseline_relative: true,
                    max_reject_rate: 0.1,
                    columns,
                },
                path: PathBuf::from(format!("{source}.csv")),
                rows,
                rejects: Vec::new(),
            });
        }

        let mut sources: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, f) in self.dynamic_features().iter().enumerate() {
            if f.kind != FeatureKind::Compliance {
                sources.entry(&f.source).or_default().push(i);
            }
        }
        for (source, idx) in sources {
            let mut columns = vec![
                column("fips", ColumnRole::Fips, "", Scale::Raw),
                column("date", ColumnRole::Date, "", Scale::Raw),
            ];
            for &i in &idx {
                let f = &self.dynamic_features()[i];
                let (role, scale) = match f.kind {
                    FeatureKind::Mobility => (ColumnRole::Mobility, Scale::Raw),
                    FeatureKind::Share => (ColumnRole::Feature, Scale::Share),
                    _ => (ColumnRole::Feature, Scale::Raw),
                };
                columns.push(column(&f.name, role, &f.unit, scale));
            }
            let mut rows = Vec::new();
            for (c, county) in self.counties().iter().enumerate() {
                for t in 0..days {
                    let dynamic = self.dynamic_row(c, t);
                    rows.push(RawRow {
                        line: rows.len() as u64 + 2,
                        county: county.clone(),
                        date: Some(self.date(t)),
                        values: idx.iter().map(|&i| Some(dynamic[i])).collect(),
                    });
                }
            }
            tables.push(RawTable {
                schema: DatasetSchema {
                    name: source.to_string(),
                    kind: TableKind::Dynamic,
                    mobility_baseline_relative: true,
                    max_reject_rate: 0.1,
                    columns,
                },
                path: PathBuf::from(format!("{source}.csv")),
                rows,
                rejects: Vec::new(),
            });
        }
        tables
    }
}

impl RawTable {
    /// Writes the rows back out as CSV with the schema's column order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = writer(path)?;
        let header: Vec<&str> = self.schema.columns.iter().map(|c| c.name.as_str()).collect();
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for row in &self.rows {
            let mut values = row.values.iter();
            let rec: Vec<String> = self
                .schema
                .columns
                .iter()
                .map(|c| match c.role {
                    ColumnRole::Fips => row.county.fips().to_string(),
                    ColumnRole::State => row.county.state().to_string(),
                    ColumnRole::Date => row.date.map(|d| d.to_string()).unwrap_or_default(),
                    ColumnRole::Ignore => String::new(),
                    _ => values.next().copied().flatten().map(num).unwrap_or_default(),
                })
                .collect();
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Writes `tables` as `<name>.csv` + `<name>.toml` pairs under `dir`.
/// Returns `(schema_path, csv_path)` for each table.
pub fn write_raw_dataset(tables: &[RawTable], dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for t in tables {
        let csv_path = dir.join(format!("{}.csv", t.schema.name));
        let schema_path = dir.join(format!("{}.toml", t.schema.name));
        t.write_csv(&csv_path)?;
        std::fs::write(&schema_path, t.schema.to_toml_string()).map_err(|e| Error::io(&schema_path, e))?;
        out.push((schema_path, csv_path));
    }
    Ok(out)
}
