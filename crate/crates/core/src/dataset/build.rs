//! Joining raw tables into a [`FeaturePanel`].

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::metrics::{compliance_score, diversity_index};
use super::schema::{ColumnRole, RawTable, Scale, TableKind};
use super::{Block, CountyKey, FeatureKind, FeaturePanel, FeatureSpec, Flag, FlagReason, PanelParts};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelConfig {
    /// Longest run of missing days bridged by interpolation or edge filling.
    pub max_gap_days: usize,
    /// First panel date; defaults to the earliest outbreak date.
    pub start: Option<NaiveDate>,
    /// Last panel date; defaults to the latest outbreak date.
    pub end: Option<NaiveDate>,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            max_gap_days: 3,
            start: None,
            end: None,
        }
    }
}

/// Result of [`build_panel`]: the panel and a log of dropped counties.
#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: FeaturePanel,
    pub log: Vec<String>,
}

type DatedValues = BTreeMap<NaiveDate, Vec<Option<f64>>>;

struct StaticSource {
    features: Vec<FeatureSpec>,
    rows: BTreeMap<String, Vec<Option<f64>>>,
    population: BTreeMap<String, u64>,
}

struct DynamicSource {
    name: String,
    features: Vec<FeatureSpec>,
    mobility: Vec<usize>,
    rows: BTreeMap<String, DatedValues>,
}

fn duplicate(table: &RawTable, line: u64, what: &str) -> Error {
    Error::SchemaMismatch {
        path: table.path.clone(),
        detail: format!("line {line}: duplicate row for {what}"),
    }
}

fn feature_kind(scale: Scale) -> FeatureKind {
    match scale {
        Scale::Raw => FeatureKind::Raw,
        Scale::Share | Scale::Percent => FeatureKind::Share,
    }
}

fn static_source(table: &RawTable) -> Result<StaticSource> {
    let schema = &table.schema;
    let value_cols: Vec<_> = schema.value_columns().collect();
    let mut features = Vec::new();
    let mut feature_idx = Vec::new();
    let mut race_idx = Vec::new();
    let mut pop_idx = None;
    for (i, col) in value_cols.iter().enumerate() {
        match col.role {
            ColumnRole::Feature | ColumnRole::DiversityIndex => {
                let kind = if col.role == ColumnRole::DiversityIndex {
                    FeatureKind::DiversityIndex
                } else {
                    feature_kind(col.scale)
                };
                features.push(FeatureSpec {
                    name: col.name.clone(),
                    unit: col.unit.clone(),
                    kind,
                    source: schema.name.clone(),
                });
                feature_idx.push(i);
            }
            ColumnRole::RaceCount => race_idx.push(i),
            ColumnRole::Population => pop_idx = Some(i),
            _ => {}
        }
    }
    if !race_idx.is_empty() {
        features.push(FeatureSpec {
            name: "diversity_index".into(),
            unit: "probability".into(),
            kind: FeatureKind::DiversityIndex,
            source: schema.name.clone(),
        });
        for &i in &race_idx {
            features.push(FeatureSpec {
                name: format!("{}_share", value_cols[i].name),
                unit: "share of population".into(),
                kind: FeatureKind::Share,
                source: schema.name.clone(),
            });
        }
    }

    let mut rows = BTreeMap::new();
    let mut population = BTreeMap::new();
    for row in &table.rows {
        let mut values: Vec<Option<f64>> = feature_idx.iter().map(|&i| row.values[i]).collect();
        if !race_idx.is_empty() {
            let counts: Option<Vec<f64>> = race_idx.iter().map(|&i| row.values[i]).collect();
            match counts {
                Some(counts) => {
                    let total: f64 = counts.iter().sum();
                    values.push(diversity_index(&counts).ok());
                    values.extend(counts.iter().map(|&n| (total > 0.0).then(|| n / total)));
                }
                None => values.extend(std::iter::repeat_n(None, race_idx.len() + 1)),
            }
        }
        let fips = row.county.fips().to_string();
        if let Some(p) = pop_idx.and_then(|i| row.values[i]) {
            if p > 0.0 {
                population.insert(fips.clone(), p as u64);
            }
        }
        if rows.insert(fips, values).is_some() {
            return Err(duplicate(table, row.line, row.county.fips()));
        }
    }
    Ok(StaticSource {
        features,
        rows,
        population,
    })
}

fn dynamic_source(table: &RawTable) -> Result<DynamicSource> {
    let schema = &table.schema;
    let mut features = Vec::new();
    let mut idx = Vec::new();
    let mut mobility = Vec::new();
    for (i, col) in schema.value_columns().enumerate() {
        let kind = match col.role {
            ColumnRole::Feature => feature_kind(col.scale),
            ColumnRole::Mobility => FeatureKind::Mobility,
            _ => continue,
        };
        if kind == FeatureKind::Mobility {
            mobility.push(features.len());
        }
        features.push(FeatureSpec {
            name: col.name.clone(),
            unit: if col.unit.is_empty() && kind == FeatureKind::Mobility {
                "percent change from baseline".into()
            } else {
                col.unit.clone()
            },
            kind,
            source: schema.name.clone(),
        });
        idx.push(i);
    }
    if mobility.len() == 6 {
        features.push(FeatureSpec {
            name: "compliance".into(),
            unit: "score".into(),
            kind: FeatureKind::Compliance,
            source: schema.name.clone(),
        });
    } else if !mobility.is_empty() {
        log::warn!(
            "{}: {} mobility columns; compliance needs exactly six",
            schema.name,
            mobility.len()
        );
    }
    let mut rows: BTreeMap<String, DatedValues> = BTreeMap::new();
    for row in &table.rows {
        let date = row.date.expect("dynamic rows are dated");
        let values = idx.iter().map(|&i| row.values[i]).collect();
        let entry = rows.entry(row.county.fips().to_string()).or_default();
        if entry.insert(date, values).is_some() {
            return Err(duplicate(table, row.line, row.county.fips()));
        }
    }
    Ok(DynamicSource {
        name: schema.name.clone(),
        features,
        mobility,
        rows,
    })
}

/// Fills missing entries in place. Returns the filled positions, or the
/// length of the first run that exceeds `max_gap`.
fn fill_gaps(series: &mut [Option<f64>], max_gap: usize) -> Result<Vec<(usize, FlagReason)>, usize> {
    let observed: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        return Err(series.len());
    };
    let mut filled = Vec::new();
    if first > max_gap {
        return Err(first);
    }
    if series.len() - 1 - last > max_gap {
        return Err(series.len() - 1 - last);
    }
    for i in 0..first {
        series[i] = series[first];
        filled.push((i, FlagReason::EdgeFilled));
    }
    for i in last + 1..series.len() {
        series[i] = series[last];
        filled.push((i, FlagReason::EdgeFilled));
    }
    for w in observed.windows(2) {
        let (a, b) = (w[0], w[1]);
        let gap = b - a - 1;
        if gap == 0 {
            continue;
        }
        if gap > max_gap {
            return Err(gap);
        }
        let (va, vb) = (series[a].unwrap(), series[b].unwrap());
        for k in a + 1..b {
            let frac = (k - a) as f64 / (b - a) as f64;
            series[k] = Some(va + (vb - va) * frac);
            filled.push((k, FlagReason::Interpolated));
        }
    }
    filled.sort_unstable();
    Ok(filled)
}

/// Raises downward revisions to the running maximum; returns raised indices.
pub(crate) fn rolling_max(series: &mut [f64]) -> Vec<usize> {
    let mut raised = Vec::new();
    let mut max = f64::NEG_INFINITY;
    for (i, v) in series.iter_mut().enumerate() {
        if *v < max {
            *v = max;
            raised.push(i);
        } else {
            max = *v;
        }
    }
    raised
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

struct CountySeries {
    outbreak: Vec<[f64; 3]>,
    dynamic: Vec<Vec<f64>>,
    flags: Vec<Flag>,
}

/// Joins raw tables into a panel.
///
/// Counties are inner-joined across every table; counties without a
/// positive population are dropped. Cumulative counts are cleaned to their
/// running maximum, dated gaps up to `max_gap_days` are interpolated (or
/// edge-filled) and longer gaps drop the county. Missing static values take
/// the state median of the retained counties. Features are ordered by name
/// and counties by FIPS, so the result does not depend on table order.
pub fn build_panel(tables: &[RawTable], config: &PanelConfig) -> Result<PanelBuild> {
    let mut tables: Vec<&RawTable> = tables.iter().collect();
    tables.sort_by(|a, b| (a.schema.kind, &a.schema.name).cmp(&(b.schema.kind, &b.schema.name)));
    let of_kind = |k: TableKind| tables.iter().copied().filter(move |t| t.schema.kind == k);
    if of_kind(TableKind::Outbreak).next().is_none() {
        return Err(Error::InvalidConfig("no outbreak table".into()));
    }
    if of_kind(TableKind::Static).next().is_none() {
        return Err(Error::InvalidConfig("no static table".into()));
    }
    let mut log = Vec::new();

    // outbreak: fips -> date -> [confirmed, deaths, recovered]
    let mut outbreak: BTreeMap<String, BTreeMap<NaiveDate, [Option<f64>; 3]>> = BTreeMap::new();
    let mut population: BTreeMap<String, u64> = BTreeMap::new();
    let mut keys: BTreeMap<String, CountyKey> = BTreeMap::new();
    let mut recovered_available = false;
    for table in of_kind(TableKind::Outbreak) {
        let ci = table.value_index_of_role(ColumnRole::Confirmed).expect("validated");
        let di = table.value_index_of_role(ColumnRole::Deaths).expect("validated");
        let ri = table.value_index_of_role(ColumnRole::Recovered);
        let pi = table.value_index_of_role(ColumnRole::Population);
        recovered_available |= ri.is_some();
        for row in &table.rows {
            let fips = row.county.fips().to_string();
            keys.entry(fips.clone()).or_insert_with(|| row.county.clone());
            let cell = [
                row.values[ci],
                row.values[di],
                ri.and_then(|i| row.values[i])
                    .or(if ri.is_none() { Some(0.0) } else { None }),
            ];
            let date = row.date.expect("outbreak rows are dated");
            if outbreak.entry(fips.clone()).or_default().insert(date, cell).is_some() {
                return Err(duplicate(table, row.line, &fips));
            }
            if let Some(p) = pi.and_then(|i| row.values[i]) {
                if p > 0.0 {
                    population.entry(fips).or_insert(p as u64);
                }
            }
        }
    }

    let all_dates: BTreeSet<NaiveDate> = outbreak.values().flat_map(|m| m.keys().copied()).collect();
    let start = config
        .start
        .or_else(|| all_dates.first().copied())
        .ok_or(Error::EmptyJoin)?;
    let end = config
        .end
        .or_else(|| all_dates.last().copied())
        .ok_or(Error::EmptyJoin)?;
    if end < start {
        return Err(Error::InvalidConfig(format!("panel end {end} precedes start {start}")));
    }
    let days = (end - start).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..days).map(|d| start + Days::new(d as u64)).collect();

    let statics: Vec<StaticSource> = of_kind(TableKind::Static).map(static_source).collect::<Result<_>>()?;
    let dynamics: Vec<DynamicSource> = of_kind(TableKind::Dynamic).map(dynamic_source).collect::<Result<_>>()?;
    for s in &statics {
        for (fips, &p) in &s.population {
            population.entry(fips.clone()).or_insert(p);
        }
    }

    // inner join on county
    let mut candidates: Vec<String> = Vec::new();
    for fips in outbreak.keys() {
        if let Some(missing) = statics.iter().position(|s| !s.rows.contains_key(fips)) {
            log.push(format!("{fips}: dropped, absent from static table #{missing}"));
            continue;
        }
        if let Some(d) = dynamics.iter().find(|d| !d.rows.contains_key(fips)) {
            log.push(format!("{fips}: dropped, absent from dynamic table `{}`", d.name));
            continue;
        }
        if !population.contains_key(fips) {
            log.push(format!("{fips}: dropped, missing population"));
            continue;
        }
        candidates.push(fips.clone());
    }

    let mut static_features: Vec<FeatureSpec> = statics.iter().flat_map(|s| s.features.clone()).collect();
    let mut dynamic_features: Vec<FeatureSpec> = dynamics.iter().flat_map(|d| d.features.clone()).collect();

    // dated blocks per county
    let mut retained: Vec<(String, CountySeries)> = Vec::new();
    'county: for fips in candidates {
        let mut flags = Vec::new();
        let by_date = &outbreak[&fips];
        let mut cum = vec![[0.0; 3]; days];
        for q in 0..3 {
            let mut series: Vec<Option<f64>> = dates.iter().map(|d| by_date.get(d).and_then(|c| c[q])).collect();
            let name = super::Quantity::ALL[q].column();
            match fill_gaps(&mut series, config.max_gap_days) {
                Ok(filled) => flags.extend(filled.into_iter().map(|(t, reason)| Flag {
                    fips: fips.clone(),
                    date: Some(dates[t]),
                    block: Block::Outbreak,
                    feature: name.into(),
                    reason,
                })),
                Err(gap) => {
                    log.push(format!("{fips}: dropped, {gap}-day gap in `{name}`"));
                    continue 'county;
                }
            }
            let mut values: Vec<f64> = series.into_iter().map(Option::unwrap).collect();
            for t in rolling_max(&mut values) {
                flags.push(Flag {
                    fips: fips.clone(),
                    date: Some(dates[t]),
                    block: Block::Outbreak,
                    feature: name.into(),
                    reason: FlagReason::RollingMax,
                });
            }
            for (t, v) in values.into_iter().enumerate() {
                cum[t][q] = v;
            }
        }

        let mut dynamic = vec![Vec::with_capacity(dynamic_features.len()); days];
        for src in &dynamics {
            let rows = &src.rows[&fips];
            let raw_count = src.features.len() - usize::from(src.mobility.len() == 6);
            let mut columns = Vec::with_capacity(raw_count);
            for f in 0..raw_count {
                let mut series: Vec<Option<f64>> = dates.iter().map(|d| rows.get(d).and_then(|v| v[f])).collect();
                let name = &src.features[f].name;
                match fill_gaps(&mut series, config.max_gap_days) {
                    Ok(filled) => flags.extend(filled.into_iter().map(|(t, reason)| Flag {
                        fips: fips.clone(),
                        date: Some(dates[t]),
                        block: Block::Dynamic,
                        feature: name.clone(),
                        reason,
                    })),
                    Err(gap) => {
                        log.push(format!("{fips}: dropped, {gap}-day gap in `{name}`"));
                        continue 'county;
                    }
                }
                columns.push(series.into_iter().map(Option::unwrap).collect::<Vec<f64>>());
            }
            for t in 0..days {
                dynamic[t].extend(columns.iter().map(|c| c[t]));
                if src.mobility.len() == 6 {
                    let m: Vec<f64> = src.mobility.iter().map(|&i| columns[i][t]).collect();
                    dynamic[t].push(compliance_score(&m)?);
                }
            }
        }
        retained.push((
            fips,
            CountySeries {
                outbreak: cum,
                dynamic,
                flags,
            },
        ));
    }
    if retained.is_empty() {
        return Err(Error::EmptyJoin);
    }

    // static block with state-median imputation over retained counties
    let mut static_raw: Vec<Vec<Option<f64>>> = retained
        .iter()
        .map(|(fips, _)| statics.iter().flat_map(|s| s.rows[fips].iter().copied()).collect())
        .collect();
    let mut static_flags = Vec::new();
    for f in 0..static_features.len() {
        let mut by_state: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut global = Vec::new();
        for (c, (fips, _)) in retained.iter().enumerate() {
            if let Some(v) = static_raw[c][f] {
                by_state.entry(keys[fips].state()).or_default().push(v);
                global.push(v);
            }
        }
        let global_median = median(&mut global);
        let state_medians: BTreeMap<&str, f64> = by_state
            .into_iter()
            .filter_map(|(s, mut v)| median(&mut v).map(|m| (s, m)))
            .collect();
        for (c, (fips, _)) in retained.iter().enumerate() {
            if static_raw[c][f].is_some() {
                continue;
            }
            let (value, reason) = match state_medians.get(keys[fips].state()) {
                Some(&m) => (m, FlagReason::StateMedian),
                None => match global_median {
                    Some(m) => (m, FlagReason::GlobalMedian),
                    None => {
                        return Err(Error::DegenerateInput(format!(
                            "static feature `{}` has no observed values",
                            static_features[f].name
                        )))
                    }
                },
            };
            static_raw[c][f] = Some(value);
            static_flags.push(Flag {
                fips: fips.clone(),
                date: None,
                block: Block::Static,
                feature: static_features[f].name.clone(),
                reason,
            });
        }
    }

    // canonical feature order
    let static_order = sorted_order(&static_features)?;
    let dynamic_order = sorted_order(&dynamic_features)?;
    static_features = static_order.iter().map(|&i| static_features[i].clone()).collect();
    dynamic_features = dynamic_order.iter().map(|&i| dynamic_features[i].clone()).collect();

    let n = retained.len();
    let mut parts = PanelParts {
        counties: Vec::with_capacity(n),
        population: Vec::with_capacity(n),
        start,
        days,
        static_features,
        dynamic_features,
        recovered_available,
        static_values: Vec::new(),
        dynamic_values: Vec::new(),
        outbreak: Vec::new(),
        flags: static_flags,
    };
    for (c, (fips, series)) in retained.into_iter().enumerate() {
        parts.counties.push(keys[&fips].clone());
        parts.population.push(population[&fips]);
        parts
            .static_values
            .extend(static_order.iter().map(|&i| static_raw[c][i].unwrap()));
        for t in 0..days {
            parts
                .dynamic_values
                .extend(dynamic_order.iter().map(|&i| series.dynamic[t][i]));
            parts.outbreak.extend_from_slice(&series.outbreak[t]);
        }
        parts.flags.extend(series.flags);
    }
    Ok(PanelBuild {
        panel: FeaturePanel::from_parts(parts)?,
        log,
    })
}

fn sorted_order(features: &[FeatureSpec]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].name.cmp(&features[b].name));
    if let Some(w) = order.windows(2).find(|w| features[w[0]].name == features[w[1]].name) {
        return Err(Error::InvalidConfig(format!(
            "feature `{}` provided by more than one column",
            features[w[0]].name
        )));
    }
    Ok(order)
}
