//! Panel data: county keys, the joined county × date feature panel, and the
//! loaders, builders and generators that produce it.

mod build;
mod io;
pub mod metrics;
pub mod schema;
mod synth;

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

pub use build::{build_panel, PanelBuild, PanelConfig};
pub use metrics::{compliance_score, diversity_index, per_capita, PER_100K};
pub use schema::{load_dataset, ColumnRole, ColumnSpec, DatasetSchema, RawRow, RawTable, Reject, Scale, TableKind};
pub use synth::{generate_synthetic_panel, SynthSpec, COUPLED_FEATURE};

use crate::{Error, Result};

/// State postal codes with their two-digit FIPS prefixes.
pub const STATES: [(&str, &str); 52] = [
    ("AL", "01"),
    ("AK", "02"),
    ("AZ", "04"),
    ("AR", "05"),
    ("CA", "06"),
    ("CO", "08"),
    ("CT", "09"),
    ("DE", "10"),
    ("DC", "11"),
    ("FL", "12"),
    ("GA", "13"),
    ("HI", "15"),
    ("ID", "16"),
    ("IL", "17"),
    ("IN", "18"),
    ("IA", "19"),
    ("KS", "20"),
    ("KY", "21"),
    ("LA", "22"),
    ("ME", "23"),
    ("MD", "24"),
    ("MA", "25"),
    ("MI", "26"),
    ("MN", "27"),
    ("MS", "28"),
    ("MO", "29"),
    ("MT", "30"),
    ("NE", "31"),
    ("NV", "32"),
    ("NH", "33"),
    ("NJ", "34"),
    ("NM", "35"),
    ("NY", "36"),
    ("NC", "37"),
    ("ND", "38"),
    ("OH", "39"),
    ("OK", "40"),
    ("OR", "41"),
    ("PA", "42"),
    ("RI", "44"),
    ("SC", "45"),
    ("SD", "46"),
    ("TN", "47"),
    ("TX", "48"),
    ("UT", "49"),
    ("VT", "50"),
    ("VA", "51"),
    ("WA", "53"),
    ("WV", "54"),
    ("WI", "55"),
    ("WY", "56"),
    ("PR", "72"),
];

pub fn is_known_state(code: &str) -> bool {
    STATES.iter().any(|(s, _)| *s == code)
}

fn state_for_prefix(prefix: &str) -> Option<&'static str> {
    STATES.iter().find(|(_, p)| *p == prefix).map(|(s, _)| *s)
}

/// A US county: five-digit FIPS code plus its state's postal code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountyKey {
    fips: String,
    state: String,
}

impl CountyKey {
    pub fn new(fips: &str, state: &str) -> Result<Self> {
        if fips.len() != 5 || !fips.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::DegenerateInput(format!("invalid fips `{fips}`")));
        }
        if state.len() != 2 || !state.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::DegenerateInput(format!("invalid state code `{state}`")));
        }
        Ok(Self {
            fips: fips.to_string(),
            state: state.to_string(),
        })
    }

    /// Derives the state from the FIPS prefix.
    pub fn from_fips(fips: &str) -> Result<Self> {
        let state = fips
            .get(..2)
            .and_then(state_for_prefix)
            .ok_or_else(|| Error::UnknownState(format!("fips prefix of `{fips}`")))?;
        Self::new(fips, state)
    }

    pub fn fips(&self) -> &str {
        &self.fips
    }

    pub fn state(&self) -> &str {
        &self.state
    }
}

impl fmt::Display for CountyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.fips, self.state)
    }
}

/// How a panel feature was obtained, and the convention its values follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Raw,
    /// Share in [0, 1] (percent sources are converted on load).
    Share,
    /// Mobility percent change from baseline.
    Mobility,
    /// Derived from the six mobility columns.
    Compliance,
    /// Derived from group head counts.
    DiversityIndex,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Raw => "raw",
            FeatureKind::Share => "share",
            FeatureKind::Mobility => "mobility",
            FeatureKind::Compliance => "compliance",
            FeatureKind::DiversityIndex => "diversity_index",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "raw" => FeatureKind::Raw,
            "share" => FeatureKind::Share,
            "mobility" => FeatureKind::Mobility,
            "compliance" => FeatureKind::Compliance,
            "diversity_index" => FeatureKind::DiversityIndex,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub kind: FeatureKind,
    /// Name of the source table.
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Static,
    Dynamic,
    Outbreak,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Static => "static",
            Block::Dynamic => "dynamic",
            Block::Outbreak => "outbreak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "static" => Block::Static,
            "dynamic" => Block::Dynamic,
            "outbreak" => Block::Outbreak,
            _ => return None,
        })
    }
}

/// Why a cell does not hold a raw source value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    /// Missing static value replaced by the state median.
    StateMedian,
    /// Missing static value replaced by the median over all counties.
    GlobalMedian,
    /// Interior gap filled by linear interpolation.
    Interpolated,
    /// Leading or trailing gap filled with the nearest observation.
    EdgeFilled,
    /// Downward revision in a cumulative series raised to the running max.
    RollingMax,
}

impl FlagReason {
    pub fn name(self) -> &'static str {
        match self {
            FlagReason::StateMedian => "state_median",
            FlagReason::GlobalMedian => "global_median",
            FlagReason::Interpolated => "interpolated",
            FlagReason::EdgeFilled => "edge_filled",
            FlagReason::RollingMax => "rolling_max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "state_median" => FlagReason::StateMedian,
            "global_median" => FlagReason::GlobalMedian,
            "interpolated" => FlagReason::Interpolated,
            "edge_filled" => FlagReason::EdgeFilled,
            "rolling_max" => FlagReason::RollingMax,
            _ => return None,
        })
    }
}

/// Provenance flag on one imputed or cleaned cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Flag {
    pub fips: String,
    pub date: Option<NaiveDate>,
    pub block: Block,
    pub feature: String,
    pub reason: FlagReason,
}

/// Outbreak quantities tracked per county and day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Cases,
    Deaths,
    Recovered,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Cases, Quantity::Deaths, Quantity::Recovered];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            Quantity::Cases => "confirmed",
            Quantity::Deaths => "deaths",
            Quantity::Recovered => "recovered",
        }
    }

    fn stem(self) -> &'static str {
        match self {
            Quantity::Cases => "cases",
            Quantity::Deaths => "deaths",
            Quantity::Recovered => "recovered",
        }
    }
}

/// A per-county series derivable from the outbreak block, e.g.
/// `deaths_daily` or `cases_cum_per100k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub quantity: Quantity,
    pub daily: bool,
    pub per_capita: bool,
}

impl Outcome {
    pub fn name(&self) -> String {
        format!(
            "{}_{}{}",
            self.quantity.stem(),
            if self.daily { "daily" } else { "cum" },
            if self.per_capita { "_per100k" } else { "" }
        )
    }

    /// Every derivable outcome, in name order.
    pub fn all() -> Vec<Outcome> {
        let mut v = Vec::new();
        for quantity in Quantity::ALL {
            for daily in [false, true] {
                for per_capita in [false, true] {
                    v.push(Outcome {
                        quantity,
                        daily,
                        per_capita,
                    });
                }
            }
        }
        v.sort_by_key(|o| o.name());
        v
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Outcome::all()
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::UnknownOutcome(s.to_string()))
    }
}

/// Joined county × date panel of static features, dynamic features and
/// cumulative outbreak counts.
///
/// Counties are sorted by FIPS; every block shares that order and the same
/// contiguous date range. Values are finite, cumulative counts are
/// non-decreasing, and imputed or cleaned cells carry a [`Flag`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    counties: Vec<CountyKey>,
    population: Vec<u64>,
    start: NaiveDate,
    days: usize,
    static_features: Vec<FeatureSpec>,
    dynamic_features: Vec<FeatureSpec>,
    recovered_available: bool,
    static_values: Vec<f64>,
    dynamic_values: Vec<f64>,
    outbreak: Vec<f64>,
    flags: Vec<Flag>,
}

/// Raw parts of a [`FeaturePanel`], validated by [`FeaturePanel::from_parts`].
#[derive(Debug, Clone)]
pub struct PanelParts {
    pub counties: Vec<CountyKey>,
    pub population: Vec<u64>,
    pub start: NaiveDate,
    pub days: usize,
    pub static_features: Vec<FeatureSpec>,
    pub dynamic_features: Vec<FeatureSpec>,
    pub recovered_available: bool,
    /// county-major, `counties × static_features`
    pub static_values: Vec<f64>,
    /// `counties × days × dynamic_features`
    pub dynamic_values: Vec<f64>,
    /// `counties × days × 3` cumulative (cases, deaths, recovered)
    pub outbreak: Vec<f64>,
    pub flags: Vec<Flag>,
}

impl FeaturePanel {
    pub fn from_parts(parts: PanelParts) -> Result<Self> {
        let n = parts.counties.len();
        let bad = |m: String| Err(Error::DegenerateInput(format!("panel: {m}")));
        if n == 0 {
            return bad("no counties".into());
        }
        if parts.days == 0 {
            return bad("empty date range".into());
        }
        if parts.counties.windows(2).any(|w| w[0].fips >= w[1].fips) {
            return bad("counties must be sorted by unique fips".into());
        }
        if parts.population.len() != n || parts.population.iter().any(|&p| p == 0) {
            return bad("population must be positive for every county".into());
        }
        let (s, d) = (parts.static_features.len(), parts.dynamic_features.len());
        if parts.static_values.len() != n * s
            || parts.dynamic_values.len() != n * parts.days * d
            || parts.outbreak.len() != n * parts.days * 3
        {
            return bad("block shapes disagree with counties/dates/features".into());
        }
        let mut names = std::collections::HashSet::new();
        for f in parts.static_features.iter().chain(&parts.dynamic_features) {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate feature `{}`", f.name));
            }
        }
        if parts
            .static_values
            .iter()
            .chain(&parts.dynamic_values)
            .chain(&parts.outbreak)
            .any(|v| !v.is_finite())
        {
            return bad("non-finite value".into());
        }
        for c in 0..n {
            for q in 0..3 {
                let mut prev = 0.0;
                for t in 0..parts.days {
                    let v = parts.outbreak[(c * parts.days + t) * 3 + q];
                    if v < prev {
                        return bad(format!("cumulative series not monotone for {}", parts.counties[c].fips));
                    }
                    prev = v;
                }
            }
        }
        let mut flags = parts.flags;
        flags.sort();
        flags.dedup();
        Ok(Self {
            counties: parts.counties,
            population: parts.population,
            start: parts.start,
            days: parts.days,
            static_features: parts.static_features,
            dynamic_features: parts.dynamic_features,
            recovered_available: parts.recovered_available,
            static_values: parts.static_values,
            dynamic_values: parts.dynamic_values,
            outbreak: parts.outbreak,
            flags,
        })
    }

    pub fn into_parts(self) -> PanelParts {
        PanelParts {
            counties: self.counties,
            population: self.population,
            start: self.start,
            days: self.days,
            static_features: self.static_features,
            dynamic_features: self.dynamic_features,
            recovered_available: self.recovered_available,
            static_values: self.static_values,
            dynamic_values: self.dynamic_values,
            outbreak: self.outbreak,
            flags: self.flags,
        }
    }

    pub fn counties(&self) -> &[CountyKey] {
        &self.counties
    }

    pub fn n_counties(&self) -> usize {
        self.counties.len()
    }

    pub fn n_days(&self) -> usize {
        self.days
    }

    pub fn population(&self, county: usize) -> u64 {
        self.population[county]
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.days - 1)
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Days::new(day as u64)
    }

    /// Day index of `date`, if inside the panel range.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.days).then_some(d as usize)
    }

    pub fn static_features(&self) -> &[FeatureSpec] {
        &self.static_features
    }

    pub fn dynamic_features(&self) -> &[FeatureSpec] {
        &self.dynamic_features
    }

    pub fn recovered_available(&self) -> bool {
        self.recovered_available
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    pub fn static_row(&self, county: usize) -> &[f64] {
        let s = self.static_features.len();
        &self.static_values[county * s..(county + 1) * s]
    }

    pub fn static_column(&self, feature: usize) -> Vec<f64> {
        (0..self.n_counties()).map(|c| self.static_row(c)[feature]).collect()
    }

    /// Dynamic feature vector of one county on one day.
    pub fn dynamic_row(&self, county: usize, day: usize) -> &[f64] {
        let d = self.dynamic_features.len();
        let off = (county * self.days + day) * d;
        &self.dynamic_values[off..off + d]
    }

    pub fn dynamic_series(&self, county: usize, feature: usize) -> Vec<f64> {
        (0..self.days).map(|t| self.dynamic_row(county, t)[feature]).collect()
    }

    pub fn cumulative(&self, county: usize, quantity: Quantity) -> Vec<f64> {
        (0..self.days)
            .map(|t| self.outbreak[(county * self.days + t) * 3 + quantity.index()])
            .collect()
    }

    /// Derived outcome series over the full date range.
    ///
    /// Daily series are first differences of the cumulative series; the
    /// first day has no predecessor and is reported as 0.
    pub fn outcome_series(&self, county: usize, outcome: Outcome) -> Vec<f64> {
        let cum = self.cumulative(county, outcome.quantity);
        let mut series: Vec<f64> = if outcome.daily {
            std::iter::once(0.0)
                .chain(cum.windows(2).map(|w| w[1] - w[0]))
                .collect()
        } else {
            cum
        };
        if outcome.per_capita {
            series = per_capita(&series, self.population[county], PER_100K).expect("population is positive");
        }
        series
    }

    pub fn county_index(&self, fips: &str) -> Option<usize> {
        self.counties.binary_search_by(|c| c.fips.as_str().cmp(fips)).ok()
    }

    /// Panel restricted to the listed counties (by index, any order).
    pub fn select_counties(&self, keep: &[usize]) -> Result<Self> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let (s, d, days) = (self.static_features.len(), self.dynamic_features.len(), self.days);
        let mut parts = PanelParts {
            counties: Vec::new(),
            population: Vec::new(),
            start: self.start,
            days,
            static_features: self.static_features.clone(),
            dynamic_features: self.dynamic_features.clone(),
            recovered_available: self.recovered_available,
            static_values: Vec::new(),
            dynamic_values: Vec::new(),
            outbreak: Vec::new(),
            flags: Vec::new(),
        };
        for &c in &keep {
            parts.counties.push(self.counties[c].clone());
            parts.population.push(self.population[c]);
            parts
                .static_values
                .extend_from_slice(&self.static_values[c * s..(c + 1) * s]);
            parts
                .dynamic_values
                .extend_from_slice(&self.dynamic_values[c * days * d..(c + 1) * days * d]);
            parts
                .outbreak
                .extend_from_slice(&self.outbreak[c * days * 3..(c + 1) * days * 3]);
        }
        let kept: std::collections::HashSet<&str> = parts.counties.iter().map(|c| c.fips.as_str()).collect();
        parts.flags = self
            .flags
            .iter()
            .filter(|f| kept.contains(f.fips.as_str()))
            .cloned()
            .collect();
        Self::from_parts(parts)
    }

    /// Panel restricted to the day range `[first, last]` (inclusive indices).
    pub fn slice_days(&self, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= self.days {
            return Err(Error::InvalidConfig(format!(
                "day range {first}..={last} outside panel of {} days",
                self.days
            )));
        }
        let (d, days, len) = (self.dynamic_features.len(), self.days, last - first + 1);
        let mut dynamic_values = Vec::with_capacity(self.n_counties() * len * d);
        let mut outbreak = Vec::with_capacity(self.n_counties() * len * 3);
        for c in 0..self.n_counties() {
            dynamic_values.extend_from_slice(&self.dynamic_values[(c * days + first) * d..(c * days + last + 1) * d]);
            outbreak.extend_from_slice(&self.outbreak[(c * days + first) * 3..(c * days + last + 1) * 3]);
        }
        let (from, to) = (self.date(first), self.date(last));
        let flags = self
            .flags
            .iter()
            .filter(|f| f.date.is_none_or(|dt| dt >= from && dt <= to))
            .cloned()
            .collect();
        Self::from_parts(PanelParts {
            counties: self.counties.clone(),
            population: self.population.clone(),
            start: from,
            days: len,
            static_features: self.static_features.clone(),
            dynamic_features: self.dynamic_features.clone(),
            recovered_available: self.recovered_available,
            static_values: self.static_values.clone(),
            dynamic_values,
            outbreak,
            flags,
        })
    }

    /// True when the data blocks (everything except provenance flags) agree.
    pub fn same_data(&self, other: &Self) -> bool {
        self.counties == other.counties
            && self.population == other.population
            && self.start == other.start
            && self.days == other.days
            && self.static_features == other.static_features
            && self.dynamic_features == other.dynamic_features
            && self.recovered_available == other.recovered_available
            && self.static_values == other.static_values
            && self.dynamic_values == other.dynamic_values
            && self.outbreak == other.outbreak
    }
}

pub use io::{read_panel_dir, write_panel_dir, write_raw_dataset, PANEL_FILES};
