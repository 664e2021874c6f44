use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;

use super::{all_measures, CorrelationResult, Method, DEFAULT_HIST_BINS, DEFAULT_MI_BINS};
use crate::dataset::{FeaturePanel, Outcome};
use crate::pca::{csv_field, write_file};
use crate::{Error, Result};

/// One (feature, outcome) pair with a result per method.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub feature: String,
    pub outcome: String,
    /// In [`Method::ALL`] order; `None` where the measure is undefined.
    pub results: Vec<(Method, Option<CorrelationResult<f64>>)>,
}

impl ReportRow {
    pub fn get(&self, method: Method) -> Option<&CorrelationResult<f64>> {
        self.results
            .iter()
            .find(|(m, _)| *m == method)
            .and_then(|(_, r)| r.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub report_date: NaiveDate,
    /// Sorted by (outcome, feature).
    pub rows: Vec<ReportRow>,
}

impl CorrelationReport {
    pub fn row(&self, feature: &str, outcome: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.feature == feature && r.outcome == outcome)
    }

    /// CSV with columns feature, outcome, method, statistic, p_value, n.
    /// Undefined measures leave statistic empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,outcome,method,statistic,p_value,n\n");
        for row in &self.rows {
            for (method, res) in &row.results {
                let (stat, p, n) = match res {
                    Some(r) => (
                        r.statistic.to_string(),
                        r.p_value.map(|p| p.to_string()).unwrap_or_default(),
                        r.n.to_string(),
                    ),
                    None => (String::new(), String::new(), String::new()),
                };
                out.push_str(&format!(
                    "{},{},{},{stat},{p},{n}\n",
                    csv_field(&row.feature),
                    csv_field(&row.outcome),
                    method.name()
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Pairing date; defaults to the panel's last date.
    pub report_date: Option<NaiveDate>,
    pub hist_bins: usize,
    pub mi_bins: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            report_date: None,
            hist_bins: DEFAULT_HIST_BINS,
            mi_bins: DEFAULT_MI_BINS,
        }
    }
}

/// Correlates every static feature with every outcome across counties,
/// pairing each county's feature value with its outcome on the report date.
pub fn correlate_panel(
    panel: &FeaturePanel,
    outcomes: &[Outcome],
    options: &ReportOptions,
) -> Result<CorrelationReport> {
    let m = panel.n_counties();
    if m < 3 {
        return Err(Error::TooShort { needed: 3, got: m });
    }
    let report_date = options.report_date.unwrap_or_else(|| panel.end_date());
    let day = panel
        .day_index(report_date)
        .ok_or_else(|| Error::InvalidConfig(format!("report date {report_date} outside panel range")))?;
    for o in outcomes {
        if o.quantity == crate::dataset::Quantity::Recovered && !panel.recovered_available() {
            return Err(Error::UnknownOutcome(format!("{o} (no recovered series in panel)")));
        }
    }
    let targets: Vec<(String, Vec<f64>)> = outcomes
        .iter()
        .map(|&o| {
            let y = (0..m).map(|c| panel.outcome_series(c, o)[day]).collect();
            (o.name(), y)
        })
        .collect();
    let features: Vec<(String, Vec<f64>)> = panel
        .static_features()
        .iter()
        .enumerate()
        .map(|(j, f)| (f.name.clone(), panel.static_column(j)))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|o| (0..features.len()).map(move |f| (o, f)))
        .collect();
    let mut rows = pairs
        .par_iter()
        .map(|&(o, f)| {
            let results = all_measures(&features[f].1, &targets[o].1, options.hist_bins, options.mi_bins)?;
            Ok(ReportRow {
                feature: features[f].0.clone(),
                outcome: targets[o].0.clone(),
                results,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (&a.outcome, &a.feature).cmp(&(&b.outcome, &b.feature)));
    Ok(CorrelationReport { report_date, rows })
}
