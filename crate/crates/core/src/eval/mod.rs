//! Windowing, error metrics and backtests.
//!
//! Macro RMSE is the equal-weight mean over counties of each county's own
//! RMSE; micro RMSE pools every (county, day) cell. The average daily RMSE
//! takes the cross-county RMSE of each forecast lead day and averages
//! over days.

mod backtest;
mod metrics;

use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use backtest::{backtest, backtest_folds, chronological_folds, EvalReport, ModelReport, ModelSpec, TraceRow};
pub use metrics::{
    aggregate_state, cumulative_to_daily, ensemble_ci, ensemble_ci_models, rmse_daily, rmse_macro_micro, CiPoint,
};

use crate::dataset::{FeaturePanel, Outcome, Quantity};
use crate::forecast::TrainingWindow;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    NewDailyDeaths,
    NewDailyCases,
    CumulativeDeathsPer100k,
}

impl Objective {
    pub const ALL: [Objective; 3] = [
        Objective::NewDailyDeaths,
        Objective::NewDailyCases,
        Objective::CumulativeDeathsPer100k,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::NewDailyDeaths => "new_daily_deaths",
            Objective::NewDailyCases => "new_daily_cases",
            Objective::CumulativeDeathsPer100k => "cumulative_deaths_per_100k",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            Objective::NewDailyDeaths => Outcome {
                quantity: Quantity::Deaths,
                daily: true,
                per_capita: false,
            },
            Objective::NewDailyCases => Outcome {
                quantity: Quantity::Cases,
                daily: true,
                per_capita: false,
            },
            Objective::CumulativeDeathsPer100k => Outcome {
                quantity: Quantity::Deaths,
                daily: false,
                per_capita: true,
            },
        }
    }

    /// First day with a meaningful value: daily series have no day-0 difference.
    pub fn first_day(self) -> usize {
        usize::from(self.outcome().daily)
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::UnknownOutcome(s.to_string()))
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastTask {
    pub objective: Objective,
    pub w_in: usize,
    pub w_out: usize,
    /// Inclusive test period.
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    /// Counties left out of every split, by FIPS.
    #[serde(default)]
    pub exclude_counties: Vec<String>,
    /// States whose counties are left out, by postal code.
    #[serde(default)]
    pub exclude_states: Vec<String>,
}

impl ForecastTask {
    /// Task whose test period is the final `test_days` days of the panel.
    pub fn last_days(
        panel: &FeaturePanel,
        objective: Objective,
        w_in: usize,
        w_out: usize,
        test_days: usize,
    ) -> Result<Self> {
        if test_days == 0 || test_days > panel.n_days() {
            return Err(Error::InvalidConfig("test_days outside panel".into()));
        }
        Ok(Self {
            objective,
            w_in,
            w_out,
            test_start: panel.date(panel.n_days() - test_days),
            test_end: panel.end_date(),
            exclude_counties: Vec::new(),
            exclude_states: Vec::new(),
        })
    }

    pub fn is_excluded(&self, fips: &str, state: &str) -> bool {
        self.exclude_counties.iter().any(|c| c == fips) || self.exclude_states.iter().any(|s| s == state)
    }

    /// The panel restricted to counties not excluded by the task.
    pub fn filter_panel(&self, panel: &FeaturePanel) -> Result<FeaturePanel> {
        if self.exclude_counties.is_empty() && self.exclude_states.is_empty() {
            return Ok(panel.clone());
        }
        for s in &self.exclude_states {
            if !crate::dataset::is_known_state(s) {
                return Err(Error::UnknownState(s.clone()));
            }
        }
        let keep: Vec<usize> = panel
            .counties()
            .iter()
            .enumerate()
            .filter(|(_, k)| !self.is_excluded(k.fips(), k.state()))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptySplit("exclusion removes every county".into()));
        }
        panel.select_counties(&keep)
    }
}

/// Chronological split of double windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<TrainingWindow<f64>>,
    pub val: Vec<TrainingWindow<f64>>,
    pub test: Vec<TrainingWindow<f64>>,
    /// Day index of the first test day.
    pub test_start: usize,
    pub test_end: usize,
}

impl Splits {
    /// Latest day touched by any train or validation window, inputs or targets.
    pub fn last_fit_day(&self) -> Option<usize> {
        self.train
            .iter()
            .chain(&self.val)
            .map(|w| w.last_input_day() + w.targets.len())
            .max()
    }

    /// Earliest test target day.
    pub fn first_test_target(&self) -> Option<usize> {
        self.test.iter().map(|w| w.last_input_day() + 1).min()
    }

    /// Fails if any training or validation day reaches a test target day.
    pub fn check_no_leakage(&self) -> Result<()> {
        if let (Some(a), Some(b)) = (self.last_fit_day(), self.first_test_target()) {
            if a >= b {
                return Err(Error::InvalidConfig(format!(
                    "window leakage: fit data reaches day {a}, test targets start at day {b}"
                )));
            }
        }
        Ok(())
    }
}

fn window(
    panel: &FeaturePanel,
    series: &[f64],
    county: usize,
    start: usize,
    w_in: usize,
    w_out: usize,
) -> TrainingWindow<f64> {
    let mut dynamic = Vec::with_capacity(w_in * panel.dynamic_features().len());
    for t in start..start + w_in {
        dynamic.extend_from_slice(panel.dynamic_row(county, t));
    }
    TrainingWindow {
        county,
        start,
        dynamic,
        history: series[start..start + w_in].to_vec(),
        statics: panel.static_row(county).to_vec(),
        targets: series[start + w_in..start + w_in + w_out].to_vec(),
    }
}

/// One input window per county ending on the panel's last day, without
/// targets. These feed forecasts past the end of the data.
pub fn latest_windows(panel: &FeaturePanel, objective: Objective, w_in: usize) -> Result<Vec<TrainingWindow<f64>>> {
    let needed = objective.first_day() + w_in;
    if panel.n_days() < needed {
        return Err(Error::TooShort {
            needed,
            got: panel.n_days(),
        });
    }
    let start = panel.n_days() - w_in;
    Ok((0..panel.n_counties())
        .map(|c| {
            let series = panel.outcome_series(c, objective.outcome());
            window(panel, &series, c, start, w_in, 0)
        })
        .collect())
}

/// Builds train/validation/test windows on an already filtered panel.
///
/// Test windows have all `w_out` target days inside the test period and
/// slide by one day. Pre-test windows end before the test period; those
/// with the latest `validation_fraction` of start days form the
/// validation split.
pub fn make_windows(panel: &FeaturePanel, task: &ForecastTask, validation_fraction: f64) -> Result<Splits> {
    let (w_in, w_out) = (task.w_in, task.w_out);
    if w_in < 2 || w_out == 0 {
        return Err(Error::InvalidConfig(
            "w_in must be at least 2 and w_out positive".into(),
        ));
    }
    let ts = panel
        .day_index(task.test_start)
        .ok_or_else(|| Error::InvalidConfig(format!("test start {} outside panel range", task.test_start)))?;
    let te = panel
        .day_index(task.test_end)
        .ok_or_else(|| Error::InvalidConfig(format!("test end {} outside panel range", task.test_end)))?;
    if te < ts {
        return Err(Error::InvalidConfig("test period ends before it starts".into()));
    }
    let first = task.objective.first_day();
    if ts < first + w_in || te + 1 - ts < w_out {
        return Err(Error::EmptySplit(format!(
            "test period {}..{} cannot hold a {w_in}+{w_out} day window",
            task.test_start, task.test_end
        )));
    }
    let outcome = task.objective.outcome();
    let mut pre = Vec::new();
    let mut test = Vec::new();
    for c in 0..panel.n_counties() {
        let k = &panel.counties()[c];
        if task.is_excluded(k.fips(), k.state()) {
            continue;
        }
        let series = panel.outcome_series(c, outcome);
        // pre-test: targets end before ts
        let mut start = first;
        while start + w_in + w_out <= ts {
            pre.push(window(panel, &series, c, start, w_in, w_out));
            start += 1;
        }
        // test: first target day ≥ ts, last ≤ te
        for start in ts - w_in..=te + 1 - w_out - w_in {
            test.push(window(panel, &series, c, start, w_in, w_out));
        }
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("no test windows".into()));
    }
    if pre.is_empty() {
        return Err(Error::EmptySplit("no training windows before the test period".into()));
    }
    let mut starts: Vec<usize> = pre.iter().map(|w| w.start).collect();
    starts.sort_unstable();
    starts.dedup();
    let n_val = ((starts.len() as f64) * validation_fraction).round() as usize;
    let n_val = n_val.min(starts.len().saturating_sub(1));
    let cut = starts[starts.len() - n_val..].first().copied().unwrap_or(usize::MAX);
    let (val, train): (Vec<_>, Vec<_>) = pre.into_iter().partition(|w| w.start >= cut);
    let splits = Splits {
        train,
        val,
        test,
        test_start: ts,
        test_end: te,
    };
    splits.check_no_leakage()?;
    Ok(splits)
}
