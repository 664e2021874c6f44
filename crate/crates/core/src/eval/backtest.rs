use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_state, ensemble_ci, rmse_daily, rmse_macro_micro_rows};
use super::{make_windows, ForecastTask, Splits};
use crate::arima::{arima_forecast, fit_arima, select_arima, Order, MAX_GRID_ORDER};
use crate::dataset::FeaturePanel;
use crate::forecast::{self, DwlstmConfig, TrainingWindow};
use crate::pca::{csv_field, write_file};
use crate::{Error, Result};

/// Models to evaluate in a backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Double-window LSTM settings; `None` skips the network.
    pub dwlstm: Option<DwlstmConfig>,
    /// Seeds in the network ensemble (seed, seed+1, ...). Two or more
    /// members give ensemble intervals; the point forecast is their mean.
    pub ensemble: usize,
    /// ADF/AIC-selected ARIMA.
    pub arima_star: bool,
    /// Fixed ARIMA(1,2,0).
    pub arima_120: bool,
    pub max_order: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            dwlstm: Some(DwlstmConfig::default()),
            ensemble: 1,
            arima_star: true,
            arima_120: false,
            max_order: MAX_GRID_ORDER,
        }
    }
}

struct Forecasts {
    model: String,
    point: Vec<Vec<f64>>,
    band: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    fallbacks: usize,
    seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub macro_rmse: f64,
    pub micro_rmse: f64,
    /// Mean over lead days of the cross-window RMSE.
    pub avg_daily_rmse: f64,
    pub daily_rmse: Vec<f64>,
    /// (fips, state, rmse) sorted by fips.
    pub per_county: Vec<(String, String, f64)>,
    pub state_macro_rmse: f64,
    pub state_micro_rmse: f64,
    /// Share of truth cells inside the 95% band, when the model has one.
    pub ci_coverage: Option<f64>,
    /// Windows where the model could not be fitted and the last observed
    /// value was carried forward instead.
    pub fallbacks: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub model: String,
    pub county: String,
    /// Last input day of the window.
    pub origin: NaiveDate,
    pub date: NaiveDate,
    pub lead: usize,
    pub truth: f64,
    pub point: f64,
    pub lo95: Option<f64>,
    pub hi95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub objective: String,
    pub w_in: usize,
    pub w_out: usize,
    pub train_first_day: NaiveDate,
    pub fit_last_day: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub counties: usize,
    pub excluded_counties: Vec<String>,
    pub excluded_states: Vec<String>,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub models: Vec<ModelReport>,
    #[serde(skip)]
    pub traces: Vec<TraceRow>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("model,objective,w_out,macro_rmse,micro_rmse,avg_daily_rmse,state_macro_rmse,state_micro_rmse,ci_coverage,fallbacks\n");
        for m in &self.models {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                m.model,
                self.objective,
                self.w_out,
                m.macro_rmse,
                m.micro_rmse,
                m.avg_daily_rmse,
                m.state_macro_rmse,
                m.state_micro_rmse,
                m.ci_coverage.map(|c| c.to_string()).unwrap_or_default(),
                m.fallbacks
            ));
        }
        s
    }

    pub fn traces_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("model,county,origin,date,lead,truth,point,lo95,hi95\n");
        for t in &self.traces {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                t.model,
                csv_field(&t.county),
                t.origin,
                t.date,
                t.lead,
                t.truth,
                t.point,
                opt(t.lo95),
                opt(t.hi95)
            ));
        }
        s
    }

    /// Writes summary.json, metrics.csv, per_county.csv, daily_rmse.csv and traces.csv.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("summary.json"), &self.summary_json())?;
        write_file(&dir.join("metrics.csv"), &self.metrics_csv())?;
        let mut pc = String::from("model,county,state,rmse\n");
        let mut daily = String::from("model,lead,rmse\n");
        for m in &self.models {
            for (f, st, r) in &m.per_county {
                pc.push_str(&format!("{},{},{},{}\n", m.model, f, st, r));
            }
            for (d, r) in m.daily_rmse.iter().enumerate() {
                daily.push_str(&format!("{},{},{}\n", m.model, d + 1, r));
            }
        }
        write_file(&dir.join("per_county.csv"), &pc)?;
        write_file(&dir.join("daily_rmse.csv"), &daily)?;
        write_file(&dir.join("traces.csv"), &self.traces_csv())
    }
}

fn persistence(w: &TrainingWindow<f64>) -> Vec<f64> {
    vec![*w.history.last().unwrap(); w.targets.len()]
}

fn arima_forecasts(
    panel: &FeaturePanel,
    task: &ForecastTask,
    splits: &Splits,
    name: &str,
    fit: impl Fn(&[f64]) -> Result<crate::arima::ArimaModel<f64>> + Sync,
) -> Forecasts {
    let outcome = task.objective.outcome();
    let first = task.objective.first_day();
    let results: Vec<(Vec<f64>, Option<(Vec<f64>, Vec<f64>)>)> = splits
        .test
        .par_iter()
        .map(|w| {
            let series = panel.outcome_series(w.county, outcome);
            let y = &series[first..=w.last_input_day()];
            match fit(y).and_then(|m| arima_forecast(&m, y, task.w_out, true)) {
                Ok(fc) if fc.point.iter().all(|v| v.is_finite()) => (fc.point, Some((fc.lo, fc.hi))),
                _ => (persistence(w), None),
            }
        })
        .collect();
    let fallbacks = results.iter().filter(|r| r.1.is_none()).count();
    let band = if fallbacks == 0 {
        Some(results.iter().map(|r| r.1.clone().unwrap()).collect())
    } else {
        None
    };
    if fallbacks > 0 {
        log::warn!("{name}: {fallbacks} window(s) fell back to persistence");
    }
    Forecasts {
        model: name.to_string(),
        point: results.into_iter().map(|r| r.0).collect(),
        band,
        fallbacks,
        seeds: Vec::new(),
    }
}

fn dwlstm_forecasts(
    panel: &FeaturePanel,
    task: &ForecastTask,
    splits: &Splits,
    config: &DwlstmConfig,
    members: usize,
) -> Result<Forecasts> {
    let seeds: Vec<u64> = (0..members.max(1) as u64).map(|k| config.seed + k).collect();
    let models = seeds
        .iter()
        .map(|&seed| {
            let cfg = DwlstmConfig { seed, ..config.clone() };
            forecast::train_splits::<f64>(panel, task, &cfg, splits)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_member: Vec<Vec<Vec<f64>>> = models
        .iter()
        .map(|m| {
            splits
                .test
                .par_iter()
                .map(|w| m.forecast(w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (point, band) = if models.len() >= 2 {
        let mut point = Vec::new();
        let mut band = Vec::new();
        for i in 0..splits.test.len() {
            let members: Vec<Vec<f64>> = per_member.iter().map(|m| m[i].clone()).collect();
            let ci = ensemble_ci(&members, true)?;
            point.push(ci.iter().map(|c| c.mean).collect());
            band.push((ci.iter().map(|c| c.lo).collect(), ci.iter().map(|c| c.hi).collect()));
        }
        (point, Some(band))
    } else {
        (per_member.into_iter().next().unwrap(), None)
    };
    Ok(Forecasts {
        model: "dwlstm".into(),
        point,
        band,
        fallbacks: 0,
        seeds,
    })
}

fn score(panel: &FeaturePanel, splits: &Splits, f: &Forecasts) -> Result<ModelReport> {
    let test = &splits.test;
    let truth: Vec<Vec<f64>> = test.iter().map(|w| w.targets.clone()).collect();
    let (daily_rmse, avg_daily_rmse) = rmse_daily(&f.point, &truth)?;

    let mut by_county: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (w, p) in test.iter().zip(&f.point) {
        let e = by_county.entry(w.county).or_default();
        e.0.extend_from_slice(p);
        e.1.extend_from_slice(&w.targets);
    }
    let (cp, ct): (Vec<Vec<f64>>, Vec<Vec<f64>>) = by_county.values().cloned().unzip();
    let (macro_rmse, micro_rmse) = rmse_macro_micro_rows(&cp, &ct)?;
    let per_county = by_county
        .iter()
        .map(|(&c, (p, t))| {
            let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
            let k = &panel.counties()[c];
            (k.fips().to_string(), k.state().to_string(), (s / p.len() as f64).sqrt())
        })
        .collect();

    let mut by_origin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, w) in test.iter().enumerate() {
        by_origin.entry(w.start).or_default().push(i);
    }
    let mut state_rows: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for idx in by_origin.values() {
        let keys: Vec<_> = idx.iter().map(|&i| panel.counties()[test[i].county].clone()).collect();
        let sp = aggregate_state(&keys, &idx.iter().map(|&i| f.point[i].clone()).collect::<Vec<_>>())?;
        let st = aggregate_state(&keys, &idx.iter().map(|&i| test[i].targets.clone()).collect::<Vec<_>>())?;
        for ((s, p), (_, t)) in sp.into_iter().zip(st) {
            let e = state_rows.entry(s).or_default();
            e.0.extend(p);
            e.1.extend(t);
        }
    }
    let (sp, st): (Vec<Vec<f64>>, Vec<Vec<f64>>) = state_rows.into_values().unzip();
    let (state_macro_rmse, state_micro_rmse) = rmse_macro_micro_rows(&sp, &st)?;

    let ci_coverage = f.band.as_ref().map(|band| {
        let (mut inside, mut total) = (0usize, 0usize);
        for ((lo, hi), w) in band.iter().zip(test) {
            for ((l, h), y) in lo.iter().zip(hi).zip(&w.targets) {
                total += 1;
                if l <= y && y <= h {
                    inside += 1;
                }
            }
        }
        inside as f64 / total as f64
    });

    Ok(ModelReport {
        model: f.model.clone(),
        macro_rmse,
        micro_rmse,
        avg_daily_rmse,
        daily_rmse,
        per_county,
        state_macro_rmse,
        state_micro_rmse,
        ci_coverage,
        fallbacks: f.fallbacks,
        seeds: f.seeds.clone(),
    })
}

/// Fits every requested model on the pre-test windows and scores it on
/// the test windows of `task`.
pub fn backtest(panel: &FeaturePanel, task: &ForecastTask, spec: &ModelSpec) -> Result<EvalReport> {
    let panel = task.filter_panel(panel)?;
    let val_frac = spec.dwlstm.as_ref().map_or(0.1, |c| c.validation_fraction);
    let splits = make_windows(&panel, task, val_frac)?;
    splits.check_no_leakage()?;

    let mut all = Vec::new();
    if let Some(cfg) = &spec.dwlstm {
        all.push(dwlstm_forecasts(&panel, task, &splits, cfg, spec.ensemble)?);
    }
    if spec.arima_star {
        let max_order = spec.max_order;
        all.push(arima_forecasts(&panel, task, &splits, "arima_star", |y| {
            select_arima(y, max_order)
        }));
    }
    if spec.arima_120 {
        all.push(arima_forecasts(&panel, task, &splits, "arima_120", |y| {
            fit_arima(y, Order::new(1, 2, 0))
        }));
    }
    if all.is_empty() {
        return Err(Error::InvalidConfig("model spec selects no model".into()));
    }

    let mut models = Vec::new();
    let mut traces = Vec::new();
    for f in &all {
        models.push(score(&panel, &splits, f)?);
        for (i, w) in splits.test.iter().enumerate() {
            let origin = w.last_input_day();
            for d in 0..task.w_out {
                traces.push(TraceRow {
                    model: f.model.clone(),
                    county: panel.counties()[w.county].fips().to_string(),
                    origin: panel.date(origin),
                    date: panel.date(origin + 1 + d),
                    lead: d + 1,
                    truth: w.targets[d],
                    point: f.point[i][d],
                    lo95: f.band.as_ref().map(|b| b[i].0[d]),
                    hi95: f.band.as_ref().map(|b| b[i].1[d]),
                });
            }
        }
    }
    let train_first = splits.train.iter().map(|w| w.start).min().unwrap_or(0);
    Ok(EvalReport {
        objective: task.objective.name().to_string(),
        w_in: task.w_in,
        w_out: task.w_out,
        train_first_day: panel.date(train_first),
        fit_last_day: panel.date(splits.last_fit_day().unwrap_or(0)),
        test_start: task.test_start,
        test_end: task.test_end,
        counties: panel.n_counties(),
        excluded_counties: task.exclude_counties.clone(),
        excluded_states: task.exclude_states.clone(),
        train_windows: splits.train.len(),
        val_windows: splits.val.len(),
        test_windows: splits.test.len(),
        models,
        traces,
    })
}

/// Contiguous chronological folds over `days_used` leading panel days.
/// Fold j tests on block j + 1 of k + 1 equal blocks and trains on all
/// earlier days; the first block is never a test block.
pub fn chronological_folds(
    panel: &FeaturePanel,
    task: &ForecastTask,
    k: usize,
    days_used: usize,
) -> Result<Vec<ForecastTask>> {
    if k == 0 {
        return Err(Error::InvalidConfig("fold count must be positive".into()));
    }
    let days = days_used.min(panel.n_days());
    let block = days / (k + 1);
    if block < task.w_out || block < task.w_in + task.objective.first_day() + task.w_out {
        return Err(Error::EmptySplit(format!(
            "{days} days cannot hold {k} folds of {}+{} day windows",
            task.w_in, task.w_out
        )));
    }
    Ok((1..=k)
        .map(|j| {
            let start = j * block;
            let end = if j == k { days - 1 } else { (j + 1) * block - 1 };
            ForecastTask {
                test_start: panel.date(start),
                test_end: panel.date(end),
                ..task.clone()
            }
        })
        .collect())
}

/// Backtest on each chronological fold of the first `days_used` days.
pub fn backtest_folds(
    panel: &FeaturePanel,
    task: &ForecastTask,
    spec: &ModelSpec,
    k: usize,
    days_used: usize,
) -> Result<Vec<EvalReport>> {
    let early = panel.slice_days(0, days_used.min(panel.n_days()) - 1)?;
    chronological_folds(&early, task, k, days_used)?
        .iter()
        .map(|t| backtest(&early, t, spec))
        .collect()
}
