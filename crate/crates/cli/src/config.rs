//! Run configuration: one TOML file, every key optional.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use countycast::dataset::{Outcome, PanelConfig, SynthSpec};
use countycast::eval::{ForecastTask, ModelSpec, Objective};
use countycast::forecast::DwlstmConfig;
use countycast::pca::PcaRows;
use countycast::FeaturePanel;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed for the synthetic generator and network initialization.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Output directory.
    pub out: PathBuf,
    pub data: DataConfig,
    pub panel: PanelConfig,
    pub synth: SynthSpec,
    pub analyze: AnalyzeConfig,
    pub task: TaskConfig,
    pub dwlstm: DwlstmConfig,
    pub backtest: BacktestConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            panel: PanelConfig::default(),
            synth: SynthSpec::default(),
            analyze: AnalyzeConfig::default(),
            task: TaskConfig::default(),
            dwlstm: DwlstmConfig::default(),
            backtest: BacktestConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of `<name>.toml` schema + `<name>.csv` pairs.
    pub raw: Option<PathBuf>,
    /// Built panel directory.
    pub panel: Option<PathBuf>,
    /// Model checkpoint.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub outcomes: Vec<String>,
    /// Pairing date for correlations; defaults to the last panel date.
    pub report_date: Option<NaiveDate>,
    pub hist_bins: usize,
    pub mi_bins: usize,
    pub retain: f64,
    pub standardize: bool,
    pub rows: PcaRows,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            outcomes: vec!["cases_cum".into(), "deaths_cum".into(), "deaths_cum_per100k".into()],
            report_date: None,
            hist_bins: countycast::stats::DEFAULT_HIST_BINS,
            mi_bins: countycast::stats::DEFAULT_MI_BINS,
            retain: 0.98,
            standardize: true,
            rows: PcaRows::County,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub objective: Objective,
    pub w_in: usize,
    pub w_out: usize,
    /// Test period length at the end of the panel, used unless both
    /// `test_start` and `test_end` are given.
    pub test_days: usize,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub exclude_counties: Vec<String>,
    pub exclude_states: Vec<String>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            objective: Objective::NewDailyCases,
            w_in: 10,
            w_out: 10,
            test_days: 10,
            test_start: None,
            test_end: None,
            exclude_counties: Vec::new(),
            exclude_states: Vec::new(),
        }
    }
}

impl TaskConfig {
    pub fn resolve(&self, panel: &FeaturePanel) -> Result<ForecastTask, CliError> {
        let mut task = match (self.test_start, self.test_end) {
            (Some(test_start), Some(test_end)) => ForecastTask {
                objective: self.objective,
                w_in: self.w_in,
                w_out: self.w_out,
                test_start,
                test_end,
                exclude_counties: Vec::new(),
                exclude_states: Vec::new(),
            },
            (None, None) => ForecastTask::last_days(panel, self.objective, self.w_in, self.w_out, self.test_days)?,
            _ => return Err(CliError::Config("task.test_start and task.test_end go together".into())),
        };
        task.exclude_counties = self.exclude_counties.clone();
        task.exclude_states = self.exclude_states.clone();
        Ok(task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    /// Evaluate the network (configured under `[dwlstm]`).
    pub dwlstm: bool,
    pub ensemble: usize,
    pub arima_star: bool,
    pub arima_120: bool,
    pub max_order: usize,
    /// Chronological folds over the first `fold_days` days; 0 runs the single task.
    pub folds: usize,
    pub fold_days: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        let spec = ModelSpec::default();
        Self {
            dwlstm: true,
            ensemble: spec.ensemble,
            arima_star: spec.arima_star,
            arima_120: spec.arima_120,
            max_order: spec.max_order,
            folds: 0,
            fold_days: 60,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Backtest output directories to summarize; empty means `out`.
    pub inputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn outcomes(&self) -> Result<Vec<Outcome>, CliError> {
        self.analyze
            .outcomes
            .iter()
            .map(|o| o.parse::<Outcome>().map_err(CliError::from))
            .collect()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            dwlstm: self.backtest.dwlstm.then(|| DwlstmConfig {
                seed: self.seed,
                ..self.dwlstm.clone()
            }),
            ensemble: self.backtest.ensemble,
            arima_star: self.backtest.arima_star,
            arima_120: self.backtest.arima_120,
            max_order: self.backtest.max_order,
        }
    }
}

/// Dotted keys of the default configuration under the given top-level
/// names, with their default values, one per line.
pub fn documented_keys(sections: &[&str]) -> String {
    let value = toml::Value::try_from(RunConfig::default()).expect("config serializes");
    let table = value.as_table().expect("table");
    let mut lines = Vec::new();
    for &s in sections {
        match table.get(s) {
            Some(toml::Value::Table(t)) => {
                for (k, v) in t {
                    lines.push(format!("  {s}.{k} = {v}"));
                }
                // optional keys are absent from the serialized default
                for k in optional_keys(s) {
                    lines.push(format!("  {s}.{k} (optional)"));
                }
            }
            Some(v) => lines.push(format!("  {s} = {v}")),
            None => lines.push(format!("  {s} (optional)")),
        }
    }
    lines.sort();
    lines.dedup();
    format!("Config keys read:\n{}", lines.join("\n"))
}

/// Keys of `Option` fields, which the serializer omits when unset.
pub fn optional_keys(section: &str) -> &'static [&'static str] {
    match section {
        "data" => &["raw", "panel", "model"],
        "panel" => &["start", "end"],
        "analyze" => &["report_date"],
        "task" => &["test_start", "test_end"],
        _ => &[],
    }
}
