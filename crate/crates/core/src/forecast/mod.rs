//! Double-window LSTM forecaster.
//!
//! Each input day is the exogenous dynamic features plus the observed
//! target, passed through an affine projection into an LSTM. The hidden
//! state is concatenated with an affine projection of the static features
//! and a linear head predicts the next day's target. Training is
//! teacher-forced over the input window; forecasting rolls the network
//! forward on its own predictions.

mod model;
mod net;
mod train;

pub use model::{DwlstmModel, EpochLog, FeatureNames, Normalizer, CHECKPOINT_VERSION};
pub use net::{
    backward, forward, loss, loss_and_grad, lstm_step, project, rollout, step_targets, weighted_mse, ForwardPass,
    Layout, Params, Tensor,
};
pub use train::{percentile, train_windows};

use serde::{Deserialize, Serialize};

use crate::dataset::FeaturePanel;
use crate::eval::{make_windows, ForecastTask, Splits};
use crate::{Error, Result, Scalar};

/// Target scaling applied before the global z-score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// z-score only.
    Global,
    /// Divide by 1 + mean |history| of the window itself, so windows at
    /// different levels share one scale.
    WindowMean,
    /// Signed ln(1 + |y|), for counts that grow multiplicatively.
    #[default]
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DwlstmConfig {
    /// Input window length in days.
    pub w_in: usize,
    /// Forecast window length in days.
    pub w_out: usize,
    /// Number of exogenous dynamic features per day.
    pub dynamic_size: usize,
    pub static_size: usize,
    pub dyn_proj: usize,
    pub static_proj: usize,
    pub hidden: usize,
    /// Feed the observed target history as an extra dynamic input.
    pub target_history: bool,
    /// How target values are scaled before z-scoring.
    pub target_scaling: TargetScaling,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Quantile of training targets used as the weighting threshold.
    pub threshold_quantile: f64,
    /// Extra weight on points above the threshold.
    pub weight_boost: f64,
    /// L2 strength on weight matrices.
    pub l2: f64,
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub forget_bias: f64,
    /// Fraction of pre-test windows (latest by start day) held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for DwlstmConfig {
    fn default() -> Self {
        Self {
            w_in: 10,
            w_out: 10,
            dynamic_size: 1,
            static_size: 1,
            dyn_proj: 16,
            static_proj: 8,
            hidden: 32,
            target_history: true,
            target_scaling: TargetScaling::Log,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            threshold_quantile: 0.9,
            weight_boost: 4.0,
            l2: 1e-4,
            clip_norm: 5.0,
            patience: 20,
            forget_bias: 1.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl DwlstmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("dwlstm: {msg}")));
        if self.w_in < 2 {
            return bad("w_in must be at least 2");
        }
        for (name, v) in [
            ("dynamic_size", self.dynamic_size),
            ("static_size", self.static_size),
            ("dyn_proj", self.dyn_proj),
            ("static_proj", self.static_proj),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0) || !(self.weight_boost >= 0.0) {
            return bad("l2 and weight_boost must be non-negative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold_quantile) {
            return bad("threshold_quantile must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }

    /// Width of one day's network input.
    pub fn input_size(&self) -> usize {
        self.dynamic_size + usize::from(self.target_history)
    }
}

/// One double-window example. `dynamic` is row-major, `w_in` rows of
/// exogenous features; `history` holds the observed target on the same days.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow<T> {
    pub county: usize,
    /// Day index of the first input day.
    pub start: usize,
    pub dynamic: Vec<T>,
    pub history: Vec<T>,
    pub statics: Vec<T>,
    /// Targets for the `w_out` days after the input window.
    pub targets: Vec<T>,
}

impl<T> TrainingWindow<T> {
    pub fn w_in(&self) -> usize {
        self.history.len()
    }

    pub fn dynamic_row(&self, t: usize) -> &[T] {
        let k = self.dynamic.len() / self.history.len().max(1);
        &self.dynamic[t * k..(t + 1) * k]
    }

    /// Day index of the last input day.
    pub fn last_input_day(&self) -> usize {
        self.start + self.history.len() - 1
    }
}

/// `base` with window lengths from the task and input sizes from the panel.
pub fn config_for(panel: &FeaturePanel, task: &ForecastTask, base: &DwlstmConfig) -> DwlstmConfig {
    DwlstmConfig {
        w_in: task.w_in,
        w_out: task.w_out,
        dynamic_size: panel.dynamic_features().len(),
        static_size: panel.static_features().len(),
        ..base.clone()
    }
}

pub fn feature_names(panel: &FeaturePanel, task: &ForecastTask) -> FeatureNames {
    FeatureNames {
        dynamic: panel.dynamic_features().iter().map(|f| f.name.clone()).collect(),
        statics: panel.static_features().iter().map(|f| f.name.clone()).collect(),
        target: task.objective.name().to_string(),
    }
}

/// Trains on the train/validation windows of already built splits.
pub fn train_splits<T: Scalar>(
    panel: &FeaturePanel,
    task: &ForecastTask,
    config: &DwlstmConfig,
    splits: &Splits,
) -> Result<DwlstmModel<T>> {
    let cfg = config_for(panel, task, config);
    train_windows(&cfg, feature_names(panel, task), &splits.train, &splits.val, true)
}

/// Trains a model for `task` on the panel's pre-test windows. Window
/// lengths come from the task and input sizes from the panel.
pub fn train(panel: &FeaturePanel, task: &ForecastTask, config: &DwlstmConfig) -> Result<DwlstmModel<f64>> {
    if panel.n_counties() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: panel.n_counties(),
        });
    }
    let needed = task.w_in + task.w_out + 10;
    if panel.n_days() < needed {
        return Err(Error::TooShort {
            needed,
            got: panel.n_days(),
        });
    }
    let panel = task.filter_panel(panel)?;
    let splits = make_windows(&panel, task, config.validation_fraction)?;
    train_splits(&panel, task, config, &splits)
}
