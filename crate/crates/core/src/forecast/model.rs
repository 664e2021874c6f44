use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{forward, rollout, Layout, Params, Tensor};
use super::{DwlstmConfig, TargetScaling, TrainingWindow};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_VERSION: u32 = 1;

const MIN_STD: f64 = 1e-12;

/// Per-column z-score statistics as (mean, std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub dynamic: Vec<(f64, f64)>,
    pub statics: Vec<(f64, f64)>,
    /// Statistics of the scaled target.
    pub target: (f64, f64),
    pub scaling: TargetScaling,
}

fn scale_of(scaling: TargetScaling, history: &[f64]) -> f64 {
    match scaling {
        TargetScaling::Global | TargetScaling::Log => 1.0,
        TargetScaling::WindowMean => 1.0 + history.iter().map(|v| v.abs()).sum::<f64>() / history.len().max(1) as f64,
    }
}

/// Value after scaling, before the z-score.
fn warp(scaling: TargetScaling, y: f64, scale: f64) -> f64 {
    match scaling {
        TargetScaling::Log => y.signum() * y.abs().ln_1p(),
        _ => y / scale,
    }
}

fn unwarp(scaling: TargetScaling, u: f64, scale: f64) -> f64 {
    match scaling {
        TargetScaling::Log => u.signum() * u.abs().exp_m1(),
        _ => u * scale,
    }
}

fn moments(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < MIN_STD { 1.0 } else { std })
}

impl Normalizer {
    /// Statistics over the given (training) windows: every input row, the
    /// history and target values, and each distinct county's static vector.
    pub fn fit(windows: &[TrainingWindow<f64>], scaling: TargetScaling) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::EmptySplit("no training windows".into()))?;
        let k = first.dynamic.len() / first.w_in();
        let dynamic = (0..k)
            .map(|j| {
                moments(
                    windows
                        .iter()
                        .flat_map(|w| (0..w.w_in()).map(move |t| w.dynamic_row(t)[j])),
                )
            })
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        let distinct: Vec<&TrainingWindow<f64>> = windows.iter().filter(|w| seen.insert(w.county)).collect();
        let statics = (0..first.statics.len())
            .map(|j| moments(distinct.iter().map(|w| w.statics[j])))
            .collect();
        let target = moments(windows.iter().flat_map(|w| {
            let s = scale_of(scaling, &w.history);
            w.history.iter().chain(&w.targets).map(move |&y| warp(scaling, y, s))
        }));
        Ok(Self {
            dynamic,
            statics,
            target,
            scaling,
        })
    }

    /// Per-window divisor applied to target values.
    pub fn target_scale(&self, history: &[f64]) -> f64 {
        scale_of(self.scaling, history)
    }

    pub fn normalize_target(&self, y: f64, scale: f64) -> f64 {
        (warp(self.scaling, y, scale) - self.target.0) / self.target.1
    }

    pub fn denormalize_target(&self, z: f64, scale: f64) -> f64 {
        unwarp(self.scaling, z * self.target.1 + self.target.0, scale)
    }

    pub fn apply<T: Scalar>(&self, w: &TrainingWindow<f64>) -> Result<TrainingWindow<T>> {
        let k = self.dynamic.len();
        if w.dynamic.len() != w.w_in() * k || w.statics.len() != self.statics.len() {
            return Err(Error::LengthMismatch {
                left: w.dynamic.len(),
                right: w.w_in() * k,
            });
        }
        let z = |v: f64, (m, s): (f64, f64)| T::of((v - m) / s);
        let scale = self.target_scale(&w.history);
        let zt = |v: f64| T::of(self.normalize_target(v, scale));
        Ok(TrainingWindow {
            county: w.county,
            start: w.start,
            dynamic: w
                .dynamic
                .iter()
                .enumerate()
                .map(|(i, &v)| z(v, self.dynamic[i % k]))
                .collect(),
            history: w.history.iter().map(|&v| zt(v)).collect(),
            statics: w.statics.iter().zip(&self.statics).map(|(&v, &s)| z(v, s)).collect(),
            targets: w.targets.iter().map(|&v| zt(v)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureNames {
    pub dynamic: Vec<String>,
    pub statics: Vec<String>,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwlstmModel<T> {
    pub config: DwlstmConfig,
    pub names: FeatureNames,
    pub normalizer: Normalizer,
    /// Weighting threshold in normalized target units.
    pub threshold: T,
    /// Clamp forecasts at zero.
    pub nonnegative: bool,
    pub params: Params<T>,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl<T: Scalar> DwlstmModel<T> {
    /// Forecast of `config.w_out` days in target units for a raw window.
    pub fn forecast(&self, w: &TrainingWindow<f64>) -> Result<Vec<f64>> {
        self.forecast_days(w, self.config.w_out)
    }

    pub fn forecast_days(&self, w: &TrainingWindow<f64>, days: usize) -> Result<Vec<f64>> {
        let nw = self.normalizer.apply::<T>(w)?;
        let scale = self.normalizer.target_scale(&w.history);
        let floor = self
            .nonnegative
            .then(|| T::of(self.normalizer.normalize_target(0.0, scale)));
        let out = rollout(&self.params, &nw, days, self.config.target_history, floor)?;
        Ok(out
            .into_iter()
            .map(|z| {
                let y = self.normalizer.denormalize_target(z.as_f64(), scale);
                if self.nonnegative {
                    y.max(0.0)
                } else {
                    y
                }
            })
            .collect())
    }

    /// Teacher-forced next-day predictions over the input window, in target units.
    pub fn predict_steps(&self, w: &TrainingWindow<f64>) -> Result<Vec<f64>> {
        let nw = self.normalizer.apply::<T>(w)?;
        let scale = self.normalizer.target_scale(&w.history);
        let fp = forward(&self.params, &nw, self.config.target_history)?;
        Ok(fp
            .predictions
            .iter()
            .map(|z| self.normalizer.denormalize_target(z.as_f64(), scale))
            .collect())
    }

    /// Train loss recorded for the kept parameters.
    pub fn final_train_loss(&self) -> Option<f64> {
        self.log
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map(|e| e.train_loss)
    }

    pub fn training_log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.log {
            s.push_str(&format!(
                "{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.val_loss.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        s
    }

    fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            names: self.names.clone(),
            normalizer: self.normalizer.clone(),
            threshold: self.threshold.as_f64(),
            nonnegative: self.nonnegative,
            best_epoch: self.best_epoch,
            tensors: Tensor::ALL
                .into_iter()
                .map(|t| {
                    let (r, c) = self.params.layout.shape(t);
                    (
                        t.name().to_string(),
                        TensorData {
                            shape: [r, c],
                            data: self.params.tensor(t).iter().map(|v| v.as_f64()).collect(),
                        },
                    )
                })
                .collect(),
            log: self.log.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.config.validate()?;
        let layout = Layout::from_config(&ck.config);
        if ck.names.dynamic.len() != ck.config.dynamic_size
            || ck.names.statics.len() != ck.config.static_size
            || ck.normalizer.dynamic.len() != ck.config.dynamic_size
            || ck.normalizer.statics.len() != ck.config.static_size
        {
            return Err(Error::Checkpoint("feature lists disagree with config sizes".into()));
        }
        let mut params = Params::zeros(layout);
        if ck.tensors.len() != Tensor::ALL.len() {
            return Err(Error::Checkpoint("unexpected tensor set".into()));
        }
        for t in Tensor::ALL {
            let td = ck
                .tensors
                .get(t.name())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", t.name())))?;
            let (r, c) = layout.shape(t);
            if td.shape != [r, c] || td.data.len() != r * c {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected [{r}, {c}]",
                    t.name(),
                    td.shape
                )));
            }
            for (dst, &v) in params.tensor_mut(t).iter_mut().zip(&td.data) {
                if !v.is_finite() {
                    return Err(Error::Checkpoint(format!("non-finite value in {}", t.name())));
                }
                *dst = T::of(v);
            }
        }
        Ok(Self {
            config: ck.config,
            names: ck.names,
            normalizer: ck.normalizer,
            threshold: T::of(ck.threshold),
            nonnegative: ck.nonnegative,
            params,
            log: ck.log,
            best_epoch: ck.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorData {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    config: DwlstmConfig,
    names: FeatureNames,
    normalizer: Normalizer,
    threshold: f64,
    nonnegative: bool,
    best_epoch: usize,
    tensors: BTreeMap<String, TensorData>,
    log: Vec<EpochLog>,
}
