use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{DwlstmModel, EpochLog, FeatureNames, Normalizer};
use super::net::{loss, loss_and_grad, step_targets, Layout, Params, Tensor};
use super::{DwlstmConfig, TrainingWindow};
use crate::{Error, Result, Scalar};

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Linear-interpolation percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

impl<T: Scalar> Params<T> {
    /// Weights uniform in ±1/√fan_in, biases zero except the forget gate.
    pub fn init(config: &DwlstmConfig) -> Self {
        let layout = Layout::from_config(config);
        let mut p = Self::zeros(layout);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for t in Tensor::ALL.into_iter().filter(|t| t.is_weight()) {
            let fan_in = layout.shape(t).1 as f64;
            let bound = 1.0 / fan_in.sqrt();
            for v in p.tensor_mut(t) {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        let h = layout.hidden;
        for v in &mut p.tensor_mut(Tensor::GateBias)[h..2 * h] {
            *v = T::of(config.forget_bias);
        }
        p
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn update(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(ADAM_B1), T::of(ADAM_B2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, eps) = (T::of(lr), T::of(ADAM_EPS));
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn clip<T: Scalar>(grad: &mut [T], max_norm: f64) {
    let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
    let max = T::of(max_norm);
    if norm > max {
        let s = max / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Trains on raw-unit windows. Normalization statistics and the weighting
/// threshold come from `train` only. With a non-empty `val`, training stops
/// after `patience` epochs without improvement and the best parameters
/// are kept.
///
/// Epoch 0 in the log is the loss before any update.
pub fn train_windows<T: Scalar>(
    config: &DwlstmConfig,
    names: FeatureNames,
    train: &[TrainingWindow<f64>],
    val: &[TrainingWindow<f64>],
    nonnegative: bool,
) -> Result<DwlstmModel<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("no training windows".into()));
    }
    for w in train.iter().chain(val) {
        if w.w_in() != config.w_in
            || w.dynamic.len() != config.w_in * config.dynamic_size
            || w.statics.len() != config.static_size
            || w.targets.is_empty()
        {
            return Err(Error::ConfigMismatch(format!(
                "window for county {} at day {} does not match the configured shapes",
                w.county, w.start
            )));
        }
    }
    if names.dynamic.len() != config.dynamic_size || names.statics.len() != config.static_size {
        return Err(Error::ConfigMismatch("feature names disagree with config sizes".into()));
    }

    let normalizer = Normalizer::fit(train, config.target_scaling)?;
    let tw: Vec<TrainingWindow<T>> = train.iter().map(|w| normalizer.apply(w)).collect::<Result<_>>()?;
    let vw: Vec<TrainingWindow<T>> = val.iter().map(|w| normalizer.apply(w)).collect::<Result<_>>()?;
    let all_targets: Vec<f64> = tw.iter().flat_map(step_targets).map(|v| v.as_f64()).collect();
    let threshold = T::of(percentile(&all_targets, config.threshold_quantile));
    let boost = T::of(config.weight_boost);
    let l2 = T::of(config.l2);
    let hist = config.target_history;

    let mut params = Params::<T>::init(config);
    let train_refs: Vec<&TrainingWindow<T>> = tw.iter().collect();
    let val_refs: Vec<&TrainingWindow<T>> = vw.iter().collect();
    let evaluate = |p: &Params<T>| -> Result<(f64, Option<f64>)> {
        let tl = loss(p, &train_refs, hist, threshold, boost, l2)?.as_f64();
        let vl = if val_refs.is_empty() {
            None
        } else {
            // validation is compared on the data term only
            Some(loss(p, &val_refs, hist, threshold, boost, T::zero())?.as_f64())
        };
        Ok((tl, vl))
    };

    let (tl, vl) = evaluate(&params)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: tl,
        val_loss: vl,
    }];
    let mut best = (vl.unwrap_or(f64::INFINITY), 0usize, params.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut adam = Adam::new(params.data.len());
    let mut order: Vec<usize> = (0..tw.len()).collect();
    let mut stale = 0;

    let model = |params: Params<T>, log: Vec<EpochLog>, best_epoch: usize| DwlstmModel {
        config: config.clone(),
        names: names.clone(),
        normalizer: normalizer.clone(),
        threshold,
        nonnegative,
        params,
        log,
        best_epoch,
    };

    for epoch in 1..=config.epochs {
        let last_good = params.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let refs: Vec<&TrainingWindow<T>> = batch.iter().map(|&i| &tw[i]).collect();
            let (l, mut grad) = loss_and_grad(&params, &refs, hist, threshold, boost, l2)?;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    checkpoint: Box::new(model(last_good, log, epoch - 1).to_json()),
                });
            }
            clip(&mut grad, config.clip_norm);
            adam.update(&mut params.data, &grad, config.learning_rate);
        }
        let (tl, vl) = evaluate(&params)?;
        log.push(EpochLog {
            epoch,
            train_loss: tl,
            val_loss: vl,
        });
        if !tl.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                checkpoint: Box::new(model(last_good, log, epoch - 1).to_json()),
            });
        }
        match vl {
            Some(v) if v < best.0 => {
                best = (v, epoch, params.clone());
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            None => best = (f64::INFINITY, epoch, params.clone()),
        }
    }
    let (_, best_epoch, best_params) = best;
    log::debug!("dwlstm kept epoch {best_epoch} of {}", log.len() - 1);
    Ok(model(best_params, log, best_epoch))
}
