use std::collections::BTreeMap;

use crate::dataset::{is_known_state, CountyKey};
use crate::forecast::{DwlstmModel, TrainingWindow};
use crate::{Error, Result, Scalar};

const Z95: f64 = 1.96;

fn check_shapes(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<usize> {
    crate::error::check_len(preds.len(), targets.len())?;
    if preds.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let days = preds[0].len();
    for (p, t) in preds.iter().zip(targets) {
        crate::error::check_len(p.len(), days)?;
        crate::error::check_len(t.len(), days)?;
    }
    if days == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(days)
}

/// Cross-county RMSE of each day (rows are counties) and its mean over days.
pub fn rmse_daily(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let days = check_shapes(preds, targets)?;
    let per_day: Vec<f64> = (0..days)
        .map(|d| {
            let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p[d] - t[d]).powi(2)).sum();
            (s / preds.len() as f64).sqrt()
        })
        .collect();
    let avg = per_day.iter().sum::<f64>() / days as f64;
    Ok((per_day, avg))
}

/// (macro, micro) RMSE over a county × day table. Rows may differ in
/// length only through [`rmse_macro_micro_rows`].
pub fn rmse_macro_micro(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, f64)> {
    check_shapes(preds, targets)?;
    rmse_macro_micro_rows(preds, targets)
}

// Rows of possibly different lengths, one per county.
pub(crate) fn rmse_macro_micro_rows(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, f64)> {
    crate::error::check_len(preds.len(), targets.len())?;
    let (mut macro_sum, mut sse, mut cells) = (0.0, 0.0, 0usize);
    for (p, t) in preds.iter().zip(targets) {
        crate::error::check_len(p.len(), t.len())?;
        if p.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
        macro_sum += (s / p.len() as f64).sqrt();
        sse += s;
        cells += p.len();
    }
    if cells == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok((macro_sum / preds.len() as f64, (sse / cells as f64).sqrt()))
}

/// Per-state, per-day sums of county rows, ordered by state code.
pub fn aggregate_state(counties: &[CountyKey], values: &[Vec<f64>]) -> Result<Vec<(String, Vec<f64>)>> {
    crate::error::check_len(counties.len(), values.len())?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (k, row) in counties.iter().zip(values) {
        if !is_known_state(k.state()) {
            return Err(Error::UnknownState(k.state().to_string()));
        }
        let acc = out.entry(k.state().to_string()).or_insert_with(|| vec![0.0; row.len()]);
        crate::error::check_len(acc.len(), row.len())?;
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    Ok(out.into_iter().collect())
}

/// Ensemble mean with a normal-approximation 95% band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiPoint {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Per-day mean ± 1.96·s over ensemble members (s with ddof = 1). With
/// `nonnegative`, `lo` is clamped at 0.
pub fn ensemble_ci(members: &[Vec<f64>], nonnegative: bool) -> Result<Vec<CiPoint>> {
    if members.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: members.len(),
        });
    }
    let days = members[0].len();
    for m in members {
        crate::error::check_len(m.len(), days)?;
    }
    let k = members.len() as f64;
    Ok((0..days)
        .map(|d| {
            let mean = members.iter().map(|m| m[d]).sum::<f64>() / k;
            let var = members.iter().map(|m| (m[d] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let half = Z95 * var.sqrt();
            let lo = mean - half;
            CiPoint {
                mean,
                lo: if nonnegative { lo.max(0.0) } else { lo },
                hi: mean + half,
            }
        })
        .collect())
}

/// [`ensemble_ci`] over trained models that differ only in seed.
pub fn ensemble_ci_models<T: Scalar>(models: &[DwlstmModel<T>], window: &TrainingWindow<f64>) -> Result<Vec<CiPoint>> {
    let first = models.first().ok_or(Error::TooShort { needed: 2, got: 0 })?;
    for m in models {
        let mut a = m.config.clone();
        a.seed = first.config.seed;
        if a != first.config || m.names != first.names {
            return Err(Error::ConfigMismatch(
                "ensemble members differ beyond their seed".into(),
            ));
        }
    }
    let preds = models.iter().map(|m| m.forecast(window)).collect::<Result<Vec<_>>>()?;
    ensemble_ci(&preds, first.nonnegative)
}

/// Daily increments implied by cumulative forecasts following `last_observed`.
pub fn cumulative_to_daily(last_observed: f64, cumulative: &[f64]) -> Vec<f64> {
    let mut prev = last_observed;
    cumulative
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}
