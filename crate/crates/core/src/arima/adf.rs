use ndarray::{Array1, Array2};

use crate::linalg::ols;
use crate::{Error, Result, Scalar};

/// 5% critical value of the constant-only Dickey–Fuller distribution.
pub const ADF_CRITICAL_5PCT: f64 = -2.86;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult<T> {
    /// t-ratio of the lagged level coefficient.
    pub statistic: T,
    pub lags: usize,
    /// True when the unit root is rejected at 5%.
    pub reject: bool,
    pub n_obs: usize,
}

/// Schwert's rule ⌊12·(n/100)^¼⌋.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

// Regression of Δy_t on [1, y_{t-1}, Δy_{t-1..t-k}] over t in first..n.
fn regression<T: Scalar>(y: &[T], dy: &[T], k: usize, first: usize) -> Result<(T, T, usize)> {
    let rows = dy.len() - first;
    let cols = 2 + k;
    let mut x = Array2::zeros((rows, cols));
    let mut target = Array1::zeros(rows);
    for (r, i) in (first..dy.len()).enumerate() {
        // dy[i] = y[i+1] - y[i]
        target[r] = dy[i];
        x[[r, 0]] = T::one();
        x[[r, 1]] = y[i];
        for j in 1..=k {
            x[[r, 1 + j]] = dy[i - j];
        }
    }
    let fit = ols(&x, &target)?;
    let dof = rows as isize - cols as isize;
    if dof <= 0 {
        return Err(Error::TooShort {
            needed: cols + 1,
            got: rows,
        });
    }
    let s2 = fit.sse / T::of_usize(dof as usize);
    let se = (s2 * fit.xtx_inv_diag[1]).sqrt();
    let aic = T::of_usize(rows) * (fit.sse.max(T::min_positive_value()) / T::of_usize(rows)).ln()
        + T::of(2.0) * T::of_usize(cols);
    Ok((fit.coef[1] / se, aic, rows))
}

/// Augmented Dickey–Fuller test with a constant and no trend. The lag
/// order in 0..=`max_lag` minimizes AIC on a common sample; the chosen
/// regression is then refitted on all available observations.
pub fn adf_test<T: Scalar>(y: &[T], max_lag: usize) -> Result<AdfResult<T>> {
    if y.len() < 20 + max_lag {
        return Err(Error::TooShort {
            needed: 20 + max_lag,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value in series".into()));
    }
    let dy: Vec<T> = y.windows(2).map(|w| w[1] - w[0]).collect();
    if dy.iter().all(|&d| d == T::zero()) {
        return Err(Error::DegenerateInput("constant series".into()));
    }
    let mut best: Option<(T, usize)> = None;
    for k in 0..=max_lag {
        let aic = match regression(y, &dy, k, max_lag) {
            Ok((_, aic, _)) => aic,
            Err(Error::DegenerateInput(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(b, _)| aic < b) {
            best = Some((aic, k));
        }
    }
    let (_, lags) = best.ok_or_else(|| Error::DegenerateInput("singular test regression".into()))?;
    let (statistic, _, n_obs) = regression(y, &dy, lags, lags)?;
    Ok(AdfResult {
        statistic,
        lags,
        reject: statistic < T::of(ADF_CRITICAL_5PCT),
        n_obs,
    })
}
