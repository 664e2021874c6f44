//! ARIMA baselines: conditional-sum-of-squares fitting, ADF-guided
//! differencing, AIC order search and ψ-weight forecast intervals.

mod adf;
pub(crate) mod simplex;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use adf::{adf_test, schwert_max_lag, AdfResult, ADF_CRITICAL_5PCT};

use crate::linalg::ols;
use crate::pca::{csv_field, write_file};
use crate::{Error, Result, Scalar};
use simplex::nelder_mead;

pub const MAX_SIMPLEX_ITERATIONS: usize = 2000;
/// Grid bound for `p` and `q` in order selection.
pub const MAX_GRID_ORDER: usize = 3;
const Z95: f64 = 1.96;
const SIMPLEX_TOL: f64 = 1e-10;
// objective value of an explosive or non-invertible candidate
const INFEASIBLE: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Order {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Order {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel<T> {
    pub order: Order,
    pub ar: Vec<T>,
    pub ma: Vec<T>,
    /// Mean of the differenced series; fixed at 0 when d > 0.
    pub intercept: T,
    pub sigma2: T,
    pub aic: T,
    pub sse: T,
    /// Length of the series the model was fitted on.
    pub n: usize,
    /// Residuals entering the sum of squares.
    pub n_eff: usize,
}

/// d-fold first difference.
pub fn difference<T: Scalar>(y: &[T], d: usize) -> Result<Vec<T>> {
    if y.len() <= d {
        return Err(Error::TooShort {
            needed: d + 1,
            got: y.len(),
        });
    }
    let mut v = y.to_vec();
    for _ in 0..d {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(v)
}

/// First value of each differencing level 0..d, the data [`integrate`] needs.
pub fn difference_heads<T: Scalar>(y: &[T], d: usize) -> Result<Vec<T>> {
    (0..d).map(|k| difference(y, k).map(|v| v[0])).collect()
}

/// Inverse of [`difference`] given the heads of each level.
pub fn integrate<T: Scalar>(w: &[T], heads: &[T]) -> Vec<T> {
    let mut v = w.to_vec();
    for &h in heads.iter().rev() {
        let mut out = Vec::with_capacity(v.len() + 1);
        let mut acc = h;
        out.push(acc);
        for x in v {
            acc += x;
            out.push(acc);
        }
        v = out;
    }
    v
}

/// Whether 1 − Σ aᵢzⁱ has all roots outside the unit circle, by the
/// step-down recursion on partial autocorrelations.
pub fn is_stationary<T: Scalar>(a: &[T]) -> bool {
    let mut a = a.to_vec();
    let limit = T::one() - T::of(1e-8);
    for k in (1..=a.len()).rev() {
        let kappa = a[k - 1];
        if !(kappa.abs() < limit) {
            return false;
        }
        let den = T::one() - kappa * kappa;
        let prev: Vec<T> = (0..k - 1).map(|j| (a[j] + kappa * a[k - 2 - j]) / den).collect();
        a = prev;
    }
    true
}

/// Whether 1 + Σ θⱼzʲ has all roots outside the unit circle.
pub fn is_invertible<T: Scalar>(theta: &[T]) -> bool {
    let neg: Vec<T> = theta.iter().map(|&t| -t).collect();
    is_stationary(&neg)
}

// CSS residuals of the differenced series, conditioning on the first `cond` values.
fn residuals<T: Scalar>(w: &[T], ar: &[T], ma: &[T], mu: T, cond: usize) -> Vec<T> {
    let mut e = vec![T::zero(); w.len()];
    for t in cond..w.len() {
        let mut pred = mu;
        for (i, &phi) in ar.iter().enumerate() {
            pred += phi * (w[t - 1 - i] - mu);
        }
        for (j, &th) in ma.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn sse_floor<T: Scalar>(w: &[T], n_eff: usize) -> T {
    let scale = w.iter().map(|&v| v * v).sum::<T>() / T::of_usize(w.len().max(1));
    T::epsilon() * T::of_usize(n_eff) * (T::one() + scale)
}

/// Least-squares AR fit with intercept (when `with_mean`) conditioned on
/// the first `cond` values. Returns (φ, μ).
fn ols_ar<T: Scalar>(w: &[T], p: usize, with_mean: bool, cond: usize) -> Result<(Vec<T>, T)> {
    let rows = w.len() - cond;
    let cols = p + usize::from(with_mean);
    if cols == 0 {
        return Ok((Vec::new(), T::zero()));
    }
    let mut x = Array2::zeros((rows, cols));
    let mut y = Array1::zeros(rows);
    for (r, t) in (cond..w.len()).enumerate() {
        y[r] = w[t];
        if with_mean {
            x[[r, 0]] = T::one();
        }
        for i in 0..p {
            x[[r, usize::from(with_mean) + i]] = w[t - 1 - i];
        }
    }
    let fit = ols(&x, &y)?;
    let ar: Vec<T> = fit.coef.iter().skip(usize::from(with_mean)).copied().collect();
    let mu = if with_mean {
        let s: T = ar.iter().copied().sum();
        let den = T::one() - s;
        if den.abs() < T::of(1e-8) {
            return Err(Error::DegenerateInput("unit AR root".into()));
        }
        fit.coef[0] / den
    } else {
        T::zero()
    };
    Ok((ar, mu))
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

/// CSS fit conditioned on the first `p` values of the differenced series.
pub fn fit_arima<T: Scalar>(y: &[T], order: Order) -> Result<ArimaModel<T>> {
    fit_arima_conditioned(y, order, order.p)
}

/// CSS fit with residuals summed from index `cond` (≥ p) of the
/// differenced series, so that models of different AR order can be
/// compared on identical observations.
pub fn fit_arima_conditioned<T: Scalar>(y: &[T], order: Order, cond: usize) -> Result<ArimaModel<T>> {
    let Order { p, d, q } = order;
    if d > 2 {
        return Err(Error::InvalidConfig("d must be 0, 1 or 2".into()));
    }
    let cond = cond.max(p);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value in series".into()));
    }
    let needed = d + 10 + p + q + (cond - p);
    if y.len() < needed {
        return Err(Error::TooShort { needed, got: y.len() });
    }
    let w = difference(y, d)?;
    let with_mean = d == 0;
    let n_eff = w.len() - cond;
    let floor = sse_floor(&w, n_eff);
    let sse_of = |ar: &[T], ma: &[T], mu: T| -> T { residuals(&w, ar, ma, mu, cond).iter().map(|&e| e * e).sum() };

    let ols_start = ols_ar(&w, p, with_mean, cond).ok();
    let (ar, ma, mu) = match (&ols_start, q) {
        // pure AR: least squares is the exact CSS optimum
        (Some((ar, mu)), 0) if is_stationary(ar) => (ar.clone(), Vec::new(), *mu),
        _ => {
            let (ar0, mu0) = match ols_start {
                Some((ar, mu)) if is_stationary(&ar) => (ar, mu),
                _ => (vec![T::zero(); p], if with_mean { mean(&w[cond..]) } else { T::zero() }),
            };
            let sd = {
                let m = mean(&w);
                (w.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::of_usize(w.len())).sqrt()
            };
            let mu_scale = if sd > T::zero() { sd } else { T::one() };
            let unpack = |x: &[T]| -> (Vec<T>, Vec<T>, T) {
                let mu = if with_mean {
                    mu0 + mu_scale * x[p + q]
                } else {
                    T::zero()
                };
                (x[..p].to_vec(), x[p..p + q].to_vec(), mu)
            };
            let objective = |x: &[T]| -> T {
                let (ar, ma, mu) = unpack(x);
                if !is_stationary(&ar) || !is_invertible(&ma) {
                    return T::of(INFEASIBLE);
                }
                let s = sse_of(&ar, &ma, mu);
                s / (T::of_usize(n_eff) * mu_scale * mu_scale)
            };
            let mut x0: Vec<T> = ar0.clone();
            x0.extend(std::iter::repeat_n(T::zero(), q));
            if with_mean {
                x0.push(T::zero());
            }
            if x0.is_empty() {
                (Vec::new(), Vec::new(), T::zero())
            } else {
                let m = nelder_mead(objective, &x0, T::of(0.1), MAX_SIMPLEX_ITERATIONS, T::of(SIMPLEX_TOL));
                if !m.f.is_finite() {
                    return Err(Error::NoFeasibleFit(format!(
                        "ARIMA{order}: no stationary, invertible optimum"
                    )));
                }
                if !m.converged {
                    return Err(Error::NoConvergence {
                        what: "ARIMA simplex search",
                        iterations: MAX_SIMPLEX_ITERATIONS,
                    });
                }
                unpack(&m.x)
            }
        }
    };
    let sse = sse_of(&ar, &ma, mu).max(floor);
    let ne = T::of_usize(n_eff);
    let aic = ne * (sse / ne).ln() + T::of(2.0) * T::of_usize(p + q + 1);
    Ok(ArimaModel {
        order,
        ar,
        ma,
        intercept: mu,
        sigma2: sse / ne,
        aic,
        sse,
        n: y.len(),
        n_eff,
    })
}

/// Smallest d in {0,1,2} whose differenced series rejects a unit root; 2
/// when none does. A constant differenced series counts as stationary.
pub fn select_d<T: Scalar>(y: &[T]) -> Result<usize> {
    for d in 0..2 {
        let w = difference(y, d)?;
        if w.iter().all(|&v| v == w[0]) {
            return Ok(d);
        }
        let max_lag = schwert_max_lag(w.len()).min(w.len().saturating_sub(20));
        if w.len() < 20 {
            continue;
        }
        if adf_test(&w, max_lag)?.reject {
            return Ok(d);
        }
    }
    Ok(2)
}

/// Order search: d by [`select_d`], then (p, q) ≤ `max_order` by AIC on a
/// common conditioning sample. Ties go to smaller p+q, then smaller p.
pub fn select_arima<T: Scalar>(y: &[T], max_order: usize) -> Result<ArimaModel<T>> {
    let d = select_d(y)?;
    let mut best: Option<ArimaModel<T>> = None;
    let mut last_err = None;
    for p in 0..=max_order {
        for q in 0..=max_order {
            match fit_arima_conditioned(y, Order::new(p, d, q), max_order) {
                Ok(m) => {
                    let better = match &best {
                        None => true,
                        Some(b) => m.aic < b.aic || (m.aic == b.aic && (p + q, p) < (b.order.p + b.order.q, b.order.p)),
                    };
                    if better {
                        best = Some(m);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NoFeasibleFit("empty grid".into())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaForecast<T> {
    pub point: Vec<T>,
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

/// ψ-weights of the integrated model, ψ₀ = 1.
pub fn psi_weights<T: Scalar>(model: &ArimaModel<T>, h: usize) -> Vec<T> {
    // φ*(B) = φ(B)(1−B)^d
    let mut phi: Vec<T> = std::iter::once(T::one()).chain(model.ar.iter().map(|&a| -a)).collect();
    for _ in 0..model.order.d {
        let mut next = vec![T::zero(); phi.len() + 1];
        for (i, &c) in phi.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        phi = next;
    }
    let mut psi = vec![T::zero(); h];
    if h == 0 {
        return psi;
    }
    psi[0] = T::one();
    for j in 1..h {
        let mut v = model.ma.get(j - 1).copied().unwrap_or(T::zero());
        for i in 1..phi.len().min(j + 1) {
            v -= phi[i] * psi[j - i];
        }
        psi[j] = v;
    }
    psi
}

/// Point forecasts and 95% intervals for `h` steps beyond `y`.
pub fn arima_forecast<T: Scalar>(
    model: &ArimaModel<T>,
    y: &[T],
    h: usize,
    nonnegative: bool,
) -> Result<ArimaForecast<T>> {
    if h == 0 {
        return Err(Error::InvalidConfig("forecast horizon must be positive".into()));
    }
    let d = model.order.d;
    let w = difference(y, d)?;
    let cond = model.order.p.min(w.len());
    let e = residuals(&w, &model.ar, &model.ma, model.intercept, cond);
    let mu = model.intercept;
    let mut ext = w.clone();
    let mut err = e;
    for _ in 0..h {
        let t = ext.len();
        let mut pred = mu;
        for (i, &phi) in model.ar.iter().enumerate() {
            pred += phi * (ext[t - 1 - i] - mu);
        }
        for (j, &th) in model.ma.iter().enumerate() {
            if t > j {
                pred += th * err[t - 1 - j];
            }
        }
        ext.push(pred);
        err.push(T::zero());
    }
    let mut fc: Vec<T> = ext[w.len()..].to_vec();
    // undo differencing level by level, each anchored at the last observed value
    for k in (0..d).rev() {
        let level = difference(y, k)?;
        let mut acc = *level.last().unwrap();
        fc = fc
            .into_iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
    }
    let psi = psi_weights(model, h);
    let mut var = T::zero();
    let (mut lo, mut hi) = (Vec::with_capacity(h), Vec::with_capacity(h));
    for (k, &p) in fc.iter().enumerate() {
        var += psi[k] * psi[k] * model.sigma2;
        let half = T::of(Z95) * var.sqrt();
        lo.push(p - half);
        hi.push(p + half);
    }
    if nonnegative {
        for v in fc.iter_mut().chain(lo.iter_mut()).chain(hi.iter_mut()) {
            *v = v.max(T::zero());
        }
    }
    Ok(ArimaForecast { point: fc, lo, hi })
}

/// One fitted model per county.
pub fn models_csv<T: Scalar>(rows: &[(String, ArimaModel<T>)]) -> String {
    let mut s = String::from("county,p,d,q,intercept,ar,ma,sigma2,aic\n");
    let join = |v: &[T]| v.iter().map(|x| x.as_f64().to_string()).collect::<Vec<_>>().join(";");
    for (county, m) in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(county),
            m.order.p,
            m.order.d,
            m.order.q,
            m.intercept.as_f64(),
            join(&m.ar),
            join(&m.ma),
            m.sigma2.as_f64(),
            m.aic.as_f64()
        ));
    }
    s
}

pub fn write_models_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[(String, ArimaModel<T>)]) -> Result<()> {
    write_file(path.as_ref(), &models_csv(rows))
}
