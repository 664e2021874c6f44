//! Correlation measures between paired samples.
//!
//! All measures are symmetric in their arguments. Only Pearson carries a
//! p-value (two-sided t test with m − 2 degrees of freedom).

mod report;

pub use report::{correlate_panel, CorrelationReport, ReportOptions, ReportRow};

use serde::Serialize;

use crate::error::check_len;
use crate::special::student_t_two_sided;
use crate::{Error, Result, Scalar};

/// Default bin count for mutual information.
pub const DEFAULT_MI_BINS: usize = 16;
/// Default bin count for histogram intersection.
pub const DEFAULT_HIST_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pearson,
    Spearman,
    Kendall,
    HistIntersection,
    MutualInformation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pearson,
        Method::Spearman,
        Method::Kendall,
        Method::HistIntersection,
        Method::MutualInformation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
            Method::Kendall => "kendall",
            Method::HistIntersection => "hist_intersection",
            Method::MutualInformation => "mutual_information",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult<T> {
    pub method: Method,
    pub statistic: T,
    /// Present only for [`Method::Pearson`].
    pub p_value: Option<T>,
    /// Sample count.
    pub n: usize,
}

impl<T: Scalar> CorrelationResult<T> {
    fn new(method: Method, statistic: T, n: usize) -> Self {
        Self {
            method,
            statistic,
            p_value: None,
            n,
        }
    }
}

fn check_pair<T: Scalar>(x: &[T], y: &[T], min_len: usize) -> Result<()> {
    check_len(x.len(), y.len())?;
    if x.len() < min_len {
        return Err(Error::TooShort {
            needed: min_len,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite sample".into()));
    }
    Ok(())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

// Product-moment coefficient; errors when either series has zero spread.
fn pearson_coefficient<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Pearson correlation with a two-sided p-value.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    check_pair(x, y, 3)?;
    let r = pearson_coefficient(x, y)?;
    let m = x.len();
    let p = pearson_p_value(r.as_f64(), m);
    Ok(CorrelationResult {
        method: Method::Pearson,
        statistic: r,
        p_value: Some(T::of(p)),
        n: m,
    })
}

/// Two-sided p-value of a Pearson coefficient `r` over `m` samples.
pub fn pearson_p_value(r: f64, m: usize) -> f64 {
    let df = (m - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r * (df / denom).sqrt();
    student_t_two_sided(t, df)
}

/// Average (fractional) ranks, 1-based. Ties share the mean of their positions.
pub fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = T::of((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
///
/// On tie-free data this coincides with 1 − 6Σd²/(m(m²−1)); with ties the
/// shortcut is biased and is not used.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    check_pair(x, y, 3)?;
    let s = pearson_coefficient(&average_ranks(x), &average_ranks(y))?;
    Ok(CorrelationResult::new(Method::Spearman, s, x.len()))
}

/// Kendall tau-a: (concordant − discordant) / C(m, 2).
///
/// Pairs tied in either coordinate count as neither. Uses Knight's
/// O(m log m) merge-sort inversion count with integer bookkeeping.
pub fn kendall<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    check_pair(x, y, 2)?;
    let net = kendall_net_concordance(x, y);
    let m = x.len() as i64;
    let total = m * (m - 1) / 2;
    Ok(CorrelationResult::new(
        Method::Kendall,
        T::of(net as f64) / T::of(total as f64),
        x.len(),
    ))
}

fn tie_pairs<T: PartialEq + Copy, K: Fn(usize) -> T>(order: &[usize], key: K) -> i64 {
    let mut pairs = 0i64;
    let mut run = 1i64;
    for w in order.windows(2) {
        if key(w[0]) == key(w[1]) {
            run += 1;
        } else {
            pairs += run * (run - 1) / 2;
            run = 1;
        }
    }
    pairs + run * (run - 1) / 2
}

/// Returns concordant − discordant pair count.
fn kendall_net_concordance<T: Scalar>(x: &[T], y: &[T]) -> i64 {
    let m = x.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite values");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| cmp(&x[a], &x[b]).then_with(|| cmp(&y[a], &y[b])));

    let total = (m as i64) * (m as i64 - 1) / 2;
    let tied_x = tie_pairs(&order, |i| x[i]);
    let tied_xy = tie_pairs(&order, |i| (x[i], y[i]));

    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let discordant = merge_count(&mut ys, &mut buf);

    // ys is now sorted, so ties in y are adjacent.
    let idx: Vec<usize> = (0..m).collect();
    let tied_y = tie_pairs(&idx, |i| ys[i]);

    total - tied_x - tied_y + tied_xy - 2 * discordant
}

// Sorts `v` and returns the number of strict inversions.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut [T]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn bin_index<T: Scalar>(v: T, lo: T, width: T, bins: usize) -> usize {
    if width == T::zero() {
        return 0;
    }
    let raw = ((v - lo) / width * T::of_usize(bins)).floor();
    let idx = raw.to_usize().unwrap_or(0);
    idx.min(bins - 1)
}

fn range<T: Scalar>(v: &[T]) -> (T, T) {
    v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &a| {
        (lo.min(a), hi.max(a))
    })
}

/// Normalized histogram intersection Σ_b min(h_x(b), h_y(b)).
///
/// Both series share bin edges over their joint min–max range. When every
/// value in both series is identical the distributions coincide and the
/// result is 1 by convention.
pub fn histogram_intersection<T: Scalar>(x: &[T], y: &[T], bins: usize) -> Result<CorrelationResult<T>> {
    check_pair(x, y, 1)?;
    if bins < 2 {
        return Err(Error::InvalidConfig("histogram needs at least 2 bins".into()));
    }
    let (xl, xh) = range(x);
    let (yl, yh) = range(y);
    let (lo, hi) = (xl.min(yl), xh.max(yh));
    if lo == hi {
        return Ok(CorrelationResult::new(Method::HistIntersection, T::one(), x.len()));
    }
    let width = hi - lo;
    let mut hx = vec![0usize; bins];
    let mut hy = vec![0usize; bins];
    for &v in x {
        hx[bin_index(v, lo, width, bins)] += 1;
    }
    for &v in y {
        hy[bin_index(v, lo, width, bins)] += 1;
    }
    let m = T::of_usize(x.len());
    let stat = hx.iter().zip(&hy).map(|(&a, &b)| T::of_usize(a.min(b)) / m).sum::<T>();
    Ok(CorrelationResult::new(
        Method::HistIntersection,
        stat.min(T::one()),
        x.len(),
    ))
}

/// Plug-in mutual information (nats) over an equal-width 2-D histogram.
///
/// Each axis is binned over its own range; a constant axis falls into a
/// single bin and yields zero information.
pub fn mutual_information<T: Scalar>(x: &[T], y: &[T], bins: usize) -> Result<CorrelationResult<T>> {
    check_pair(x, y, 1)?;
    if bins < 2 {
        return Err(Error::InvalidConfig("histogram needs at least 2 bins".into()));
    }
    let (xl, xh) = range(x);
    let (yl, yh) = range(y);
    let mut joint = vec![0usize; bins * bins];
    let mut px = vec![0usize; bins];
    let mut py = vec![0usize; bins];
    for (&a, &b) in x.iter().zip(y) {
        let i = bin_index(a, xl, xh - xl, bins);
        let j = bin_index(b, yl, yh - yl, bins);
        joint[i * bins + j] += 1;
        px[i] += 1;
        py[j] += 1;
    }
    let m = x.len() as f64;
    let mut mi = 0.0f64;
    for i in 0..bins {
        for j in 0..bins {
            let n = joint[i * bins + j];
            if n == 0 {
                continue;
            }
            let n = n as f64;
            mi += n / m * (n * m / (px[i] as f64 * py[j] as f64)).ln();
        }
    }
    Ok(CorrelationResult::new(
        Method::MutualInformation,
        T::of(mi.max(0.0)),
        x.len(),
    ))
}

/// Runs every method on one pair. Undefined measures (constant inputs) are `None`.
pub fn all_measures<T: Scalar>(
    x: &[T],
    y: &[T],
    hist_bins: usize,
    mi_bins: usize,
) -> Result<Vec<(Method, Option<CorrelationResult<T>>)>> {
    check_pair(x, y, 3)?;
    let undefined = |r: Result<CorrelationResult<T>>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(vec![
        (Method::Pearson, undefined(pearson(x, y))?),
        (Method::Spearman, undefined(spearman(x, y))?),
        (Method::Kendall, Some(kendall(x, y)?)),
        (Method::HistIntersection, Some(histogram_intersection(x, y, hist_bins)?)),
        (Method::MutualInformation, Some(mutual_information(x, y, mi_bins)?)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_exact_lines() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert_eq!(r.p_value, Some(0.0));
        let r = pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap();
        assert_eq!(r.statistic, -1.0);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn spearman_monotone_maps() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        assert_eq!(spearman(&x, &y).unwrap().statistic, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[9.0, 4.0, 1.0]).unwrap().statistic, -1.0);
        assert!(spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn kendall_extremes_and_ties() {
        assert_eq!(kendall(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().statistic, 1.0);
        assert_eq!(kendall(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().statistic, -1.0);
        // pairs: (1,2) tied in y, (1,3) C, (2,3) C -> 2/3
        let k: f64 = kendall(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap().statistic;
        assert!((k - 2.0 / 3.0).abs() < 1e-15);
        // all tied
        assert_eq!(kendall(&[1.0, 1.0], &[0.0, 5.0]).unwrap().statistic, 0.0);
    }

    #[test]
    fn histogram_cases() {
        let x = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(histogram_intersection(&x, &x, 5).unwrap().statistic, 1.0);
        let y = [10.1, 10.5, 10.9, 10.3];
        assert_eq!(histogram_intersection(&x, &y, 4).unwrap().statistic, 0.0);
        let c = [2.0; 4];
        assert_eq!(histogram_intersection(&c, &c, 3).unwrap().statistic, 1.0);
        assert!(histogram_intersection(&x, &x, 1).is_err());
    }

    #[test]
    fn mutual_information_constant_is_zero() {
        let x = [3.0; 6];
        let y = [1.0, 5.0, 2.0, 8.0, 3.0, 0.0];
        assert_eq!(mutual_information(&x, &y, 4).unwrap().statistic, 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let r = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[1.5f32, 2.5, 3.0, 5.0]).unwrap();
        assert!(r.statistic > 0.9 && r.statistic <= 1.0);
    }
}
