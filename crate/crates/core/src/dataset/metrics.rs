//! Regional metrics derived from raw source columns.

use crate::{Error, Result, Scalar};

/// Probability that two residents drawn at random belong to different groups:
/// 1 − Σ(nᵢ/N)².
pub fn diversity_index<T: Scalar>(counts: &[T]) -> Result<T> {
    if counts.iter().any(|c| !c.is_finite() || *c < T::zero()) {
        return Err(Error::DegenerateInput(
            "group counts must be finite and non-negative".into(),
        ));
    }
    let total: T = counts.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::DegenerateInput("all group counts are zero".into()));
    }
    let concentration: T = counts.iter().map(|&n| (n / total) * (n / total)).sum();
    Ok((T::one() - concentration).max(T::zero()))
}

/// Shelter-in-place compliance from the six mobility categories, each a
/// percent change from baseline: −1 − ((1/6)Σmᵢ − 100)/100.
///
/// A uniform −100% change maps to +1 and a uniform +100% change to −1.
pub fn compliance_score<T: Scalar>(mobility: &[T]) -> Result<T> {
    if mobility.len() != 6 {
        return Err(Error::LengthMismatch {
            left: mobility.len(),
            right: 6,
        });
    }
    let mean = mobility.iter().copied().sum::<T>() / T::of(6.0);
    let hundred = T::of(100.0);
    Ok(-T::one() - (mean - hundred) / hundred)
}

/// Rescales counts to a rate per `base` residents.
pub fn per_capita<T: Scalar>(counts: &[T], population: u64, base: T) -> Result<Vec<T>> {
    if population == 0 {
        return Err(Error::DegenerateInput("population is zero".into()));
    }
    let scale = base / T::of(population as f64);
    Ok(counts.iter().map(|&c| c * scale).collect())
}

/// Conventional per-capita base.
pub const PER_100K: f64 = 100_000.0;
