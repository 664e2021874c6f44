use ndarray::{Array1, Array2};

use crate::{Error, Result, Scalar};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().partial_cmp(&m[[j, col]].abs()).unwrap())
            .unwrap();
        if m[[pivot, col]].abs() <= T::epsilon() * T::of(1e3) * scale {
            return Err(Error::DegenerateInput("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = m[[row, col]] / m[[col, col]];
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[[col, k]];
                m[[row, k]] -= factor * v;
            }
            let v = rhs[col];
            rhs[row] -= factor * v;
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Ok(x)
}

/// Ordinary least squares fit.
pub(crate) struct Ols<T> {
    pub coef: Array1<T>,
    pub sse: T,
    /// Diagonal of (XᵀX)⁻¹, for standard errors.
    pub xtx_inv_diag: Array1<T>,
}

pub(crate) fn ols<T: Scalar>(x: &Array2<T>, y: &Array1<T>) -> Result<Ols<T>> {
    let xt = x.t();
    let xtx = xt.dot(x);
    let xty = xt.dot(y);
    let coef = solve(&xtx, &xty)?;
    let resid = y - &x.dot(&coef);
    let sse = resid.iter().map(|&r| r * r).sum();
    let k = xtx.ncols();
    let mut diag = Array1::zeros(k);
    for j in 0..k {
        let mut e = Array1::zeros(k);
        e[j] = T::one();
        diag[j] = solve(&xtx, &e)?[j];
    }
    Ok(Ols {
        coef,
        sse,
        xtx_inv_diag: diag,
    })
}
