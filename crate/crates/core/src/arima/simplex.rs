use crate::Scalar;

/// Outcome of a Nelder–Mead run.
pub(crate) struct Minimum<T> {
    pub x: Vec<T>,
    pub f: T,
    pub converged: bool,
}

/// Derivative-free simplex minimization from `x0` with initial edge `step`.
pub(crate) fn nelder_mead<T: Scalar>(f: impl Fn(&[T]) -> T, x0: &[T], step: T, max_iter: usize, tol: T) -> Minimum<T> {
    let n = x0.len();
    let mut pts: Vec<Vec<T>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<T> = pts.iter().map(|p| f(p)).collect();
    let half = T::of(0.5);
    let two = T::of(2.0);

    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        // stable order keeps runs reproducible on ties
        idx.sort_by(|&a, &b| {
            vals[a]
                .partial_cmp(&vals[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();

        let spread = (vals[n] - vals[0]).abs();
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), |m, v| m.max(v));
        if vals[0].is_finite() && spread <= tol * (T::one() + vals[0].abs()) && size <= tol.sqrt() {
            return Minimum {
                x: pts.swap_remove(0),
                f: vals[0],
                converged: true,
            };
        }

        let centroid: Vec<T> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<T>() / T::of_usize(n))
            .collect();
        let along = |t: T| -> Vec<T> { centroid.iter().zip(&pts[n]).map(|(&c, &w)| c + t * (c - w)).collect() };

        let xr = along(T::one());
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(two);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(half);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-half);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<T> = pts[i].iter().zip(&pts[0]).map(|(&a, &b)| b + half * (a - b)).collect();
            vals[i] = f(&p);
            pts[i] = p;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    Minimum {
        x: pts[best].clone(),
        f: vals[best],
        converged: false,
    }
}
