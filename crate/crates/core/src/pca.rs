//! Principal components and per-feature informativeness.
//!
//! Informativeness of feature i is Σⱼ uⱼ·|cⱼ[i]| over the components
//! needed to retain a variance fraction (0.98 by default), where uⱼ is
//! the explained-variance ratio of component j and cⱼ its unit loading
//! vector. Loadings enter by magnitude so that opposite-signed
//! contributions do not cancel.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::FeaturePanel;
use crate::{Error, Result, Scalar};

/// Columns with population standard deviation below this are dropped.
pub const CONSTANT_STD: f64 = 1e-12;
/// Maximum number of Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Column-standardized data. `z` holds only the kept columns.
#[derive(Debug, Clone)]
pub struct Standardized<T> {
    pub z: Array2<T>,
    pub mean: Vec<T>,
    /// Population standard deviation (1/m) of each kept column.
    pub std: Vec<T>,
    pub kept: Vec<usize>,
    /// Constant columns, by original index.
    pub dropped: Vec<usize>,
}

fn column_moments<T: Scalar>(x: ArrayView2<T>) -> Result<(Vec<T>, Vec<T>)> {
    let m = x.nrows();
    if m < 2 {
        return Err(Error::TooShort { needed: 2, got: m });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite entry in data matrix".into()));
    }
    let mf = T::of_usize(m);
    let mean: Vec<T> = x.axis_iter(Axis(1)).map(|c| c.sum() / mf).collect();
    let std = x
        .axis_iter(Axis(1))
        .zip(&mean)
        .map(|(c, &mu)| (c.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / mf).sqrt())
        .collect();
    Ok((mean, std))
}

/// Centers each column and scales it to unit population standard deviation.
pub fn standardize<T: Scalar>(x: ArrayView2<T>) -> Result<Standardized<T>> {
    center(x, true)
}

fn center<T: Scalar>(x: ArrayView2<T>, scale: bool) -> Result<Standardized<T>> {
    let (mean, std) = column_moments(x)?;
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..x.ncols()).partition(|&j| std[j] >= T::of(CONSTANT_STD));
    let mut z = Array2::zeros((x.nrows(), kept.len()));
    for (k, &j) in kept.iter().enumerate() {
        let s = if scale { std[j] } else { T::one() };
        for i in 0..x.nrows() {
            z[[i, k]] = (x[[i, j]] - mean[j]) / s;
        }
    }
    Ok(Standardized {
        z,
        mean: kept.iter().map(|&j| mean[j]).collect(),
        std: kept.iter().map(|&j| if scale { std[j] } else { T::one() }).collect(),
        kept,
        dropped,
    })
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns. Each eigenvector's largest-magnitude entry is
/// made positive.
pub fn eigen_sym<T: Scalar>(s: ArrayView2<T>) -> Result<(Vec<T>, Array2<T>)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: s.ncols(),
        });
    }
    let scale = s.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let mut asym = T::zero();
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    if asym > T::of(T::SYMMETRY_TOL) * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym.as_f64(),
        });
    }

    let mut a = s.to_owned();
    // symmetrize exactly so rotations see one value per pair
    for i in 0..n {
        for j in 0..i {
            let v = (a[[i, j]] + a[[j, i]]) / T::of(2.0);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    let mut v = Array2::<T>::eye(n);
    let frob = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let tol = T::of(T::JACOBI_TOL) * T::one().max(frob);

    let max_off = |a: &Array2<T>| {
        let mut m = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                m = m.max(a[[p, q]].abs());
            }
        }
        m
    };

    let mut converged = n < 2 || max_off(&a) < tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                what: "jacobi eigendecomposition",
                iterations: MAX_SWEEPS,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (T::of(2.0) * apq);
                let t = {
                    let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - sn * akq;
                    a[[k, q]] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - sn * aqk;
                    a[[q, k]] = sn * apk + c * aqk;
                }
                a[[p, q]] = T::zero();
                a[[q, p]] = T::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
        converged = max_off(&a) < tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap().then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let pivot =
            col.iter().copied().enumerate().fold(
                (0, T::zero()),
                |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best },
            );
        let sign = if pivot.1 < T::zero() { -T::one() } else { T::one() };
        for k in 0..n {
            vectors[[k, dst]] = col[k] * sign;
        }
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaOptions {
    /// Scale columns to unit variance before decomposition.
    pub standardize: bool,
    /// Variance fraction whose components enter the informativeness score.
    pub retain: f64,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            retain: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcaModel<T> {
    pub feature_names: Vec<String>,
    /// Original indices of the non-constant features the components span.
    pub kept: Vec<usize>,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    /// One unit loading vector per row, sorted by eigenvalue descending.
    pub components: Array2<T>,
    pub eigenvalues: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    /// Number of leading components summed into `informativeness`.
    pub retained: usize,
    /// Score per original feature; constant features score 0.
    pub informativeness: Vec<T>,
}

/// Smallest k whose leading ratios sum to at least `frac`, together with
/// the cumulative curve.
pub fn components_for_variance<T: Scalar>(ratios: &[T], frac: T) -> (usize, Vec<T>) {
    let mut cumulative = Vec::with_capacity(ratios.len());
    let mut acc = T::zero();
    for &r in ratios {
        acc += r;
        cumulative.push(acc);
    }
    // absorb rounding in the ratio sum
    let slack = T::epsilon() * T::of_usize(4 * ratios.len().max(1));
    let k = cumulative
        .iter()
        .position(|&c| c >= frac - slack)
        .map(|i| i + 1)
        .unwrap_or(ratios.len());
    (k.max(1), cumulative)
}

/// Fits components on standardized (or centered) data.
pub fn fit_pca<T: Scalar>(data: &Standardized<T>, feature_names: &[String], retain: f64) -> Result<PcaModel<T>> {
    let n_total = data.kept.len() + data.dropped.len();
    if feature_names.len() != n_total {
        return Err(Error::LengthMismatch {
            left: feature_names.len(),
            right: n_total,
        });
    }
    if !(retain > 0.0 && retain <= 1.0) {
        return Err(Error::InvalidConfig("retain fraction must be in (0, 1]".into()));
    }
    let m = data.z.nrows();
    let n = data.z.ncols();
    let mut informativeness = vec![T::zero(); n_total];
    if n == 0 {
        return Ok(PcaModel {
            feature_names: feature_names.to_vec(),
            kept: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            components: Array2::zeros((0, 0)),
            eigenvalues: Vec::new(),
            explained_variance_ratio: Vec::new(),
            retained: 0,
            informativeness,
        });
    }
    let cov = data.z.t().dot(&data.z) / T::of_usize(m - 1);
    let (values, vectors) = eigen_sym(cov.view())?;
    let clipped: Vec<T> = values.iter().map(|&l| l.max(T::zero())).collect();
    let total: T = clipped.iter().copied().sum();
    let ratios: Vec<T> = clipped.iter().map(|&l| l / total).collect();
    let (retained, _) = components_for_variance(&ratios, T::of(retain));
    let components = vectors.t().to_owned();
    for j in 0..retained {
        for (k, &orig) in data.kept.iter().enumerate() {
            informativeness[orig] += ratios[j] * components[[j, k]].abs();
        }
    }
    Ok(PcaModel {
        feature_names: feature_names.to_vec(),
        kept: data.kept.clone(),
        mean: data.mean.clone(),
        std: data.std.clone(),
        components,
        eigenvalues: values,
        explained_variance_ratio: ratios,
        retained,
        informativeness,
    })
}

impl<T: Scalar> PcaModel<T> {
    /// Standardizes (per `options`) and fits in one step.
    pub fn fit(x: ArrayView2<T>, feature_names: &[String], options: &PcaOptions) -> Result<Self> {
        let data = center(x, options.standardize)?;
        fit_pca(&data, feature_names, options.retain)
    }

    pub fn components_for_variance(&self, frac: T) -> (usize, Vec<T>) {
        components_for_variance(&self.explained_variance_ratio, frac)
    }

    /// Features by informativeness, descending; ties by name; constant
    /// features last with score 0.
    pub fn rank_features(&self, top_k: Option<usize>) -> Vec<(String, T)> {
        let is_kept: Vec<bool> = {
            let mut v = vec![false; self.feature_names.len()];
            for &k in &self.kept {
                v[k] = true;
            }
            v
        };
        let mut order: Vec<usize> = (0..self.feature_names.len()).collect();
        order.sort_by(|&a, &b| {
            is_kept[b]
                .cmp(&is_kept[a])
                .then_with(|| self.informativeness[b].partial_cmp(&self.informativeness[a]).unwrap())
                .then_with(|| self.feature_names[a].cmp(&self.feature_names[b]))
        });
        order
            .into_iter()
            .take(top_k.unwrap_or(usize::MAX))
            .map(|i| (self.feature_names[i].clone(), self.informativeness[i]))
            .collect()
    }

    /// Scores of each row on the first `k` components.
    pub fn transform(&self, x: ArrayView2<T>, k: usize) -> Result<Array2<T>> {
        if x.ncols() != self.feature_names.len() {
            return Err(Error::LengthMismatch {
                left: x.ncols(),
                right: self.feature_names.len(),
            });
        }
        let k = k.min(self.components.nrows());
        let mut z = Array2::zeros((x.nrows(), self.kept.len()));
        for (c, &j) in self.kept.iter().enumerate() {
            for i in 0..x.nrows() {
                z[[i, c]] = (x[[i, j]] - self.mean[c]) / self.std[c];
            }
        }
        Ok(z.dot(&self.components.slice(ndarray::s![..k, ..]).t()))
    }

    /// Writes `components.csv`, `variance.csv` and `informativeness.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut text = String::from("component");
        for &k in &self.kept {
            text.push(',');
            text.push_str(&self.feature_names[k]);
        }
        text.push('\n');
        for j in 0..self.components.nrows() {
            text.push_str(&(j + 1).to_string());
            for v in self.components.row(j) {
                text.push_str(&format!(",{}", v.as_f64()));
            }
            text.push('\n');
        }
        write_file(&dir.join("components.csv"), &text)?;

        let (_, cumulative) = self.components_for_variance(T::one());
        let mut text = String::from("component,eigenvalue,ratio,cumulative\n");
        for j in 0..self.eigenvalues.len() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                j + 1,
                self.eigenvalues[j].as_f64(),
                self.explained_variance_ratio[j].as_f64(),
                cumulative[j].as_f64()
            ));
        }
        write_file(&dir.join("variance.csv"), &text)?;

        let mut text = String::from("rank,feature,score\n");
        for (i, (name, score)) in self.rank_features(None).into_iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", i + 1, csv_field(&name), score.as_f64()));
        }
        write_file(&dir.join("informativeness.csv"), &text)
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// How panel records become PCA rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaRows {
    /// One row per (county, date): static features ⊕ that day's dynamic features.
    #[default]
    CountyDate,
    /// One row per county: static features ⊕ dynamic features averaged over dates.
    County,
}

/// Data matrix, feature names and row labels for PCA over a panel.
pub fn panel_matrix(panel: &FeaturePanel, rows: PcaRows) -> (Array2<f64>, Vec<String>, Vec<String>) {
    let names: Vec<String> = panel
        .static_features()
        .iter()
        .chain(panel.dynamic_features())
        .map(|f| f.name.clone())
        .collect();
    let (s, d) = (panel.static_features().len(), panel.dynamic_features().len());
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for c in 0..panel.n_counties() {
        let fips = panel.counties()[c].fips();
        match rows {
            PcaRows::CountyDate => {
                for t in 0..panel.n_days() {
                    data.extend_from_slice(panel.static_row(c));
                    data.extend_from_slice(panel.dynamic_row(c, t));
                    labels.push(format!("{fips}:{}", panel.date(t)));
                }
            }
            PcaRows::County => {
                data.extend_from_slice(panel.static_row(c));
                let mut avg = vec![0.0; d];
                for t in 0..panel.n_days() {
                    for (a, v) in avg.iter_mut().zip(panel.dynamic_row(c, t)) {
                        *a += v;
                    }
                }
                data.extend(avg.into_iter().map(|a| a / panel.n_days() as f64));
                labels.push(fips.to_string());
            }
        }
    }
    let m = labels.len();
    (
        Array2::from_shape_vec((m, s + d), data).expect("row-major panel matrix"),
        names,
        labels,
    )
}

/// Writes the first two component scores per row (biplot input).
pub fn write_projection<T: Scalar>(path: impl AsRef<Path>, labels: &[String], scores: &Array2<T>) -> Result<()> {
    let mut text = String::from("row,pc1,pc2\n");
    for (i, label) in labels.iter().enumerate() {
        let get = |j: usize| {
            if j < scores.ncols() {
                scores[[i, j]].as_f64()
            } else {
                0.0
            }
        };
        text.push_str(&format!("{},{},{}\n", csv_field(label), get(0), get(1)));
    }
    write_file(path.as_ref(), &text)
}

/// Reconstruction V·diag(λ)·Vᵀ, used to check decompositions.
pub fn reconstruct<T: Scalar>(values: &[T], vectors: &Array2<T>) -> Array2<T> {
    let lambda = Array1::from(values.to_vec());
    let scaled = vectors * &lambda;
    scaled.dot(&vectors.t())
}
