//! Principal component analysis for wide matrices (few rows, many columns).
//!
//! Rather than forming the p x p covariance, the fit diagonalizes the n x n
//! Gram matrix of centered rows, `G = Xc Xc^T = U diag(s^2) U^T`, and maps
//! each eigenvector back to feature space as `v = Xc^T u / s`. Memory is
//! O(n^2 + n p).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::stats::{dot, CompensatedSum};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `n_components` rows of length p, row-major.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub(crate) fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        explained_variance: Vec<f64>,
        explained_variance_ratio: Vec<f64>,
    ) -> Result<Self> {
        let k = explained_variance.len();
        if explained_variance_ratio.len() != k || components.len() != k * mean.len() {
            return Err(Error::Dimension(format!(
                "inconsistent PCA parts: p={}, {} variances, {} ratios, {} component values",
                mean.len(),
                k,
                explained_variance_ratio.len(),
                components.len()
            )));
        }
        Ok(Self {
            mean,
            components,
            explained_variance,
            explained_variance_ratio,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let p = self.mean.len();
        &self.components[i * p..(i + 1) * p]
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// `components * (x - mean)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "PCA expects {} features, got {}",
                self.mean.len(),
                x.len()
            )));
        }
        Ok((0..self.n_components())
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect())
    }
}

pub fn explained_variance_ratio(model: &PcaModel) -> &[f64] {
    model.explained_variance_ratio()
}

pub fn fit_pca(x: &FeatureMatrix, n_components: usize) -> Result<PcaModel> {
    let n = x.rows();
    let p = x.cols();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if n_components == 0 || n_components > (n - 1).min(p) {
        return Err(Error::Parameter(format!(
            "n_components must be in 1..={} for a {n}x{p} matrix, got {n_components}",
            (n - 1).min(p)
        )));
    }

    let mean: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| x.iter_rows().map(|r| r[j]).collect::<CompensatedSum>().value() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut gram = vec![0.0; n * n];
    let upper: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let centered = &centered;
            (i..n).map(move |j| (i, j, dot(&centered[i], &centered[j])))
        })
        .collect();
    for (i, j, v) in upper {
        gram[i * n + j] = v;
        gram[j * n + i] = v;
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();

    let (eigenvalues, eigenvectors) = symmetric_eigen(gram, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]).then(a.cmp(&b)));

    // eigenvalues below this are numerical noise from a rank-deficient Gram matrix
    let floor = trace.abs() * 1e-12;
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut variances = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let lambda = eigenvalues[idx].max(0.0);
        let axis = if lambda > floor && lambda > 0.0 {
            let s = lambda.sqrt();
            let u: Vec<f64> = (0..n).map(|r| eigenvectors[r * n + idx]).collect();
            let mut v = vec![0.0; p];
            for (row, &ur) in centered.iter().zip(&u) {
                for (vj, cj) in v.iter_mut().zip(row) {
                    *vj += ur * cj;
                }
            }
            v.iter_mut().for_each(|vj| *vj /= s);
            variances.push(lambda / (n - 1) as f64);
            orthonormalize(v, &components)
        } else {
            variances.push(0.0);
            None
        };
        let axis = match axis {
            Some(a) => a,
            None => fallback_axis(p, &components),
        };
        components.push(fix_sign(axis));
    }

    let total = trace / (n - 1) as f64;
    let ratios = variances
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    PcaModel::from_parts(mean, components.concat(), variances, ratios)
}

/// Modified Gram-Schmidt against `basis`; `None` if nothing independent is left.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for b in basis {
        let proj = dot(&v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
    }
    let norm = dot(&v, &v).sqrt();
    if norm < 1e-8 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Unit axis orthogonal to `basis` for directions that carry no variance.
fn fallback_axis(p: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    (0..p)
        .find_map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            orthonormalize(e, basis)
        })
        .expect("n_components <= p guarantees a free axis")
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Cyclic Jacobi eigendecomposition of a symmetric `n x n` row-major matrix.
/// Returns eigenvalues and the eigenvector matrix with eigenvectors in columns.
pub(crate) fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum();
    if scale == 0.0 {
        return ((0..n).map(|i| a[i * n + i]).collect(), v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= scale * 1e-30 {
            break;
        }
        for pi in 0..n {
            for qi in pi + 1..n {
                let apq = a[pi * n + qi];
                if apq == 0.0 {
                    continue;
                }
                let app = a[pi * n + pi];
                let aqq = a[qi * n + qi];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + pi];
                    let akq = a[k * n + qi];
                    a[k * n + pi] = c * akp - s * akq;
                    a[k * n + qi] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[pi * n + k];
                    let aqk = a[qi * n + k];
                    a[pi * n + k] = c * apk - s * aqk;
                    a[qi * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + pi];
                    let vkq = v[k * n + qi];
                    v[k * n + pi] = c * vkp - s * vkq;
                    v[k * n + qi] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}
