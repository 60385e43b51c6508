//! Grouped dataset representation and the mean / covariance estimators
//! the test statistics are built from.

use nalgebra::DVector;

use crate::error::Error;
use crate::linalg::{direct_sum, Mat};
use crate::Result;

/// A sample of `a ≥ 2` groups of `d`-variate observations, one row per
/// observation. Each group needs at least two rows so that the unbiased
/// covariance estimator exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    groups: Vec<Mat>,
}

impl Dataset {
    pub fn new(groups: Vec<Mat>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::arg(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        let d = groups[0].ncols();
        if d == 0 {
            return Err(Error::arg("observations must have dimension >= 1"));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.ncols() != d {
                return Err(Error::dim(format!(
                    "group {} has dimension {}, expected {}",
                    i + 1,
                    g.ncols(),
                    d
                )));
            }
            if g.nrows() < 2 {
                return Err(Error::InsufficientSample {
                    index: i + 1,
                    size: g.nrows(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("observation in group {}", i + 1)));
            }
        }
        Ok(Dataset { groups })
    }

    /// Number of groups.
    pub fn a(&self) -> usize {
        self.groups.len()
    }

    /// Dimension of one observation.
    pub fn d(&self) -> usize {
        self.groups[0].ncols()
    }

    /// Total sample size over all groups.
    pub fn n_total(&self) -> usize {
        self.groups.iter().map(Mat::nrows).sum()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Mat::nrows).collect()
    }

    pub fn groups(&self) -> &[Mat] {
        &self.groups
    }
}

/// Group means, group covariances and the pooled scaled covariance
/// `Σ̂ = N · ⊕ᵢ nᵢ⁻¹ Σ̂ᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    /// Per-group mean vectors, length `d` each.
    pub group_means: Vec<DVector<f64>>,
    /// Group means stacked into one vector of length `a·d`.
    pub stacked_mean: DVector<f64>,
    /// Unbiased per-group covariance matrices (divisor `nᵢ - 1`).
    pub group_covs: Vec<Mat>,
    /// Block-diagonal `a·d × a·d` matrix with blocks `(N/nᵢ)·Σ̂ᵢ`.
    pub pooled_cov: Mat,
    /// Total sample size `N`.
    pub n_total: usize,
    /// Per-group sample sizes.
    pub group_sizes: Vec<usize>,
}

impl GroupStats {
    /// Builds the stats object directly from per-group pieces. Useful when
    /// the "estimates" are in fact known population quantities, e.g. when
    /// sampling from a fixed limit covariance.
    pub fn from_parts(
        group_means: Vec<DVector<f64>>,
        group_covs: Vec<Mat>,
        group_sizes: Vec<usize>,
    ) -> Result<Self> {
        if group_means.len() != group_covs.len() || group_means.len() != group_sizes.len() {
            return Err(Error::dim("mismatched group counts"));
        }
        let n_total: usize = group_sizes.iter().sum();
        let stacked_mean = stack(&group_means);
        let pooled_cov = pooled(&group_covs, &group_sizes, n_total);
        Ok(GroupStats {
            group_means,
            stacked_mean,
            group_covs,
            pooled_cov,
            n_total,
            group_sizes,
        })
    }
}

fn stack(means: &[DVector<f64>]) -> DVector<f64> {
    let d = means[0].len();
    let mut out = DVector::zeros(means.len() * d);
    for (i, m) in means.iter().enumerate() {
        out.rows_mut(i * d, d).copy_from(m);
    }
    out
}

fn pooled(covs: &[Mat], sizes: &[usize], n_total: usize) -> Mat {
    let blocks: Vec<Mat> = covs
        .iter()
        .zip(sizes)
        .map(|(c, &n)| c * (n_total as f64 / n as f64))
        .collect();
    direct_sum(&blocks)
}

/// Column mean and unbiased covariance of the rows of `g`.
///
/// Summation runs in fixed row order, so the result does not depend on
/// any parallel schedule above this call.
pub(crate) fn mean_and_cov(g: &Mat) -> (DVector<f64>, Mat) {
    let n = g.nrows();
    let d = g.ncols();
    let mut mean = DVector::zeros(d);
    for k in 0..n {
        for j in 0..d {
            mean[j] += g[(k, j)];
        }
    }
    mean /= n as f64;

    let mut cov = Mat::zeros(d, d);
    for k in 0..n {
        for j1 in 0..d {
            let e1 = g[(k, j1)] - mean[j1];
            for j2 in j1..d {
                cov[(j1, j2)] += e1 * (g[(k, j2)] - mean[j2]);
            }
        }
    }
    cov /= (n - 1) as f64;
    for j1 in 0..d {
        for j2 in (j1 + 1)..d {
            cov[(j2, j1)] = cov[(j1, j2)];
        }
    }
    (mean, cov)
}

/// Means and covariances of every group plus the pooled covariance.
pub fn compute_stats(data: &Dataset) -> GroupStats {
    let mut group_means = Vec::with_capacity(data.a());
    let mut group_covs = Vec::with_capacity(data.a());
    for g in data.groups() {
        let (m, c) = mean_and_cov(g);
        group_means.push(m);
        group_covs.push(c);
    }
    let group_sizes = data.group_sizes();
    let n_total = data.n_total();
    let stacked_mean = stack(&group_means);
    let pooled_cov = pooled(&group_covs, &group_sizes, n_total);
    GroupStats {
        group_means,
        stacked_mean,
        group_covs,
        pooled_cov,
        n_total,
        group_sizes,
    }
}

/// The vector of group means in component `j` (0-based), `(X̄₁ⱼ, ..., X̄ₐⱼ)ᵀ`.
pub fn componentwise_mean(stats: &GroupStats, j: usize) -> Result<DVector<f64>> {
    let d = stats.group_means[0].len();
    if j >= d {
        return Err(Error::arg(format!("component {j} out of range (d = {d})")));
    }
    Ok(DVector::from_iterator(
        stats.group_means.len(),
        stats.group_means.iter().map(|m| m[j]),
    ))
}

/// The diagonal `a × a` matrix `N · diag(n₁⁻¹(Σ̂₁)ⱼⱼ, ..., nₐ⁻¹(Σ̂ₐ)ⱼⱼ)`
/// for component `j` (0-based).
pub fn componentwise_cov(stats: &GroupStats, j: usize) -> Result<Mat> {
    let d = stats.group_means[0].len();
    if j >= d {
        return Err(Error::arg(format!("component {j} out of range (d = {d})")));
    }
    let a = stats.group_covs.len();
    let n = stats.n_total as f64;
    let mut out = Mat::zeros(a, a);
    for i in 0..a {
        out[(i, i)] = n / stats.group_sizes[i] as f64 * stats.group_covs[i][(j, j)];
    }
    Ok(out)
}

/// Selector matrix `A_j ∈ {0,1}^{a × ad}` with `A_j · x̄ = x̄⁽ʲ⁾`:
/// row `i` picks entry `i·d + j` of the stacked mean (0-based `j`).
pub fn selector_matrix(a: usize, d: usize, j: usize) -> Result<Mat> {
    if a < 1 || d < 1 || j >= d {
        return Err(Error::arg(format!(
            "invalid selector indices a={a}, d={d}, j={j}"
        )));
    }
    let mut m = Mat::zeros(a, a * d);
    for i in 0..a {
        m[(i, i * d + j)] = 1.0;
    }
    Ok(m)
}
