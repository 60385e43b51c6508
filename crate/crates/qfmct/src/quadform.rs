//! Standardized quadratic-form statistics for local hypotheses, their
//! weighted-chi-square limit laws, and the analytic covariance of the
//! limit vector.
//!
//! For a block `(C, β)` and a plugged-in covariance `Σ` the statistic is
//!
//! ```text
//! Q = N · (Cx̄ − β)ᵀ M (Cx̄ − β) / √v,   v = 2·tr([Cᵀ M C Σ]²),
//! ```
//!
//! with `Q := 0` when `v = 0`. The weighting `M = M(C, Σ)` selects the
//! statistic family: the identity (ANOVA-type), the trace-standardized
//! identity, or the Moore-Penrose inverse of `C Σ Cᵀ` (Wald-type).
//! Standardizing by `√v` gives every block unit limit variance, which is
//! what makes joint calibration of the block vector meaningful.
//!
//! Traces are evaluated through the `r × r` Gram matrix `G = C Σ Cᵀ`
//! using `tr([CᵀMCΣ]²) = tr([MG]²)`, so nothing larger than `r × r` is
//! factorized per block.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::GroupStats;
use crate::error::Error;
use crate::hypotheses::HypothesisPartition;
use crate::linalg::{self, Mat, DEFAULT_RTOL};
use crate::rng::replicate_rng;
use crate::Result;

/// Choice of the weighting function `M(C, Σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QfKind {
    /// `M = I`: ANOVA-type statistic without trace standardization.
    AtsIdentity,
    /// `M = I / tr(C Σ Cᵀ)`; yields the same `Q` as [`QfKind::AtsIdentity`]
    /// whenever the trace is positive.
    AtsStandardized,
    /// `M = (C Σ Cᵀ)⁺`: Wald-type statistic.
    Wts,
}

impl std::fmt::Display for QfKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QfKind::AtsIdentity => write!(f, "ats"),
            QfKind::AtsStandardized => write!(f, "ats-std"),
            QfKind::Wts => write!(f, "wts"),
        }
    }
}

impl std::str::FromStr for QfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ats" => Ok(QfKind::AtsIdentity),
            "ats-std" => Ok(QfKind::AtsStandardized),
            "wts" => Ok(QfKind::Wts),
            other => Err(Error::arg(format!(
                "unknown statistic kind '{other}' (expected ats, ats-std or wts)"
            ))),
        }
    }
}

/// Observed vector of standardized quadratic forms, one entry per local
/// hypothesis, together with the standardizers `v̂_ℓℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStatVector {
    /// `Q_{N1}, ..., Q_{NL}`; non-negative, zero wherever `v̂_ℓℓ = 0`.
    pub values: Vec<f64>,
    /// Standardizers `v̂_ℓℓ = 2·tr([C_ℓᵀ M C_ℓ Σ̂]²)`.
    pub v_hat: Vec<f64>,
    pub kind: QfKind,
    /// Block labels copied from the partition.
    pub labels: Vec<String>,
}

/// Weight matrix and standardizer of one block for a fixed `Σ`.
pub(crate) struct BlockForm {
    pub m: Mat,
    pub v_hat: f64,
}

pub(crate) fn gram(c: &Mat, sigma: &Mat) -> Mat {
    let g = c * sigma * c.transpose();
    (&g + g.transpose()) * 0.5
}

/// Gram matrix `C Σ Cᵀ` for block-diagonal `Σ = ⊕ᵢ scaleᵢ·covsᵢ`,
/// accumulated block-by-block without materializing `Σ`.
pub(crate) fn gram_block_diag(c: &Mat, covs: &[Mat], scales: &[f64]) -> Mat {
    let r = c.nrows();
    let d = covs[0].nrows();
    let mut g = Mat::zeros(r, r);
    for (i, (cov, &s)) in covs.iter().zip(scales).enumerate() {
        let ci = c.columns(i * d, d);
        g += ci * cov * ci.transpose() * s;
    }
    (&g + g.transpose()) * 0.5
}

pub(crate) fn weight_from_gram(g: &Mat, kind: QfKind, rtol: f64) -> Result<Mat> {
    let r = g.nrows();
    match kind {
        QfKind::AtsIdentity => Ok(Mat::identity(r, r)),
        QfKind::AtsStandardized => {
            let tr = g.trace();
            if tr < 0.0 {
                return Err(Error::NotPsd {
                    value: tr,
                    tol: 0.0,
                });
            }
            if tr > 0.0 {
                Ok(Mat::identity(r, r) / tr)
            } else {
                // degenerate block; the v̂ = 0 indicator zeroes the statistic
                Ok(Mat::zeros(r, r))
            }
        }
        QfKind::Wts => linalg::pseudo_inverse(g, rtol),
    }
}

pub(crate) fn block_form_from_gram(g: &Mat, kind: QfKind, rtol: f64) -> Result<BlockForm> {
    let m = weight_from_gram(g, kind, rtol)?;
    let mg = &m * g;
    let v_hat = 2.0 * (&mg * &mg).trace();
    Ok(BlockForm { m, v_hat })
}

pub(crate) fn block_form(c: &Mat, sigma: &Mat, kind: QfKind, rtol: f64) -> Result<BlockForm> {
    block_form_from_gram(&gram(c, sigma), kind, rtol)
}

/// `scale · yᵀMy / √v`, with the degenerate `v = 0` case pinned to zero.
pub(crate) fn q_from_parts(y: &DVector<f64>, m: &Mat, v_hat: f64, scale: f64) -> f64 {
    if v_hat > 0.0 {
        (scale * y.dot(&(m * y)) / v_hat.sqrt()).max(0.0)
    } else {
        0.0
    }
}

fn check_block_shapes(c: &Mat, beta: &DVector<f64>, xbar: &DVector<f64>, sigma: &Mat) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::dim(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if c.ncols() != xbar.len() || c.ncols() != sigma.nrows() {
        return Err(Error::dim(format!(
            "block has {} columns but mean has length {} and covariance order {}",
            c.ncols(),
            xbar.len(),
            sigma.nrows()
        )));
    }
    if c.nrows() != beta.len() {
        return Err(Error::dim(format!(
            "block has {} rows but rhs length {}",
            c.nrows(),
            beta.len()
        )));
    }
    Ok(())
}

/// Weight matrix `M(C, Σ)` for one block.
pub fn weight_matrix(c: &Mat, sigma: &Mat, kind: QfKind, rtol: f64) -> Result<Mat> {
    if c.ncols() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
        return Err(Error::dim(format!(
            "incompatible shapes: C is {}x{}, Σ is {}x{}",
            c.nrows(),
            c.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    weight_from_gram(&gram(c, sigma), kind, rtol)
}

/// Standardized quadratic form for one block; returns `(Q, v̂)`.
pub fn q_statistic(
    c: &Mat,
    beta: &DVector<f64>,
    xbar: &DVector<f64>,
    sigma: &Mat,
    n_total: usize,
    kind: QfKind,
) -> Result<(f64, f64)> {
    check_block_shapes(c, beta, xbar, sigma)?;
    let bf = block_form(c, sigma, kind, DEFAULT_RTOL)?;
    let y = c * xbar - beta;
    Ok((q_from_parts(&y, &bf.m, bf.v_hat, n_total as f64), bf.v_hat))
}

/// The observed statistic vector `(Q_{N1}, ..., Q_{NL})` for a partition,
/// using the stacked mean and pooled covariance of the sample.
pub fn q_vector(
    partition: &HypothesisPartition,
    stats: &GroupStats,
    kind: QfKind,
) -> Result<QStatVector> {
    if partition.dim() != stats.stacked_mean.len() {
        return Err(Error::dim(format!(
            "partition acts on dimension {} but stats have {}",
            partition.dim(),
            stats.stacked_mean.len()
        )));
    }
    let mut values = Vec::with_capacity(partition.len());
    let mut v_hat = Vec::with_capacity(partition.len());
    for b in partition.blocks() {
        let (q, v) = q_statistic(
            &b.matrix,
            &b.rhs,
            &stats.stacked_mean,
            &stats.pooled_cov,
            stats.n_total,
            kind,
        )?;
        values.push(q);
        v_hat.push(v);
    }
    Ok(QStatVector {
        values,
        v_hat,
        kind,
        labels: partition.labels(),
    })
}

/// Eigen-weights of the limit law of one block and the standardizer `v`.
///
/// Under the local hypothesis, `Q` converges to `Σᵢ λᵢ Υᵢ / √v` with
/// `Υᵢ ~ χ²₁` i.i.d. The `λᵢ` are the eigenvalues of
/// `Σ^{1/2} Cᵀ M C Σ^{1/2}`, computed here through the similar `r × r`
/// matrix `M^{1/2} (CΣCᵀ) M^{1/2}`, and `v = 2·Σᵢ λᵢ²`.
pub fn limit_weights(c: &Mat, sigma: &Mat, kind: QfKind, rtol: f64) -> Result<(Vec<f64>, f64)> {
    if c.ncols() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
        return Err(Error::dim("limit_weights: incompatible shapes".to_string()));
    }
    let g = gram(c, sigma);
    let m = weight_from_gram(&g, kind, rtol)?;
    let msqrt = linalg::sym_sqrt(&m)?;
    let w = {
        let w = &msqrt * &g * &msqrt;
        (&w + w.transpose()) * 0.5
    };
    let mut eig = linalg::sym_eig(&w)?;
    let scale = eig.values[0].max(0.0);
    for l in eig.values.iter_mut() {
        if *l < -rtol * scale {
            return Err(Error::NotPsd {
                value: *l,
                tol: rtol * scale,
            });
        }
        *l = l.max(0.0);
    }
    let v = 2.0 * eig.values.iter().map(|l| l * l).sum::<f64>();
    Ok((eig.values, v))
}

/// Draws `count` samples of `Σᵢ λᵢ Υᵢ / √v` with `Υᵢ ~ χ²₁` i.i.d.
pub fn sample_limit(weights: &[f64], v: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(v > 0.0) {
        return Err(Error::Degenerate(format!(
            "limit standardizer must be positive, got {v}"
        )));
    }
    if weights.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::arg("limit weights must be finite and non-negative"));
    }
    let active: Vec<f64> = weights.iter().copied().filter(|&l| l > 0.0).collect();
    let sqrt_v = v.sqrt();
    let mut rng = replicate_rng(seed, 0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut s = 0.0;
        for &l in &active {
            let z: f64 = rng.sample(StandardNormal);
            s += l * z * z;
        }
        out.push(s / sqrt_v);
    }
    Ok(out)
}

/// Covariance of two standardized limit components under their local
/// hypotheses:
/// `(v₁v₂)^{-1/2} · 2·tr(C₁ᵀM₁C₁ Σ C₂ᵀM₂C₂ Σ)`, evaluated through the
/// cross Gram matrix `G₁₂ = C₁ Σ C₂ᵀ`.
pub fn analytic_cross_covariance(c1: &Mat, c2: &Mat, sigma: &Mat, kind: QfKind) -> Result<f64> {
    if c1.ncols() != sigma.nrows() || c2.ncols() != sigma.nrows() || sigma.nrows() != sigma.ncols()
    {
        return Err(Error::dim(
            "analytic_cross_covariance: incompatible shapes".to_string(),
        ));
    }
    let bf1 = block_form(c1, sigma, kind, DEFAULT_RTOL)?;
    let bf2 = block_form(c2, sigma, kind, DEFAULT_RTOL)?;
    if bf1.v_hat <= 0.0 || bf2.v_hat <= 0.0 {
        return Err(Error::Degenerate(
            "cross covariance undefined for blocks with zero standardizer".to_string(),
        ));
    }
    let g12 = c1 * sigma * c2.transpose();
    let cov = 2.0 * (&bf1.m * &g12 * &bf2.m * g12.transpose()).trace();
    Ok(cov / (bf1.v_hat * bf2.v_hat).sqrt())
}
