//! Simultaneous quantile calibration, the QFMCT decision rules, adjusted
//! p-values, and two classical baselines (max-t multiple contrast test
//! and the global ANOVA-type test).
//!
//! Calibration assigns every block the same marginal level β and searches
//! for the largest grid value β* = j/B such that the fraction of
//! replicate rows exceeding their per-block (1-β)-quantiles stays within
//! the global level α. Because lowering the quantiles can only enlarge
//! the exceedance set, the search is monotone and runs as a binary search
//! over order-statistic indices. A block is rejected when its observed
//! statistic strictly exceeds its calibrated quantile; with `0/0 := 1`
//! and the strict inequality, fully degenerate blocks (statistic and
//! quantile both zero) never reject.
//!
//! Adjusted p-values follow the matching min-p construction on the raw
//! per-column ranks, with the add-one finite-sample convention, so they
//! agree with the quantile decisions up to replicate resolution `1/B`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{compute_stats, mean_and_cov, Dataset};
use crate::error::Error;
use crate::hypotheses::{global_partition, tukey_contrast, tukey_labels, HypothesisPartition};
use crate::linalg::{self, Mat};
use crate::quadform::{self, q_vector, QStatVector, QfKind};
use crate::resampling::{self, ReplicateMatrix, ResamplingMethod};
use crate::rng::{child_seed, replicate_rng};
use crate::Result;

/// Number of Monte-Carlo draws behind the equicoordinate quantile of the
/// classical max-t test.
pub const EQUICOORDINATE_DRAWS: usize = 10_000;

/// Outcome of a simultaneous test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Identifier such as `qfmct-ats-pb` or `mct-eq`.
    pub method: String,
    /// Global level α.
    pub alpha: f64,
    /// Per-block labels.
    pub labels: Vec<String>,
    /// Observed local statistics (Q values, or |T| for the max-t test).
    pub observed: Vec<f64>,
    /// Standardizers `v̂_ℓℓ` (contrast variances for the max-t test).
    pub v_hat: Vec<f64>,
    /// Calibrated critical values, one per block.
    pub local_quantiles: Vec<f64>,
    /// Calibrated common local level β*; `None` for equal-quantile rules.
    pub local_level: Option<f64>,
    pub local_reject: Vec<bool>,
    /// True iff any local hypothesis is rejected.
    pub global_reject: bool,
    /// Adjusted p-values in `[1/(B+1), 1]`.
    pub adjusted_p: Vec<f64>,
}

impl TestResult {
    fn from_decisions(
        method: String,
        alpha: f64,
        labels: Vec<String>,
        observed: Vec<f64>,
        v_hat: Vec<f64>,
        local_quantiles: Vec<f64>,
        local_level: Option<f64>,
        adjusted_p: Vec<f64>,
    ) -> Self {
        let local_reject: Vec<bool> = observed
            .iter()
            .zip(&local_quantiles)
            .map(|(&q, &crit)| q > crit)
            .collect();
        let global_reject = local_reject.iter().any(|&r| r);
        TestResult {
            method,
            alpha,
            labels,
            observed,
            v_hat,
            local_quantiles,
            local_level,
            local_reject,
            global_reject,
            adjusted_p,
        }
    }
}

fn sorted_columns(reps: &ReplicateMatrix) -> Vec<Vec<f64>> {
    (0..reps.l())
        .map(|l| {
            let mut col = reps.column(l);
            col.sort_by(|a, b| a.partial_cmp(b).expect("replicates are finite"));
            col
        })
        .collect()
}

/// Equal-local-level calibration of per-block quantiles.
///
/// Returns the calibrated quantiles `q_ℓ(β*)` (the `⌈(1-β*)B⌉`-th order
/// statistic of every column) and `β*` itself, the largest `j/B` whose
/// joint exceedance fraction stays at or below `alpha`.
pub fn calibrate_quantiles(reps: &ReplicateMatrix, alpha: f64) -> Result<(Vec<f64>, f64)> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must be in (0,1), got {alpha}")));
    }
    let b = reps.b();
    if b < 2 {
        return Err(Error::arg("calibration needs at least 2 replicates"));
    }
    let l = reps.l();
    let cols = sorted_columns(reps);

    // joint exceedance count when every block uses its (B-j)-th order statistic
    let exceed_count = |j: usize| -> usize {
        let thresholds: Vec<f64> = (0..l).map(|m| cols[m][b - 1 - j]).collect();
        (0..b)
            .filter(|&row| {
                reps.row(row)
                    .iter()
                    .zip(&thresholds)
                    .any(|(&q, &t)| q > t)
            })
            .count()
    };

    let budget = alpha * b as f64;
    // j = 0 uses column maxima and can never exceed; search the largest
    // feasible j by bisection (exceedance is monotone in j)
    let (mut lo, mut hi) = (0_usize, b - 1);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if exceed_count(mid) as f64 <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let j_star = lo;
    let quantiles = (0..l).map(|m| cols[m][b - 1 - j_star]).collect();
    Ok((quantiles, j_star as f64 / b as f64))
}

fn count_ge(sorted: &[f64], x: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < x)
}

/// Min-p adjusted p-values for the observed statistic vector.
///
/// Raw p-values use the `(1 + count)/(B + 1)` convention; the adjustment
/// compares each observed raw p-value against the row-wise minima of the
/// replicate raw p-values. Computed on integer tie counts, so no
/// floating-point comparisons of p-values are involved.
pub fn adjusted_p_values(reps: &ReplicateMatrix, observed: &QStatVector) -> Result<Vec<f64>> {
    let b = reps.b();
    let l = reps.l();
    if observed.values.len() != l {
        return Err(Error::dim(format!(
            "observed vector has {} entries but replicates have {} columns",
            observed.values.len(),
            l
        )));
    }
    if b < 2 {
        return Err(Error::arg("adjusted p-values need at least 2 replicates"));
    }
    let cols = sorted_columns(reps);

    // per-row minimal tie count = row-wise min of raw p-values
    let min_counts: Vec<usize> = (0..b)
        .map(|row| {
            reps.row(row)
                .iter()
                .enumerate()
                .map(|(m, &q)| count_ge(&cols[m], q))
                .min()
                .expect("at least one block")
        })
        .collect();

    Ok((0..l)
        .map(|m| {
            let c_obs = count_ge(&cols[m], observed.values[m]);
            let hits = min_counts.iter().filter(|&&c| c <= c_obs).count();
            (1 + hits) as f64 / (b + 1) as f64
        })
        .collect())
}

/// The quadratic-form multiple contrast test: observed Q-vector,
/// replicate matrix from the chosen engine, calibrated quantiles,
/// decisions and adjusted p-values.
pub fn qfmct_test(
    data: &Dataset,
    partition: &HypothesisPartition,
    kind: QfKind,
    method: ResamplingMethod,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<TestResult> {
    let stats = compute_stats(data);
    let observed = q_vector(partition, &stats, kind)?;
    let reps = resampling::replicates(data, partition, kind, method, b, seed)?;
    let (quantiles, beta_star) = calibrate_quantiles(&reps, alpha)?;
    let adjusted = adjusted_p_values(&reps, &observed)?;
    Ok(TestResult::from_decisions(
        format!("qfmct-{kind}-{method}"),
        alpha,
        observed.labels.clone(),
        observed.values,
        observed.v_hat,
        quantiles,
        Some(beta_star),
        adjusted,
    ))
}

/// Critical-value source for the classical max-t contrast test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassicMethod {
    /// Equicoordinate quantile of `max|G|`, `G ~ N(0, R̂)`, by Monte-Carlo.
    EquicoordinateMc,
    /// Quantile of `max|T̃*|` over parametric-bootstrap replicates.
    ParametricBootstrap,
}

impl std::fmt::Display for ClassicMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassicMethod::EquicoordinateMc => write!(f, "eq"),
            ClassicMethod::ParametricBootstrap => write!(f, "pb"),
        }
    }
}

fn order_statistic(sorted: &[f64], level: f64) -> f64 {
    // the ⌈level·n⌉-th order statistic, 1-based
    let n = sorted.len();
    let k = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn maxt_adjusted_p(max_draws_sorted: &[f64], observed: &[f64]) -> Vec<f64> {
    let n = max_draws_sorted.len();
    observed
        .iter()
        .map(|&t| (1 + count_ge(max_draws_sorted, t)) as f64 / (n + 1) as f64)
        .collect()
}

/// Classical multiple contrast test over the Tukey-type contrasts:
/// studentized mean differences against a joint critical value for
/// `max_ℓ |T̃_ℓ|`. Contrasts with zero estimated variance get `T̃ = 0`
/// and can never reject.
pub fn classic_mct_test(
    data: &Dataset,
    alpha: f64,
    b: usize,
    method: ClassicMethod,
    seed: u64,
) -> Result<TestResult> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must be in (0,1), got {alpha}")));
    }
    let stats = compute_stats(data);
    let (a, d) = (data.a(), data.d());
    let contrasts = tukey_contrast(a, d)?;
    let labels = tukey_labels(a, d);
    let l = contrasts.nrows();
    let n_total = stats.n_total as f64;

    let gram = quadform::gram(&contrasts, &stats.pooled_cov);
    let variances: Vec<f64> = (0..l).map(|i| gram[(i, i)].max(0.0)).collect();
    let numer = &contrasts * &stats.stacked_mean;
    let t_abs: Vec<f64> = (0..l)
        .map(|i| {
            if variances[i] > 0.0 {
                (n_total.sqrt() * numer[i] / variances[i].sqrt()).abs()
            } else {
                0.0
            }
        })
        .collect();

    let mut max_draws = match method {
        ClassicMethod::EquicoordinateMc => {
            // correlation matrix of the standardized contrasts; rows with
            // zero variance are zeroed and contribute |G| = 0
            let mut corr = Mat::zeros(l, l);
            for i in 0..l {
                for j in 0..l {
                    if variances[i] > 0.0 && variances[j] > 0.0 {
                        corr[(i, j)] = gram[(i, j)] / (variances[i] * variances[j]).sqrt();
                    }
                }
            }
            let sqrt_corr = linalg::sym_sqrt(&corr)?;
            let mc_seed = child_seed(seed, 1);
            (0..EQUICOORDINATE_DRAWS)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replicate_rng(mc_seed, rep as u64);
                    let z = DVector::from_fn(l, |_, _| rng.sample(StandardNormal));
                    let g = &sqrt_corr * z;
                    g.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
                })
                .collect::<Vec<f64>>()
        }
        ClassicMethod::ParametricBootstrap => {
            if b < 2 {
                return Err(Error::arg("bootstrap needs at least 2 replicates"));
            }
            let sqrts: Vec<Mat> = stats
                .group_covs
                .iter()
                .map(linalg::sym_sqrt)
                .collect::<Result<_>>()?;
            let scales: Vec<f64> = stats
                .group_sizes
                .iter()
                .map(|&n| n_total / n as f64)
                .collect();
            (0..b)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replicate_rng(seed, rep as u64);
                    let mut means = Vec::with_capacity(a);
                    let mut covs = Vec::with_capacity(a);
                    for (i, sqrt) in sqrts.iter().enumerate() {
                        let n_i = stats.group_sizes[i];
                        let z = Mat::from_fn(n_i, d, |_, _| rng.sample(StandardNormal));
                        let sample = z * sqrt.transpose();
                        let (m, c) = mean_and_cov(&sample);
                        means.push(m);
                        covs.push(c);
                    }
                    let mut stacked = DVector::zeros(a * d);
                    for (i, m) in means.iter().enumerate() {
                        stacked.rows_mut(i * d, d).copy_from(m);
                    }
                    let g = quadform::gram_block_diag(&contrasts, &covs, &scales);
                    let num = &contrasts * stacked;
                    (0..l).fold(0.0_f64, |mx, i| {
                        let v = g[(i, i)].max(0.0);
                        if v > 0.0 {
                            mx.max((n_total.sqrt() * num[i] / v.sqrt()).abs())
                        } else {
                            mx
                        }
                    })
                })
                .collect::<Vec<f64>>()
        }
    };

    max_draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let q_alpha = order_statistic(&max_draws, 1.0 - alpha);
    let adjusted = maxt_adjusted_p(&max_draws, &t_abs);
    Ok(TestResult::from_decisions(
        format!("mct-{method}"),
        alpha,
        labels,
        t_abs,
        variances,
        vec![q_alpha; l],
        None,
        adjusted,
    ))
}

/// Classical global ANOVA-type test with parametric bootstrap: the
/// single-block QFMCT on `C = P_a ⊗ I_d`.
pub fn classic_ats_global(data: &Dataset, alpha: f64, b: usize, seed: u64) -> Result<TestResult> {
    let partition = global_partition(data.a(), data.d())?;
    let mut result = qfmct_test(
        data,
        &partition,
        QfKind::AtsIdentity,
        ResamplingMethod::ParametricBootstrap,
        alpha,
        b,
        seed,
    )?;
    result.method = "ats-pb".to_string();
    Ok(result)
}
