//! Replicate engines: Monte-Carlo draws from the estimated Gaussian
//! limit, a group-wise parametric bootstrap, and a wild bootstrap.
//!
//! All three produce a `B × L` matrix of non-negative Q-draws. Replicate
//! `b` always consumes its own RNG stream derived from the master seed
//! and `b` alone, and rows are collected in index order, so the matrix is
//! bit-identical for a fixed `(input, method, kind, seed, B)` no matter
//! how many rayon workers are active.
//!
//! The Monte-Carlo engine freezes the weight matrices and standardizers
//! at the observed covariance and only redraws the Gaussian vector; both
//! bootstrap engines refit means and covariances per replicate and let
//! every replicate decide its own weighting (including its numerical
//! rank for the Wald-type statistic). Bootstrap statistics carry no `β`
//! term: the bootstrap worlds are generated under the null.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean_and_cov, Dataset, GroupStats};
use crate::error::Error;
use crate::hypotheses::HypothesisPartition;
use crate::linalg::{self, Mat, DEFAULT_RTOL};
use crate::quadform::{self, QfKind};
use crate::rng::replicate_rng;
use crate::Result;

/// Distribution of the wild-bootstrap multipliers; all options have mean
/// zero and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightDist {
    StandardNormal,
    /// `±1` with probability 1/2 each.
    Rademacher,
    /// Two-point distribution on `{-(√5-1)/2, (√5+1)/2}` with
    /// probabilities `(√5+1)/(2√5)` and `(√5-1)/(2√5)`.
    Mammen,
}

impl WeightDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightDist::StandardNormal => rng.sample(StandardNormal),
            WeightDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightDist::Mammen => {
                let sqrt5 = 5.0_f64.sqrt();
                let p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
                if rng.random::<f64>() < p_low {
                    -(sqrt5 - 1.0) / 2.0
                } else {
                    (sqrt5 + 1.0) / 2.0
                }
            }
        }
    }
}

impl std::fmt::Display for WeightDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightDist::StandardNormal => write!(f, "normal"),
            WeightDist::Rademacher => write!(f, "rademacher"),
            WeightDist::Mammen => write!(f, "mammen"),
        }
    }
}

impl std::str::FromStr for WeightDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(WeightDist::StandardNormal),
            "rademacher" => Ok(WeightDist::Rademacher),
            "mammen" => Ok(WeightDist::Mammen),
            other => Err(Error::arg(format!(
                "unknown wild-bootstrap weight distribution '{other}'"
            ))),
        }
    }
}

/// Which replicate engine produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResamplingMethod {
    MonteCarlo,
    ParametricBootstrap,
    WildBootstrap(WeightDist),
}

impl std::fmt::Display for ResamplingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResamplingMethod::MonteCarlo => write!(f, "mc"),
            ResamplingMethod::ParametricBootstrap => write!(f, "pb"),
            ResamplingMethod::WildBootstrap(w) => write!(f, "wb-{w}"),
        }
    }
}

/// `B × L` matrix of resampled Q-vectors with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMatrix {
    values: Vec<f64>, // row-major, B rows of length L
    b: usize,
    l: usize,
    pub method: ResamplingMethod,
    pub kind: QfKind,
    pub master_seed: u64,
}

impl ReplicateMatrix {
    pub(crate) fn from_rows(
        rows: Vec<Vec<f64>>,
        l: usize,
        method: ResamplingMethod,
        kind: QfKind,
        master_seed: u64,
    ) -> Self {
        let b = rows.len();
        let mut values = Vec::with_capacity(b * l);
        for row in rows {
            debug_assert_eq!(row.len(), l);
            values.extend_from_slice(&row);
        }
        ReplicateMatrix {
            values,
            b,
            l,
            method,
            kind,
            master_seed,
        }
    }

    /// Number of replicates `B`.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Number of local hypotheses `L`.
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn value(&self, replicate: usize, block: usize) -> f64 {
        self.values[replicate * self.l + block]
    }

    pub fn row(&self, replicate: usize) -> &[f64] {
        &self.values[replicate * self.l..(replicate + 1) * self.l]
    }

    pub fn column(&self, block: usize) -> Vec<f64> {
        (0..self.b).map(|b| self.value(b, block)).collect()
    }
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::arg("replicate count B must be at least 1"));
    }
    Ok(())
}

/// One draw from `N(0, Σ)` via the symmetric square root of `Σ`.
pub fn mvn_sample<R: Rng + ?Sized>(sigma: &Mat, rng: &mut R) -> Result<DVector<f64>> {
    let sqrt = linalg::sym_sqrt(sigma)?;
    Ok(&sqrt * standard_normal_vector(sigma.nrows(), rng))
}

fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Monte-Carlo replicates of the limit vector for a fixed covariance:
/// draw `Z ~ N(0, Σ)` and evaluate every block with the weight matrix
/// and standardizer computed once from that same `Σ`.
pub fn mc_replicates_from_cov(
    sigma: &Mat,
    partition: &HypothesisPartition,
    kind: QfKind,
    b: usize,
    seed: u64,
) -> Result<ReplicateMatrix> {
    check_b(b)?;
    if partition.dim() != sigma.nrows() {
        return Err(Error::dim(format!(
            "partition dimension {} vs covariance order {}",
            partition.dim(),
            sigma.nrows()
        )));
    }
    let sqrt = linalg::sym_sqrt(sigma)?;

    // per block: M, v̂ and the map ξ ↦ C·Σ^{1/2}·ξ
    struct Prepared {
        c_sqrt: Mat,
        m: Mat,
        v_hat: f64,
    }
    let prepared: Vec<Prepared> = partition
        .blocks()
        .iter()
        .map(|blk| {
            let bf = quadform::block_form(&blk.matrix, sigma, kind, DEFAULT_RTOL)?;
            Ok(Prepared {
                c_sqrt: &blk.matrix * &sqrt,
                m: bf.m,
                v_hat: bf.v_hat,
            })
        })
        .collect::<Result<_>>()?;

    let dim = partition.dim();
    let rows: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let xi = standard_normal_vector(dim, &mut rng);
            prepared
                .iter()
                .map(|p| {
                    let y = &p.c_sqrt * &xi;
                    quadform::q_from_parts(&y, &p.m, p.v_hat, 1.0)
                })
                .collect()
        })
        .collect();

    Ok(ReplicateMatrix::from_rows(
        rows,
        partition.len(),
        ResamplingMethod::MonteCarlo,
        kind,
        seed,
    ))
}

/// Monte-Carlo replicates based on the pooled covariance estimate of the
/// sample.
pub fn monte_carlo_replicates(
    stats: &GroupStats,
    partition: &HypothesisPartition,
    kind: QfKind,
    b: usize,
    seed: u64,
) -> Result<ReplicateMatrix> {
    mc_replicates_from_cov(&stats.pooled_cov, partition, kind, b, seed)
}

/// Evaluates all blocks for one resampled world given its group means
/// and covariances; used by both bootstrap engines.
fn bootstrap_row(
    partition: &HypothesisPartition,
    means: &[DVector<f64>],
    covs: &[Mat],
    scales: &[f64],
    n_total: f64,
    kind: QfKind,
) -> Result<Vec<f64>> {
    let d = means[0].len();
    let mut stacked = DVector::zeros(means.len() * d);
    for (i, m) in means.iter().enumerate() {
        stacked.rows_mut(i * d, d).copy_from(m);
    }
    partition
        .blocks()
        .iter()
        .map(|blk| {
            let g = quadform::gram_block_diag(&blk.matrix, covs, scales);
            let bf = quadform::block_form_from_gram(&g, kind, DEFAULT_RTOL)?;
            let y = &blk.matrix * &stacked;
            Ok(quadform::q_from_parts(&y, &bf.m, bf.v_hat, n_total))
        })
        .collect()
}

/// Parametric-bootstrap replicates: per replicate, each group is redrawn
/// i.i.d. from `N_d(0, Σ̂ᵢ)`, and the statistic is rebuilt from the
/// bootstrap means and the bootstrap pooled covariance.
pub fn parametric_bootstrap_replicates(
    data: &Dataset,
    partition: &HypothesisPartition,
    kind: QfKind,
    b: usize,
    seed: u64,
) -> Result<ReplicateMatrix> {
    check_b(b)?;
    let stats = crate::data::compute_stats(data);
    pb_replicates_from_stats(&stats, partition, kind, b, seed)
}

/// Parametric bootstrap driven by precomputed group statistics.
pub fn pb_replicates_from_stats(
    stats: &GroupStats,
    partition: &HypothesisPartition,
    kind: QfKind,
    b: usize,
    seed: u64,
) -> Result<ReplicateMatrix> {
    check_b(b)?;
    let a = stats.group_covs.len();
    let d = stats.group_means[0].len();
    if partition.dim() != a * d {
        return Err(Error::dim(format!(
            "partition dimension {} vs a·d = {}",
            partition.dim(),
            a * d
        )));
    }
    let sqrts: Vec<Mat> = stats
        .group_covs
        .iter()
        .map(linalg::sym_sqrt)
        .collect::<Result<_>>()?;
    let n_total = stats.n_total as f64;
    let scales: Vec<f64> = stats
        .group_sizes
        .iter()
        .map(|&n| n_total / n as f64)
        .collect();

    let rows: Vec<Vec<f64>> = (0..b)
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
            bootstrap_row(partition, &means, &covs, &scales, n_total, kind)
        })
        .collect::<Result<_>>()?;

    Ok(ReplicateMatrix::from_rows(
        rows,
        partition.len(),
        ResamplingMethod::ParametricBootstrap,
        kind,
        seed,
    ))
}

/// Wild-bootstrap replicates: per replicate, the centered observations
/// are multiplied by i.i.d. mean-zero unit-variance weights, and means
/// and covariances are recomputed from those products.
pub fn wild_bootstrap_replicates(
    data: &Dataset,
    partition: &HypothesisPartition,
    kind: QfKind,
    b: usize,
    seed: u64,
    wdist: WeightDist,
) -> Result<ReplicateMatrix> {
    check_b(b)?;
    let a = data.a();
    let d = data.d();
    if partition.dim() != a * d {
        return Err(Error::dim(format!(
            "partition dimension {} vs a·d = {}",
            partition.dim(),
            a * d
        )));
    }
    let stats = crate::data::compute_stats(data);
    let centered: Vec<Mat> = data
        .groups()
        .iter()
        .zip(&stats.group_means)
        .map(|(g, m)| {
            let mut c = g.clone();
            for k in 0..c.nrows() {
                for j in 0..d {
                    c[(k, j)] -= m[j];
                }
            }
            c
        })
        .collect();
    let n_total = stats.n_total as f64;
    let scales: Vec<f64> = stats
        .group_sizes
        .iter()
        .map(|&n| n_total / n as f64)
        .collect();

    let rows: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let mut means = Vec::with_capacity(a);
            let mut covs = Vec::with_capacity(a);
            for cgroup in &centered {
                let mut sample = cgroup.clone();
                for k in 0..sample.nrows() {
                    let w = wdist.sample(&mut rng);
                    for j in 0..d {
                        sample[(k, j)] *= w;
                    }
                }
                let (m, c) = mean_and_cov(&sample);
                means.push(m);
                covs.push(c);
            }
            bootstrap_row(partition, &means, &covs, &scales, n_total, kind)
        })
        .collect::<Result<_>>()?;

    Ok(ReplicateMatrix::from_rows(
        rows,
        partition.len(),
        ResamplingMethod::WildBootstrap(wdist),
        kind,
        seed,
    ))
}

/// Dispatches to the engine selected by `method`.
pub fn replicates(
    data: &Dataset,
    partition: &HypothesisPartition,
    kind: QfKind,
    method: ResamplingMethod,
    b: usize,
    seed: u64,
) -> Result<ReplicateMatrix> {
    match method {
        ResamplingMethod::MonteCarlo => {
            let stats = crate::data::compute_stats(data);
            monte_carlo_replicates(&stats, partition, kind, b, seed)
        }
        ResamplingMethod::ParametricBootstrap => {
            parametric_bootstrap_replicates(data, partition, kind, b, seed)
        }
        ResamplingMethod::WildBootstrap(w) => {
            wild_bootstrap_replicates(data, partition, kind, b, seed, w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::compute_stats;
    use crate::hypotheses::per_component_equality;
    use crate::quadform::limit_weights;
    use rand::SeedableRng;

    fn random_dataset(a: usize, d: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let groups = (0..a)
            .map(|_| Mat::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        Dataset::new(groups).unwrap()
    }

    #[test]
    fn weight_distributions_have_unit_moments() {
        let n = 1_000_000;
        for wdist in [
            WeightDist::StandardNormal,
            WeightDist::Rademacher,
            WeightDist::Mammen,
        ] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let w = wdist.sample(&mut rng);
                sum += w;
                sum_sq += w * w;
            }
            let mean = sum / n as f64;
            let var = sum_sq / n as f64 - mean * mean;
            let se = 1.0 / (n as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "{wdist}: mean = {mean}");
            // Var(W²) ≤ 3 for all three choices, so 3·2/√n is a safe band
            assert!((var - 1.0).abs() < 6.0 * se, "{wdist}: var = {var}");
        }
    }

    #[test]
    fn mammen_support_is_the_golden_ratio_pair() {
        let sqrt5 = 5.0_f64.sqrt();
        let lo = -(sqrt5 - 1.0) / 2.0;
        let hi = (sqrt5 + 1.0) / 2.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut n_lo = 0_u32;
        let n = 100_000;
        for _ in 0..n {
            let w = WeightDist::Mammen.sample(&mut rng);
            assert!((w - lo).abs() < 1e-12 || (w - hi).abs() < 1e-12, "w = {w}");
            if w < 0.0 {
                n_lo += 1;
            }
        }
        let p_lo = (sqrt5 + 1.0) / (2.0 * sqrt5);
        let phat = n_lo as f64 / n as f64;
        let se = (p_lo * (1.0 - p_lo) / n as f64).sqrt();
        assert!((phat - p_lo).abs() < 4.0 * se, "phat = {phat}, want {p_lo}");
    }

    #[test]
    fn mvn_sample_degenerate_and_identity() {
        let mut rng = replicate_rng(3, 0);
        let z = mvn_sample(&Mat::zeros(4, 4), &mut rng).unwrap();
        assert_eq!(z, DVector::zeros(4));

        // marginal variance ≈ 1 under Σ = I
        let mut rng = replicate_rng(4, 0);
        let n = 20_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = mvn_sample(&Mat::identity(2, 2), &mut rng).unwrap();
            sum_sq += z[0] * z[0];
        }
        let var = sum_sq / n as f64;
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn mvn_sample_covariance_matches_input() {
        let sigma = Mat::from_row_slice(3, 3, &[2.0, 0.8, 0.3, 0.8, 1.5, -0.4, 0.3, -0.4, 1.0]);
        let sqrt = linalg::sym_sqrt(&sigma).unwrap();
        let mut rng = replicate_rng(9, 0);
        let n = 100_000;
        let mut acc = Mat::zeros(3, 3);
        for _ in 0..n {
            let z = &sqrt * standard_normal_vector(3, &mut rng);
            acc += &z * z.transpose();
        }
        acc /= n as f64;
        for i in 0..3 {
            for j in 0..3 {
                // SE of a sample covariance entry is √((σᵢᵢσⱼⱼ + σᵢⱼ²)/n)
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt();
                assert!(
                    (acc[(i, j)] - sigma[(i, j)]).abs() < 3.0 * se,
                    "entry ({i},{j}): {} vs {}",
                    acc[(i, j)],
                    sigma[(i, j)]
                );
            }
        }
    }

    #[test]
    fn engines_are_bit_reproducible() {
        let data = random_dataset(3, 2, 6, 15);
        let part = per_component_equality(3, 2).unwrap();
        for method in [
            ResamplingMethod::MonteCarlo,
            ResamplingMethod::ParametricBootstrap,
            ResamplingMethod::WildBootstrap(WeightDist::Mammen),
        ] {
            let r1 = replicates(&data, &part, QfKind::AtsIdentity, method, 64, 99).unwrap();
            let r2 = replicates(&data, &part, QfKind::AtsIdentity, method, 64, 99).unwrap();
            assert_eq!(r1, r2, "{method}");
            let r3 = replicates(&data, &part, QfKind::AtsIdentity, method, 64, 100).unwrap();
            assert_ne!(r1, r3, "{method}: different seed must change output");
        }
    }

    #[test]
    fn engines_do_not_depend_on_thread_count() {
        let data = random_dataset(3, 2, 6, 16);
        let part = per_component_equality(3, 2).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                replicates(
                    &data,
                    &part,
                    QfKind::Wts,
                    ResamplingMethod::ParametricBootstrap,
                    128,
                    7,
                )
                .unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn zero_covariance_data_gives_zero_replicates() {
        // constant groups: Σ̂ᵢ = 0, every engine must produce all-zero rows
        let data = Dataset::new(vec![Mat::from_element(4, 2, 1.0), Mat::from_element(3, 2, 5.0)])
            .unwrap();
        let part = per_component_equality(2, 2).unwrap();
        for method in [
            ResamplingMethod::MonteCarlo,
            ResamplingMethod::ParametricBootstrap,
            ResamplingMethod::WildBootstrap(WeightDist::StandardNormal),
        ] {
            let r = replicates(&data, &part, QfKind::AtsIdentity, method, 16, 5).unwrap();
            assert!(
                (0..r.b()).all(|b| r.row(b).iter().all(|&q| q == 0.0)),
                "{method}"
            );
        }
    }

    #[test]
    fn mc_columns_match_limit_moments() {
        // column mean ≈ Σλᵢ/√v and column variance ≈ 1 for the fixed-Σ engine
        let data = random_dataset(3, 3, 30, 21);
        let stats = compute_stats(&data);
        let part = per_component_equality(3, 3).unwrap();
        let b = 100_000;
        let reps = monte_carlo_replicates(&stats, &part, QfKind::AtsIdentity, b, 31).unwrap();
        for (l, blk) in part.blocks().iter().enumerate() {
            let (weights, v) =
                limit_weights(&blk.matrix, &stats.pooled_cov, QfKind::AtsIdentity, DEFAULT_RTOL)
                    .unwrap();
            let want_mean = weights.iter().sum::<f64>() / v.sqrt();
            let col = reps.column(l);
            let mean = col.iter().sum::<f64>() / b as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
            // column variance is 1 by standardization; mean SE is √(1/B)
            let se = (1.0 / b as f64).sqrt();
            assert!((mean - want_mean).abs() < 4.0 * se, "block {l}: mean {mean} vs {want_mean}");
            assert!((var - 1.0).abs() < 0.05, "block {l}: var {var}");
        }
    }

    #[test]
    fn replicate_matrix_values_are_nonnegative_finite() {
        let data = random_dataset(3, 2, 8, 33);
        let part = per_component_equality(3, 2).unwrap();
        for kind in [QfKind::AtsIdentity, QfKind::Wts] {
            for method in [
                ResamplingMethod::MonteCarlo,
                ResamplingMethod::ParametricBootstrap,
                ResamplingMethod::WildBootstrap(WeightDist::Rademacher),
            ] {
                let r = replicates(&data, &part, kind, method, 200, 8).unwrap();
                assert!(
                    (0..r.b()).all(|b| r.row(b).iter().all(|&q| q >= 0.0 && q.is_finite())),
                    "{kind} {method}"
                );
            }
        }
    }
}
