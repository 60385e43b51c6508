//! Shared helpers for the integration and acceptance suites.
#![allow(dead_code)] // not every target uses every helper

use qfmct::sim::{Alternative, CovSpec, ErrorDist, ScenarioConfig, TestId};
use qfmct::Mat;

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
pub fn ks_one_sample(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = draws.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let n = x.len() as f64;
    let mut dist = 0.0_f64;
    for (i, &xi) in x.iter().enumerate() {
        let f = cdf(xi);
        dist = dist.max((f - i as f64 / n).abs());
        dist = dist.max((f - (i as f64 + 1.0) / n).abs());
    }
    dist
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    xb.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0_usize, 0_usize);
    let mut dist = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        dist = dist.max((i as f64 / na - j as f64 / nb).abs());
    }
    dist
}

/// Sample mean and variance.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// The simulated three-group design: five-dimensional observations,
/// compound-symmetry covariance (diagonal 2..6, unit off-diagonals) for
/// the first two groups, an AR(0.65) covariance for the third, and
/// 0.4/0.4/0.2 group-size fractions.
pub fn three_group_design() -> ScenarioConfig {
    ScenarioConfig {
        a: 3,
        d: 5,
        sample_sizes: vec![100],
        fractions: vec![0.4, 0.4, 0.2],
        cov_specs: design_cov_specs(),
        error_dist: ErrorDist::Normal,
        alternative: Alternative::OnePoint,
        delta_grid: vec![0.0],
        nsim: 100,
        b: 500,
        alpha: 0.05,
        seed: 0x5EED,
        tests: vec!["qfmct-ats-pb".parse::<TestId>().unwrap()],
    }
}

pub fn design_cov_specs() -> Vec<CovSpec> {
    let compound = CovSpec::Compound {
        diag: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        offset: 1.0,
    };
    vec![compound.clone(), compound, CovSpec::Ar { rho: 0.65, dim: 5 }]
}

/// Limit covariance of the design: `⊕ κᵢ⁻¹ Σᵢ`.
pub fn design_limit_cov() -> Mat {
    let specs = design_cov_specs();
    let kappas = [0.4, 0.4, 0.2];
    let blocks: Vec<Mat> = specs
        .iter()
        .zip(kappas)
        .map(|(s, k)| qfmct::sim::make_cov(s).unwrap() / k)
        .collect();
    qfmct::linalg::direct_sum(&blocks)
}
