//! Simulation harness: data generators for the heteroscedastic
//! three-group design, rejection-rate estimation over repeated synthetic
//! datasets, and power tables with a binomial flag on the null rows.
//!
//! One repetition draws a dataset, hands the same dataset to every
//! configured test and records the global rejections. Repetitions run in
//! parallel with per-repetition seed derivation, and rejection counts are
//! integers, so a table is reproduced exactly by (config, seed) alone.

use rand::Rng;
use rand_distr::{SkewNormal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Error;
use crate::hypotheses::{global_partition, per_component_equality};
use crate::linalg::{self, Mat};
use crate::quadform::QfKind;
use crate::resampling::{ResamplingMethod, WeightDist};
use crate::rng::{child_seed, replicate_rng};
use crate::testing::{classic_mct_test, qfmct_test, ClassicMethod, TestResult};
use crate::Result;

/// Per-group covariance structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovSpec {
    /// `diag(values) + offset·1 1ᵀ` (compound symmetry).
    Compound { diag: Vec<f64>, offset: f64 },
    /// Autoregressive: `Σ_{jk} = ρ^{|j-k|}`.
    Ar { rho: f64, dim: usize },
    Identity { dim: usize },
    /// Explicit symmetric PSD matrix, row-major.
    Custom { rows: Vec<Vec<f64>> },
}

impl CovSpec {
    pub fn dim(&self) -> usize {
        match self {
            CovSpec::Compound { diag, .. } => diag.len(),
            CovSpec::Ar { dim, .. } | CovSpec::Identity { dim } => *dim,
            CovSpec::Custom { rows } => rows.len(),
        }
    }
}

/// Builds the covariance matrix described by `spec`; custom matrices are
/// rejected unless symmetric PSD.
pub fn make_cov(spec: &CovSpec) -> Result<Mat> {
    match spec {
        CovSpec::Compound { diag, offset } => {
            if diag.is_empty() {
                return Err(Error::arg("compound spec needs at least one diagonal value"));
            }
            let d = diag.len();
            let mut m = Mat::from_element(d, d, *offset);
            for (j, &v) in diag.iter().enumerate() {
                m[(j, j)] += v;
            }
            linalg::psd_rank(&m, linalg::DEFAULT_RTOL)?;
            Ok(m)
        }
        CovSpec::Ar { rho, dim } => {
            if *dim == 0 || rho.abs() >= 1.0 {
                return Err(Error::arg(format!(
                    "ar spec needs dim >= 1 and |rho| < 1, got dim={dim}, rho={rho}"
                )));
            }
            Ok(Mat::from_fn(*dim, *dim, |i, j| {
                rho.powi((i as i32 - j as i32).abs())
            }))
        }
        CovSpec::Identity { dim } => {
            if *dim == 0 {
                return Err(Error::arg("identity spec needs dim >= 1"));
            }
            Ok(Mat::identity(*dim, *dim))
        }
        CovSpec::Custom { rows } => {
            let d = rows.len();
            if d == 0 || rows.iter().any(|r| r.len() != d) {
                return Err(Error::dim("custom covariance must be square".to_string()));
            }
            let m = Mat::from_fn(d, d, |i, j| rows[i][j]);
            linalg::psd_rank(&m, linalg::DEFAULT_RTOL)?;
            Ok(m)
        }
    }
}

/// Error distribution of the standardized model noise; every choice has
/// mean zero and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorDist {
    Normal,
    /// `√(7/9)·Z ~ t₉`.
    T9,
    /// Skew-normal with the given shape, centered and rescaled.
    SkewNormal { shape: f64 },
}

/// Position of the mean vectors relative to the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    /// All group means zero regardless of δ.
    Null,
    /// Last group shifted by `δ` in the first component only.
    OnePoint,
    /// Last group shifted by `δ` in every component.
    Shift,
}

/// Test procedures the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestId {
    /// QFMCT on the per-component partition.
    Qfmct {
        kind: QfKind,
        method: ResamplingMethod,
    },
    /// Classical max-t contrast test on the Tukey-type matrix.
    ClassicMct { method: ClassicMethod },
    /// Single global ANOVA-type quadratic form.
    GlobalAts { method: ResamplingMethod },
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestId::Qfmct { kind, method } => write!(f, "qfmct-{kind}-{method}"),
            TestId::ClassicMct { method } => write!(f, "mct-{method}"),
            TestId::GlobalAts { method } => write!(f, "ats-{method}"),
        }
    }
}

fn parse_method(s: &str) -> Result<ResamplingMethod> {
    match s {
        "mc" => Ok(ResamplingMethod::MonteCarlo),
        "pb" => Ok(ResamplingMethod::ParametricBootstrap),
        "wb" => Ok(ResamplingMethod::WildBootstrap(WeightDist::StandardNormal)),
        _ => {
            if let Some(w) = s.strip_prefix("wb-") {
                Ok(ResamplingMethod::WildBootstrap(w.parse()?))
            } else {
                Err(Error::arg(format!("unknown resampling method '{s}'")))
            }
        }
    }
}

impl std::str::FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("qfmct-") {
            let (kind, method) = if let Some(m) = rest.strip_prefix("ats-std-") {
                (QfKind::AtsStandardized, m)
            } else if let Some(m) = rest.strip_prefix("ats-") {
                (QfKind::AtsIdentity, m)
            } else if let Some(m) = rest.strip_prefix("wts-") {
                (QfKind::Wts, m)
            } else {
                return Err(Error::arg(format!("unknown test identifier '{s}'")));
            };
            return Ok(TestId::Qfmct {
                kind,
                method: parse_method(method)?,
            });
        }
        if let Some(rest) = s.strip_prefix("mct-") {
            let method = match rest {
                "eq" => ClassicMethod::EquicoordinateMc,
                "pb" => ClassicMethod::ParametricBootstrap,
                _ => return Err(Error::arg(format!("unknown mct variant '{rest}'"))),
            };
            return Ok(TestId::ClassicMct { method });
        }
        if let Some(rest) = s.strip_prefix("ats-") {
            return Ok(TestId::GlobalAts {
                method: parse_method(rest)?,
            });
        }
        Err(Error::arg(format!("unknown test identifier '{s}'")))
    }
}

/// Runs one configured test on a dataset.
pub fn run_test(
    id: TestId,
    data: &Dataset,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<TestResult> {
    match id {
        TestId::Qfmct { kind, method } => {
            let part = per_component_equality(data.a(), data.d())?;
            qfmct_test(data, &part, kind, method, alpha, b, seed)
        }
        TestId::ClassicMct { method } => classic_mct_test(data, alpha, b, method, seed),
        TestId::GlobalAts { method } => {
            let part = global_partition(data.a(), data.d())?;
            let mut res = qfmct_test(data, &part, QfKind::AtsIdentity, method, alpha, b, seed)?;
            res.method = format!("ats-{method}");
            Ok(res)
        }
    }
}

/// Full description of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of groups.
    pub a: usize,
    /// Observation dimension.
    pub d: usize,
    /// Total sample sizes to sweep over.
    pub sample_sizes: Vec<usize>,
    /// Group-size fractions κᵢ, summing to one.
    pub fractions: Vec<f64>,
    /// One covariance spec per group.
    pub cov_specs: Vec<CovSpec>,
    pub error_dist: ErrorDist,
    pub alternative: Alternative,
    /// Shift magnitudes; ignored (treated as `[0]`) under `Null`.
    pub delta_grid: Vec<f64>,
    /// Repetitions per (N, δ) cell.
    pub nsim: usize,
    /// Replicates per test run.
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tests: Vec<TestId>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a < 2 {
            return Err(Error::arg("need at least 2 groups"));
        }
        if self.d < 1 {
            return Err(Error::arg("dimension must be at least 1"));
        }
        if self.fractions.len() != self.a {
            return Err(Error::dim(format!(
                "{} fractions for {} groups",
                self.fractions.len(),
                self.a
            )));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.fractions.iter().any(|&f| f <= 0.0) {
            return Err(Error::arg(format!(
                "fractions must be positive and sum to 1, got sum {sum}"
            )));
        }
        if self.cov_specs.len() != self.a {
            return Err(Error::dim(format!(
                "{} covariance specs for {} groups",
                self.cov_specs.len(),
                self.a
            )));
        }
        for (i, spec) in self.cov_specs.iter().enumerate() {
            if spec.dim() != self.d {
                return Err(Error::dim(format!(
                    "covariance spec {} has dimension {}, expected {}",
                    i + 1,
                    spec.dim(),
                    self.d
                )));
            }
            make_cov(spec)?;
        }
        if let ErrorDist::SkewNormal { shape } = self.error_dist {
            if !shape.is_finite() {
                return Err(Error::arg("skew-normal shape must be finite"));
            }
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::arg("need at least one sample size"));
        }
        for &n in &self.sample_sizes {
            self.group_sizes(n)?;
        }
        if self.alternative != Alternative::Null {
            if self.delta_grid.is_empty() {
                return Err(Error::arg("delta grid must not be empty"));
            }
            if self.delta_grid.iter().any(|&d| d < 0.0 || !d.is_finite()) {
                return Err(Error::arg("delta values must be finite and non-negative"));
            }
        }
        if self.nsim == 0 {
            return Err(Error::arg("nsim must be at least 1"));
        }
        if self.b < 2 {
            return Err(Error::arg("replicate count B must be at least 2"));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::arg("alpha must be in (0,1)"));
        }
        if self.tests.is_empty() {
            return Err(Error::arg("at least one test must be configured"));
        }
        // rejection masks are packed into a u64 per repetition
        if self.tests.len() > 64 {
            return Err(Error::arg("at most 64 tests per scenario"));
        }
        Ok(())
    }

    /// Group sizes for total `n`: `round(fractionᵢ·n)` with the last group
    /// absorbing the rounding remainder.
    pub fn group_sizes(&self, n: usize) -> Result<Vec<usize>> {
        let mut sizes: Vec<usize> = self
            .fractions
            .iter()
            .take(self.a - 1)
            .map(|f| (f * n as f64).round() as usize)
            .collect();
        let used: usize = sizes.iter().sum();
        if used + 2 > n {
            return Err(Error::arg(format!(
                "total sample size {n} leaves no room for the last group"
            )));
        }
        sizes.push(n - used);
        for (i, &s) in sizes.iter().enumerate() {
            if s < 2 {
                return Err(Error::InsufficientSample {
                    index: i + 1,
                    size: s,
                });
            }
        }
        Ok(sizes)
    }

    fn deltas(&self) -> Vec<f64> {
        if self.alternative == Alternative::Null {
            vec![0.0]
        } else {
            self.delta_grid.clone()
        }
    }
}

/// `n × d` matrix of i.i.d. standardized errors.
pub fn gen_errors<R: Rng + ?Sized>(dist: ErrorDist, n: usize, d: usize, rng: &mut R) -> Mat {
    match dist {
        ErrorDist::Normal => Mat::from_fn(n, d, |_, _| rng.sample(StandardNormal)),
        ErrorDist::T9 => {
            let t = StudentT::new(9.0).expect("valid degrees of freedom");
            let scale = (7.0_f64 / 9.0).sqrt();
            Mat::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(t))
        }
        ErrorDist::SkewNormal { shape } => {
            let sn = SkewNormal::new(0.0, 1.0, shape).expect("finite shape");
            let delta = shape / (1.0 + shape * shape).sqrt();
            let mean = delta * (2.0 / std::f64::consts::PI).sqrt();
            let sd = (1.0 - 2.0 * delta * delta / std::f64::consts::PI).sqrt();
            Mat::from_fn(n, d, |_, _| (rng.sample::<f64, _>(sn) - mean) / sd)
        }
    }
}

/// One synthetic dataset: group `i` is `μᵢ + Z·(Σᵢ^{1/2})ᵀ` with the last
/// group's mean set by the alternative.
pub fn gen_observations<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    n: usize,
    delta: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let sizes = config.group_sizes(n)?;
    let mut groups = Vec::with_capacity(config.a);
    for (i, &n_i) in sizes.iter().enumerate() {
        let sqrt = linalg::sym_sqrt(&make_cov(&config.cov_specs[i])?)?;
        let mut sample = gen_errors(config.error_dist, n_i, config.d, rng) * sqrt.transpose();
        if i == config.a - 1 && delta != 0.0 {
            match config.alternative {
                Alternative::Null => {}
                Alternative::OnePoint => {
                    for k in 0..n_i {
                        sample[(k, 0)] += delta;
                    }
                }
                Alternative::Shift => {
                    for k in 0..n_i {
                        for j in 0..config.d {
                            sample[(k, j)] += delta;
                        }
                    }
                }
            }
        }
        groups.push(sample);
    }
    Dataset::new(groups)
}

/// One row of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub test: String,
    pub n: usize,
    pub delta: f64,
    /// Global rejection rate in percent.
    pub rate_percent: f64,
    /// For δ = 0 rows: whether the rate lies in the binomial interval.
    pub ci_flag: Option<bool>,
}

/// Rejection rates of every configured test over the (N, δ) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub alpha: f64,
    pub nsim: usize,
    /// `alpha ± 1.96·√(alpha(1-alpha)/nsim)`, the flag interval for null rows.
    pub null_interval: (f64, f64),
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    /// CSV rendering; numeric cells round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,n,delta,rate_percent,in_null_interval\n");
        for r in &self.rows {
            let flag = match r.ci_flag {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.test, r.n, r.delta, r.rate_percent, flag
            ));
        }
        out
    }

    /// Fixed-width table for the terminal; rates carry two decimals and
    /// in-interval null rates are marked with `*`.
    pub fn to_aligned_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "rejection rates in percent (alpha = {}, nsim = {}, null interval [{:.4}, {:.4}])\n",
            self.alpha, self.nsim, self.null_interval.0, self.null_interval.1
        ));
        let test_w = self
            .rows
            .iter()
            .map(|r| r.test.len())
            .max()
            .unwrap_or(4)
            .max(4);
        out.push_str(&format!(
            "{:<test_w$}  {:>6}  {:>6}  {:>8}  flag\n",
            "test", "N", "delta", "rate%"
        ));
        for r in &self.rows {
            let flag = match r.ci_flag {
                Some(true) => "*",
                Some(false) => "!",
                None => "",
            };
            out.push_str(&format!(
                "{:<test_w$}  {:>6}  {:>6}  {:>8.2}  {}\n",
                r.test, r.n, r.delta, r.rate_percent, flag
            ));
        }
        out
    }
}

/// Runs the whole scenario and aggregates global rejection rates.
pub fn run_scenario(config: &ScenarioConfig) -> Result<PowerTable> {
    config.validate()?;
    let deltas = config.deltas();
    let half_width = 1.96 * (config.alpha * (1.0 - config.alpha) / config.nsim as f64).sqrt();
    let null_interval = (config.alpha - half_width, config.alpha + half_width);

    // cell results indexed by (n, test, delta)
    let mut rows = Vec::new();
    for (n_idx, &n) in config.sample_sizes.iter().enumerate() {
        let mut counts = vec![vec![0_u64; deltas.len()]; config.tests.len()];
        for (d_idx, &delta) in deltas.iter().enumerate() {
            // one rejection mask per repetition; counting afterwards keeps
            // the aggregation independent of the parallel schedule
            let masks: Vec<u64> = (0..config.nsim)
                .into_par_iter()
                .map(|rep| {
                    let tag = ((n_idx as u64) << 48) | ((d_idx as u64) << 32) | rep as u64;
                    let rep_seed = child_seed(config.seed, tag);
                    let mut data_rng = replicate_rng(child_seed(rep_seed, 0), 0);
                    let data = gen_observations(config, n, delta, &mut data_rng)?;
                    let mut mask = 0_u64;
                    for (t_idx, &test) in config.tests.iter().enumerate() {
                        let res = run_test(
                            test,
                            &data,
                            config.alpha,
                            config.b,
                            child_seed(rep_seed, 1 + t_idx as u64),
                        )?;
                        if res.global_reject {
                            mask |= 1 << t_idx;
                        }
                    }
                    Ok(mask)
                })
                .collect::<Result<_>>()?;
            for mask in masks {
                for (t_idx, c) in counts.iter_mut().enumerate() {
                    if mask & (1 << t_idx) != 0 {
                        c[d_idx] += 1;
                    }
                }
            }
        }

        for (t_idx, &test) in config.tests.iter().enumerate() {
            for (d_idx, &delta) in deltas.iter().enumerate() {
                let rate = counts[t_idx][d_idx] as f64 / config.nsim as f64;
                let ci_flag = if delta == 0.0 {
                    Some(rate >= null_interval.0 && rate <= null_interval.1)
                } else {
                    None
                };
                rows.push(PowerRow {
                    test: test.to_string(),
                    n,
                    delta,
                    rate_percent: 100.0 * rate,
                    ci_flag,
                });
            }
        }
    }

    Ok(PowerTable {
        alpha: config.alpha,
        nsim: config.nsim,
        null_interval,
        rows,
    })
}
