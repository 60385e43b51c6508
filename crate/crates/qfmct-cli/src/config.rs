//! Simulation scenario files: TOML with `[design]`, `[[covariance]]`,
//! `[errors]`, `[alternative]` and `[run]` sections.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;

use qfmct::sim::{Alternative, CovSpec, ErrorDist, ScenarioConfig, TestId};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    design: DesignSection,
    #[serde(rename = "covariance")]
    covariances: Vec<CovSection>,
    errors: ErrorSection,
    alternative: AlternativeSection,
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignSection {
    groups: usize,
    dimension: usize,
    sample_sizes: Vec<usize>,
    fractions: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovSection {
    kind: String,
    #[serde(default)]
    diag: Option<Vec<f64>>,
    #[serde(default)]
    offset: Option<f64>,
    #[serde(default)]
    rho: Option<f64>,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorSection {
    dist: String,
    #[serde(default)]
    shape: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlternativeSection {
    kind: String,
    #[serde(default)]
    deltas: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    nsim: usize,
    replications: usize,
    alpha: f64,
    seed: u64,
    tests: Vec<String>,
}

fn cov_spec(section: &CovSection, index: usize, default_dim: usize) -> anyhow::Result<CovSpec> {
    let at = format!("covariance[{index}]");
    match section.kind.as_str() {
        "compound" => {
            let diag = section
                .diag
                .clone()
                .with_context(|| format!("{at}: compound needs 'diag'"))?;
            Ok(CovSpec::Compound {
                diag,
                offset: section.offset.unwrap_or(1.0),
            })
        }
        "ar" => {
            let rho = section
                .rho
                .with_context(|| format!("{at}: ar needs 'rho'"))?;
            Ok(CovSpec::Ar {
                rho,
                dim: section.dim.unwrap_or(default_dim),
            })
        }
        "identity" => Ok(CovSpec::Identity {
            dim: section.dim.unwrap_or(default_dim),
        }),
        "custom" => {
            let rows = section
                .rows
                .clone()
                .with_context(|| format!("{at}: custom needs 'rows'"))?;
            Ok(CovSpec::Custom { rows })
        }
        other => bail!("{at}: unknown covariance kind '{other}'"),
    }
}

/// Parses and validates a scenario configuration file.
pub fn read_scenario(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot open config file {}", path.display()))?;
    let file: FileConfig = toml::from_str(&text)
        .with_context(|| format!("invalid config file {}", path.display()))?;

    let error_dist = match file.errors.dist.as_str() {
        "normal" => ErrorDist::Normal,
        "t9" => ErrorDist::T9,
        "skew-normal" => ErrorDist::SkewNormal {
            shape: file.errors.shape.unwrap_or(4.0),
        },
        other => bail!("errors.dist: unknown distribution '{other}'"),
    };
    if file.errors.dist != "skew-normal" && file.errors.shape.is_some() {
        bail!("errors.shape is only meaningful for dist = \"skew-normal\"");
    }

    let alternative = match file.alternative.kind.as_str() {
        "null" => Alternative::Null,
        "one-point" => Alternative::OnePoint,
        "shift" => Alternative::Shift,
        other => bail!("alternative.kind: unknown alternative '{other}'"),
    };

    let tests = file
        .run
        .tests
        .iter()
        .map(|t| {
            t.parse::<TestId>()
                .with_context(|| format!("run.tests: '{t}'"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let cov_specs = file
        .covariances
        .iter()
        .enumerate()
        .map(|(i, s)| cov_spec(s, i, file.design.dimension))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let config = ScenarioConfig {
        a: file.design.groups,
        d: file.design.dimension,
        sample_sizes: file.design.sample_sizes,
        fractions: file.design.fractions,
        cov_specs,
        error_dist,
        alternative,
        delta_grid: file.alternative.deltas,
        nsim: file.run.nsim,
        b: file.run.replications,
        alpha: file.run.alpha,
        seed: file.run.seed,
        tests,
    };
    config
        .validate()
        .with_context(|| format!("invalid scenario in {}", path.display()))?;
    Ok(config)
}
