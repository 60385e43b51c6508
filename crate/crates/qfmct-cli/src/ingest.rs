//! Input parsing: grouped CSV data and user-supplied hypothesis
//! partitions.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use nalgebra::DVector;
use qfmct::hypotheses::{HypothesisBlock, HypothesisPartition};
use qfmct::{Dataset, Mat};

/// A dataset read from CSV together with its labels.
#[derive(Debug)]
pub struct LabelledData {
    pub dataset: Dataset,
    /// Group labels in order of first appearance.
    pub group_labels: Vec<String>,
    /// Component names from the header row.
    pub component_labels: Vec<String>,
}

/// Reads grouped observations from a CSV file: a header row, a group
/// label in the first column and `d` numeric columns after it. Groups
/// are ordered by first appearance.
pub fn read_csv_dataset(path: &Path) -> anyhow::Result<LabelledData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("cannot open data file {}", path.display()))?;

    let headers = reader
        .headers()
        .with_context(|| "malformed CSV: unreadable header row")?
        .clone();
    if headers.len() < 2 {
        bail!(
            "malformed CSV: need a group column plus at least one numeric column, found {} columns",
            headers.len()
        );
    }
    let component_labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let d = component_labels.len();

    let mut group_labels: Vec<String> = Vec::new();
    let mut rows_by_group: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.with_context(|| format!("malformed CSV at line {line}"))?;
        if record.len() != d + 1 {
            bail!(
                "malformed CSV at line {line}: expected {} fields, found {}",
                d + 1,
                record.len()
            );
        }
        let label = record.get(0).unwrap_or_default().to_string();
        if label.is_empty() {
            bail!("malformed CSV at line {line}: empty group label");
        }
        let gi = match group_labels.iter().position(|l| *l == label) {
            Some(gi) => gi,
            None => {
                group_labels.push(label);
                rows_by_group.push(Vec::new());
                group_labels.len() - 1
            }
        };
        for (col, cell) in record.iter().skip(1).enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                anyhow!(
                    "non-numeric cell '{cell}' at line {line}, column '{}'",
                    component_labels[col]
                )
            })?;
            if !value.is_finite() {
                bail!(
                    "non-finite value '{cell}' at line {line}, column '{}'",
                    component_labels[col]
                );
            }
            rows_by_group[gi].push(value);
        }
    }

    if group_labels.len() < 2 {
        bail!(
            "need at least 2 groups, found {}",
            group_labels.len()
        );
    }
    let mut groups = Vec::with_capacity(group_labels.len());
    for (gi, flat) in rows_by_group.iter().enumerate() {
        let n = flat.len() / d;
        if n < 2 {
            bail!(
                "group '{}' has only {n} observation(s); at least 2 are required",
                group_labels[gi]
            );
        }
        groups.push(Mat::from_row_slice(n, d, flat));
    }
    let dataset = Dataset::new(groups).map_err(|e| anyhow!("{e}"))?;
    Ok(LabelledData {
        dataset,
        group_labels,
        component_labels,
    })
}

/// Reads a hypothesis partition from a plain-text file.
///
/// Format: `block <label>` starts a block, each following line of
/// whitespace-separated numbers is one row of `C_ℓ`, and an optional
/// `rhs <numbers>` line sets `β_ℓ` (zero when omitted). Blank lines and
/// `#` comments are ignored. Every row must have `a·d` entries.
pub fn read_partition_file(path: &Path, dim: usize) -> anyhow::Result<HypothesisPartition> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot open partition file {}", path.display()))?;

    struct PendingBlock {
        label: String,
        rows: Vec<Vec<f64>>,
        rhs: Option<Vec<f64>>,
    }
    let mut pending: Vec<PendingBlock> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(label) = line.strip_prefix("block") {
            let label = label.trim();
            pending.push(PendingBlock {
                label: if label.is_empty() {
                    format!("block {}", pending.len() + 1)
                } else {
                    label.to_string()
                },
                rows: Vec::new(),
                rhs: None,
            });
            continue;
        }
        let current = pending
            .last_mut()
            .ok_or_else(|| anyhow!("line {line_no}: matrix row before any 'block' header"))?;
        if let Some(rest) = line.strip_prefix("rhs") {
            let values = parse_numbers(rest, line_no)?;
            current.rhs = Some(values);
            continue;
        }
        let row = parse_numbers(line, line_no)?;
        if row.len() != dim {
            bail!(
                "line {line_no}: row has {} entries, expected a·d = {dim}",
                row.len()
            );
        }
        current.rows.push(row);
    }

    if pending.is_empty() {
        bail!("partition file defines no blocks");
    }
    let mut blocks = Vec::with_capacity(pending.len());
    for p in pending {
        if p.rows.is_empty() {
            bail!("block '{}' has no matrix rows", p.label);
        }
        let r = p.rows.len();
        let rhs = match p.rhs {
            Some(v) if v.len() != r => bail!(
                "block '{}': rhs has {} entries for {} rows",
                p.label,
                v.len(),
                r
            ),
            Some(v) => DVector::from_vec(v),
            None => DVector::zeros(r),
        };
        let flat: Vec<f64> = p.rows.into_iter().flatten().collect();
        blocks.push(HypothesisBlock {
            matrix: Mat::from_row_slice(r, dim, &flat),
            rhs,
            label: p.label,
        });
    }
    HypothesisPartition::new(dim, blocks).map_err(|e| anyhow!("{e}"))
}

fn parse_numbers(s: &str, line_no: usize) -> anyhow::Result<Vec<f64>> {
    s.split([' ', '\t', ','])
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| anyhow!("line {line_no}: '{t}' is not a number"))
        })
        .collect()
}
