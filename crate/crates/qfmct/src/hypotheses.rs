//! Hypothesis matrices and their partitions into local hypotheses.
//!
//! A global linear hypothesis `C μ = β` on the stacked group means is
//! split into `L` blocks `(C_ℓ, β_ℓ)`; each block becomes one local
//! hypothesis with its own quadratic form. Three standard partitions are
//! provided: one block per vector component, one block per group pair,
//! and the trivial single-block (global) partition. The Tukey-type
//! contrast matrix for the classical max-t test is built here as well.
//!
//! Pairwise blocks store unscaled `±1` difference rows rather than the
//! `±1/2` rows of a two-group centering matrix: the Q statistics are
//! invariant under nonzero row scaling, and `±1` is exact in floating
//! point. Block order is fixed (component order, respectively
//! lexicographic pair order) so downstream output is reproducible.

use nalgebra::DVector;

use crate::error::Error;
use crate::linalg::{centering_matrix, kron, Mat};
use crate::Result;

/// One local hypothesis `C_ℓ μ = β_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisBlock {
    /// `r_ℓ × ad` block of the global hypothesis matrix.
    pub matrix: Mat,
    /// Right-hand side, length `r_ℓ`.
    pub rhs: DVector<f64>,
    /// Human-readable name used in reports.
    pub label: String,
}

/// An ordered partition of a global hypothesis into local blocks, all
/// acting on the same `a·d`-dimensional stacked mean.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPartition {
    dim: usize,
    blocks: Vec<HypothesisBlock>,
}

impl HypothesisPartition {
    pub fn new(dim: usize, blocks: Vec<HypothesisBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::arg("a partition needs at least one block"));
        }
        for (l, b) in blocks.iter().enumerate() {
            if b.matrix.ncols() != dim {
                return Err(Error::dim(format!(
                    "block {} has {} columns, expected {}",
                    l + 1,
                    b.matrix.ncols(),
                    dim
                )));
            }
            if b.matrix.nrows() == 0 || b.matrix.nrows() != b.rhs.len() {
                return Err(Error::dim(format!(
                    "block {}: matrix rows {} vs rhs length {}",
                    l + 1,
                    b.matrix.nrows(),
                    b.rhs.len()
                )));
            }
        }
        Ok(HypothesisPartition { dim, blocks })
    }

    /// Number of local hypotheses `L`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Column count `a·d` shared by all blocks.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[HypothesisBlock] {
        &self.blocks
    }

    pub fn labels(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.label.clone()).collect()
    }

    /// Replaces the block labels, e.g. with column names from an input
    /// file; the label count must match the block count.
    pub fn relabel(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.blocks.len() {
            return Err(Error::dim(format!(
                "{} labels for {} blocks",
                labels.len(),
                self.blocks.len()
            )));
        }
        for (b, label) in self.blocks.iter_mut().zip(labels) {
            b.label = label;
        }
        Ok(self)
    }
}

fn check_design(a: usize, d: usize) -> Result<()> {
    if a < 2 {
        return Err(Error::arg(format!("need at least 2 groups, got {a}")));
    }
    if d < 1 {
        return Err(Error::arg("dimension must be at least 1"));
    }
    Ok(())
}

/// One block per component: `C_j = P_a · A_j` with `β_j = 0`, testing
/// `μ_{1j} = ... = μ_{aj}` for every `j`.
pub fn per_component_equality(a: usize, d: usize) -> Result<HypothesisPartition> {
    check_design(a, d)?;
    let p = centering_matrix(a)?;
    let blocks = (0..d)
        .map(|j| {
            let selector = crate::data::selector_matrix(a, d, j).expect("indices checked");
            HypothesisBlock {
                matrix: &p * selector,
                rhs: DVector::zeros(a),
                label: format!("component {}", j + 1),
            }
        })
        .collect();
    HypothesisPartition::new(a * d, blocks)
}

/// One block per group pair `(i₁, i₂)`, testing `μ_{i₁} = μ_{i₂}` with
/// `d` rows of `±1` differences; pairs in lexicographic order.
pub fn pairwise_group_equality(a: usize, d: usize) -> Result<HypothesisPartition> {
    check_design(a, d)?;
    let mut blocks = Vec::with_capacity(a * (a - 1) / 2);
    for i1 in 0..a {
        for i2 in (i1 + 1)..a {
            let mut m = Mat::zeros(d, a * d);
            for j in 0..d {
                m[(j, i1 * d + j)] = 1.0;
                m[(j, i2 * d + j)] = -1.0;
            }
            blocks.push(HypothesisBlock {
                matrix: m,
                rhs: DVector::zeros(d),
                label: format!("groups {}-{}", i1 + 1, i2 + 1),
            });
        }
    }
    HypothesisPartition::new(a * d, blocks)
}

/// Tukey-type contrast matrix over the stacked means: one row per
/// (group pair, component), `+1`/`-1` at the two selected coordinates.
/// Rows are grouped by pair, components in order within each pair.
pub fn tukey_contrast(a: usize, d: usize) -> Result<Mat> {
    check_design(a, d)?;
    let rows = d * a * (a - 1) / 2;
    let mut m = Mat::zeros(rows, a * d);
    let mut r = 0;
    for i1 in 0..a {
        for i2 in (i1 + 1)..a {
            for j in 0..d {
                m[(r, i1 * d + j)] = 1.0;
                m[(r, i2 * d + j)] = -1.0;
                r += 1;
            }
        }
    }
    Ok(m)
}

/// Labels matching the rows of [`tukey_contrast`].
pub fn tukey_labels(a: usize, d: usize) -> Vec<String> {
    let mut labels = Vec::with_capacity(d * a * (a - 1) / 2);
    for i1 in 0..a {
        for i2 in (i1 + 1)..a {
            for j in 0..d {
                labels.push(format!("groups {}-{} component {}", i1 + 1, i2 + 1, j + 1));
            }
        }
    }
    labels
}

/// The global one-way hypothesis matrix `(P_a ⊗ I_d, 0)` testing equality
/// of all group mean vectors at once.
pub fn global_matrix(a: usize, d: usize) -> Result<(Mat, DVector<f64>)> {
    check_design(a, d)?;
    let c = kron(&centering_matrix(a)?, &Mat::identity(d, d));
    let rhs = DVector::zeros(a * d);
    Ok((c, rhs))
}

/// The global hypothesis as a single-block partition.
pub fn global_partition(a: usize, d: usize) -> Result<HypothesisPartition> {
    let (matrix, rhs) = global_matrix(a, d)?;
    HypothesisPartition::new(
        a * d,
        vec![HypothesisBlock {
            matrix,
            rhs,
            label: "global".to_string(),
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const RANK_EPS: f64 = 1e-9;

    fn stack_blocks(p: &HypothesisPartition) -> Mat {
        let rows: usize = p.blocks().iter().map(|b| b.matrix.nrows()).sum();
        let mut out = Mat::zeros(rows, p.dim());
        let mut r = 0;
        for b in p.blocks() {
            out.view_mut((r, 0), (b.matrix.nrows(), b.matrix.ncols()))
                .copy_from(&b.matrix);
            r += b.matrix.nrows();
        }
        out
    }

    #[test]
    fn per_component_shapes_and_labels() {
        let p = per_component_equality(3, 5).unwrap();
        assert_eq!(p.len(), 5);
        for b in p.blocks() {
            assert_eq!(b.matrix.shape(), (3, 15));
            assert_eq!(b.rhs, DVector::zeros(3));
        }
        assert_eq!(p.blocks()[0].label, "component 1");

        let single = per_component_equality(2, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.blocks()[0].matrix, centering_matrix(2).unwrap());
    }

    #[test]
    fn per_component_blocks_span_global_row_space() {
        for (a, d) in [(2, 2), (3, 4), (4, 3)] {
            let p = per_component_equality(a, d).unwrap();
            let stacked = stack_blocks(&p);
            let (global, _) = global_matrix(a, d).unwrap();
            let rank_global = global.rank(RANK_EPS);
            assert_eq!(rank_global, (a - 1) * d, "a={a}, d={d}");
            assert_eq!(stacked.rank(RANK_EPS), rank_global);
            // stacking both on top of each other must not increase rank
            let mut both = Mat::zeros(stacked.nrows() + global.nrows(), a * d);
            both.view_mut((0, 0), stacked.shape()).copy_from(&stacked);
            both.view_mut((stacked.nrows(), 0), global.shape())
                .copy_from(&global);
            assert_eq!(both.rank(RANK_EPS), rank_global);
        }
    }

    #[test]
    fn block_ranks() {
        let p = per_component_equality(4, 3).unwrap();
        for b in p.blocks() {
            assert_eq!(b.matrix.rank(RANK_EPS), 3); // a - 1
        }
        let q = pairwise_group_equality(4, 3).unwrap();
        for b in q.blocks() {
            assert_eq!(b.matrix.rank(RANK_EPS), 3); // d
        }
    }

    #[test]
    fn pairwise_block_layout() {
        let p = pairwise_group_equality(3, 6).unwrap();
        assert_eq!(p.len(), 3);
        let labels = p.labels();
        assert_eq!(labels, ["groups 1-2", "groups 1-3", "groups 2-3"]);
        for b in p.blocks() {
            assert_eq!(b.matrix.shape(), (6, 18));
        }

        let two = pairwise_group_equality(2, 4).unwrap();
        assert_eq!(two.len(), 1);
    }

    #[test]
    fn all_builders_vanish_on_equal_means() {
        // μ with all group means equal lies in the kernel of every block
        let (a, d) = (3, 4);
        let v = DVector::from_fn(d, |j, _| (j + 1) as f64);
        let mut mu = DVector::zeros(a * d);
        for i in 0..a {
            mu.rows_mut(i * d, d).copy_from(&v);
        }
        for p in [
            per_component_equality(a, d).unwrap(),
            pairwise_group_equality(a, d).unwrap(),
            global_partition(a, d).unwrap(),
        ] {
            for b in p.blocks() {
                assert!((&b.matrix * &mu - &b.rhs).norm() < 1e-12, "{}", b.label);
            }
        }
        assert!((tukey_contrast(a, d).unwrap() * &mu).norm() < 1e-12);
    }

    #[test]
    fn tukey_rows_are_all_pairwise_component_differences() {
        let t = tukey_contrast(3, 6).unwrap();
        assert_eq!(t.shape(), (18, 18));
        assert_eq!(tukey_contrast(2, 1).unwrap(), Mat::from_row_slice(1, 2, &[1.0, -1.0]));

        // every row sums to zero and rows are pairwise distinct
        let t = tukey_contrast(4, 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for r in 0..t.nrows() {
            let row: Vec<i8> = (0..t.ncols()).map(|c| t[(r, c)] as i8).collect();
            assert_eq!(row.iter().map(|&x| x as i32).sum::<i32>(), 0);
            assert!(seen.insert(row), "duplicate row {r}");
        }
        assert_eq!(seen.len(), 2 * 4 * 3 / 2);
    }

    #[test]
    fn global_matrix_small_case() {
        let (c, rhs) = global_matrix(2, 1).unwrap();
        assert_eq!(c, centering_matrix(2).unwrap());
        assert_eq!(rhs, DVector::zeros(2));
    }

    #[test]
    fn rejects_degenerate_designs() {
        assert!(per_component_equality(1, 3).is_err());
        assert!(pairwise_group_equality(2, 0).is_err());
        assert!(tukey_contrast(0, 1).is_err());
    }
}
