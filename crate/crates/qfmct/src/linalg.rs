//! Dense symmetric linear algebra used by the statistic and resampling
//! engines: eigendecomposition, Moore-Penrose pseudoinverse, symmetric
//! square root, Kronecker product, direct sum and the centering matrix.
//!
//! All inputs here are small dense matrices (at most a few hundred rows),
//! so everything is routed through one symmetric eigendecomposition.
//! Eigenvalues in `[-rtol·λmax, 0)` are treated as rounding noise and
//! clamped to zero; anything more negative is rejected instead of being
//! silently repaired, since an indefinite "covariance" points at a bug in
//! the caller.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Dense double-precision matrix in dynamic dimensions.
pub type Mat = DMatrix<f64>;

/// Default relative cutoff for rank decisions and PSD clamping.
pub const DEFAULT_RTOL: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted in non-increasing order and `vectors` holds the
/// matching orthonormal eigenvectors as columns, so that
/// `V · diag(values) · Vᵀ` reconstructs the input.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEig {
    /// Rebuilds `V · diag(values) · Vᵀ`.
    pub fn reconstruct(&self) -> Mat {
        let d = DVector::from_vec(self.values.clone());
        &self.vectors * Mat::from_diagonal(&d) * self.vectors.transpose()
    }
}

fn check_square(a: &Mat) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::dim(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn check_symmetric(a: &Mat) -> Result<()> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut asym = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym / scale > SYMMETRY_RTOL {
        return Err(Error::NotSymmetric {
            asym: asym / scale,
            tol: SYMMETRY_RTOL,
        });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
///
/// The input must be square and symmetric to a relative tolerance of
/// `1e-8`; it is symmetrized before factorization so that the tolerated
/// asymmetry cannot leak into the spectrum.
pub fn sym_eig(a: &Mat) -> Result<SymEig> {
    let n = check_square(a)?;
    check_symmetric(a)?;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entry".to_string()));
    }

    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues are finite")
    });

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Eigendecomposition with PSD clamping: eigenvalues in
/// `[-rtol·λmax, 0)` become 0, anything lower is an error.
fn psd_eig(a: &Mat, rtol: f64) -> Result<SymEig> {
    if rtol <= 0.0 {
        return Err(Error::arg(format!("rtol must be positive, got {rtol}")));
    }
    let mut eig = sym_eig(a)?;
    let scale = eig.values[0].max(0.0);
    let floor = -rtol * scale;
    for v in eig.values.iter_mut() {
        if *v < floor {
            return Err(Error::NotPsd {
                value: *v,
                tol: rtol * scale,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Applies `f` to the clamped spectrum and recomposes `V·diag(f(λ))·Vᵀ`.
fn spectral_map(a: &Mat, rtol: f64, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let eig = psd_eig(a, rtol)?;
    let d = DVector::from_iterator(eig.values.len(), eig.values.iter().map(|&v| f(v)));
    Ok(&eig.vectors * Mat::from_diagonal(&d) * eig.vectors.transpose())
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix.
///
/// Eigenvalues above `rtol·λmax` are inverted, the rest are zeroed, so
/// the numerical rank is decided relative to the largest eigenvalue.
pub fn pseudo_inverse(a: &Mat, rtol: f64) -> Result<Mat> {
    let eig = psd_eig(a, rtol)?;
    let cut = rtol * eig.values[0].max(0.0);
    let d = DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }),
    );
    Ok(&eig.vectors * Mat::from_diagonal(&d) * eig.vectors.transpose())
}

/// Symmetric PSD square root: returns `S` with `S·S = A`.
pub fn sym_sqrt(a: &Mat) -> Result<Mat> {
    spectral_map(a, DEFAULT_RTOL, f64::sqrt)
}

/// Numerical rank of a symmetric PSD matrix, relative to `rtol·λmax`.
pub fn psd_rank(a: &Mat, rtol: f64) -> Result<usize> {
    let eig = psd_eig(a, rtol)?;
    let cut = rtol * eig.values[0].max(0.0);
    Ok(eig.values.iter().filter(|&&v| v > cut).count())
}

/// Centering matrix `P_a = I_a - 1_a 1_aᵀ / a`.
///
/// Symmetric, idempotent, row sums zero. Requires `a ≥ 2`.
///
/// ```
/// let p = qfmct::linalg::centering_matrix(2).unwrap();
/// assert_eq!(p[(0, 0)], 0.5);
/// assert_eq!(p[(0, 1)], -0.5);
/// ```
pub fn centering_matrix(a: usize) -> Result<Mat> {
    if a < 2 {
        return Err(Error::arg(format!(
            "centering matrix needs at least 2 groups, got {a}"
        )));
    }
    let off = -1.0 / a as f64;
    Ok(Mat::from_fn(a, a, |i, j| {
        if i == j {
            1.0 + off
        } else {
            off
        }
    }))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Block-diagonal assembly of the given blocks.
pub fn direct_sum(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(Mat::nrows).sum();
    let cols: usize = blocks.iter().map(Mat::ncols).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_frob(err: &Mat, scale: &Mat) -> f64 {
        err.norm() / scale.norm().max(1.0)
    }

    // Characteristic-polynomial roots for a 2x2 symmetric matrix; used as
    // an independent check on the eigen routine.
    fn eig2_bruteforce(a: &Mat) -> (f64, f64) {
        let (t, d) = (a.trace(), a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]);
        let disc = (t * t / 4.0 - d).max(0.0).sqrt();
        (t / 2.0 + disc, t / 2.0 - disc)
    }

    #[test]
    fn sym_eig_diagonal() {
        let e = sym_eig(&Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((&e.vectors * e.vectors.transpose() - Mat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn sym_eig_identity() {
        let e = sym_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn sym_eig_two_by_two() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let (l1, l2) = eig2_bruteforce(&a);
        assert!((e.values[0] - l1).abs() < 1e-12 && (e.values[1] - l2).abs() < 1e-12);
        // columns proportional to (1,1) and (1,-1)
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        assert!((v0[0] - v0[1]).abs() < 1e-10, "first eigenvector {v0:?}");
        assert!((v1[0] + v1[1]).abs() < 1e-10, "second eigenvector {v1:?}");
    }

    #[test]
    fn sym_eig_rejects_bad_input() {
        let rect = Mat::zeros(2, 3);
        assert!(matches!(sym_eig(&rect), Err(Error::DimensionMismatch(_))));
        let asym = Mat::from_row_slice(2, 2, &[1.0, 5.0, -5.0, 1.0]);
        assert!(matches!(sym_eig(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn pseudo_inverse_rank_deficient_diagonal() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&a, DEFAULT_RTOL).unwrap();
        assert!((p - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_projection_is_itself() {
        for a in 2..6 {
            let p = centering_matrix(a).unwrap();
            let pinv = pseudo_inverse(&p, DEFAULT_RTOL).unwrap();
            assert!(rel_frob(&(&pinv - &p), &p) < 1e-10, "a = {a}");
        }
    }

    #[test]
    fn pseudo_inverse_zero_matrix() {
        let z = Mat::zeros(3, 3);
        let p = pseudo_inverse(&z, DEFAULT_RTOL).unwrap();
        assert_eq!(p, z);
    }

    #[test]
    fn pseudo_inverse_rejects_indefinite() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            pseudo_inverse(&a, DEFAULT_RTOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn sym_sqrt_diagonal() {
        let a = Mat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let s = sym_sqrt(&a).unwrap();
        assert!((s - Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).norm() < 1e-12);
        let i4 = Mat::identity(4, 4);
        assert!((sym_sqrt(&i4).unwrap() - i4).norm() < 1e-12);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = sym_sqrt(&a).unwrap();
        assert!(rel_frob(&(&s * &s - &a), &a) < 1e-9);
    }

    #[test]
    fn centering_matrix_small_cases() {
        let p2 = centering_matrix(2).unwrap();
        assert_eq!(p2, Mat::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let p3 = centering_matrix(3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((p3[(i, j)] - want).abs() < 1e-15);
            }
        }
        assert!(centering_matrix(1).is_err());
    }

    #[test]
    fn centering_matrix_identities_and_spectrum() {
        for a in 2..8 {
            let p = centering_matrix(a).unwrap();
            assert!(rel_frob(&(&p * &p - &p), &p) < 1e-12, "idempotent, a={a}");
            let ones = DVector::from_element(a, 1.0);
            assert!((&p * &ones).norm() < 1e-12, "kernel contains 1_a, a={a}");
            let e = sym_eig(&p).unwrap();
            for (i, &v) in e.values.iter().enumerate() {
                let want = if i + 1 < a { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10, "a={a}, eigenvalue {i} = {v}");
            }
        }
    }

    #[test]
    fn kron_and_direct_sum_basics() {
        let b = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&Mat::identity(2, 2), &b);
        assert_eq!(k, direct_sum(&[b.clone(), b.clone()]));

        let d = direct_sum(&[
            Mat::from_row_slice(1, 1, &[1.0]),
            Mat::from_row_slice(1, 1, &[2.0]),
        ]);
        assert_eq!(d, Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn kron_centering_acts_as_pairwise_difference() {
        // (P_2 ⊗ I_2)(1,2,3,4)ᵀ = (-1,-1,1,1)ᵀ, from direct 4x4 multiplication.
        let c = kron(&centering_matrix(2).unwrap(), &Mat::identity(2, 2));
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = &c * &x;
        let want = DVector::from_vec(vec![-1.0, -1.0, 1.0, 1.0]);
        assert!((y - want).norm() < 1e-12);
    }

    // Random PSD matrix of the given size and rank from a seeded generator.
    fn random_psd(n: usize, rank: usize, seed: u64) -> Mat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(rank.max(1), n, |_, _| rng.random_range(-1.0..1.0));
        b.transpose() * b
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn moore_penrose_conditions(n in 1usize..12, rank_frac in 0.2f64..1.0, seed in 0u64..1000) {
            let rank = ((n as f64 * rank_frac).ceil() as usize).clamp(1, n);
            let a = random_psd(n, rank, seed);
            let p = pseudo_inverse(&a, DEFAULT_RTOL).unwrap();

            let apa = &a * &p * &a;
            let pap = &p * &a * &p;
            let ap = &a * &p;
            let pa = &p * &a;
            prop_assert!(rel_frob(&(&apa - &a), &a) < 1e-9);
            prop_assert!(rel_frob(&(&pap - &p), &p) < 1e-9);
            prop_assert!(rel_frob(&(&ap.transpose() - &ap), &ap) < 1e-9);
            prop_assert!(rel_frob(&(&pa.transpose() - &pa), &pa) < 1e-9);
        }

        #[test]
        fn sym_sqrt_reconstructs(n in 1usize..51, seed in 0u64..1000) {
            let a = random_psd(n, n, seed);
            let s = sym_sqrt(&a).unwrap();
            prop_assert!(rel_frob(&(&s * &s - &a), &a) < 1e-9);
        }

        #[test]
        fn sym_eig_invariants(n in 1usize..16, seed in 0u64..1000) {
            let a = random_psd(n, n, seed);
            let e = sym_eig(&a).unwrap();
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            prop_assert!(rel_frob(&(e.reconstruct() - &a), &a) < 1e-10);
            let vtv = e.vectors.transpose() * &e.vectors;
            prop_assert!(rel_frob(&(vtv - Mat::identity(n, n)), &Mat::identity(n, n)) < 1e-10);
        }
    }
}
