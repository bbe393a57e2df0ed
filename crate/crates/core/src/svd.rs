//! Ordered full singular value decomposition, Schatten quasi-norms, and the
//! trace-inequality gap used throughout the solvers.

use crate::error::{shape_mismatch, Error, Result};
use crate::{Matrix, Real, Vector};

const SVD_MAX_ITERS: usize = 10_000;

/// Full SVD with singular values sorted non-increasingly and a deterministic
/// sign convention: the largest-magnitude entry of every left singular
/// vector is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSvd<T> {
    /// Left factor, `m x m` orthogonal.
    pub u: Matrix<T>,
    /// Singular values, length `min(m, n)`, non-increasing and non-negative.
    pub sigma: Vector<T>,
    /// Right factor, `n x n` orthogonal (not transposed).
    pub v: Matrix<T>,
}

impl<T: Real> OrderedSvd<T> {
    /// `u * diag(sigma) * v^T`, zero-padded outside the leading block.
    pub fn reconstruct(&self) -> Matrix<T> {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let r = self.sigma.len();
        let mut core = Matrix::zeros(m, n);
        for i in 0..r {
            core[(i, i)] = self.sigma[i];
        }
        &self.u * core * self.v.transpose()
    }

    /// Number of singular values above `rank_tol * sigma_max`.
    pub fn rank(&self, rank_tol: T) -> usize {
        if self.sigma.is_empty() {
            return 0;
        }
        let cut = rank_tol * self.sigma[0];
        self.sigma.iter().filter(|&&s| s > cut).count()
    }
}

/// Full SVD of `m` with non-increasing singular values and canonical signs.
///
/// Deterministic for a fixed input on a fixed platform: ties in the
/// singular values keep the order the underlying factorization produced,
/// and sign ambiguity is resolved by the largest-magnitude entry rule.
pub fn svd_ordered<T: Real>(m: &Matrix<T>) -> Result<OrderedSvd<T>> {
    if m.iter().any(|x| !x.finite()) {
        return Err(Error::NonFinite("matrix for SVD"));
    }
    let (rows, cols) = (m.nrows(), m.ncols());
    let r = rows.min(cols);
    let svd = m
        .clone()
        .try_svd(true, true, T::default_epsilon(), SVD_MAX_ITERS)
        .ok_or(Error::SvdFailed)?;
    let u_thin = svd.u.ok_or(Error::SvdFailed)?;
    let v_t = svd.v_t.ok_or(Error::SvdFailed)?;
    let raw_sigma = svd.singular_values;

    // Stable sort by descending singular value.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        raw_sigma[b]
            .partial_cmp(&raw_sigma[a])
            .expect("finite singular values")
    });

    let mut u = Matrix::zeros(rows, rows);
    let mut v = Matrix::zeros(cols, cols);
    let mut sigma = Vector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = raw_sigma[src];
        let mut uc = u_thin.column(src).clone_owned();
        let mut vc = v_t.row(src).transpose();
        // Canonical sign: largest-magnitude entry of the left vector >= 0.
        let mut pivot = 0;
        for k in 1..rows {
            if uc[k].abs() > uc[pivot].abs() {
                pivot = k;
            }
        }
        if uc[pivot] < T::zero() {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
    }
    complete_orthonormal_basis(&mut u, r)?;
    complete_orthonormal_basis(&mut v, r)?;

    let out = OrderedSvd { u, sigma, v };
    validate(&out, m)?;
    Ok(out)
}

/// Fills columns `filled..` of `basis` with an orthonormal completion of the
/// leading columns, chosen deterministically from the standard basis.
fn complete_orthonormal_basis<T: Real>(basis: &mut Matrix<T>, filled: usize) -> Result<()> {
    let dim = basis.nrows();
    let mut have = filled;
    let keep = T::of(1e-4);
    for i in 0..dim {
        if have == dim {
            break;
        }
        let mut cand: Vector<T> = Vector::zeros(dim);
        cand[i] = T::one();
        // Two Gram-Schmidt passes keep the completion orthogonal to working
        // precision even when the candidate is nearly in the span.
        for _ in 0..2 {
            for j in 0..have {
                let col = basis.column(j);
                let proj = col.dot(&cand);
                cand.axpy(-proj, &col.clone_owned(), T::one());
            }
        }
        let norm = cand.norm();
        if norm > keep {
            cand /= norm;
            basis.set_column(have, &cand);
            have += 1;
        }
    }
    if have != dim {
        return Err(Error::Inconsistent(
            "failed to complete orthonormal basis".into(),
        ));
    }
    Ok(())
}

fn validate<T: Real>(svd: &OrderedSvd<T>, original: &Matrix<T>) -> Result<()> {
    let orth_tol = T::of(1e-10).max(T::default_epsilon() * T::of(256.0));
    for (name, f) in [("u", &svd.u), ("v", &svd.v)] {
        let gram = f.transpose() * f;
        let dev = (&gram - Matrix::identity(gram.nrows(), gram.ncols())).abs().max();
        if dev > orth_tol {
            return Err(Error::Inconsistent(format!(
                "SVD factor {name} deviates from orthogonality by {}",
                dev.as_f64()
            )));
        }
    }
    for i in 1..svd.sigma.len() {
        if svd.sigma[i] > svd.sigma[i - 1] {
            return Err(Error::Inconsistent("singular values not sorted".into()));
        }
    }
    let recon_tol = T::of(1e-8).max(T::default_epsilon() * T::of(1024.0));
    let scale = T::one() + original.norm();
    let err = (svd.reconstruct() - original).norm();
    if err > recon_tol * scale {
        return Err(Error::Inconsistent(format!(
            "SVD reconstruction error {} exceeds tolerance",
            err.as_f64()
        )));
    }
    Ok(())
}

/// Singular values of `m`, sorted non-increasingly, without forming the
/// orthogonal factors.
pub(crate) fn singular_values_sorted<T: Real>(m: &Matrix<T>) -> Result<Vector<T>> {
    if m.iter().any(|x| !x.finite()) {
        return Err(Error::NonFinite("matrix for singular values"));
    }
    let svd = m
        .clone()
        .try_svd(false, false, T::default_epsilon(), SVD_MAX_ITERS)
        .ok_or(Error::SvdFailed)?;
    let mut vals: Vec<T> = svd.singular_values.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(Vector::from_vec(vals))
}

/// Schatten quasi-norm `sum_i sigma_i(m)^q` for `q` in `(0, 2]`, with the
/// convention `0^q = 0`.
pub fn schatten_q<T: Real>(m: &Matrix<T>, q: T) -> Result<T> {
    if q <= T::zero() || q > T::of(2.0) || !q.finite() {
        return Err(Error::InvalidParameter(format!(
            "Schatten exponent must lie in (0, 2], got {}",
            q.as_f64()
        )));
    }
    let sigma = singular_values_sorted(m)?;
    let mut total = T::zero();
    for &s in sigma.iter() {
        if s > T::zero() {
            total += s.powf(q);
        }
    }
    Ok(total)
}

/// Trace-inequality gap `sum_i sigma_i(a) sigma_i(b) - tr(a b^T)`.
///
/// Non-negative by the trace inequality, zero exactly when `a` and `b`
/// share singular vectors; numerically it may dip to `-1e-10 * scale`.
pub fn von_neumann_gap<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch(a.shape(), b.shape()));
    }
    let sa = singular_values_sorted(a)?;
    let sb = singular_values_sorted(b)?;
    let paired = sa.dot(&sb);
    // tr(a b^T) is the Frobenius inner product.
    let inner = a.dot(b);
    Ok(paired - inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
        Matrix64::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    pub(crate) fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
        gaussian(dim, dim, rng).qr().q()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = svd_ordered(&Matrix64::identity(3, 3)).unwrap();
        for i in 0..3 {
            assert!((svd.sigma[i] - 1.0).abs() < 1e-14);
        }
        assert!((svd.reconstruct() - Matrix64::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_values_are_permuted_into_order() {
        let m = Matrix64::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        let svd = svd_ordered(&m).unwrap();
        assert!((svd.sigma[0] - 5.0).abs() < 1e-14);
        assert!((svd.sigma[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rectangular_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, c) in &[(4, 3), (3, 4), (5, 5), (1, 4)] {
            let m = gaussian(r, c, &mut rng);
            let svd = svd_ordered(&m).unwrap();
            assert_eq!(svd.u.shape(), (r, r));
            assert_eq!(svd.v.shape(), (c, c));
            assert!((svd.reconstruct() - &m).norm() < 1e-10 * (1.0 + m.norm()));
        }
    }

    #[test]
    fn zero_matrix_is_handled() {
        let svd = svd_ordered(&Matrix64::zeros(3, 2)).unwrap();
        assert!(svd.sigma.iter().all(|&s| s == 0.0));
        assert_eq!(svd.rank(1e-12), 0);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut m = Matrix64::zeros(2, 2);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(svd_ordered(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn schatten_examples() {
        // q = 1 on the identity: sum of unit singular values.
        assert!((schatten_q(&Matrix64::identity(2, 2), 1.0).unwrap() - 2.0).abs() < 1e-14);
        // q = 2 equals the squared Frobenius norm.
        let d = Matrix64::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert!((schatten_q(&d, 2.0).unwrap() - 25.0).abs() < 1e-12);
        // Composition with the ordered SVD.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = gaussian(5, 5, &mut rng);
        let q = 2.0 / 3.0;
        let via_svd: f64 = svd_ordered(&m)
            .unwrap()
            .sigma
            .iter()
            .map(|s| s.powf(q))
            .sum();
        assert!((schatten_q(&m, q).unwrap() - via_svd).abs() < 1e-10 * (1.0 + via_svd));
    }

    #[test]
    fn schatten_rejects_bad_exponent() {
        let m = Matrix64::identity(2, 2);
        assert!(schatten_q(&m, 0.0).is_err());
        assert!(schatten_q(&m, 2.5).is_err());
        assert!(schatten_q(&m, -1.0).is_err());
    }

    #[test]
    fn gap_is_zero_for_identical_matrices() {
        let gap = von_neumann_gap(&Matrix64::identity(2, 2), &Matrix64::identity(2, 2)).unwrap();
        assert!(gap.abs() < 1e-14);
    }

    #[test]
    fn gap_vanishes_for_aligned_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_orthogonal(2, &mut rng);
        let v = random_orthogonal(2, &mut rng);
        let a = &u * Matrix64::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]) * v.transpose();
        let b = &u * Matrix64::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) * v.transpose();
        let gap = von_neumann_gap(&a, &b).unwrap();
        assert!(gap.abs() <= 1e-10, "gap {gap}");
    }

    #[test]
    fn gap_is_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = gaussian(6, 4, &mut rng);
            let b = gaussian(6, 4, &mut rng);
            let gap = von_neumann_gap(&a, &b).unwrap();
            let scale = 1.0 + a.norm() * b.norm();
            assert!(gap >= -1e-10 * scale, "gap {gap}");
        }
    }

    #[test]
    fn gap_rejects_shape_mismatch() {
        let a = Matrix64::zeros(2, 3);
        let b = Matrix64::zeros(3, 2);
        assert!(matches!(
            von_neumann_gap(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let m = nalgebra::DMatrix::<f32>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        let svd = svd_ordered(&m).unwrap();
        assert!((svd.sigma[0] - 5.0).abs() < 1e-5);
        assert!((schatten_q(&m, 1.0f32).unwrap() - 7.0).abs() < 1e-5);
    }
}
