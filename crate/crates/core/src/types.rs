use crate::error::{Error, Result};
use crate::{Matrix, Real};

/// Numerical tolerances shared across the solvers.
///
/// Defaults are tuned for `f64`. `tie_tol` and `rank_tol` are relative
/// (scaled by the quantity they guard); `root_tol` and `svd_tol` are
/// absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Bisection interval width at which the scalar root finder stops.
    pub root_tol: T,
    /// Relative half-width of the band around the critical magnitude inside
    /// which a scalar target is treated as a tie (non-unique minimizer).
    pub tie_tol: T,
    /// Allowed deviation from orthogonality in SVD factors.
    pub svd_tol: T,
    /// Singular values below `rank_tol * sigma_max` are treated as zero.
    pub rank_tol: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            root_tol: T::of(1e-12),
            tie_tol: T::of(1e-9),
            svd_tol: T::of(1e-10),
            rank_tol: T::of(1e-12),
        }
    }
}

impl<T: Real> Tolerances<T> {
    pub fn new(root_tol: T, tie_tol: T, svd_tol: T, rank_tol: T) -> Result<Self> {
        for (name, v) in [
            ("root_tol", root_tol),
            ("tie_tol", tie_tol),
            ("svd_tol", svd_tol),
            ("rank_tol", rank_tol),
        ] {
            if v <= T::zero() || !v.finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {}",
                    v.as_f64()
                )));
            }
        }
        Ok(Self {
            root_tol,
            tie_tol,
            svd_tol,
            rank_tol,
        })
    }
}

/// A regularized deep factorization instance: the target matrix, the depth
/// of the factorization, and the penalty weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    target: Matrix<T>,
    depth: usize,
    lambda: T,
    /// Cached `2 / depth`, the Schatten exponent of the equivalent
    /// single-matrix penalty.
    exponent: T,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(target: Matrix<T>, depth: usize, lambda: T) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParameter(format!(
                "depth must be at least 1, got {depth}"
            )));
        }
        if lambda <= T::zero() || !lambda.finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be strictly positive, got {}",
                lambda.as_f64()
            )));
        }
        if target.iter().any(|x| !x.finite()) {
            return Err(Error::NonFinite("target matrix"));
        }
        let exponent = T::of(2.0) / T::of_usize(depth);
        Ok(Self {
            target,
            depth,
            lambda,
            exponent,
        })
    }

    pub fn target(&self) -> &Matrix<T> {
        &self.target
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// The Schatten exponent `q = 2 / depth`, in `(0, 2]`.
    pub fn exponent(&self) -> T {
        self.exponent
    }

    /// Shape of the target as `(rows, cols)`, i.e. `(d_L, d_0)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.target.nrows(), self.target.ncols())
    }
}
