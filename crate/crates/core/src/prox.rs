//! Exact solver for the one-dimensional regularized problem
//! `phi(rho) = (m - rho)^2 + lambda * |rho|^q` with `q = 2 / depth`, and the
//! closed-form Hessian spectrum of the depth-`L` scalar factorization at its
//! minimizers.

use crate::error::{Error, Result};
use crate::types::Tolerances;
use crate::Real;

/// Which case of the scalar solve produced the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxBranch {
    /// `|m|` below the critical magnitude: the minimizer is exactly zero.
    Zero,
    /// `|m|` above the critical magnitude: the minimizer is the interior
    /// stationary point of `phi`.
    Interior,
    /// `|m|` at the critical magnitude (within `tie_tol`): two global
    /// minimizers exist.
    Tie,
    /// Depth 1 or 2, where the objective is strictly convex and the
    /// minimizer has an elementary closed form.
    ConvexClosedForm,
}

impl ProxBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            ProxBranch::Zero => "zero",
            ProxBranch::Interior => "interior",
            ProxBranch::Tie => "tie",
            ProxBranch::ConvexClosedForm => "convex-closed-form",
        }
    }
}

/// Outcome of the scalar proximal solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult<T> {
    /// The minimizer; at a tie this is the canonical (nonzero) choice.
    pub minimizer: T,
    /// The full argmin set: one element except at a tie, where it is
    /// `{0, sign(m) * rho_tie}`.
    pub candidates: Vec<T>,
    pub branch: ProxBranch,
    pub unique: bool,
    /// The `|m|` at which the minimizer switches away from zero for this
    /// `(lambda, depth)`: 0 for depth 1, `lambda/2` for depth 2, and the
    /// threshold formula for depth >= 3.
    pub critical_magnitude: T,
}

/// The critical target magnitude for depth >= 3: targets strictly below it
/// map to zero, strictly above it to the interior stationary point.
///
/// Equals `(1 - q/2) * lambda^{1/(2-q)} * (1-q)^{(q-1)/(2-q)}` with
/// `q = 2 / depth`.
pub fn critical_magnitude<T: Real>(lambda: T, depth: usize) -> Result<T> {
    check_lambda(lambda)?;
    check_depth_at_least_3(depth)?;
    let one = T::one();
    let two = T::of(2.0);
    let q = two / T::of_usize(depth);
    Ok((one - q / two)
        * lambda.powf(one / (two - q))
        * (one - q).powf((q - one) / (two - q)))
}

/// The penalty weight above which a target of the given magnitude collapses
/// to zero; inverse of [`critical_magnitude`] in `lambda`.
pub fn collapse_threshold<T: Real>(magnitude: T, depth: usize) -> Result<T> {
    if magnitude < T::zero() || !magnitude.finite() {
        return Err(Error::InvalidParameter(format!(
            "magnitude must be non-negative, got {}",
            magnitude.as_f64()
        )));
    }
    check_depth_at_least_3(depth)?;
    if magnitude == T::zero() {
        // Degenerate: any positive penalty collapses a zero target.
        return Ok(T::zero());
    }
    let one = T::one();
    let two = T::of(2.0);
    let q = two / T::of_usize(depth);
    let denom = (one - q / two) * (one - q).powf((q - one) / (two - q));
    Ok((magnitude / denom).powf(two - q))
}

/// The larger root of `phi'(rho) = 2(rho - mag) + lambda q rho^{q-1}` on
/// `(0, infinity)` — the interior local minimum of `phi` — or `None` when
/// `phi` has no interior stationary point.
///
/// `phi''` is strictly increasing with a single zero at
/// `rho_c = (lambda q (1-q) / 2)^{1/(2-q)}`, so `phi'` attains its minimum
/// there; a sign check at `rho_c` decides existence and `[rho_c, mag]`
/// brackets the root.
pub fn stationary_root<T: Real>(
    mag: T,
    lambda: T,
    q: T,
    tol: &Tolerances<T>,
) -> Result<Option<T>> {
    check_lambda(lambda)?;
    if mag <= T::zero() || !mag.finite() {
        return Err(Error::InvalidParameter(format!(
            "magnitude must be strictly positive, got {}",
            mag.as_f64()
        )));
    }
    if q <= T::zero() || q >= T::one() || !q.finite() {
        return Err(Error::InvalidParameter(format!(
            "stationary_root requires q in (0, 1), got {}",
            q.as_f64()
        )));
    }
    let one = T::one();
    let two = T::of(2.0);
    let dphi = |r: T| two * (r - mag) + lambda * q * r.powf(q - one);
    let ddphi = |r: T| two + lambda * q * (q - one) * r.powf(q - two);

    let rho_c = (lambda * q * (one - q) / two).powf(one / (two - q));
    if dphi(rho_c) > T::zero() {
        return Ok(None);
    }
    let mut a = rho_c;
    let mut b = mag;
    // phi'(mag) = lambda q mag^{q-1} > 0 in exact arithmetic; expand the
    // bracket if rounding says otherwise.
    let mut expansions = 0;
    while dphi(b) < T::zero() {
        b *= two;
        expansions += 1;
        if expansions > 64 {
            return Err(Error::RootFinder(
                "could not bracket the interior stationary point".into(),
            ));
        }
    }
    let mut iters = 0;
    while b - a > tol.root_tol {
        let mid = (a + b) / two;
        if mid <= a || mid >= b {
            break; // interval at floating-point resolution
        }
        if dphi(mid) <= T::zero() {
            a = mid;
        } else {
            b = mid;
        }
        iters += 1;
        if iters > 200 {
            return Err(Error::RootFinder(format!(
                "bisection did not reach width {} in 200 iterations",
                tol.root_tol.as_f64()
            )));
        }
    }
    let mut root = (a + b) / two;
    // Newton polish; the second derivative is positive right of rho_c, so
    // the iteration is safe as long as we stay inside the bracket.
    for _ in 0..5 {
        let d = dphi(root);
        let dd = ddphi(root);
        if dd <= T::zero() || !dd.finite() {
            break;
        }
        let next = root - d / dd;
        if !next.finite() || next <= rho_c || next > b + tol.root_tol {
            break;
        }
        root = next;
    }
    Ok(Some(root))
}

/// Exact minimizer of `(m - rho)^2 + lambda |rho|^{2/depth}`.
///
/// Depths 1 and 2 are strictly convex (ridge shrinkage and soft
/// thresholding). For depth >= 3 the magnitude of `m` is compared against
/// [`critical_magnitude`]; inside a relative `tie_tol` band of it, both
/// candidates minimize and the result is flagged non-unique, with the
/// nonzero candidate reported as the canonical `minimizer`.
///
/// Odd symmetry `rho*(-m) = -rho*(m)` holds exactly: the solve works on
/// `|m|` and transfers the sign at the end.
pub fn prox_scalar<T: Real>(
    m: T,
    lambda: T,
    depth: usize,
    tol: &Tolerances<T>,
) -> Result<ProxResult<T>> {
    check_lambda(lambda)?;
    if !m.finite() {
        return Err(Error::NonFinite("prox target"));
    }
    if depth < 1 {
        return Err(Error::InvalidParameter(format!(
            "depth must be at least 1, got {depth}"
        )));
    }
    let one = T::one();
    let two = T::of(2.0);
    let mag = m.abs();
    let sgn = if m < T::zero() { -one } else { one };

    if depth == 1 {
        // Ridge: phi(rho) = (m - rho)^2 + lambda rho^2.
        let rho = m / (one + lambda);
        return Ok(ProxResult {
            minimizer: rho,
            candidates: vec![rho],
            branch: ProxBranch::ConvexClosedForm,
            unique: true,
            critical_magnitude: T::zero(),
        });
    }
    if depth == 2 {
        // Soft threshold at lambda / 2.
        let shrunk = (mag - lambda / two).max(T::zero());
        let rho = sgn * shrunk;
        return Ok(ProxResult {
            minimizer: rho,
            candidates: vec![rho],
            branch: ProxBranch::ConvexClosedForm,
            unique: true,
            critical_magnitude: lambda / two,
        });
    }

    let q = two / T::of_usize(depth);
    let critical = critical_magnitude(lambda, depth)?;
    if mag < critical * (one - tol.tie_tol) {
        return Ok(ProxResult {
            minimizer: T::zero(),
            candidates: vec![T::zero()],
            branch: ProxBranch::Zero,
            unique: true,
            critical_magnitude: critical,
        });
    }
    if mag > critical * (one + tol.tie_tol) {
        let root = stationary_root(mag, lambda, q, tol)?.ok_or_else(|| {
            Error::Inconsistent(
                "no interior stationary point above the critical magnitude".into(),
            )
        })?;
        let rho = sgn * root;
        return Ok(ProxResult {
            minimizer: rho,
            candidates: vec![rho],
            branch: ProxBranch::Interior,
            unique: true,
            critical_magnitude: critical,
        });
    }
    // Tie: both zero and the closed-form nonzero candidate attain the
    // minimum. Report the nonzero one as the canonical value.
    let rho_tie = (lambda * (one - q)).powf(one / (two - q));
    let nonzero = sgn * rho_tie;
    Ok(ProxResult {
        minimizer: nonzero,
        candidates: vec![T::zero(), nonzero],
        branch: ProxBranch::Tie,
        unique: false,
        critical_magnitude: critical,
    })
}

/// Closed-form Hessian spectrum of the depth-`L` scalar factorization
/// objective at any of its global minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSpectrum<T> {
    /// Eigenvalue shared by `depth - 1` directions.
    pub bulk_eigenvalue: T,
    pub bulk_multiplicity: usize,
    /// The remaining eigenvalue.
    pub top_eigenvalue: T,
    /// Largest eigenvalue of the Hessian.
    pub max_eigenvalue: T,
    /// Common magnitude `w = |rho*|^{1/depth}` of the balanced layers.
    pub layer_magnitude: T,
    pub depth: usize,
}

impl<T: Real> ScalarSpectrum<T> {
    /// All `depth` eigenvalues, sorted ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut out = vec![self.bulk_eigenvalue; self.bulk_multiplicity];
        out.push(self.top_eigenvalue);
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        out
    }
}

/// Hessian spectrum of the depth-`L` scalar factorization at its minimizer.
///
/// On the interior branch the spectrum is `4 lambda / L` with multiplicity
/// `L - 1` plus `2 L w^{2L-2} + 4 lambda / L - 2 lambda` where
/// `w = |rho*|^{1/L}`. On the zero branch the minimizer is the origin,
/// every mixed partial carries at least two zero factors, and the Hessian
/// is `(2 lambda / L) I`. Tie targets are rejected: the spectrum is only
/// constant across minimizers away from the measure-zero set.
pub fn scalar_hessian_spectrum<T: Real>(
    m: T,
    lambda: T,
    depth: usize,
    tol: &Tolerances<T>,
) -> Result<ScalarSpectrum<T>> {
    check_depth_at_least_3(depth)?;
    let result = prox_scalar(m, lambda, depth, tol)?;
    let l = T::of_usize(depth);
    let two = T::of(2.0);
    let four = T::of(4.0);
    match result.branch {
        ProxBranch::Tie => Err(Error::TieCase {
            magnitude: m.abs().as_f64(),
            critical: result.critical_magnitude.as_f64(),
        }),
        ProxBranch::Zero => {
            let eig = two * lambda / l;
            Ok(ScalarSpectrum {
                bulk_eigenvalue: eig,
                bulk_multiplicity: depth - 1,
                top_eigenvalue: eig,
                max_eigenvalue: eig,
                layer_magnitude: T::zero(),
                depth,
            })
        }
        _ => {
            let w = result.minimizer.abs().powf(T::one() / l);
            let w_pow = w.powf(two * l - two);
            let bulk = four * lambda / l;
            let top = two * l * w_pow + four * lambda / l - two * lambda;
            let max = (two * l * w_pow - two * lambda).max(T::zero()) + four * lambda / l;
            Ok(ScalarSpectrum {
                bulk_eigenvalue: bulk,
                bulk_multiplicity: depth - 1,
                top_eigenvalue: top,
                max_eigenvalue: max,
                layer_magnitude: w,
                depth,
            })
        }
    }
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda <= T::zero() || !lambda.finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be strictly positive, got {}",
            lambda.as_f64()
        )));
    }
    Ok(())
}

fn check_depth_at_least_3(depth: usize) -> Result<()> {
    if depth < 3 {
        return Err(Error::InvalidParameter(format!(
            "depth must be at least 3 for the threshold formulas, got {depth}"
        )));
    }
    Ok(())
}
