//! Closed-form end-to-end minimizer of the matrix problem via
//! per-singular-value proximal solves with the target's singular vectors,
//! balanced factor construction, and diagnostics (uniqueness, measure-zero
//! proximity, layer-norm constant, Hessian-trace lower bound).

use crate::error::{shape_mismatch, Error, Result};
use crate::prox::{critical_magnitude, prox_scalar, ProxBranch, ProxResult};
use crate::svd::{schatten_q, svd_ordered, OrderedSvd};
use crate::types::{ProblemSpec, Tolerances};
use crate::{Matrix, Real};

/// Ordered stack of factor layers `W_1 .. W_L` with `W_i : d_i x d_{i-1}`.
///
/// Construction checks that adjacent shapes compose and that every hidden
/// dimension is at least `min(d_0, d_L)`, which is what makes every target
/// matrix representable as a product.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorStack<T> {
    layers: Vec<Matrix<T>>,
    dims: Vec<usize>,
}

impl<T: Real> FactorStack<T> {
    pub fn new(layers: Vec<Matrix<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("empty factor stack".into()));
        }
        let mut dims = Vec::with_capacity(layers.len() + 1);
        dims.push(layers[0].ncols());
        for (i, layer) in layers.iter().enumerate() {
            if layer.ncols() != dims[i] {
                return Err(Error::InfeasibleDims(format!(
                    "layer {} has {} columns but the previous dimension is {}",
                    i + 1,
                    layer.ncols(),
                    dims[i]
                )));
            }
            dims.push(layer.nrows());
        }
        check_dims_feasible(&dims)?;
        Ok(Self { layers, dims })
    }

    pub fn layers(&self) -> &[Matrix<T>] {
        &self.layers
    }

    /// Dimensions `(d_0, ..., d_L)`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// End-to-end product `W_L ... W_1`.
    pub fn product(&self) -> Matrix<T> {
        let mut p = self.layers[0].clone();
        for layer in &self.layers[1..] {
            p = layer * p;
        }
        p
    }

    /// Total parameter count `N = sum_i d_i d_{i-1}`.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn layer_norms(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.norm()).collect()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.layers
    }

    pub(crate) fn from_parts_unchecked(layers: Vec<Matrix<T>>, dims: Vec<usize>) -> Self {
        Self { layers, dims }
    }
}

pub(crate) fn check_dims_feasible(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InfeasibleDims(
            "a stack needs at least input and output dimensions".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::InfeasibleDims("zero dimension".into()));
    }
    let capacity = dims[0].min(dims[dims.len() - 1]);
    if let Some(&bottleneck) = dims.iter().find(|&&d| d < capacity) {
        return Err(Error::InfeasibleDims(format!(
            "hidden dimension {bottleneck} is below the rank capacity {capacity}"
        )));
    }
    Ok(())
}

/// Closed-form solution record for one problem instance.
#[derive(Debug, Clone)]
pub struct MatrixSolution<T> {
    /// The end-to-end minimizer (the canonical one if a tie was hit).
    pub m_star: Matrix<T>,
    /// Ordered SVD of the target.
    pub svd: OrderedSvd<T>,
    /// Per-singular-value solves, in singular-value order.
    pub prox_results: Vec<ProxResult<T>>,
    /// False exactly when some singular value hit the tie band.
    pub unique: bool,
    pub on_measure_zero_set: bool,
    /// Indices of singular values inside the tie band.
    pub offending_indices: Vec<usize>,
    /// Objective value at `m_star`.
    pub objective_value: T,
}

impl<T: Real> MatrixSolution<T> {
    /// Singular values of the minimizer (the thresholded targets).
    pub fn sigma_star(&self) -> Vec<T> {
        self.prox_results.iter().map(|r| r.minimizer).collect()
    }
}

/// `||target - m||_F^2 + lambda * ||m||_{S^q}^q` with `q = 2 / depth`.
pub fn objective_end2end<T: Real>(m: &Matrix<T>, spec: &ProblemSpec<T>) -> Result<T> {
    if m.shape() != spec.shape() {
        return Err(shape_mismatch(spec.shape(), m.shape()));
    }
    let data = (spec.target() - m).norm_squared();
    Ok(data + spec.lambda() * schatten_q(m, spec.exponent())?)
}

/// The unique (almost always) end-to-end minimizer: SVD the target, apply
/// the scalar prox to each singular value, and reassemble with the target's
/// singular vectors.
///
/// Singular values at or below `rank_tol * sigma_max` are treated as exact
/// zeros before the scalar solve. The per-value minimizers are checked to
/// be non-increasing — the scalar solve is monotone, so a violation means a
/// bug and is reported as a numerical error rather than silently reordered.
pub fn solve_closed_form<T: Real>(
    spec: &ProblemSpec<T>,
    tol: &Tolerances<T>,
) -> Result<MatrixSolution<T>> {
    let svd = svd_ordered(spec.target())?;
    let sigma_max = if svd.sigma.is_empty() {
        T::zero()
    } else {
        svd.sigma[0]
    };
    let cut = tol.rank_tol * sigma_max;

    let mut prox_results = Vec::with_capacity(svd.sigma.len());
    for &s in svd.sigma.iter() {
        let effective = if s <= cut { T::zero() } else { s };
        prox_results.push(prox_scalar(effective, spec.lambda(), spec.depth(), tol)?);
    }

    let one = T::one();
    for i in 1..prox_results.len() {
        let gap = prox_results[i].minimizer - prox_results[i - 1].minimizer;
        if gap > T::of(1e-9) * (one + prox_results[0].minimizer.abs()) {
            return Err(Error::Inconsistent(format!(
                "thresholded singular values are not non-increasing at index {i}"
            )));
        }
    }

    let (rows, cols) = spec.shape();
    let r = svd.sigma.len();
    let mut core = Matrix::zeros(rows, cols);
    for (i, pr) in prox_results.iter().enumerate().take(r) {
        core[(i, i)] = pr.minimizer;
    }
    let m_star = &svd.u * core * svd.v.transpose();

    let offending_indices: Vec<usize> = prox_results
        .iter()
        .enumerate()
        .filter(|(_, pr)| pr.branch == ProxBranch::Tie)
        .map(|(i, _)| i)
        .collect();
    let unique = offending_indices.is_empty();

    // Alignment makes the objective separable; summing the scalar pieces
    // avoids a second SVD of the reconstruction.
    let q = spec.exponent();
    let mut objective_value = T::zero();
    for (i, pr) in prox_results.iter().enumerate() {
        let d = svd.sigma[i] - pr.minimizer;
        objective_value += d * d;
        let x = pr.minimizer.abs();
        if x > T::zero() {
            objective_value += spec.lambda() * x.powf(q);
        }
    }

    Ok(MatrixSolution {
        m_star,
        svd,
        prox_results,
        unique,
        on_measure_zero_set: !unique,
        offending_indices,
        objective_value,
    })
}

/// Whether some singular value of the target lies within a relative `eps` of
/// the critical magnitude, i.e. the instance sits on (or numerically near)
/// the measure-zero set where the minimizer is non-unique. Always false for
/// depth 1 and 2.
pub fn is_on_measure_zero_set<T: Real>(
    spec: &ProblemSpec<T>,
    eps: T,
) -> Result<(bool, Vec<usize>)> {
    if spec.depth() < 3 {
        return Ok((false, Vec::new()));
    }
    let critical = critical_magnitude(spec.lambda(), spec.depth())?;
    let sigma = crate::svd::singular_values_sorted(spec.target())?;
    let one = T::one();
    let lo = critical * (one - eps);
    let hi = critical * (one + eps);
    let hits: Vec<usize> = sigma
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= lo && s <= hi)
        .map(|(i, _)| i)
        .collect();
    Ok((!hits.is_empty(), hits))
}

/// Balanced depth-`L` factorization of `m_star`: every layer carries
/// `Sigma^{1/L}`, the outer layers absorb the singular vectors, and blocks
/// are zero-padded into the requested layer shapes.
///
/// The product recomposes `m_star`, every layer has Frobenius norm
/// `sqrt(||m_star||_{S^{2/L}}^{2/L})`, and adjacent layers are balanced:
/// `W_{i+1}^T W_{i+1} = W_i W_i^T`.
pub fn balanced_factors<T: Real>(m_star: &Matrix<T>, dims: &[usize]) -> Result<FactorStack<T>> {
    check_dims_feasible(dims)?;
    let depth = dims.len() - 1;
    let (rows, cols) = m_star.shape();
    if dims[depth] != rows || dims[0] != cols {
        return Err(Error::InfeasibleDims(format!(
            "stack maps R^{} to R^{} but the matrix is {rows}x{cols}",
            dims[0], dims[depth]
        )));
    }
    let svd = svd_ordered(m_star)?;
    let r = svd.sigma.len();
    let root_sigma: Vec<T> = svd
        .sigma
        .iter()
        .map(|&s| {
            if s > T::zero() {
                s.powf(T::one() / T::of_usize(depth))
            } else {
                T::zero()
            }
        })
        .collect();

    if depth == 1 {
        let stack = FactorStack::new(vec![m_star.clone()])?;
        return Ok(stack);
    }

    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let (out_dim, in_dim) = (dims[i + 1], dims[i]);
        let mut layer = Matrix::zeros(out_dim, in_dim);
        if i == 0 {
            // Sigma^{1/L} V^T in the top-left r x d_0 block.
            for k in 0..r {
                for j in 0..cols {
                    layer[(k, j)] = root_sigma[k] * svd.v[(j, k)];
                }
            }
        } else if i == depth - 1 {
            // U Sigma^{1/L} in the top-left d_L x r block.
            for j in 0..rows {
                for k in 0..r {
                    layer[(j, k)] = svd.u[(j, k)] * root_sigma[k];
                }
            }
        } else {
            for k in 0..r {
                layer[(k, k)] = root_sigma[k];
            }
        }
        layers.push(layer);
    }
    FactorStack::new(layers)
}

/// The common layer Frobenius norm at any minimizer with end-to-end product
/// `m_star`: `g* = sqrt(||m_star||_{S^{2/L}}^{2/L})`.
pub fn layer_norm_constant<T: Real>(m_star: &Matrix<T>, depth: usize) -> Result<T> {
    if depth < 1 {
        return Err(Error::InvalidParameter(format!(
            "depth must be at least 1, got {depth}"
        )));
    }
    let q = T::of(2.0) / T::of_usize(depth);
    Ok(schatten_q(m_star, q)?.sqrt())
}

/// Lower bound on the Hessian trace of the factored objective at any
/// minimizer: `2 L ||m_star||_F^2 / g*^2 + (2 lambda / L) N`. Degenerates to
/// the penalty part alone when the minimizer is zero.
pub fn trace_lower_bound<T: Real>(
    m_star: &Matrix<T>,
    g_star: T,
    spec: &ProblemSpec<T>,
    dims: &[usize],
) -> Result<T> {
    check_dims_feasible(dims)?;
    if dims.len() - 1 != spec.depth() {
        return Err(Error::InvalidParameter(format!(
            "dims describe a depth-{} stack but the problem has depth {}",
            dims.len() - 1,
            spec.depth()
        )));
    }
    let n_params: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
    let l = T::of_usize(spec.depth());
    let two = T::of(2.0);
    let penalty_part = two * spec.lambda() / l * T::of_usize(n_params);
    let product_sq = m_star.norm_squared();
    if g_star <= T::zero() || product_sq == T::zero() {
        return Ok(penalty_part);
    }
    Ok(two * l * product_sq / (g_star * g_star) + penalty_part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::collapse_threshold;
    use crate::{Matrix64, ProblemSpec64, Tolerances64};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
        Matrix64::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn tol() -> Tolerances64 {
        Tolerances64::default()
    }

    #[test]
    fn stack_construction_checks_shapes() {
        let ok = FactorStack::new(vec![Matrix64::zeros(4, 3), Matrix64::zeros(2, 4)]);
        assert!(ok.is_ok());
        let bad = FactorStack::new(vec![Matrix64::zeros(4, 3), Matrix64::zeros(2, 5)]);
        assert!(matches!(bad, Err(Error::InfeasibleDims(_))));
        // Hidden bottleneck below min(d_0, d_L).
        let pinched = FactorStack::new(vec![Matrix64::zeros(1, 3), Matrix64::zeros(3, 1)]);
        assert!(matches!(pinched, Err(Error::InfeasibleDims(_))));
    }

    #[test]
    fn objective_end2end_special_cases() {
        let spec = ProblemSpec64::new(Matrix64::zeros(2, 2), 3, 1.0).unwrap();
        assert_eq!(objective_end2end(&Matrix64::zeros(2, 2), &spec).unwrap(), 0.0);
        let target = Matrix64::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let spec = ProblemSpec64::new(target.clone(), 3, 1.0).unwrap();
        let at_zero = objective_end2end(&Matrix64::zeros(2, 2), &spec).unwrap();
        assert!((at_zero - target.norm_squared()).abs() < 1e-12);
        assert!(objective_end2end(&Matrix64::zeros(3, 2), &spec).is_err());
    }

    #[test]
    fn solve_zero_target_is_zero() {
        let spec = ProblemSpec64::new(Matrix64::zeros(3, 2), 3, 2.0).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        assert!(sol.unique);
        assert_eq!(sol.m_star, Matrix64::zeros(3, 2));
        assert_eq!(sol.objective_value, 0.0);
    }

    #[test]
    fn solve_one_by_one_matches_scalar_prox() {
        let spec = ProblemSpec64::new(Matrix64::from_element(1, 1, 3.0), 3, 4.0).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        let scalar = crate::prox::prox_scalar(3.0, 4.0, 3, &tol()).unwrap();
        assert!((sol.m_star[(0, 0)] - scalar.minimizer).abs() < 1e-12);
    }

    #[test]
    fn solve_collapses_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = gaussian(4, 5, &mut rng);
        let smax = svd_ordered(&target).unwrap().sigma[0];
        let lambda = collapse_threshold(smax, 3).unwrap() * (1.0 + 1e-6);
        let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        assert_eq!(sol.m_star, Matrix64::zeros(4, 5));
    }

    #[test]
    fn solve_aligns_with_target_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = gaussian(5, 6, &mut rng);
        let smax = svd_ordered(&target).unwrap().sigma[0];
        let lambda = 0.5 * collapse_threshold(smax, 3).unwrap();
        let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        let aligned = sol.svd.u.transpose() * &sol.m_star * &sol.svd.v;
        let mut off = 0.0f64;
        for i in 0..aligned.nrows() {
            for j in 0..aligned.ncols() {
                if i != j {
                    off = off.max(aligned[(i, j)].abs());
                }
            }
        }
        assert!(off <= 1e-8 * (1.0 + sol.m_star.norm()));
        // Per-value decoupling.
        for (i, pr) in sol.prox_results.iter().enumerate() {
            let expect = crate::prox::prox_scalar(sol.svd.sigma[i], lambda, 3, &tol()).unwrap();
            assert!((pr.minimizer - expect.minimizer).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_survives_random_perturbation_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let target = gaussian(5, 6, &mut rng);
        let smax = svd_ordered(&target).unwrap().sigma[0];
        let lambda = 0.5 * collapse_threshold(smax, 3).unwrap();
        let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        let at_star = objective_end2end(&sol.m_star, &spec).unwrap();
        for _ in 0..1000 {
            let scale = *[1e-3, 1e-1, 1.0].choose(&mut rng).unwrap();
            let mut delta = gaussian(5, 6, &mut rng);
            delta *= scale / delta.norm();
            let probed = objective_end2end(&(&sol.m_star + delta), &spec).unwrap();
            assert!(
                at_star <= probed + 1e-10 * (1.0 + at_star),
                "perturbation beat the closed form: {probed} < {at_star}"
            );
        }
    }

    #[test]
    fn measure_zero_detection() {
        // Construct a target whose top singular value is exactly critical.
        let crit = critical_magnitude(4.0, 3).unwrap();
        let target = Matrix64::from_row_slice(2, 2, &[crit, 0.0, 0.0, 1.0]);
        let spec = ProblemSpec64::new(target, 3, 4.0).unwrap();
        let (hit, idx) = is_on_measure_zero_set(&spec, 1e-9).unwrap();
        assert!(hit);
        assert_eq!(idx, vec![0]);
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        assert!(!sol.unique);
        assert!(sol.on_measure_zero_set);
        assert_eq!(sol.offending_indices, vec![0]);

        // Wide band catches nearby values; narrow band does not.
        let target = Matrix64::from_row_slice(2, 2, &[crit * 1.2, 0.0, 0.0, 0.1]);
        let spec = ProblemSpec64::new(target, 3, 4.0).unwrap();
        assert!(!is_on_measure_zero_set(&spec, 1e-9).unwrap().0);
        assert!(is_on_measure_zero_set(&spec, 0.5).unwrap().0);

        // Shallow depths never sit on the set.
        let spec = ProblemSpec64::new(Matrix64::identity(2, 2), 2, 4.0).unwrap();
        assert!(!is_on_measure_zero_set(&spec, 0.5).unwrap().0);
    }

    #[test]
    fn balanced_factors_scalar_square_root() {
        let stack = balanced_factors(&Matrix64::from_element(1, 1, 9.0), &[1, 1, 1]).unwrap();
        assert!((stack.layers()[0][(0, 0)] - 3.0).abs() < 1e-12);
        assert!((stack.layers()[1][(0, 0)] - 3.0).abs() < 1e-12);
        let value = 0.5 * (9.0 + 9.0);
        assert!((value - schatten_q(&Matrix64::from_element(1, 1, 9.0), 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn balanced_factors_zero_matrix() {
        let stack = balanced_factors(&Matrix64::zeros(2, 3), &[3, 3, 3, 2]).unwrap();
        for layer in stack.layers() {
            assert_eq!(layer.norm(), 0.0);
        }
    }

    #[test]
    fn balanced_factors_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gaussian(4, 5, &mut rng);
        let dims = [5usize, 6, 6, 4];
        let stack = balanced_factors(&m, &dims).unwrap();
        let prod_err = (stack.product() - &m).norm() / (1.0 + m.norm());
        assert!(prod_err < 1e-9, "product error {prod_err}");
        let q = 2.0 / 3.0;
        let sch = schatten_q(&m, q).unwrap();
        let mean_sq: f64 =
            stack.layers().iter().map(|l| l.norm_squared()).sum::<f64>() / 3.0;
        assert!((mean_sq - sch).abs() <= 1e-9 * (1.0 + sch));
        // Adjacent balance.
        for i in 0..stack.depth() - 1 {
            let a = &stack.layers()[i] * stack.layers()[i].transpose();
            let b = stack.layers()[i + 1].transpose() * &stack.layers()[i + 1];
            assert!((a - b).norm() < 1e-9);
        }
        // Every layer norm equals the closed-form constant.
        let g = layer_norm_constant(&m, 3).unwrap();
        for n in stack.layer_norms() {
            assert!((n - g).abs() <= 1e-9 * (1.0 + g));
        }
    }

    #[test]
    fn balanced_factors_rejects_infeasible_dims() {
        let m = Matrix64::identity(3, 3);
        assert!(balanced_factors(&m, &[3, 2, 3]).is_err());
        assert!(balanced_factors(&m, &[3, 3, 4]).is_err());
    }

    #[test]
    fn layer_norm_constant_examples() {
        assert_eq!(layer_norm_constant(&Matrix64::zeros(2, 2), 3).unwrap(), 0.0);
        let d9 = Matrix64::from_element(1, 1, 9.0);
        assert!((layer_norm_constant(&d9, 2).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_lower_bound_degenerate_branch() {
        let spec = ProblemSpec64::new(Matrix64::zeros(2, 2), 3, 1.5).unwrap();
        let dims = [2usize, 2, 2, 2];
        let n: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
        let bound = trace_lower_bound(&Matrix64::zeros(2, 2), 0.0, &spec, &dims).unwrap();
        assert!((bound - 2.0 * 1.5 / 3.0 * n as f64).abs() < 1e-12);
    }
}
