//! Factored objective, analytic gradient, full-batch gradient descent with
//! hyperparameter grids, exact Hessian trace, and the finite-difference
//! Hessian used to validate every closed-form claim.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{shape_mismatch, Error, Result};
use crate::solver::{check_dims_feasible, FactorStack};
use crate::types::ProblemSpec;
use crate::{Matrix, Real};

/// Hyperparameters for one gradient-descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig<T> {
    pub step_size: T,
    pub max_iters: usize,
    pub init_scale: T,
    pub seed: u64,
    pub grad_tol: T,
    /// Layer dimensions `(d_0, ..., d_L)`.
    pub dims: Vec<usize>,
}

impl<T: Real> GdConfig<T> {
    pub fn new(dims: Vec<usize>, step_size: T, init_scale: T, seed: u64) -> Self {
        Self {
            step_size,
            max_iters: 5000,
            init_scale,
            seed,
            grad_tol: T::of(1e-8),
            dims,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.step_size <= T::zero() || !self.step_size.finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be strictly positive, got {}",
                self.step_size.as_f64()
            )));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.init_scale <= T::zero() || !self.init_scale.finite() {
            return Err(Error::InvalidParameter(format!(
                "init scale must be strictly positive, got {}",
                self.init_scale.as_f64()
            )));
        }
        check_dims_feasible(&self.dims)
    }
}

/// Record of one gradient-descent run.
#[derive(Debug, Clone)]
pub struct TrainTrace<T> {
    /// Objective after each update (length = iterations taken).
    pub objective_history: Vec<T>,
    /// Frobenius norm of the end-to-end product after each update.
    pub product_fro_history: Vec<T>,
    pub final_stack: FactorStack<T>,
    pub final_grad_norm: T,
    pub final_objective: T,
    /// True when the run neither diverged nor broke monotone descent.
    pub converged: bool,
    pub config: GdConfig<T>,
}

fn check_stack_shape<T: Real>(stack: &FactorStack<T>, spec: &ProblemSpec<T>) -> Result<()> {
    let dims = stack.dims();
    let got = (dims[dims.len() - 1], dims[0]);
    if got != spec.shape() {
        return Err(shape_mismatch(spec.shape(), got));
    }
    Ok(())
}

fn objective_raw<T: Real>(layers: &[Matrix<T>], target: &Matrix<T>, lambda: T) -> T {
    let mut p = layers[0].clone();
    for layer in &layers[1..] {
        p = layer * p;
    }
    let data = (target - p).norm_squared();
    let penalty: T = layers
        .iter()
        .fold(T::zero(), |acc, l| acc + l.norm_squared());
    data + lambda / T::of_usize(layers.len()) * penalty
}

/// Factored objective
/// `||target - W_L ... W_1||_F^2 + (lambda / L) sum_i ||W_i||_F^2`.
pub fn objective<T: Real>(stack: &FactorStack<T>, spec: &ProblemSpec<T>) -> Result<T> {
    check_stack_shape(stack, spec)?;
    Ok(objective_raw(stack.layers(), spec.target(), spec.lambda()))
}

/// Prefix products `B_k = W_{k-1} ... W_1` and suffix products
/// `A_k = W_L ... W_{k+1}` for every layer index (0-based), with empty
/// products equal to the identity.
fn boundary_products<T: Real>(layers: &[Matrix<T>]) -> (Vec<Matrix<T>>, Vec<Matrix<T>>) {
    let depth = layers.len();
    let d0 = layers[0].ncols();
    let dl = layers[depth - 1].nrows();
    let mut prefixes = Vec::with_capacity(depth);
    prefixes.push(Matrix::identity(d0, d0));
    for k in 1..depth {
        let next = &layers[k - 1] * &prefixes[k - 1];
        prefixes.push(next);
    }
    let mut suffixes = vec![Matrix::identity(dl, dl); depth];
    for k in (0..depth - 1).rev() {
        suffixes[k] = &suffixes[k + 1] * &layers[k + 1];
    }
    (prefixes, suffixes)
}

fn gradient_raw<T: Real>(
    layers: &[Matrix<T>],
    target: &Matrix<T>,
    lambda: T,
) -> Vec<Matrix<T>> {
    let depth = layers.len();
    let (prefixes, suffixes) = boundary_products(layers);
    let product = &suffixes[0] * &layers[0];
    let residual = product - target;
    let two = T::of(2.0);
    let reg_coeff = two * lambda / T::of_usize(depth);
    // Negative control for the verification suite: flip the penalty sign so
    // the finite-difference gradient check must fail.
    #[cfg(feature = "fault-injection")]
    let reg_coeff = -reg_coeff;
    (0..depth)
        .map(|k| {
            let data = suffixes[k].transpose() * &residual * prefixes[k].transpose();
            data * two + &layers[k] * reg_coeff
        })
        .collect()
}

/// Analytic gradient of [`objective`], one matrix per layer:
/// `2 A_k^T (A_k W_k B_k - target) B_k^T + (2 lambda / L) W_k`.
pub fn gradient<T: Real>(stack: &FactorStack<T>, spec: &ProblemSpec<T>) -> Result<FactorStack<T>> {
    check_stack_shape(stack, spec)?;
    let grads = gradient_raw(stack.layers(), spec.target(), spec.lambda());
    Ok(FactorStack::from_parts_unchecked(
        grads,
        stack.dims().to_vec(),
    ))
}

fn grad_norm<T: Real>(grads: &[Matrix<T>]) -> T {
    grads
        .iter()
        .fold(T::zero(), |acc, g| acc + g.norm_squared())
        .sqrt()
}

/// Full-batch gradient descent from a Gaussian initialization with layer `i`
/// entries drawn as `N(0, 1) * init_scale / sqrt(d_{i-1})`.
///
/// Stops at `max_iters`, when the gradient norm falls to `grad_tol`, or
/// early (with `converged = false`) when the objective exceeds 1000x its
/// initial value. Divergence is a reported state, not an error.
pub fn gd_run<T: Real>(spec: &ProblemSpec<T>, config: &GdConfig<T>) -> Result<TrainTrace<T>> {
    config.validate()?;
    let dims = &config.dims;
    let depth = dims.len() - 1;
    if (dims[depth], dims[0]) != spec.shape() {
        return Err(shape_mismatch(spec.shape(), (dims[depth], dims[0])));
    }
    if depth != spec.depth() {
        return Err(Error::InvalidParameter(format!(
            "dims describe a depth-{depth} stack but the problem has depth {}",
            spec.depth()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers: Vec<Matrix<T>> = (0..depth)
        .map(|i| {
            let scale = config.init_scale / T::of_usize(dims[i]).sqrt();
            Matrix::from_fn(dims[i + 1], dims[i], |_, _| {
                T::of(rng.sample::<f64, _>(StandardNormal)) * scale
            })
        })
        .collect();

    let target = spec.target();
    let lambda = spec.lambda();
    let initial = objective_raw(&layers, target, lambda);
    let divergence_cap = initial * T::of(1e3);
    let slack = T::of(1e-12);

    let mut objective_history = Vec::new();
    let mut product_fro_history = Vec::new();
    let mut diverged = false;
    let mut monotone = true;
    let mut prev = initial;

    for _ in 0..config.max_iters {
        let grads = gradient_raw(&layers, target, lambda);
        if grad_norm(&grads) <= config.grad_tol {
            break;
        }
        for (layer, g) in layers.iter_mut().zip(&grads) {
            layer.zip_apply(g, |w, gv| *w -= config.step_size * gv);
        }
        let obj = objective_raw(&layers, target, lambda);
        let mut p = layers[0].clone();
        for layer in &layers[1..] {
            p = layer * p;
        }
        objective_history.push(obj);
        product_fro_history.push(p.norm());
        if !obj.finite() || obj > divergence_cap {
            diverged = true;
            break;
        }
        if obj > prev + slack * (T::one() + prev.abs()) {
            monotone = false;
        }
        prev = obj;
    }

    let final_grad_norm = grad_norm(&gradient_raw(&layers, target, lambda));
    let final_objective = objective_raw(&layers, target, lambda);
    let stack = FactorStack::from_parts_unchecked(layers, dims.clone());
    Ok(TrainTrace {
        objective_history,
        product_fro_history,
        final_stack: stack,
        final_grad_norm,
        final_objective,
        converged: !diverged && monotone,
        config: config.clone(),
    })
}

/// Runs every configuration (in parallel) and returns the trace with the
/// lowest final objective, ties broken by lowest grid index. Deterministic:
/// each run's randomness comes only from its own seed.
pub fn gd_grid_search<T: Real>(
    spec: &ProblemSpec<T>,
    grid: &[GdConfig<T>],
) -> Result<TrainTrace<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let runs: Vec<Result<TrainTrace<T>>> =
        grid.par_iter().map(|config| gd_run(spec, config)).collect();
    let mut best: Option<TrainTrace<T>> = None;
    for run in runs {
        let run = run?;
        let better = match &best {
            None => true,
            Some(b) => run.final_objective < b.final_objective,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// The full hyperparameter grid: 6 step sizes x 3 init scales x 20 seeds.
pub fn default_grid<T: Real>(dims: &[usize], base_seed: u64) -> Vec<GdConfig<T>> {
    build_grid(
        dims,
        base_seed,
        &[1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2],
        &[1e-2, 1e-1, 1.0],
        20,
        5000,
    )
}

/// Reduced desk-scale grid: 3 step sizes x 2 init scales x 5 seeds, 3000
/// iterations. The init scales deliberately include 1.0 — tiny
/// initializations sit inside the attraction basin of the all-zero stack,
/// which is a local minimum for depth >= 3.
pub fn desk_grid<T: Real>(dims: &[usize], base_seed: u64) -> Vec<GdConfig<T>> {
    build_grid(dims, base_seed, &[1e-3, 3e-3, 1e-2], &[1e-1, 1.0], 5, 3000)
}

fn build_grid<T: Real>(
    dims: &[usize],
    base_seed: u64,
    steps: &[f64],
    init_scales: &[f64],
    n_seeds: u64,
    max_iters: usize,
) -> Vec<GdConfig<T>> {
    let mut grid = Vec::new();
    for &step in steps {
        for &scale in init_scales {
            for seed in 0..n_seeds {
                let mut config = GdConfig::new(
                    dims.to_vec(),
                    T::of(step),
                    T::of(scale),
                    base_seed.wrapping_add(seed),
                );
                config.max_iters = max_iters;
                grid.push(config);
            }
        }
    }
    grid
}

/// Exact Hessian trace of the factored objective:
/// `(2 lambda / L) N + sum_k 2 ||B_k||_F^2 ||A_k||_F^2`, no Hessian
/// materialization.
pub fn hessian_trace_exact<T: Real>(stack: &FactorStack<T>, spec: &ProblemSpec<T>) -> Result<T> {
    check_stack_shape(stack, spec)?;
    let layers = stack.layers();
    let (prefixes, suffixes) = boundary_products(layers);
    let two = T::of(2.0);
    let l = T::of_usize(stack.depth());
    let mut total = two * spec.lambda() / l * T::of_usize(stack.param_count());
    for k in 0..stack.depth() {
        total += two * prefixes[k].norm_squared() * suffixes[k].norm_squared();
    }
    Ok(total)
}

/// Maximum FD parameter count; the Hessian is dense N x N and each entry
/// costs four objective evaluations.
pub const HESSIAN_FD_MAX_PARAMS: usize = 400;

/// Finite-difference Hessian of the factored objective over the flattened
/// parameter vector (layers in order, column-major within each layer),
/// symmetrized as `(H + H^T) / 2`. Per-coordinate step is
/// `step * (1 + |w_j|)`.
pub fn hessian_fd<T: Real>(
    spec: &ProblemSpec<T>,
    stack: &FactorStack<T>,
    step: T,
) -> Result<Matrix<T>> {
    check_stack_shape(stack, spec)?;
    if step <= T::zero() || !step.finite() {
        return Err(Error::InvalidParameter(format!(
            "FD step must be strictly positive, got {}",
            step.as_f64()
        )));
    }
    let n = stack.param_count();
    if n > HESSIAN_FD_MAX_PARAMS {
        return Err(Error::InvalidParameter(format!(
            "stack has {n} parameters; finite-difference Hessian is limited to {HESSIAN_FD_MAX_PARAMS}"
        )));
    }
    let target = spec.target();
    let lambda = spec.lambda();
    let mut work = stack.clone();

    // Map flat index -> (layer, within-layer index).
    let mut coords = Vec::with_capacity(n);
    for (li, layer) in stack.layers().iter().enumerate() {
        for e in 0..layer.len() {
            coords.push((li, e));
        }
    }
    let read = |stack: &FactorStack<T>, c: (usize, usize)| stack.layers()[c.0][c.1];
    // Absolute writes keep the work copy bit-identical to the input after
    // every stencil, so rounding never drifts across coordinate pairs.
    let set = |work: &mut FactorStack<T>, c: (usize, usize), value: T| {
        work.layers_mut()[c.0][c.1] = value;
    };
    let eval = |work: &FactorStack<T>| objective_raw(work.layers(), target, lambda);

    let base = eval(&work);
    let two = T::of(2.0);
    let four = T::of(4.0);
    let mut hess = Matrix::zeros(n, n);
    for i in 0..n {
        let wi = read(stack, coords[i]);
        let hi = step * (T::one() + wi.abs());
        for j in i..n {
            let wj = read(stack, coords[j]);
            let hj = step * (T::one() + wj.abs());
            let value = if i == j {
                set(&mut work, coords[i], wi + hi);
                let plus = eval(&work);
                set(&mut work, coords[i], wi - hi);
                let minus = eval(&work);
                set(&mut work, coords[i], wi);
                (plus - two * base + minus) / (hi * hi)
            } else {
                set(&mut work, coords[i], wi + hi);
                set(&mut work, coords[j], wj + hj);
                let pp = eval(&work);
                set(&mut work, coords[j], wj - hj);
                let pm = eval(&work);
                set(&mut work, coords[i], wi - hi);
                let mm = eval(&work);
                set(&mut work, coords[j], wj + hj);
                let mp = eval(&work);
                set(&mut work, coords[i], wi);
                set(&mut work, coords[j], wj);
                (pp - pm - mp + mm) / (four * hi * hj)
            };
            hess[(i, j)] = value;
            hess[(j, i)] = value;
        }
    }
    let sym = (&hess + hess.transpose()) * T::of(0.5);
    Ok(sym)
}

/// Worst relative balance defect across adjacent layers:
/// `max_i ||W_{i+1}^T W_{i+1} - W_i W_i^T||_F / (1 + ||W_i W_i^T||_F)`.
/// Zero for single-layer stacks.
pub fn balance_gap<T: Real>(stack: &FactorStack<T>) -> T {
    let layers = stack.layers();
    let mut worst = T::zero();
    for i in 0..layers.len().saturating_sub(1) {
        let lower = &layers[i] * layers[i].transpose();
        let upper = layers[i + 1].transpose() * &layers[i + 1];
        let gap = (upper - &lower).norm() / (T::one() + lower.norm());
        worst = worst.max(gap);
    }
    worst
}
