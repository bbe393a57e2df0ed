//! Independent brute-force references. Everything here avoids the closed
//! forms on purpose: the grid oracle scans sign-symmetric ranges even though
//! the theory pins the sign, and the fiber sampler perturbs a factorization
//! with explicit gauge transformations instead of trusting balance.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::solver::{balanced_factors, FactorStack};
use crate::types::ProblemSpec;
use crate::{Matrix, Real};

/// Search grid for the scalar oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub lo: T,
    pub hi: T,
    pub coarse_steps: usize,
    pub refine_rounds: usize,
    pub refine_factor: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(
        lo: T,
        hi: T,
        coarse_steps: usize,
        refine_rounds: usize,
        refine_factor: usize,
    ) -> Result<Self> {
        if lo >= hi || !lo.finite() || !hi.finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy lo < hi, got [{}, {}]",
                lo.as_f64(),
                hi.as_f64()
            )));
        }
        if coarse_steps < 1_000 {
            return Err(Error::InvalidParameter(format!(
                "coarse grid needs at least 1000 steps, got {coarse_steps}"
            )));
        }
        if refine_factor < 2 {
            return Err(Error::InvalidParameter(
                "refine factor must be at least 2".into(),
            ));
        }
        Ok(Self {
            lo,
            hi,
            coarse_steps,
            refine_rounds,
            refine_factor,
        })
    }

    /// Default sign-symmetric grid covering `[-(|m| + 1), |m| + 1]`.
    pub fn for_magnitude(m: T) -> Self {
        let span = m.abs() + T::one();
        Self {
            lo: -span,
            hi: span,
            coarse_steps: 100_000,
            refine_rounds: 3,
            refine_factor: 100,
        }
    }
}

/// Exhaustive minimizer of `phi(rho) = (m - rho)^2 + lambda |rho|^q` over
/// the grid, refined around the argmin. Final resolution is
/// `(hi - lo) / (coarse_steps * refine_factor^refine_rounds)`.
pub fn prox_grid_oracle<T: Real>(
    m: T,
    lambda: T,
    depth: usize,
    grid: &GridSpec<T>,
) -> Result<T> {
    if lambda <= T::zero() || !lambda.finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be strictly positive, got {}",
            lambda.as_f64()
        )));
    }
    if depth < 1 {
        return Err(Error::InvalidParameter(format!(
            "depth must be at least 1, got {depth}"
        )));
    }
    let q = T::of(2.0) / T::of_usize(depth);
    let phi = |rho: T| {
        let d = m - rho;
        let a = rho.abs();
        let penalty = if a > T::zero() { a.powf(q) } else { T::zero() };
        d * d + lambda * penalty
    };

    let scan = |lo: T, hi: T, steps: usize| {
        let width = (hi - lo) / T::of_usize(steps);
        let mut best_x = lo;
        let mut best_v = phi(lo);
        for k in 1..=steps {
            let x = lo + width * T::of_usize(k);
            let v = phi(x);
            if v < best_v {
                best_v = v;
                best_x = x;
            }
        }
        (best_x, width)
    };

    let (mut best, mut cell) = scan(grid.lo, grid.hi, grid.coarse_steps);
    for _ in 0..grid.refine_rounds {
        let lo = (best - cell).max(grid.lo);
        let hi = (best + cell).min(grid.hi);
        let steps = 2 * grid.refine_factor;
        let (b, w) = scan(lo, hi, steps);
        best = b;
        cell = w;
    }
    Ok(best)
}

/// Monte Carlo lower-bound probe for the variational form of the
/// Schatten-`2/L` quasi-norm: starting from the balanced factorization of
/// `x`, draws random stacks on the fiber `{W : W_L ... W_1 = x}` via gauge
/// transformations `W_{i+1} <- W_{i+1} G^{-1}`, `W_i <- G W_i` with
/// well-conditioned `G`, and returns the smallest mean squared layer norm
/// seen (the balanced start included).
pub fn fiber_sample_oracle<T: Real>(
    x: &Matrix<T>,
    depth: usize,
    dims: &[usize],
    samples: usize,
    seed: u64,
) -> Result<T> {
    if samples < 1 {
        return Err(Error::InvalidParameter(
            "need at least one fiber sample".into(),
        ));
    }
    if dims.len() != depth + 1 {
        return Err(Error::InvalidParameter(format!(
            "dims describe a depth-{} stack but depth {depth} was requested",
            dims.len() - 1
        )));
    }
    let base = balanced_factors(x, dims)?;
    let value = |layers: &[Matrix<T>]| {
        layers
            .iter()
            .fold(T::zero(), |acc, l| acc + l.norm_squared())
            / T::of_usize(depth)
    };
    let mut best = value(base.layers());
    if depth == 1 {
        // The fiber is a single point.
        return Ok(best);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_condition = T::of(10.0);
    for _ in 0..samples {
        let mut layers = base.layers().to_vec();
        for j in 0..depth - 1 {
            let dim = dims[j + 1];
            let (gauge, inverse) = loop {
                let g = Matrix::from_fn(dim, dim, |r, c| {
                    let noise = T::of(rng.sample::<f64, _>(StandardNormal)) * T::of(0.5);
                    if r == c {
                        T::one() + noise
                    } else {
                        noise
                    }
                });
                let sv = crate::svd::singular_values_sorted(&g)?;
                let smin = sv[sv.len() - 1];
                if smin <= T::zero() || sv[0] / smin > max_condition {
                    continue;
                }
                match g.clone().try_inverse() {
                    Some(inv) => break (g, inv),
                    None => continue,
                }
            };
            layers[j] = &gauge * &layers[j];
            layers[j + 1] = &layers[j + 1] * &inverse;
        }
        best = best.min(value(&layers));
    }
    Ok(best)
}

/// Central-difference gradient of the factored objective, coordinate by
/// coordinate, with per-coordinate step `step * (1 + |w_j|)`.
pub fn finite_diff_gradient<T: Real>(
    spec: &ProblemSpec<T>,
    stack: &FactorStack<T>,
    step: T,
) -> Result<FactorStack<T>> {
    if step <= T::zero() || !step.finite() {
        return Err(Error::InvalidParameter(format!(
            "FD step must be strictly positive, got {}",
            step.as_f64()
        )));
    }
    // Shape agreement comes free from the objective evaluation below.
    let mut work = stack.clone();
    let eval = |w: &FactorStack<T>| crate::train::objective(w, spec);
    let two = T::of(2.0);
    let mut grads = Vec::with_capacity(stack.depth());
    for li in 0..stack.depth() {
        let layer = &stack.layers()[li];
        let mut g = Matrix::zeros(layer.nrows(), layer.ncols());
        for e in 0..layer.len() {
            let w = layer[e];
            let h = step * (T::one() + w.abs());
            work.layers_mut()[li][e] = w + h;
            let plus = eval(&work)?;
            work.layers_mut()[li][e] = w - h;
            let minus = eval(&work)?;
            work.layers_mut()[li][e] = w;
            g[e] = (plus - minus) / (two * h);
        }
        grads.push(g);
    }
    Ok(FactorStack::from_parts_unchecked(
        grads,
        stack.dims().to_vec(),
    ))
}
