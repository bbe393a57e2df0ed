//! Acceptance suite: every closed-form claim is exercised end to end at its
//! stated tolerance, one test per criterion, each printing a pass line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion summaries.

use std::time::Instant;

use dmf_core::*;
use nalgebra::SymmetricEigen;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    Matrix64::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    gaussian(dim, dim, rng).qr().q()
}

fn tol() -> Tolerances64 {
    Tolerances64::default()
}

fn pass(line: &str) {
    println!("[PASS] {line}");
}

#[test]
fn criterion_1_scalar_prox_matches_grid_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases: Vec<(f64, f64, usize)> = (0..1000)
        .map(|_| {
            (
                rng.random_range(-10.0..10.0),
                rng.random_range(1e-6..=10.0),
                rng.random_range(1..=8usize),
            )
        })
        .collect();
    let worst = cases
        .par_iter()
        .map(|&(m, lambda, depth)| {
            let closed = prox_scalar(m, lambda, depth, &tol()).unwrap().minimizer;
            let oracle =
                prox_grid_oracle(m, lambda, depth, &GridSpec::for_magnitude(m)).unwrap();
            (closed - oracle).abs()
        })
        .reduce(|| 0.0f64, f64::max);
    let elapsed = start.elapsed();
    assert!(worst <= 1e-5, "worst |closed - oracle| = {worst:.3e}");
    assert!(elapsed.as_secs_f64() <= 10.0, "took {elapsed:?}");
    pass(&format!(
        "criterion 1: 1000 prox cases vs grid oracle, worst |diff| = {worst:.3e} <= 1e-5 \
         in {:.2}s <= 10s",
        elapsed.as_secs_f64()
    ));
}

#[test]
fn criterion_2_threshold_sharpness() {
    for &(lambda, depth) in &[(4.0, 3usize), (1.0, 5usize)] {
        let crit = critical_magnitude(lambda, depth).unwrap();
        let below = prox_scalar(crit * (1.0 - 1e-6), lambda, depth, &tol()).unwrap();
        assert_eq!(
            below.minimizer, 0.0,
            "expected zero just below the threshold for lambda={lambda}, L={depth}"
        );
        let above = prox_scalar(crit * (1.0 + 1e-6), lambda, depth, &tol()).unwrap();
        let q = 2.0 / depth as f64;
        let jump = (lambda * (1.0 - q)).powf(1.0 / (2.0 - q));
        assert!(
            above.minimizer >= jump - 1e-6,
            "lambda={lambda}, L={depth}: {} < {jump} - 1e-6",
            above.minimizer
        );
    }
    pass("criterion 2: threshold sharp at (lambda=4, L=3) and (lambda=1, L=5)");
}

/// Balanced scalar chain with the requested sign pattern on the first
/// `depth - 1` layers; the last sign keeps the product non-negative.
fn scalar_chain(w: f64, depth: usize, signs: u32) -> FactorStack64 {
    let mut s = vec![1.0f64; depth];
    let mut parity = 1.0;
    for (k, slot) in s.iter_mut().enumerate().take(depth - 1) {
        if signs >> k & 1 == 1 {
            *slot = -1.0;
            parity = -parity;
        }
    }
    s[depth - 1] = parity;
    FactorStack::new(
        s.iter()
            .map(|&sgn| Matrix64::from_element(1, 1, sgn * w))
            .collect(),
    )
    .unwrap()
}

fn fd_eigenvalues(spec: &ProblemSpec64, stack: &FactorStack64) -> Vec<f64> {
    let h = hessian_fd(spec, stack, 1e-4).unwrap();
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

#[test]
fn criterion_3_hessian_spectrum_constancy() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_closed = 0.0f64;
    let mut worst_spread = 0.0f64;
    for _ in 0..50 {
        let depth = rng.random_range(3..=5usize);
        let lambda = rng.random_range(0.5..5.0);
        let crit = critical_magnitude(lambda, depth).unwrap();
        let m = crit * rng.random_range(1.2..3.0) + rng.random_range(0.0..2.0);
        let spectrum = scalar_hessian_spectrum(m, lambda, depth, &tol()).unwrap();
        let spec = ProblemSpec64::new(Matrix64::from_element(1, 1, m), depth, lambda).unwrap();

        let base = fd_eigenvalues(&spec, &scalar_chain(spectrum.layer_magnitude, depth, 0));
        for (fd, cf) in base.iter().zip(spectrum.eigenvalues()) {
            worst_closed = worst_closed.max((fd - cf).abs() / cf.abs());
        }
        for signs in 1u32..(1 << (depth - 1)) {
            let other =
                fd_eigenvalues(&spec, &scalar_chain(spectrum.layer_magnitude, depth, signs));
            for (a, b) in base.iter().zip(&other) {
                worst_spread = worst_spread.max((a - b).abs() / a.abs().max(1e-12));
            }
        }
    }
    assert!(worst_closed <= 1e-3, "closed vs FD: {worst_closed:.3e}");
    assert!(worst_spread <= 1e-6, "sign-pattern spread: {worst_spread:.3e}");

    // Vanishing regularization: the top eigenvalue approaches the
    // unregularized flat-minimum value 2 L sigma_max^{2(1 - 1/L)}.
    let spectrum = scalar_hessian_spectrum(2.0, 1e-8, 3, &tol()).unwrap();
    let limit = 2.0 * 3.0 * 2.0f64.powf(2.0 * (1.0 - 1.0 / 3.0));
    let limit_err = (spectrum.max_eigenvalue - limit).abs() / limit;
    assert!(limit_err <= 1e-3, "small-lambda limit error {limit_err:.3e}");
    pass(&format!(
        "criterion 3: 50 interior spectra, closed-vs-FD {worst_closed:.3e} <= 1e-3, \
         sign spread {worst_spread:.3e} <= 1e-6, lambda->0 limit {limit_err:.3e} <= 1e-3"
    ));
}

#[test]
fn criterion_4_gd_matches_closed_form() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let dims = [6usize, 6, 6, 5];
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let target = gaussian(5, 6, &mut rng);
        let smax = svd_ordered(&target).unwrap().sigma[0];
        let lambda = 0.5 * collapse_threshold(smax, 3).unwrap();
        let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        let grid = default_grid::<f64>(&dims, trial);
        let best = gd_grid_search(&spec, &grid).unwrap();
        let rel = (best.final_stack.product() - &sol.m_star).norm() / sol.m_star.norm();
        assert!(
            rel <= 1e-2,
            "trial {trial}: relative product error {rel:.3e}"
        );
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() <= 300.0, "took {elapsed:?}");
    pass(&format!(
        "criterion 4: 10 instances, worst GD-vs-closed-form product error {worst:.3e} <= 1e-2 \
         in {:.0}s <= 300s",
        elapsed.as_secs_f64()
    ));
}

#[test]
fn criterion_5_collapse_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let target = gaussian(10, 12, &mut rng);
    let smax = svd_ordered(&target).unwrap().sigma[0];
    let tau = collapse_threshold(smax, 3).unwrap();
    let dims = [12usize, 16, 16, 10];
    let alphas: Vec<f64> = (1..=20).map(|k| k as f64 / 10.0).collect();
    let mut lines = Vec::new();
    for &alpha in &alphas {
        let lambda = alpha * tau;
        let spec = ProblemSpec64::new(target.clone(), 3, lambda).unwrap();
        let sol = solve_closed_form(&spec, &tol()).unwrap();
        let closed_norm = sol.m_star.norm();
        let best = gd_grid_search(&spec, &desk_grid::<f64>(&dims, 0)).unwrap();
        let gd_norm = best.final_stack.product().norm();
        if alpha >= 1.1 {
            assert!(
                gd_norm <= 1e-3,
                "alpha={alpha}: product norm {gd_norm:.3e} did not collapse"
            );
            assert_eq!(closed_norm, 0.0, "alpha={alpha}: closed form not collapsed");
        } else if alpha <= 0.8 {
            let rel = (gd_norm - closed_norm).abs() / closed_norm;
            assert!(
                rel <= 0.10,
                "alpha={alpha}: |{gd_norm} - {closed_norm}| / {closed_norm} = {rel:.3e}"
            );
        }
        lines.push(format!("alpha={alpha:.1} gd={gd_norm:.3e} cf={closed_norm:.3e}"));
    }
    pass(&format!(
        "criterion 5: collapse above 1.1 tau, 10% closed-form agreement below 0.8 tau \
         ({} alphas)",
        alphas.len()
    ));
    for l in lines {
        println!("        {l}");
    }
}

#[test]
fn criterion_6_layer_norm_constancy() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let target = gaussian(4, 5, &mut rng);
    let smax = svd_ordered(&target).unwrap().sigma[0];
    let lambda = 0.4 * collapse_threshold(smax, 3).unwrap();
    let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
    let sol = solve_closed_form(&spec, &tol()).unwrap();
    let g_star = layer_norm_constant(&sol.m_star, 3).unwrap();
    let dims = [5usize, 5, 5, 4];

    // One best-of-grid run per seed; all must converge to the global value.
    let norms: Vec<Vec<f64>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut grid = Vec::new();
            for &step in &[3e-3, 1e-2] {
                for &scale in &[0.1, 1.0] {
                    let mut c = GdConfig64::new(dims.to_vec(), step, scale, seed);
                    c.max_iters = 4000;
                    grid.push(c);
                }
            }
            let best = gd_grid_search(&spec, &grid).unwrap();
            assert!(
                best.final_objective <= sol.objective_value * (1.0 + 1e-3),
                "seed {seed} did not reach the global objective"
            );
            best.final_stack.layer_norms()
        })
        .collect();

    for layer in 0..3 {
        let values: Vec<f64> = norms.iter().map(|n| n[layer]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / values.len() as f64)
            .sqrt();
        assert!(std <= 1e-2, "layer {layer}: std {std:.3e}");
        for v in &values {
            assert!(
                (v - g_star).abs() <= 1e-2 * (1.0 + g_star),
                "layer {layer}: |{v} - {g_star}|"
            );
        }
    }
    pass(&format!(
        "criterion 6: 20 converged runs, every layer norm within 1e-2 of g* = {g_star:.6}"
    ));
}

#[test]
fn criterion_7_trace_bound_and_fd_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let target = gaussian(3, 3, &mut rng);
    let smax = svd_ordered(&target).unwrap().sigma[0];
    let lambda = 0.5 * collapse_threshold(smax, 3).unwrap();
    let spec = ProblemSpec64::new(target, 3, lambda).unwrap();
    let sol = solve_closed_form(&spec, &tol()).unwrap();
    let dims = [3usize, 3, 3, 3];
    let g_star = layer_norm_constant(&sol.m_star, 3).unwrap();
    let bound = trace_lower_bound(&sol.m_star, g_star, &spec, &dims).unwrap();

    // Balanced closed-form stack: bound holds and FD trace agrees (N = 27).
    let balanced = balanced_factors(&sol.m_star, &dims).unwrap();
    let exact = hessian_trace_exact(&balanced, &spec).unwrap();
    assert!(exact >= bound - 1e-6 * (1.0 + bound.abs()));
    let fd: f64 = hessian_fd(&spec, &balanced, 1e-4)
        .unwrap()
        .diagonal()
        .iter()
        .sum();
    let fd_rel = (exact - fd).abs() / exact;
    assert!(fd_rel <= 1e-4, "balanced stack FD trace error {fd_rel:.3e}");

    // Twenty converged GD minimizers: the bound holds at every one, and the
    // FD trace agrees at the first few.
    let results: Vec<(f64, f64, FactorStack64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut grid = Vec::new();
            for &step in &[3e-3, 1e-2] {
                for &scale in &[0.1, 1.0] {
                    let mut c = GdConfig64::new(dims.to_vec(), step, scale, seed);
                    c.max_iters = 4000;
                    grid.push(c);
                }
            }
            let best = gd_grid_search(&spec, &grid).unwrap();
            let tr = hessian_trace_exact(&best.final_stack, &spec).unwrap();
            (best.final_objective, tr, best.final_stack)
        })
        .collect();
    for (seed, (obj, tr, _)) in results.iter().enumerate() {
        assert!(
            *obj <= sol.objective_value * (1.0 + 1e-3),
            "seed {seed} not at the global minimum"
        );
        assert!(
            *tr >= bound - 1e-6 * (1.0 + bound.abs()),
            "seed {seed}: trace {tr} below bound {bound}"
        );
    }
    for (_, tr, stack) in results.iter().take(3) {
        let fd: f64 = hessian_fd(&spec, stack, 1e-4)
            .unwrap()
            .diagonal()
            .iter()
            .sum();
        let rel = (tr - fd).abs() / tr;
        assert!(rel <= 1e-4, "GD stack FD trace error {rel:.3e}");
    }
    pass(&format!(
        "criterion 7: trace bound {bound:.4} held at balanced + 20 GD minimizers; \
         FD trace agreement {fd_rel:.3e} <= 1e-4"
    ));
}

#[test]
fn criterion_8_von_neumann_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst_random = f64::INFINITY;
    for _ in 0..10_000 {
        let a = gaussian(6, 4, &mut rng);
        let b = gaussian(6, 4, &mut rng);
        let gap = von_neumann_gap(&a, &b).unwrap();
        let scale = 1.0 + a.norm() * b.norm();
        worst_random = worst_random.min(gap / scale);
        assert!(gap >= -1e-10 * scale, "negative gap {gap:.3e}");
    }
    let mut worst_aligned = 0.0f64;
    for _ in 0..1_000 {
        let u = random_orthogonal(6, &mut rng);
        let v = random_orthogonal(4, &mut rng);
        let mut sa: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut sb: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..5.0)).collect();
        sa.sort_by(|x, y| y.partial_cmp(x).unwrap());
        sb.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let diag = |s: &[f64]| {
            let mut d = Matrix64::zeros(6, 4);
            for (i, &x) in s.iter().enumerate() {
                d[(i, i)] = x;
            }
            d
        };
        let a = &u * diag(&sa) * v.transpose();
        let b = &u * diag(&sb) * v.transpose();
        let gap = von_neumann_gap(&a, &b).unwrap();
        let scale = 1.0 + a.norm() * b.norm();
        worst_aligned = worst_aligned.max(gap.abs() / scale);
        assert!(gap.abs() <= 1e-10 * scale, "aligned gap {gap:.3e}");
    }
    pass(&format!(
        "criterion 8: 10^4 random pairs (min scaled gap {worst_random:.3e} >= -1e-10), \
         10^3 aligned pairs (max scaled |gap| {worst_aligned:.3e} <= 1e-10)"
    ));
}

#[test]
fn criterion_9_variational_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst_attain = 0.0f64;
    let mut worst_deficit = 0.0f64;
    for trial in 0..100u64 {
        let depth = 2 + (trial % 3) as usize;
        let rows = rng.random_range(1..=5usize);
        let cols = rng.random_range(1..=5usize);
        let hidden = rows.min(cols) + rng.random_range(0..=1usize);
        let mut dims = vec![cols];
        dims.extend(std::iter::repeat_n(hidden, depth - 1));
        dims.push(rows);
        let x = gaussian(rows, cols, &mut rng);
        let q = 2.0 / depth as f64;
        let sch = schatten_q(&x, q).unwrap();

        // The balanced stack attains the variational value.
        let stack = balanced_factors(&x, &dims).unwrap();
        let value: f64 =
            stack.layers().iter().map(|l| l.norm_squared()).sum::<f64>() / depth as f64;
        let attain = (value - sch).abs() / (1.0 + sch);
        worst_attain = worst_attain.max(attain);
        assert!(attain <= 1e-10, "trial {trial}: attainment error {attain:.3e}");

        // No fiber sample beats it.
        let sampled = fiber_sample_oracle(&x, depth, &dims, 50, 900 + trial).unwrap();
        let deficit = sch - sampled;
        worst_deficit = worst_deficit.max(deficit / (1.0 + sampled.abs()));
        assert!(
            deficit <= 1e-9 * (1.0 + sampled.abs()),
            "trial {trial}: sample beat the Schatten value by {deficit:.3e}"
        );
    }
    pass(&format!(
        "criterion 9: 100 targets, balanced attainment error {worst_attain:.3e} <= 1e-10, \
         worst fiber deficit {worst_deficit:.3e} <= 1e-9"
    ));
}
