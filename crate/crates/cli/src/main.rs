//! `dmf` — experiments and verification for ℓ²-regularized deep matrix
//! factorization: exact scalar thresholding, closed-form matrix minimizers,
//! Hessian spectra, gradient-descent sweeps, and a property-check suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 numerical error.

mod experiment;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use dmf_core::io::format_full;
use dmf_core::verify::{run_suite, SizeClass};
use dmf_core::{
    balance_gap, balanced_factors, gd_grid_search, hessian_fd, io, layer_norm_constant,
    prox_scalar, scalar_hessian_spectrum, schatten_q, solve_closed_form, von_neumann_gap,
    ErrorKind, FactorStack64, Matrix64, ProblemSpec64, Tolerances64, TrainTrace,
};

use experiment::{
    resolve_grid, resolve_instance, ExperimentConfig, GridArgs, Instance, InstanceArgs,
    InstanceOptions,
};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
    VerificationFailed(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::VerificationFailed(m) => m,
        }
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::VerificationFailed(_) => ExitCode::from(1),
            CliError::Input(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
        }
    }
}

impl From<dmf_core::Error> for CliError {
    fn from(e: dmf_core::Error) -> Self {
        match e.kind() {
            ErrorKind::Input => CliError::Input(e.to_string()),
            ErrorKind::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "dmf",
    about = "Closed-form minimizers and verification experiments for \
             l2-regularized deep matrix factorization",
    version
)]
struct Cli {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for target generation and hyperparameter grids.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for files written by the command.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also emit SVG plots next to the CSV data.
    #[arg(long, global = true)]
    emit_svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scalar problem (m - rho)^2 + lambda |rho|^(2/depth).
    Prox {
        #[arg(long, allow_hyphen_values = true)]
        m: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        depth: usize,
    },
    /// Closed-form Hessian spectrum of the scalar factorization vs a
    /// finite-difference reference at the balanced minimizer.
    Spectrum {
        #[arg(long, allow_hyphen_values = true)]
        m: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        depth: usize,
        /// Base step for the finite-difference Hessian.
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
    },
    /// Closed-form end-to-end minimizer; writes solution.json, sigmas.csv,
    /// and m_star.csv.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Balanced factor stack of the closed-form minimizer (or of the raw
    /// target when no penalty is given); writes factorize.json and one CSV
    /// per layer.
    Factorize {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Gradient-descent grid search; writes train.json (and history.csv of
    /// the best run with --emit-history).
    Train {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Dump the best run's objective/product history as CSV.
        #[arg(long)]
        emit_history: bool,
    },
    /// Sweep the penalty over an alpha grid (lambda = alpha * tau) and
    /// compare gradient descent with the closed form; writes sweep.csv.
    SweepCollapse {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Alpha grid (comma separated).
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Run the property suite; one line per check, exit 1 on any failure.
    Verify {
        #[arg(long, default_value = "standard")]
        size_class: String,
    },
    /// Monte Carlo check of the singular-value trace inequality.
    VnTest {
        #[arg(long, default_value_t = 10_000)]
        random_pairs: usize,
        #[arg(long, default_value_t = 1_000)]
        aligned_pairs: usize,
        #[arg(long, default_value_t = 6)]
        rows: usize,
        #[arg(long, default_value_t = 4)]
        cols: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out_dir = config
        .output_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| cli.out.clone());

    match &cli.command {
        Command::Prox { m, lambda, depth } => cmd_prox(*m, *lambda, *depth),
        Command::Spectrum {
            m,
            lambda,
            depth,
            fd_step,
        } => cmd_spectrum(*m, *lambda, *depth, *fd_step),
        Command::Solve { instance } => {
            let inst = resolve_instance(
                instance,
                &config,
                cli.seed,
                InstanceOptions {
                    need_lambda: true,
                    default_shape: None,
                },
            )?;
            cmd_solve(&inst, &out_dir)
        }
        Command::Factorize { instance } => {
            let with_penalty =
                instance.lambda.is_some() || instance.alpha.is_some() || config.lambda.is_some();
            let inst = resolve_instance(
                instance,
                &config,
                cli.seed,
                InstanceOptions {
                    need_lambda: false,
                    default_shape: None,
                },
            )?;
            cmd_factorize(&inst, with_penalty, &out_dir)
        }
        Command::Train {
            instance,
            grid,
            emit_history,
        } => {
            let inst = resolve_instance(
                instance,
                &config,
                cli.seed,
                InstanceOptions {
                    need_lambda: true,
                    default_shape: None,
                },
            )?;
            let configs = resolve_grid(grid, &config, &inst.dims, cli.seed)?;
            cmd_train(&inst, &configs, *emit_history, &out_dir)
        }
        Command::SweepCollapse {
            instance,
            grid,
            alphas,
        } => {
            let inst = resolve_instance(
                instance,
                &config,
                cli.seed,
                InstanceOptions {
                    need_lambda: false,
                    default_shape: Some((10, 12)),
                },
            )?;
            let alphas = alphas
                .clone()
                .or_else(|| config.alphas.clone())
                .unwrap_or_else(|| (1..=20).map(|k| k as f64 / 10.0).collect());
            cmd_sweep_collapse(&inst, grid, &config, alphas, cli.seed, cli.emit_svg, &out_dir)
        }
        Command::Verify { size_class } => cmd_verify(cli.seed, size_class),
        Command::VnTest {
            random_pairs,
            aligned_pairs,
            rows,
            cols,
        } => cmd_vn_test(cli.seed, *random_pairs, *aligned_pairs, *rows, *cols),
    }
}

fn cmd_prox(m: f64, lambda: f64, depth: usize) -> Result<(), CliError> {
    let result = prox_scalar(m, lambda, depth, &Tolerances64::default())?;
    let record = json!({
        "m": m,
        "lambda": lambda,
        "depth": depth,
        "minimizer": result.minimizer,
        "branch": result.branch.as_str(),
        "candidates": result.candidates,
        "unique": result.unique,
        "critical_magnitude": result.critical_magnitude,
    });
    println!("{}", serde_json::to_string_pretty(&record).expect("json"));
    Ok(())
}

/// Balanced scalar chain for the FD reference; the last layer carries the
/// sign of the minimizer.
fn scalar_chain(w: f64, sign: f64, depth: usize) -> FactorStack64 {
    let mut layers = vec![Matrix64::from_element(1, 1, w); depth];
    layers[depth - 1] = Matrix64::from_element(1, 1, sign * w);
    FactorStack64::new(layers).expect("scalar chain")
}

fn cmd_spectrum(m: f64, lambda: f64, depth: usize, fd_step: f64) -> Result<(), CliError> {
    let tol = Tolerances64::default();
    let spectrum = scalar_hessian_spectrum(m, lambda, depth, &tol)?;
    let prox = prox_scalar(m, lambda, depth, &tol)?;
    let sign = if prox.minimizer < 0.0 { -1.0 } else { 1.0 };
    let stack = scalar_chain(spectrum.layer_magnitude, sign, depth);
    let spec = ProblemSpec64::new(Matrix64::from_element(1, 1, m), depth, lambda)?;
    let hess = hessian_fd(&spec, &stack, fd_step)?;
    let mut fd: Vec<f64> = nalgebra::SymmetricEigen::new(hess)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    fd.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let closed = spectrum.eigenvalues();

    println!(
        "Hessian spectrum at the balanced minimizer (m={m}, lambda={lambda}, depth={depth})"
    );
    println!(
        "branch: {}, layer magnitude w = {}",
        prox.branch.as_str(),
        format_full(spectrum.layer_magnitude)
    );
    println!("{:<4} {:<26} {:<26} rel-error", "idx", "closed-form", "finite-diff");
    let mut worst = 0.0f64;
    for (i, (cf, f)) in closed.iter().zip(&fd).enumerate() {
        let rel = (cf - f).abs() / cf.abs().max(1e-300);
        worst = worst.max(rel);
        println!(
            "{:<4} {:<26} {:<26} {:.3e}",
            i + 1,
            format_full(*cf),
            format_full(*f),
            rel
        );
    }
    println!("max_eigenvalue: {}", format_full(spectrum.max_eigenvalue));
    println!("max relative error: {worst:.3e}");
    Ok(())
}

fn cmd_solve(inst: &Instance, out_dir: &Path) -> Result<(), CliError> {
    let sol = solve_closed_form(&inst.spec, &Tolerances64::default())?;
    std::fs::create_dir_all(out_dir)?;

    let sigma_target: Vec<f64> = sol.svd.sigma.iter().copied().collect();
    let record = json!({
        "rows": inst.spec.shape().0,
        "cols": inst.spec.shape().1,
        "depth": inst.spec.depth(),
        "lambda": inst.spec.lambda(),
        "lambda_source": inst.lambda_source,
        "collapse_threshold": inst.tau,
        "sigma_target": sigma_target,
        "sigma_star": sol.sigma_star(),
        "branches": sol.prox_results.iter().map(|r| r.branch.as_str()).collect::<Vec<_>>(),
        "unique": sol.unique,
        "on_measure_zero_set": sol.on_measure_zero_set,
        "offending_indices": sol.offending_indices,
        "objective": sol.objective_value,
        "product_fro": sol.m_star.norm(),
    });
    let json_path = out_dir.join("solution.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&record).expect("json"))?;

    let csv_path = out_dir.join("sigmas.csv");
    let mut csv = String::from("index,sigma_target,sigma_star,branch,unique\n");
    for (i, pr) in sol.prox_results.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            format_full(sol.svd.sigma[i]),
            format_full(pr.minimizer),
            pr.branch.as_str(),
            pr.unique
        ));
    }
    std::fs::write(&csv_path, csv)?;
    io::write_matrix_csv(out_dir.join("m_star.csv"), &sol.m_star)?;

    println!(
        "wrote {}, {}, {}",
        json_path.display(),
        csv_path.display(),
        out_dir.join("m_star.csv").display()
    );
    if !sol.unique {
        println!(
            "note: target sits on the measure-zero tie set (indices {:?}); \
             the canonical nonzero candidates were used",
            sol.offending_indices
        );
    }
    Ok(())
}

fn cmd_factorize(inst: &Instance, with_penalty: bool, out_dir: &Path) -> Result<(), CliError> {
    let (source, matrix) = if with_penalty {
        let sol = solve_closed_form(&inst.spec, &Tolerances64::default())?;
        ("closed_form_minimizer", sol.m_star)
    } else {
        ("target", inst.spec.target().clone())
    };
    let stack = balanced_factors(&matrix, &inst.dims)?;
    std::fs::create_dir_all(out_dir)?;

    let depth = inst.spec.depth();
    let product_error = (stack.product() - &matrix).norm() / (1.0 + matrix.norm());
    let g_star = layer_norm_constant(&matrix, depth)?;
    let schatten = schatten_q(&matrix, 2.0 / depth as f64)?;
    let record = json!({
        "source": source,
        "dims": stack.dims(),
        "depth": depth,
        "layer_norms": stack.layer_norms(),
        "layer_norm_constant": g_star,
        "schatten_value": schatten,
        "product_error": product_error,
        "balance_gap": balance_gap(&stack),
    });
    let json_path = out_dir.join("factorize.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&record).expect("json"))?;
    for (i, layer) in stack.layers().iter().enumerate() {
        io::write_matrix_csv(out_dir.join(format!("layer_{}.csv", i + 1)), layer)?;
    }
    println!(
        "wrote {} and {} layer files",
        json_path.display(),
        stack.depth()
    );
    Ok(())
}

fn trace_to_json(trace: &TrainTrace<f64>) -> serde_json::Value {
    let layers: Vec<Vec<Vec<f64>>> = trace
        .final_stack
        .layers()
        .iter()
        .map(|l| {
            (0..l.nrows())
                .map(|i| (0..l.ncols()).map(|j| l[(i, j)]).collect())
                .collect()
        })
        .collect();
    json!({
        "config": {
            "step_size": trace.config.step_size,
            "init_scale": trace.config.init_scale,
            "seed": trace.config.seed,
            "max_iters": trace.config.max_iters,
            "grad_tol": trace.config.grad_tol,
            "dims": trace.config.dims,
        },
        "iterations": trace.objective_history.len(),
        "converged": trace.converged,
        "final_objective": trace.final_objective,
        "final_grad_norm": trace.final_grad_norm,
        "final_product_fro": trace.final_stack.product().norm(),
        "layer_norms": trace.final_stack.layer_norms(),
        "final_stack": { "dims": trace.final_stack.dims(), "layers": layers },
    })
}

fn cmd_train(
    inst: &Instance,
    grid: &[dmf_core::GdConfig64],
    emit_history: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    let best = gd_grid_search(&inst.spec, grid)?;
    let sol = solve_closed_form(&inst.spec, &Tolerances64::default())?;
    std::fs::create_dir_all(out_dir)?;

    let mut record = trace_to_json(&best);
    record["grid_size"] = json!(grid.len());
    record["lambda"] = json!(inst.spec.lambda());
    record["lambda_source"] = json!(inst.lambda_source);
    record["closed_form"] = json!({
        "objective": sol.objective_value,
        "product_fro": sol.m_star.norm(),
        "relative_product_error":
            (best.final_stack.product() - &sol.m_star).norm() / (1.0 + sol.m_star.norm()),
    });
    let json_path = out_dir.join("train.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&record).expect("json"))?;
    println!("wrote {}", json_path.display());

    if emit_history {
        let mut csv = String::from("iter,objective,product_fro\n");
        for (i, (obj, prod)) in best
            .objective_history
            .iter()
            .zip(&best.product_fro_history)
            .enumerate()
        {
            csv.push_str(&format!("{},{},{}\n", i, format_full(*obj), format_full(*prod)));
        }
        let hist_path = out_dir.join("history.csv");
        std::fs::write(&hist_path, csv)?;
        println!("wrote {}", hist_path.display());
    }
    Ok(())
}

fn cmd_sweep_collapse(
    inst: &Instance,
    grid_args: &GridArgs,
    config: &ExperimentConfig,
    alphas: Vec<f64>,
    master_seed: u64,
    emit_svg: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::input("empty alpha grid"));
    }
    if alphas.iter().any(|&a| a <= 0.0) {
        return Err(CliError::input("alphas must be strictly positive"));
    }
    let tau = inst
        .tau
        .ok_or_else(|| CliError::input("sweep-collapse needs depth >= 3"))?;
    let grid_template = resolve_grid(grid_args, config, &inst.dims, master_seed)?;

    struct Row {
        alpha: f64,
        lambda: f64,
        gd_product_fro: f64,
        closedform_product_fro: f64,
        best_objective: f64,
        closedform_objective: f64,
        best_step_size: f64,
        best_init_scale: f64,
        best_seed: u64,
    }

    // Rows are independent tasks; results are written in alpha order no
    // matter how execution interleaves.
    use rayon::prelude::*;
    let rows: Result<Vec<Row>, dmf_core::Error> = alphas
        .par_iter()
        .map(|&alpha| {
            let lambda = alpha * tau;
            let spec =
                ProblemSpec64::new(inst.spec.target().clone(), inst.spec.depth(), lambda)?;
            let sol = solve_closed_form(&spec, &Tolerances64::default())?;
            let best = gd_grid_search(&spec, &grid_template)?;
            Ok(Row {
                alpha,
                lambda,
                gd_product_fro: best.final_stack.product().norm(),
                closedform_product_fro: sol.m_star.norm(),
                best_objective: best.final_objective,
                closedform_objective: sol.objective_value,
                best_step_size: best.config.step_size,
                best_init_scale: best.config.init_scale,
                best_seed: best.config.seed,
            })
        })
        .collect();
    let rows = rows?;

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "alpha,lambda,gd_product_fro,closedform_product_fro,best_objective,\
         closedform_objective,best_step_size,best_init_scale,best_seed\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            format_full(r.alpha),
            format_full(r.lambda),
            format_full(r.gd_product_fro),
            format_full(r.closedform_product_fro),
            format_full(r.best_objective),
            format_full(r.closedform_objective),
            format_full(r.best_step_size),
            format_full(r.best_init_scale),
            r.best_seed
        ));
    }
    let csv_path = out_dir.join("sweep.csv");
    std::fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());

    if emit_svg {
        let svg_path = out_dir.join("sweep.svg");
        svg::write_line_chart(
            &svg_path,
            "Frobenius norm of the converged product vs alpha",
            "alpha (lambda = alpha * tau)",
            "product Frobenius norm",
            &[
                svg::Series {
                    name: "gradient descent",
                    color: "#1f77b4",
                    points: rows.iter().map(|r| (r.alpha, r.gd_product_fro)).collect(),
                },
                svg::Series {
                    name: "closed form",
                    color: "#d62728",
                    points: rows
                        .iter()
                        .map(|r| (r.alpha, r.closedform_product_fro))
                        .collect(),
                },
            ],
        )?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn cmd_verify(seed: u64, size_class: &str) -> Result<(), CliError> {
    let size = SizeClass::parse(size_class)
        .ok_or_else(|| CliError::input(format!("unknown size class {size_class:?}")))?;
    let reports = run_suite(seed, size);
    let mut failures = 0;
    for r in &reports {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!("[{mark}] {} — {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", reports.len(), failures);
    if failures > 0 {
        return Err(CliError::VerificationFailed(format!(
            "{failures} of {} checks failed",
            reports.len()
        )));
    }
    Ok(())
}

fn cmd_vn_test(
    seed: u64,
    random_pairs: usize,
    aligned_pairs: usize,
    rows: usize,
    cols: usize,
) -> Result<(), CliError> {
    if rows == 0 || cols == 0 {
        return Err(CliError::input("matrix dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Matrix64::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    };
    let r = rows.min(cols);

    let mut min_scaled_gap = f64::INFINITY;
    for _ in 0..random_pairs {
        let a = gaussian(&mut rng, rows, cols);
        let b = gaussian(&mut rng, rows, cols);
        let gap = von_neumann_gap(&a, &b)?;
        min_scaled_gap = min_scaled_gap.min(gap / (1.0 + a.norm() * b.norm()));
    }

    let mut max_aligned_gap = 0.0f64;
    for _ in 0..aligned_pairs {
        let qu = gaussian(&mut rng, rows, rows).qr().q();
        let qv = gaussian(&mut rng, cols, cols).qr().q();
        let mut sa: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut sb: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..5.0)).collect();
        sa.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
        sb.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
        let embed = |s: &[f64]| {
            let mut d = Matrix64::zeros(rows, cols);
            for (i, &x) in s.iter().enumerate() {
                d[(i, i)] = x;
            }
            d
        };
        let a = &qu * embed(&sa) * qv.transpose();
        let b = &qu * embed(&sb) * qv.transpose();
        let gap = von_neumann_gap(&a, &b)?;
        max_aligned_gap = max_aligned_gap.max(gap.abs() / (1.0 + a.norm() * b.norm()));
    }

    let passed = min_scaled_gap >= -1e-10 && max_aligned_gap <= 1e-10;
    let record = json!({
        "rows": rows,
        "cols": cols,
        "random_pairs": random_pairs,
        "min_scaled_gap": min_scaled_gap,
        "aligned_pairs": aligned_pairs,
        "max_scaled_aligned_gap": max_aligned_gap,
        "passed": passed,
    });
    println!("{}", serde_json::to_string_pretty(&record).expect("json"));
    if !passed {
        return Err(CliError::VerificationFailed(
            "trace-inequality gap out of tolerance".into(),
        ));
    }
    Ok(())
}
