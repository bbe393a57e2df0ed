//! Experiment configuration: JSON config file merged with command-line
//! flags (flags win), resolved into a concrete problem instance.

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use dmf_core::{
    collapse_threshold, io, svd_ordered, GdConfig64, Matrix64, ProblemSpec64,
};

use crate::CliError;

/// On-disk JSON config; every field optional, flags take precedence.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target_path: Option<String>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub hidden: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub step_sizes: Option<Vec<f64>>,
    pub init_scales: Option<Vec<f64>>,
    pub n_seeds: Option<u64>,
    pub max_iters: Option<usize>,
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("bad config {}: {e}", path.display())))
    }
}

/// Per-command instance flags; `None` means "take it from the config file
/// or the default".
#[derive(Debug, Clone, clap::Args)]
pub struct InstanceArgs {
    /// CSV file holding the target matrix (one row per line).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Rows of a generated Gaussian target (with --cols; excludes --target).
    #[arg(long)]
    pub rows: Option<usize>,
    /// Columns of a generated Gaussian target.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Factorization depth L.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Penalty weight; exclusive with --alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Penalty as a multiple of the collapse threshold of the target.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Hidden dimension of every internal layer.
    #[arg(long)]
    pub hidden: Option<usize>,
}

/// A fully resolved instance plus the layer dimensions used by the
/// gradient-descent commands.
pub struct Instance {
    pub spec: ProblemSpec64,
    pub dims: Vec<usize>,
    /// The collapse threshold of the target (depth >= 3 only).
    pub tau: Option<f64>,
    /// The lambda actually used and how it was chosen.
    pub lambda_source: String,
}

pub struct InstanceOptions {
    /// Commands that use their own alpha grid resolve lambda themselves.
    pub need_lambda: bool,
    /// Desk-scale target shape to fall back on when neither a target file
    /// nor generator dimensions are given.
    pub default_shape: Option<(usize, usize)>,
}

pub fn resolve_instance(
    args: &InstanceArgs,
    config: &ExperimentConfig,
    master_seed: u64,
    options: InstanceOptions,
) -> Result<Instance, CliError> {
    let target_path = args
        .target
        .as_ref()
        .map(|p| p.display().to_string())
        .or_else(|| config.target_path.clone());
    let mut rows = args.rows.or(config.rows);
    let mut cols = args.cols.or(config.cols);
    let generator = rows.is_some() || cols.is_some();
    if target_path.is_some() && generator {
        return Err(CliError::input(
            "give either --target or --rows/--cols, not both",
        ));
    }
    if target_path.is_none() && !generator {
        if let Some((r, c)) = options.default_shape {
            rows = Some(r);
            cols = Some(c);
        }
    }
    let target: Matrix64 = match (&target_path, rows, cols) {
        (Some(path), _, _) => io::read_matrix_csv(path)?,
        (None, Some(r), Some(c)) => {
            if r == 0 || c == 0 {
                return Err(CliError::input("target dimensions must be positive"));
            }
            let seed = config.seed.unwrap_or(master_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Matrix64::from_fn(r, c, |_, _| rng.sample(StandardNormal))
        }
        _ => {
            return Err(CliError::input(
                "no target: give --target <csv> or both --rows and --cols",
            ))
        }
    };

    let depth = args.depth.or(config.depth).unwrap_or(3);
    if depth == 0 {
        return Err(CliError::input("depth must be at least 1"));
    }

    let tau = if depth >= 3 {
        let smax = svd_ordered(&target)?.sigma[0];
        Some(collapse_threshold(smax, depth)?)
    } else {
        None
    };

    let lambda_flag = args.lambda.or(config.lambda);
    let alpha_flag = args.alpha.or(config.alpha);
    let (lambda, lambda_source) = match (lambda_flag, alpha_flag, options.need_lambda) {
        (Some(_), Some(_), _) => {
            return Err(CliError::input("give either --lambda or --alpha, not both"))
        }
        (Some(l), None, _) => (l, format!("lambda={l}")),
        (None, Some(a), _) => {
            if a <= 0.0 {
                return Err(CliError::input("alpha must be strictly positive"));
            }
            let tau = tau.ok_or_else(|| {
                CliError::input("--alpha needs depth >= 3 (no collapse threshold otherwise)")
            })?;
            (a * tau, format!("alpha={a} (lambda={})", a * tau))
        }
        (None, None, true) => {
            return Err(CliError::input("no penalty: give --lambda or --alpha"))
        }
        // Placeholder for commands that sweep their own penalty grid.
        (None, None, false) => (1.0, "unset".to_string()),
    };

    let (out_dim, in_dim) = (target.nrows(), target.ncols());
    let min_dim = out_dim.min(in_dim);
    let hidden = args.hidden.or(config.hidden).unwrap_or_else(|| min_dim.max(16));
    if hidden < min_dim {
        return Err(CliError::input(format!(
            "hidden dimension {hidden} is below min(d_0, d_L) = {min_dim}; \
             the factorization could not represent every matrix"
        )));
    }
    let mut dims = vec![in_dim];
    dims.extend(std::iter::repeat_n(hidden, depth - 1));
    dims.push(out_dim);

    let spec = ProblemSpec64::new(target, depth, lambda)?;
    Ok(Instance {
        spec,
        dims,
        tau,
        lambda_source,
    })
}

/// Gradient-descent grid flags.
#[derive(Debug, Clone, clap::Args)]
pub struct GridArgs {
    /// Step sizes to try (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub step_sizes: Option<Vec<f64>>,
    /// Initialization scales to try (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub init_scales: Option<Vec<f64>>,
    /// Number of seeds per (step, scale) cell.
    #[arg(long)]
    pub n_seeds: Option<u64>,
    /// Iteration budget per run.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Use the full 6x3x20 grid instead of the reduced desk-scale one.
    #[arg(long)]
    pub full_grid: bool,
}

pub fn resolve_grid(
    args: &GridArgs,
    config: &ExperimentConfig,
    dims: &[usize],
    master_seed: u64,
) -> Result<Vec<GdConfig64>, CliError> {
    let base = if args.full_grid {
        dmf_core::default_grid::<f64>(dims, master_seed)
    } else {
        dmf_core::desk_grid::<f64>(dims, master_seed)
    };
    let steps = args.step_sizes.clone().or_else(|| config.step_sizes.clone());
    let scales = args.init_scales.clone().or_else(|| config.init_scales.clone());
    let n_seeds = args.n_seeds.or(config.n_seeds);
    let max_iters = args.max_iters.or(config.max_iters);
    if steps.is_none() && scales.is_none() && n_seeds.is_none() && max_iters.is_none() {
        return Ok(base);
    }
    // Rebuild the grid with overrides applied on top of the chosen preset.
    let mut step_set: Vec<f64> = Vec::new();
    let mut scale_set: Vec<f64> = Vec::new();
    for c in &base {
        if !step_set.contains(&c.step_size) {
            step_set.push(c.step_size);
        }
        if !scale_set.contains(&c.init_scale) {
            scale_set.push(c.init_scale);
        }
    }
    let steps = steps.unwrap_or(step_set);
    let scales = scales.unwrap_or(scale_set);
    let n_seeds = n_seeds.unwrap_or_else(|| {
        let mut seeds: Vec<u64> = base.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds.len() as u64
    });
    let max_iters = max_iters.unwrap_or(base[0].max_iters);
    if steps.is_empty() || scales.is_empty() || n_seeds == 0 {
        return Err(CliError::input("empty hyperparameter grid"));
    }
    if steps.iter().chain(scales.iter()).any(|&x| x <= 0.0) {
        return Err(CliError::input("grid values must be strictly positive"));
    }
    let mut grid = Vec::new();
    for &step in &steps {
        for &scale in &scales {
            for s in 0..n_seeds {
                let mut c =
                    GdConfig64::new(dims.to_vec(), step, scale, master_seed.wrapping_add(s));
                c.max_iters = max_iters;
                grid.push(c);
            }
        }
    }
    Ok(grid)
}
