//! Command-line front end: argument parsing, config merging and CSV output.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Params;
use crate::error::CliError;

const BOUNDS_HELP: &str = "\
Output (CSV, after `#@ key=value` metadata lines):
  # section=capacity
  sigma2,c_lin_low,c_lin_up,c_aff_low,c_aff_up
  # section=ddt
  r,d_lin_low,d_lin_conj,d_lin_up,d_aff";

const DDT_HELP: &str = "\
Output (CSV, after `#@ key=value` metadata lines):
  # section=rows
  mode,sigma2,gain,l,m,n,k,errors,trials,p_hat,ci_low,ci_high,status,seed
    status is ok | clamped | skipped_over_cap | skipped_overflow;
    skipped rows leave the estimate columns empty.
  # section=slopes
  r,d_hat,stderr,used_rows,d_theory,fit";

const CAPACITY_HELP: &str = "\
Output (CSV, after `#@ key=value` metadata lines):
  # section=rows
  mode,sigma2,gain,l,m,n,k,errors,trials,p_hat,ci_low,ci_high,status,seed
  # section=bounds
  sigma2,kappa,rho,c_lin_low,c_lin_up";

const FACES_HELP: &str = "\
Output (CSV, after `#@ key=value` metadata lines):
  # section=errors
  m,l,errors,trials,p_hat,ci_low,ci_high
  # section=classes
  m,sigma2_hat,sigma2_used,max_l_empirical,predicted_classes

The data directory holds one subdirectory per class with binary PGM (P5,
maxval 255) images of identical size.";

#[derive(Debug, Parser)]
#[command(
    name = "grasscap",
    version,
    about = "Classification capacity of noisy linear features"
)]
pub struct Cli {
    /// Master seed (flag > GRASSCAP_SEED > config > 0).
    #[arg(long, global = true, env = "GRASSCAP_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value file, or a CSV previously written by this tool.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate capacity and diversity-discrimination bounds.
    #[command(after_help = BOUNDS_HELP)]
    Bounds(BoundsArgs),
    /// Monte Carlo error-versus-noise sweep for the diversity-discrimination tradeoff.
    #[command(after_help = DDT_HELP)]
    Ddt(DdtArgs),
    /// Monte Carlo sweep with exponentially many classes in M.
    #[command(after_help = CAPACITY_HELP)]
    Capacity(CapacityArgs),
    /// Estimate subspaces from images and classify through random features.
    #[command(after_help = FACES_HELP)]
    Faces(FacesArgs),
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Ratio k/M, in (0, 1).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Comma-separated noise powers.
    #[arg(long)]
    pub sigma2: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated diversity gains.
    #[arg(long)]
    pub r: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Independent ensembles per grid point.
    #[arg(long)]
    pub ensembles: Option<usize>,
    /// Test signals per ensemble.
    #[arg(long)]
    pub signals: Option<usize>,
    /// Grid points needing more classes than this are skipped.
    #[arg(long)]
    pub class_cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DdtArgs {
    /// linear | affine
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated noise powers (overrides the log grid).
    #[arg(long)]
    pub sigma2: Option<String>,
    #[arg(long)]
    pub sigma2_from: Option<f64>,
    #[arg(long)]
    pub sigma2_to: Option<f64>,
    #[arg(long)]
    pub sigma2_points: Option<usize>,
    /// Comma-separated diversity gains.
    #[arg(long)]
    pub r: Option<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Comma-separated classification rates.
    #[arg(long)]
    pub rho: Option<String>,
    /// Comma-separated noise powers.
    #[arg(long)]
    pub sigma2: Option<String>,
    /// Feature counts, e.g. `4:12` or `2,3,4`.
    #[arg(long)]
    pub m_grid: Option<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args)]
pub struct FacesArgs {
    /// Image directory, one subdirectory per class.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use a corpus drawn from the subspace model instead of images.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub pixels: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub synthetic_k: Option<usize>,
    #[arg(long)]
    pub synthetic_sigma2: Option<f64>,
    #[arg(long)]
    pub m_grid: Option<String>,
    #[arg(long)]
    pub l_grid: Option<String>,
    #[arg(long)]
    pub k_model: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub l_max: Option<u64>,
    /// Fit affine instead of linear class models.
    #[arg(long)]
    pub affine: bool,
    /// Keep only each class's span, with equal energy along every direction.
    #[arg(long)]
    pub span_only: bool,
}

fn sweep_params(p: &mut Params, a: &SweepArgs) {
    p.set_opt("ensembles", a.ensembles);
    p.set_opt("signals", a.signals);
    p.set_opt("class_cap", a.class_cap);
}

/// Merges config file and flags, then runs the subcommand. Returns the CSV.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut p = match &cli.config {
        Some(path) => Params::load(path)?,
        None => Params::default(),
    };
    p.set_opt("seed", cli.seed);
    let run = || match &cli.command {
        Command::Bounds(a) => {
            let mut p = p.clone();
            p.remove("seed");
            p.set_opt("kappa", a.kappa);
            p.set_opt("sigma2", a.sigma2.as_ref());
            p.set_opt("m", a.m);
            p.set_opt("k", a.k);
            p.set_opt("r", a.r.as_ref());
            commands::cmd_bounds(p)
        }
        Command::Ddt(a) => {
            let mut p = p.clone();
            p.set_opt("mode", a.mode.as_ref());
            p.set_opt("n", a.n);
            p.set_opt("m", a.m);
            p.set_opt("k", a.k);
            if a.sigma2_from.is_some() || a.sigma2_to.is_some() || a.sigma2_points.is_some() {
                p.remove("sigma2");
            }
            p.set_opt("sigma2", a.sigma2.as_ref());
            p.set_opt("sigma2_from", a.sigma2_from);
            p.set_opt("sigma2_to", a.sigma2_to);
            p.set_opt("sigma2_points", a.sigma2_points);
            p.set_opt("r", a.r.as_ref());
            sweep_params(&mut p, &a.sweep);
            commands::cmd_ddt(p)
        }
        Command::Capacity(a) => {
            let mut p = p.clone();
            p.set_opt("nu", a.nu);
            p.set_opt("kappa", a.kappa);
            p.set_opt("rho", a.rho.as_ref());
            p.set_opt("sigma2", a.sigma2.as_ref());
            p.set_opt("m_grid", a.m_grid.as_ref());
            sweep_params(&mut p, &a.sweep);
            commands::cmd_capacity(p)
        }
        Command::Faces(a) => {
            let mut p = p.clone();
            p.set_opt("data", a.data.as_ref().map(|d| d.display().to_string()));
            if a.synthetic {
                p.set("synthetic", true);
            }
            p.set_opt("classes", a.classes);
            p.set_opt("pixels", a.pixels);
            p.set_opt("per_class", a.per_class);
            p.set_opt("synthetic_k", a.synthetic_k);
            p.set_opt("synthetic_sigma2", a.synthetic_sigma2);
            p.set_opt("m_grid", a.m_grid.as_ref());
            p.set_opt("l_grid", a.l_grid.as_ref());
            p.set_opt("k_model", a.k_model);
            p.set_opt("tau", a.tau);
            p.set_opt("l_max", a.l_max);
            if a.affine {
                p.set("affine", true);
            }
            if a.span_only {
                p.set("span_only", true);
            }
            commands::cmd_faces(p)
        }
    };
    match cli.threads {
        Some(0) => Err(CliError::Validation(
            "invalid value for threads: 0 (must be >= 1)".into(),
        )),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Runs `execute` and writes the result to `--out` or stdout.
pub fn main_with(cli: &Cli) -> Result<(), CliError> {
    let csv = execute(cli)?;
    match &cli.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(csv.as_bytes())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}
