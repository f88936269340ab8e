use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cavity_heat::experiments::{rate_study, run_config, ExperimentConfig, SolverConfig, StudyKind};
use cavity_heat::geometry::TriMesh;
use cavity_heat::laplace_bem::capacitance;
use cavity_heat::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Heat conduction around clusters of small cavities.
#[derive(Parser)]
#[command(name = "cavheat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacitance of a closed triangulated surface.
    Capacitance {
        #[arg(long)]
        mesh: PathBuf,
        /// Flat midpoint subdivisions applied before solving.
        #[arg(long, default_value_t = 0)]
        refine: u32,
        /// Equilibrium density output.
        #[arg(long, default_value = "density.csv")]
        out: PathBuf,
    },
    /// Point-interaction (Foldy-Lax) field.
    Flsim {
        #[command(flatten)]
        run: RunArgs,
        /// Also dump the densities `i,t_k,alpha`.
        #[arg(long)]
        alphas: Option<PathBuf>,
    },
    /// Space-time boundary-element reference field.
    Refbem {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Effective-medium field `W`.
    Effmed {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Effective conductivity `sigma` and `gamma = sigma^2`.
    Sigma {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence-rate study.
    Converge {
        /// single_cavity_eps2 | multi_vs_oracle | homogenization_a13 | timestep_order2
        #[arg(long)]
        study: StudyKind,
        /// Parameter values (eps, a or time step); defaults per study.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        levels: Vec<f64>,
        /// Report output `study,parameter,error,slope,half_width`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; overrides the path in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        return Ok(p.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    Ok(cwd.join(p))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn run(args: &RunArgs, solver: impl FnOnce(SolverConfig) -> Result<SolverConfig>, alphas: Option<&Path>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.solver = solver(cfg.solver)?;
    if let Some(out) = &args.out {
        let out = absolute(out)?;
        match cfg.solver {
            SolverConfig::Sigma(_) => cfg.output.sigma = Some(out),
            _ => cfg.output.field = Some(out),
        }
    }
    if let Some(a) = alphas {
        cfg.output.alphas = Some(absolute(a)?);
    }
    for file in run_config(&cfg, &base)?.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn voxel_settings(s: SolverConfig) -> Result<cavity_heat::experiments::VoxelSolver> {
    match s {
        SolverConfig::Effmed(v) | SolverConfig::Sigma(v) => Ok(v),
        _ => Err(Error::config("/solver", "voxel settings (kind effmed or sigma) required")),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Capacitance { mesh, refine, out } => {
            let mut m = TriMesh::read_off(&mesh)?.orient_outward()?;
            for _ in 0..refine {
                m = m.subdivide(false)?;
            }
            let (c, density) = capacitance(&m)?;
            println!("panels {}", m.panel_count());
            println!("C {}", c.value());
            density.write_csv(&m, create(&out)?)?;
        }
        Command::Flsim { run: args, alphas } => run(&args, |_| Ok(SolverConfig::Flsim), alphas.as_deref())?,
        Command::Refbem { run: args } => run(&args, |_| Ok(SolverConfig::Refbem), None)?,
        Command::Effmed { run: args } => run(&args, |s| voxel_settings(s).map(SolverConfig::Effmed), None)?,
        Command::Sigma { run: args } => run(&args, |s| voxel_settings(s).map(SolverConfig::Sigma), None)?,
        Command::Converge { study, levels, out } => {
            let levels = if levels.is_empty() { study.default_levels() } else { levels };
            let report = rate_study(study, &levels)?;
            for (p, e) in report.parameters.iter().zip(&report.errors) {
                println!("{p:e}\t{e:e}");
            }
            println!("slope {:.4} +/- {:.4}", report.slope, report.half_width);
            if let Some(path) = out {
                report.write_csv(create(&path)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
