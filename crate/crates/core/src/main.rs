use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use curve_spde::cli::{self, OutputOptions};
use curve_spde::config::RunConfig;
use curve_spde::experiments::StudyMode;
use curve_spde::{Error, Result};

/// Stochastic advection-diffusion-reaction on moving closed curves.
///
/// Advection is discretized in the skew form -<c w_T, phi_x> only; a
/// <c d_x w_T, phi> contribution must be folded into the reaction term.
#[derive(Parser)]
#[command(name = "curve-spde", version)]
struct Args {
    /// Output directory (default: config `output.dir`, then $CURVE_SPDE_OUT)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit the `# generated_unix=...` line so reruns are byte-identical
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Worker threads for parallel sample paths (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Temporal,
    Spacetime,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sample paths of a config and write snapshot and diagnostics CSVs
    Run { config: PathBuf },
    /// Strong-convergence table (h, dt, E_S, eoc)
    Converge {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Fraction of paths whose final L2 norm falls below the threshold
    Vanish { config: PathBuf },
    /// Ritz projection errors of sin(k x) over a ladder of meshes
    Ritz {
        #[arg(long, default_value = "circle")]
        curve: String,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        frequency: f64,
    },
    /// Check a config against the schema and print its normalized form
    Validate { config: PathBuf },
}

fn execute(args: Args) -> Result<()> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let opts = OutputOptions {
        out_dir: args.out,
        timestamp: !args.no_timestamp,
    };
    match args.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = cli::cmd_run(&cfg, &opts)?;
            println!("{}", out.manifest.display());
        }
        Command::Converge { config, mode } => {
            let cfg = RunConfig::load(&config)?;
            let mode = mode.map(|m| match m {
                Mode::Temporal => StudyMode::Temporal,
                Mode::Spacetime => StudyMode::SpaceTime,
            });
            let (path, table) = cli::cmd_converge(&cfg, mode, &opts)?;
            print!("{}", cli::error_table_csv(&table, &opts));
            eprintln!("wrote {}", path.display());
        }
        Command::Vanish { config } => {
            let cfg = RunConfig::load(&config)?;
            let (path, summary) = cli::cmd_vanish(&cfg, &opts)?;
            println!("{}", serde_json::to_string(&summary)?);
            eprintln!("wrote {}", path.display());
        }
        Command::Ritz {
            curve,
            time,
            levels,
            frequency,
        } => {
            let (csv, _) = cli::cmd_ritz(&curve, time, &levels, frequency, &opts)?;
            match opts.out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("ritz.csv");
                    std::fs::write(&path, csv)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            println!("{}", cfg.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::BlowUp { path, step } => {
                    eprintln!("error: blow-up on path {path} at step {step}")
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
