use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compctl::commands::{self, FreqArgs, MpcArgs, Selection, SimulateArgs, SynthArgs, VerifyArgs};
use compctl::{AppError, AppResult};
use compctl_core::verify::VerifyOptions;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "compctl", version, about = "Competitive-ratio control synthesis, simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller and write it as JSON.
    Synth(SynthCli),
    /// Roll out controllers on one disturbance and compare with the offline optimum.
    Simulate(SimulateCli),
    /// Sweep closed-loop frequency responses and extremal DC directions.
    Freq(FreqCli),
    /// Run a pendulum MPC scenario.
    Mpc(MpcCli),
    /// Run the property suite on a plant.
    Verify(VerifyCli),
}

#[derive(Args)]
struct SelectionCli {
    /// Controller kinds (h2, hinf, competitive, offline, zero) or controller JSON files.
    #[arg(long, value_delimiter = ',', default_values_t = ["h2".to_string(), "hinf".to_string(), "competitive".to_string()])]
    controllers: Vec<String>,
    #[arg(long, default_value = "causal")]
    causality: String,
    #[arg(long, default_value = "infinite")]
    horizon: String,
    /// Level for the competitive controller (default: bisection optimum).
    #[arg(long)]
    gamma_competitive: Option<f64>,
    /// Level for the H-infinity controller (default: bisection optimum).
    #[arg(long)]
    gamma_hinf: Option<f64>,
}

impl SelectionCli {
    fn selection(&self) -> AppResult<Selection> {
        Ok(Selection {
            causality: commands::parse_causality(&self.causality)?,
            horizon: commands::parse_horizon(&self.horizon)?,
            gamma_competitive: self.gamma_competitive,
            gamma_hinf: self.gamma_hinf,
        })
    }
}

#[derive(Args)]
struct SynthCli {
    /// Plant JSON file, or `boeing` for the bundled plant.
    #[arg(long)]
    plant: String,
    /// h2, hinf or competitive.
    #[arg(long)]
    mode: String,
    #[arg(long, default_value = "causal")]
    causality: String,
    #[arg(long, default_value = "infinite")]
    horizon: String,
    #[arg(long, conflicts_with = "optimize_gamma")]
    gamma: Option<f64>,
    #[arg(long)]
    optimize_gamma: bool,
    /// Bisection tolerance on gamma.
    #[arg(long)]
    tol: Option<f64>,
    /// Where to write the controller JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCli {
    #[arg(long)]
    plant: String,
    #[command(flatten)]
    select: SelectionCli,
    /// Disturbance JSON file or inline JSON.
    #[arg(long)]
    disturbance: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = commands::SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Output directory for trace CSVs and comparison.json.
    #[arg(long)]
    out: PathBuf,
    /// Report controls in the units of the plant's original weight R.
    #[arg(long)]
    original_units: bool,
}

#[derive(Args)]
struct FreqCli {
    #[arg(long)]
    plant: String,
    #[command(flatten)]
    select: SelectionCli,
    /// Number of frequencies in [0, pi].
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Output directory for freq.csv and extremal.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MpcCli {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, env = commands::SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Hold the linearization at the initial state.
    #[arg(long)]
    frozen: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyCli {
    #[arg(long, conflicts_with = "random")]
    plant: Option<String>,
    /// Draw a random plant from this seed instead.
    #[arg(long)]
    random: Option<u64>,
    /// Dimensions n,m,p of the random plant.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 2, 2])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    #[arg(long, default_value_t = 5)]
    samples: usize,
    #[arg(long, default_value_t = 64)]
    frequencies: usize,
    #[arg(long, env = commands::SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Print the JSON report instead of one line per property.
    #[arg(long)]
    json: bool,
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json serializes"));
}

fn run(cli: Cli) -> AppResult<ExitCode> {
    match cli.command {
        Command::Synth(a) => {
            let mode = commands::parse_kind(&a.mode)?;
            print(&commands::cmd_synth(&SynthArgs {
                plant: a.plant,
                mode,
                causality: commands::parse_causality(&a.causality)?,
                horizon: commands::parse_horizon(&a.horizon)?,
                gamma: a.gamma,
                optimize_gamma: a.optimize_gamma,
                tol: a.tol,
                out: a.out,
            })?);
        }
        Command::Simulate(a) => {
            print(&commands::cmd_simulate(&SimulateArgs {
                plant: a.plant,
                controllers: a.select.controllers.clone(),
                selection: a.select.selection()?,
                disturbance: a.disturbance,
                steps: a.steps,
                seed: a.seed,
                out: a.out,
                original_units: a.original_units,
            })?);
        }
        Command::Freq(a) => {
            print(&commands::cmd_freq(&FreqArgs {
                plant: a.plant,
                controllers: a.select.controllers.clone(),
                selection: a.select.selection()?,
                grid: a.grid,
                out: a.out,
            })?);
        }
        Command::Mpc(a) => {
            print(&commands::cmd_mpc(&MpcArgs { scenario: a.scenario, seed: a.seed, frozen: a.frozen, out: a.out })?);
        }
        Command::Verify(a) => {
            let (plant, random_seed) = match (a.plant, a.random) {
                (None, None) => return Err(AppError::Usage("pass --plant or --random".into())),
                other => other,
            };
            let [n, m, p] = a.dims[..] else {
                return Err(AppError::Usage("--dims takes three values n,m,p".into()));
            };
            let (_, results) = commands::verify_plant(&VerifyArgs {
                plant,
                random_seed,
                dims: (n, m, p),
                options: VerifyOptions { horizon: a.horizon, samples: a.samples, frequencies: a.frequencies, seed: a.seed },
            })?;
            if a.json {
                print(&commands::verify_report(&results));
            } else {
                for line in commands::verify_lines(&results) {
                    println!("{line}");
                }
            }
            if !compctl_core::verify::all_passed(&results) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            print(&e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
