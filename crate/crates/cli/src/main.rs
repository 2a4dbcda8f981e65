use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imk_cli::commands::{self, AnalyzeSettings, SimulateArgs};
use imk_cli::error::{CliError, EXIT_NUMERICAL, EXIT_PASS};
use imk_cli::presets::{preset, PRESET_NAMES};
use imk_cli::report::{emit, write_atomic, Report};

#[derive(Parser)]
#[command(name = "imk", version, about = "Internal-model analysis for input-affine systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Plant description (JSON).
    system: PathBuf,
    /// Exosystem description (JSON).
    exo: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: assumptions, adaptation, omega-limit sampling and
    /// internal-model extraction.
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Random initial states per side when a file lists none.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        eps_stab: f64,
        /// Directory for per-trial CSV traces.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Relative degree and structural assumptions only.
    Check {
        system: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate the plant driven by the exosystem and write a CSV trace.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        w0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Construct the internal model without simulating.
    ExtractIm {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        eps_stab: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Embed a linear exosystem into a given linear internal model.
    Embed {
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a built-in example's input files.
    Example {
        name: String,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

fn finish(report: Result<Report, CliError>, path: Option<&Path>) -> Result<i32, CliError> {
    let report = report?;
    emit(&report, path)?;
    Ok(report.exit_code)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze { inputs, horizon, tol, trials, seed, eps_stab, trace_dir, report } => {
            let settings = AnalyzeSettings { horizon, tol_y: tol, trials, seed, eps_stab, ..AnalyzeSettings::default() };
            let r = commands::analyze(&inputs.system, &inputs.exo, &settings, trace_dir.as_deref());
            finish(r, report.as_deref())
        }
        Command::Check { system, seed, report } => finish(commands::check(&system, seed), report.as_deref()),
        Command::Simulate { inputs, x0, w0, horizon, out } => {
            let args = SimulateArgs { x0, w0, horizon, out: out.as_deref() };
            match commands::simulate_cmd(&inputs.system, &inputs.exo, &args)? {
                Ok(trace) => {
                    let mut buf = Vec::new();
                    trace.write_csv(&mut buf).expect("writing to memory");
                    match args.out {
                        Some(p) => write_atomic(p, &buf)?,
                        None => {
                            use std::io::Write;
                            match std::io::stdout().write_all(&buf) {
                                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                                    return Err(CliError::Io { path: "<stdout>".into(), source: e });
                                }
                                _ => {}
                            }
                        }
                    }
                    Ok(EXIT_PASS)
                }
                Err(e) => {
                    eprintln!("imk: {}", e.message);
                    Ok(EXIT_NUMERICAL)
                }
            }
        }
        Command::ExtractIm { inputs, seed, eps_stab, report } => {
            finish(commands::extract_im(&inputs.system, &inputs.exo, seed, eps_stab), report.as_deref())
        }
        Command::Embed { input, report } => finish(commands::embed(&input), report.as_deref()),
        Command::Example { name, dir } => {
            let p = preset(&name)
                .ok_or_else(|| CliError::input(format!("unknown example {name:?}; known: {}", PRESET_NAMES.join(", "))))?;
            std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
            write_atomic(&dir.join(format!("{name}.system.json")), pretty(&p.system).as_bytes())?;
            write_atomic(&dir.join(format!("{name}.exo.json")), pretty(&p.exo).as_bytes())?;
            write_atomic(&dir.join(format!("{name}.md")), p.notes.as_bytes())?;
            Ok(EXIT_PASS)
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("inputs serialize");
    s.push('\n');
    s
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("IMK_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::input(format!("IMK_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot configure threads: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = configure_threads().and_then(|()| run(cli)).unwrap_or_else(|e| {
        eprintln!("imk: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
