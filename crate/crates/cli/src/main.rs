use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noct_cli::*;
use noct_core::par::ExecMode;

#[derive(Parser)]
#[command(name = "noct", version, about = "Observability analysis for constrained control-affine systems")]
struct Cli {
    /// Number of random sample points for generic-rank evaluation.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Highest Lie-derivative order tried.
    #[arg(long, global = true)]
    max_order: Option<usize>,
    /// Seed for sample points and simulation runs (overridden by NOCT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print errors on stderr as JSON objects.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Run batches and rank evaluation on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert, build the codistribution and classify every state.
    Analyze {
        model: PathBuf,
        /// Constraint preset name or JSON file with extra constraints.
        #[arg(long)]
        constraints: Option<String>,
        /// Report path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the model in standard form, all constraints eliminated.
    Convert {
        model: PathBuf,
        #[arg(long)]
        constraints: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of filter simulations of a scenario.
    Simulate {
        scenario: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value = "noct-sim")]
        out_dir: PathBuf,
    },
    /// Check that vectors annihilate the codistribution of a model.
    CheckNull {
        model: PathBuf,
        vectors: PathBuf,
        #[arg(long)]
        constraints: Option<String>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let defaults = Settings::default();
    let env = std::env::var(SEED_ENV).ok();
    let settings = Settings {
        points: cli.points.unwrap_or(defaults.points),
        max_order: cli.max_order.unwrap_or(defaults.max_order),
        seed: effective_seed(cli.seed.unwrap_or(defaults.seed), env.as_deref())?,
        mode: if cli.sequential { ExecMode::Sequential } else { defaults.mode },
    };
    match cli.command {
        Command::Analyze { model, constraints, out } => {
            let report = analyze(&model, constraints.as_deref(), &settings)?;
            emit(out.as_deref(), &(report.to_json() + "\n"))?;
            let line = summary_line(&report);
            if out.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            Ok(if report.truncated_at_max_order { EXIT_TRUNCATED } else { EXIT_OK })
        }
        Command::Convert { model, constraints, out } => {
            let sys = convert(&model, constraints.as_deref())?;
            emit(out.as_deref(), &(sys.to_json() + "\n"))?;
            Ok(EXIT_OK)
        }
        Command::Simulate { scenario, runs, out_dir } => {
            let outcome = simulate(&scenario, runs, settings.seed, &out_dir, settings.mode)?;
            for r in &outcome.runs {
                let labels: Vec<String> = r.verdicts.iter().map(|v| format!("{}={:?}", v.variable, v.label)).collect();
                println!("seed {} t_d {:+.4}: {}", r.seed, r.true_time_offset, labels.join(" "));
                if let Some(f) = &r.failure {
                    eprintln!("seed {}: {f}", r.seed);
                }
            }
            println!("summary: {}", outcome.summary_path.display());
            if let Some((seed, e)) = outcome.errors.first() {
                return Err(CliError::Usage(format!("seed {seed}: {e}")));
            }
            Ok(if outcome.diverged() { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::CheckNull {
            model,
            vectors,
            constraints,
        } => {
            let verdicts = check_null(&model, &vectors, constraints.as_deref(), &settings)?;
            for (k, ok) in verdicts.iter().enumerate() {
                println!("vector {k}: {}", if *ok { "in kernel" } else { "NOT in kernel" });
            }
            Ok(if verdicts.iter().all(|&b| b) { EXIT_OK } else { EXIT_NOT_NULL })
        }
    }
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json_errors {
                eprintln!("{}", CliError::Usage(e.to_string().trim().to_string()).to_json());
            } else {
                let _ = e.print();
            }
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            if json_errors {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
