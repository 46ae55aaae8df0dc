use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use germgrain::cli::{list_reference_models, reference, run, validate, ExitStatus, RunConfig, Study};
use germgrain::Error;

#[derive(Parser)]
#[command(name = "germgrain", version, about = "Mean density and specific area studies for germ-grain models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write `<study>.csv` and `summary.json`.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, env = "GERMGRAIN_OUT")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        study: Option<Study>,
    },
    /// Check a config and print one line per problem.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List the reference models.
    List {
        /// Print the full catalog as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the config of a reference model.
    ShowConfig { name: String },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a reference model to use as the config.
    #[arg(long)]
    reference: Option<String>,
}

fn load(source: &Source) -> Result<RunConfig, Error> {
    if let Some(path) = &source.config {
        let text = std::fs::read_to_string(path)?;
        return RunConfig::from_json(&text);
    }
    let name = source.reference.as_deref().unwrap_or_default();
    reference(name)
        .map(|m| m.config)
        .ok_or_else(|| Error::Config { pointer: String::new(), message: format!("no reference model named {name:?}") })
}

fn status_of(e: &Error) -> ExitStatus {
    match e {
        Error::Config { .. } | Error::Json(_) => ExitStatus::ConfigError,
        _ => ExitStatus::RuntimeError,
    }
}

fn fail(e: Error) -> ExitCode {
    match &e {
        Error::Config { pointer, message } if !pointer.is_empty() => eprintln!("config error at {pointer}: {message}"),
        _ => eprintln!("error: {e}"),
    }
    ExitCode::from(status_of(&e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { source, seed, workers, out, study } => {
            let mut config = match load(&source) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(s) = study {
                config.study = s;
            }
            let diagnostics = validate(&config);
            if !diagnostics.is_empty() {
                for d in &diagnostics {
                    eprintln!("{d}");
                }
                return ExitCode::from(ExitStatus::ConfigError as u8);
            }
            let out = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("germgrain-out"));
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build() {
                Ok(p) => p,
                Err(e) => return fail(Error::InvalidArgument(e.to_string())),
            };
            match pool.install(|| run(&config, &out)) {
                Ok(outcome) => {
                    for a in &outcome.summary.assertions {
                        println!(
                            "{} {}[{}] estimate={} oracle={} stderr={} tolerance={}",
                            if a.pass { "PASS" } else { "FAIL" },
                            a.name,
                            a.index,
                            a.estimate,
                            a.oracle,
                            a.stderr,
                            a.tolerance
                        );
                    }
                    println!("wrote {} and {}", outcome.csv_path.display(), outcome.summary_path.display());
                    if outcome.summary.pass {
                        ExitCode::from(ExitStatus::Pass as u8)
                    } else {
                        ExitCode::from(ExitStatus::AssertionFailed as u8)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { source } => match load(&source) {
            Ok(config) => {
                let diagnostics = validate(&config);
                for d in &diagnostics {
                    println!("{d}");
                }
                if diagnostics.is_empty() {
                    println!("ok");
                    ExitCode::from(ExitStatus::Pass as u8)
                } else {
                    ExitCode::from(ExitStatus::ConfigError as u8)
                }
            }
            Err(e) => fail(e),
        },
        Command::List { json } => {
            let models = list_reference_models();
            if json {
                match serde_json::to_string_pretty(&models) {
                    Ok(text) => println!("{text}"),
                    Err(e) => return fail(e.into()),
                }
            } else {
                for m in &models {
                    println!("{:<18} {:<16} {} [{}]", m.name, m.config.study, m.description, m.exercises.join("; "));
                }
            }
            ExitCode::SUCCESS
        }
        Command::ShowConfig { name } => match reference(&name) {
            Some(m) => match m.config.to_json() {
                Ok(text) => {
                    println!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            },
            None => {
                fail(Error::Config { pointer: String::new(), message: format!("no reference model named {name:?}") })
            }
        },
    }
}
