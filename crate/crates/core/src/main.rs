use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fracflow::cli::{self, presets::checks_table, selftest, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Threshold dynamics for anisotropic fractional mean curvature flow")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides experiment.output).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the bundled self-checks.
    Selftest {
        /// Also write selftest.csv here.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Describe a preset.
    Describe { preset: String },
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FRACFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FRACFLOW_THREADS: expected a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("FRACFLOW_THREADS: {e}"))
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(msg) = threads() {
        eprintln!("error: {msg}");
        return code(EXIT_CONFIG);
    }
    match args.command {
        Command::Run { config, output } => match cli::run(&config, output.as_deref()) {
            Ok(outcome) => {
                println!("{}", serde_json::to_string_pretty(&outcome.preset.results).unwrap_or_default());
                println!("artifacts in {}", outcome.output_dir.display());
                code(outcome.exit_code())
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(cli::exit_code(&e))
            }
        },
        Command::Selftest { output } => {
            let checks = match selftest::run_all(0) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(cli::exit_code(&e));
                }
            };
            for c in &checks {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                println!("{tag} {}: {:.3e} (tolerance {:.3e})", c.name, c.value, c.tolerance);
            }
            if let Some(dir) = output {
                let written = std::fs::create_dir_all(&dir)
                    .map_err(fracflow::Error::from)
                    .and_then(|_| checks_table(&checks).write(&dir.join("selftest.csv")));
                if let Err(e) = written {
                    eprintln!("error: {e}");
                    return code(cli::exit_code(&e));
                }
            }
            code(if checks.iter().all(|c| c.pass) { cli::EXIT_OK } else { cli::EXIT_RUNTIME })
        }
        Command::Describe { preset } => match cli::describe(&preset) {
            Some(text) => {
                println!("{text}");
                code(cli::EXIT_OK)
            }
            None => {
                eprintln!("error: unknown preset `{preset}`; expected one of {}", cli::PRESETS.join(", "));
                code(EXIT_CONFIG)
            }
        },
    }
}
