use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use admit::cli::{self, CommandOutput, Overrides, EXIT_ERROR};
use admit::config::{OutputFormat, REFERENCE_ROLLOUTS, REFERENCE_SEED};
use admit::engine::{threads_from_env, with_threads};
use admit::error::Result;

#[derive(Parser)]
#[command(name = "admit", version, about = "Monte Carlo policy admissibility evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON). Defaults to the built-in reference preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rollouts per policy.
    #[arg(long)]
    rollouts: Option<u64>,
    /// Tail level for CVaR.
    #[arg(long)]
    alpha: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            rollouts: self.rollouts,
            alpha: self.alpha,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                Format::Json => OutputFormat::Json,
                Format::Csv => OutputFormat::Csv,
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate metrics with confidence intervals for every policy.
    Evaluate(Common),
    /// Paired differences in expected utility on shared worlds.
    Compare(Common),
    /// Admissibility and decision; exit code 0 act, 2 escalate, 3 abort.
    Gate(Common),
    /// Compile a decision certificate, or check one with --verify.
    Compile {
        #[command(flatten)]
        common: Common,
        /// Certificate to verify against the recomputed decision.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
    /// Admissible sets and verdicts across a threshold grid (CSV).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Governance metric to vary: p_viol, cvar, e_u or var_u.
        #[arg(long)]
        metric: Option<String>,
        /// Comma-separated threshold values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Option<Vec<f64>>,
    },
    /// Reference comparison table: estimate, exact value, published value.
    Reproduce {
        #[arg(long, default_value_t = REFERENCE_SEED)]
        seed: u64,
        #[arg(long, default_value_t = REFERENCE_ROLLOUTS)]
        rollouts: u64,
    },
}

fn run(command: Command) -> Result<(CommandOutput, Option<PathBuf>)> {
    let load = |c: &Common| cli::resolve_config(c.config.as_deref(), &c.overrides());
    Ok(match command {
        Command::Evaluate(c) => {
            let cfg = load(&c)?;
            (cli::cmd_evaluate(&cfg)?, cfg.output.path)
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            (cli::cmd_compare(&cfg)?, cfg.output.path)
        }
        Command::Gate(c) => {
            let cfg = load(&c)?;
            (cli::cmd_gate(&cfg)?, cfg.output.path)
        }
        Command::Compile { common, verify } => {
            let cfg = load(&common)?;
            match verify {
                Some(path) => (cli::cmd_verify(&cfg, &path)?, None),
                None => {
                    // compile writes and re-reads the file itself
                    let mut out = cli::cmd_compile(&cfg)?;
                    if cfg.output.path.is_some() {
                        out.body.clear();
                    }
                    (out, None)
                }
            }
        }
        Command::Sweep {
            common,
            metric,
            values,
        } => {
            let cfg = load(&common)?;
            (
                cli::cmd_sweep(&cfg, metric.as_deref(), values.as_deref())?,
                cfg.output.path,
            )
        }
        Command::Reproduce { seed, rollouts } => (cli::cmd_reproduce(seed, rollouts)?, None),
    })
}

/// Status lines go to stdout unless the artifact itself does.
fn emit(out: &CommandOutput, path: Option<&PathBuf>) -> std::io::Result<()> {
    let body_on_stdout = path.is_none() && !out.body.is_empty();
    match path {
        Some(p) => std::fs::write(p, &out.body)?,
        None => std::io::stdout().write_all(&out.body)?,
    }
    for m in &out.messages {
        if body_on_stdout {
            eprintln!("{m}");
        } else {
            println!("{m}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = with_threads(threads_from_env(), || run(args.command));
    let code = match result {
        Ok((out, path)) => match emit(&out, path.as_ref()) {
            Ok(()) => out.exit_code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
