use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use varexp_core::commands::{cmd_norm, cmd_poincare, cmd_solve, cmd_verify, VerifyOptions};
use varexp_core::config::RunConfig;
use varexp_core::Error;

/// Exit status when `verify` finds violated inequalities.
const VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "varexp", version, about = "Variable-exponent norms and the degenerate p(x)-Laplacian Neumann problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modular and norms of the configured datum.
    Norm(Common),
    /// Solve the Neumann problem and check the regularity chain.
    Solve(Common),
    /// Estimate the Poincaré constant.
    Poincare(Common),
    /// Run the full inequality battery.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the report and CSV dumps; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weak-residual tolerance for the solver.
    #[arg(long)]
    tol: Option<f64>,
}

fn error_json(e: &Error) -> String {
    let mut v = json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        }
    });
    if let Error::NotConverged {
        residual,
        iterations,
        ..
    } = e
    {
        v["error"]["residual"] = json!(residual);
        v["error"]["iterations"] = json!(iterations);
    }
    serde_json::to_string_pretty(&v).expect("error serialises")
}

fn run(cli: Cli) -> Result<(String, bool), Error> {
    let (Command::Norm(c) | Command::Solve(c) | Command::Poincare(c) | Command::Verify(c)) =
        &cli.command;
    if let Some(t) = c.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("--tol {t} must be positive and finite")));
        }
    }
    let cfg = RunConfig::from_path(&c.config)?;
    let out = c.out.clone().or(cfg.output_dir.clone().map(PathBuf::from));
    let out = out.as_deref();
    let (report, ok) = match &cli.command {
        Command::Norm(_) => (cmd_norm(&cfg)?.to_json(), true),
        Command::Solve(_) => (cmd_solve(&cfg, c.seed, c.tol, out)?.to_json(), true),
        Command::Poincare(_) => (cmd_poincare(&cfg, c.seed, out)?.to_json(), true),
        Command::Verify(_) => {
            let r = cmd_verify(&cfg, c.seed, &VerifyOptions::from_config(&cfg, c.tol))?;
            (r.to_json(), r.all_passed)
        }
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), &report)?;
    }
    Ok((report, ok))
}

/// A closed stdout is not an error worth reporting.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((report, ok)) => {
            emit(&report);
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(VERIFY_FAILED)
            }
        }
        Err(e) => {
            emit(&format!("{}\n", error_json(&e)));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
