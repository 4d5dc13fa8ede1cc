use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "varinv", version, about = "Sampled checks of invariance and convexity conditions for integral functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its report.
    Check {
        config: PathBuf,
        /// Report path; overrides the configured output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite file against its expected verdicts.
    Suite {
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List energies, groups and tests.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check { config, out } => match varinv::check(&config, out.as_deref()) {
            Ok((file, code)) => {
                eprintln!("{}: {} (margin {:e})", file.report.condition, file.report.verdict.as_str(), file.report.margin);
                code
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Suite { suite, out } => match varinv::suite(&suite, &out) {
            Ok(r) => {
                eprintln!(
                    "{} pass, {} fail, {} inconclusive in {:.1} s",
                    r.counts.pass, r.counts.fail, r.counts.inconclusive, r.duration_seconds
                );
                for m in &r.mismatches {
                    eprintln!("mismatch: {m}");
                }
                r.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::List => {
            print!("{}", varinv::list());
            varinv::EXIT_PASS
        }
    };
    ExitCode::from(code as u8)
}
