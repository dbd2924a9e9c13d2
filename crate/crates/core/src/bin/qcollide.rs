use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qcollide::config::ExperimentConfig;
use qcollide::runner::{exit_code, run, Command, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Smatrix,
    Collide,
    Response,
    Fdr,
    Sweep,
    Qme,
    Verify,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Smatrix => Command::Smatrix,
            Sub::Collide => Command::Collide,
            Sub::Response => Command::Response,
            Sub::Fdr => Command::Fdr,
            Sub::Sweep => Command::Sweep,
            Sub::Qme => Command::Qme,
            Sub::Verify => Command::Verify,
        }
    }
}

/// Collision maps and response functions for a system struck by a particle.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compare against the full-space oracle (collide only).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    grid_nodes: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        out_dir: cli.out,
        seed: cli.seed,
        oracle: cli.oracle,
        grid_nodes: cli.grid_nodes,
    };
    let result =
        ExperimentConfig::load(&cli.config).and_then(|cfg| run(cli.command.into(), &cfg, &opts));
    match &result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for c in &report.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {} = {:e} (tolerance {:e})",
                    c.name, c.value, c.tolerance
                );
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
