use std::process::ExitCode;

use clap::Parser;

use prpca_cli::cli::{Cli, Command};
use prpca_cli::{cmd_corrupt, cmd_decompose, cmd_evaluate, cmd_register, CliResult, RunManifest};

fn summarize(m: &RunManifest) {
    if let Some([a, b, p]) = m.frames {
        eprintln!("frames: {p} of {a}x{b}");
    }
    if let Some([m_, n, _]) = m.canvas {
        eprintln!("canvas: {m_}x{n}");
    }
    if let Some(k) = m.iterations {
        eprintln!("iterations: {k}");
    }
    for t in &m.timings {
        eprintln!("{:>10}: {:.2} s", t.stage, t.seconds);
    }
    for note in &m.notes {
        eprintln!("note: {note}");
    }
}

fn run(command: &Command) -> CliResult<()> {
    let cfg = command.config()?;
    match command {
        Command::Register { .. } => summarize(&cmd_register(&cfg)?),
        Command::Corrupt { .. } => summarize(&cmd_corrupt(&cfg)?),
        Command::Decompose { .. } => summarize(&cmd_decompose(&cfg)?),
        Command::Evaluate { .. } => {
            let (report, _) = cmd_evaluate(&cfg)?;
            print!("{}", report.to_key_value());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prpca {}: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
