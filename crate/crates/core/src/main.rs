use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use congrad::cli;
use congrad::config::{Settings, KEYS};
use congrad::Result;

#[derive(Parser)]
#[command(name = "congrad", version, about = "Continual learning on non-stationary streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one stream and write a run directory.
    Run(RunArgs),
    /// Run a grid over one axis, optimizers and seeds.
    Sweep(RunArgs),
    /// Summarize a finished run directory.
    Report {
        /// Run directory written by `run`.
        dir: PathBuf,
    },
    /// List every configuration key with its default.
    Keys,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; without it every key takes its default.
    config: Option<PathBuf>,
    /// Same as `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Same as `--set output.dir=PATH`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Same as `--set optim.optimizer=NAME`.
    #[arg(long)]
    optimizer: Option<String>,
    /// Same as `--set learner.kind=NAME`.
    #[arg(long)]
    learner: Option<String>,
    /// Same as `--set optim.k=N`.
    #[arg(long)]
    k: Option<usize>,
    /// Same as `--set stream.data_dir=PATH`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Override any key: `--set section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => cli::load_settings(path, &[])?,
            None => Settings::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("output.dir", self.output_dir.as_ref().map(|p| p.display().to_string())),
            ("optim.optimizer", self.optimizer.clone()),
            ("learner.kind", self.learner.clone()),
            ("optim.k", self.k.map(|v| v.to_string())),
            (
                "stream.data_dir",
                self.data_dir.as_ref().map(|p| p.display().to_string()),
            ),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set_value(key, &v)?;
            }
        }
        for o in &self.set {
            s.set(o)?;
        }
        Ok(s)
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::Run(a) => a
            .settings()
            .and_then(|s| cli::run(&s))
            .map(|dir| println!("{}", dir.display())),
        Command::Sweep(a) => a
            .settings()
            .and_then(|s| cli::sweep(&s))
            .map(|dir| println!("{}", dir.display())),
        Command::Report { dir } => cli::report(&dir).map(|text| print!("{text}")),
        Command::Keys => {
            for (key, default, doc) in KEYS {
                println!("{key:<28} {default:<20} {doc}");
            }
            Ok(())
        }
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
