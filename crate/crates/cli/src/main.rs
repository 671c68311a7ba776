//! drpolicy: batch runs for doubly robust policy learning.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.
//! Failures print a machine-readable JSON object on stderr. The env var
//! DRPOLICY_THREADS caps internal parallelism; results never depend on it.

mod config;
mod run;

use clap::Parser;

use drpolicy_core::{Error as CoreError, ErrorCategory};

use config::{Cli, Cmd, FileConfig, PipelineCfg, SimulateCfg, SweepCfg};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => "config",
                ErrorCategory::Data => "data",
                ErrorCategory::Numeric => "numeric",
            },
        }
    }

    fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "data" => 3,
            _ => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_ref())?;
    match cli.command {
        Cmd::Simulate(a) => run::run_simulate(SimulateCfg::resolve(a, &file)?),
        Cmd::Learn(a) => run::run_learn(PipelineCfg::resolve(a, &file)?),
        Cmd::Evaluate(a) => run::run_evaluate(PipelineCfg::resolve(a, &file)?),
        Cmd::Crossval(a) => run::run_crossval(PipelineCfg::resolve(a, &file)?),
        Cmd::Sweep(a) => run::run_sweep(SweepCfg::resolve(a, &file)?),
    }
}

fn main() {
    if let Ok(raw) = std::env::var("DRPOLICY_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => {
            let err = serde_json::json!({
                "error": {"category": "config", "message": e.to_string()}
            });
            eprintln!("{err}");
            std::process::exit(2);
        }
    };

    if let Err(e) = dispatch(cli) {
        let err = serde_json::json!({
            "error": {"category": e.category(), "message": e.message()}
        });
        eprintln!("{err}");
        std::process::exit(e.exit_code());
    }
}
