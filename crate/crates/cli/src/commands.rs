use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use fastdata::engine::{run_query, run_streaming, RunControl};
use fastdata::experiments::{run_experiment, ExperimentOptions, EXPERIMENTS};
use fastdata::query::Mode;
use fastdata::{Error, QuerySpec};
use log::info;

use crate::api::router;
use crate::registry::Registry;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "fastdata", version, about = "Streaming outlier classification and explanation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "oneShot", alias = "one-shot")]
    OneShot,
    #[value(name = "streaming")]
    Streaming,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::OneShot => Mode::OneShot,
            ModeArg::Streaming => Mode::Streaming,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a query from a JSON config and write its report.
    Run {
        #[arg(long, env = "FASTDATA_CONFIG")]
        config: PathBuf,
        /// Overrides randomSeed.
        #[arg(long, env = "FASTDATA_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "FASTDATA_MODE")]
        mode: Option<ModeArg>,
        /// Report destination; standard output when absent.
        #[arg(long, env = "FASTDATA_OUT")]
        out: Option<PathBuf>,
        /// Base directory for relative source paths; defaults to the config's directory.
        #[arg(long, env = "FASTDATA_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Newline-delimited JSON file receiving scheduled streaming emissions.
        #[arg(long, env = "FASTDATA_EMISSIONS")]
        emissions: Option<PathBuf>,
    },
    /// Run one of the bundled experiments and write its CSV.
    Experiment {
        name: String,
        #[arg(long, env = "FASTDATA_SEED", default_value_t = 0)]
        seed: u64,
        /// Multiplies the experiment's point counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// CSV destination; standard output when absent.
        #[arg(long, env = "FASTDATA_OUT")]
        out: Option<PathBuf>,
    },
    /// Serve the REST API.
    Serve {
        #[arg(long, env = "FASTDATA_SERVE_ADDR", default_value = "127.0.0.1:8080")]
        serve_addr: SocketAddr,
        #[arg(long, env = "FASTDATA_DATA_DIR", default_value = ".")]
        data_dir: PathBuf,
        /// Streaming emissions evicted from memory are appended here.
        #[arg(long, env = "FASTDATA_REPORT_LOG")]
        report_log: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn other(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_OTHER,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Cancelled => EXIT_OTHER,
            e if e.is_config() => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Reads the config and applies command-line overrides.
pub fn load_spec(path: &Path, seed: Option<u64>, mode: Option<ModeArg>) -> Result<QuerySpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut spec = QuerySpec::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        spec.random_seed = s;
    }
    if let Some(m) = mode {
        spec.mode = m.into();
    }
    Ok(spec.validate()?)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::other(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| CliError::other(e.to_string()))
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            mode,
            out,
            data_dir,
            emissions,
        } => {
            let spec = load_spec(&config, seed, mode)?;
            let base = data_dir.unwrap_or_else(|| config.parent().map(Path::to_path_buf).unwrap_or_default());
            let ctl = RunControl::default();
            let report = match (spec.mode, emissions) {
                (Mode::Streaming, Some(log)) => {
                    let mut file = fs::File::create(&log)
                        .map_err(|e| CliError::other(format!("cannot create {}: {e}", log.display())))?;
                    let mut failed = None;
                    let report = run_streaming(&spec, Some(&base), &ctl, |r| {
                        let line = serde_json::to_string(&r).expect("report serializes");
                        if let Err(e) = writeln!(file, "{line}") {
                            failed.get_or_insert(e);
                        }
                    })?;
                    if let Some(e) = failed {
                        return Err(CliError::other(format!("cannot write {}: {e}", log.display())));
                    }
                    report
                }
                _ => run_query(&spec, Some(&base), &ctl)?,
            };
            info!(
                "{} points, {} outliers, {} explanations",
                report.points_processed,
                report.outlier_count,
                report.explanations.len()
            );
            write_output(out.as_deref(), &report.to_json())
        }
        Command::Experiment { name, seed, scale, out } => {
            if !EXPERIMENTS.contains(&name.as_str()) {
                return Err(CliError::config(format!(
                    "unknown experiment {name:?}; expected one of {}",
                    EXPERIMENTS.join(", ")
                )));
            }
            if !(scale.is_finite() && scale > 0.0) {
                return Err(CliError::config(format!("--scale must be > 0, got {scale}")));
            }
            let output = run_experiment(&name, &ExperimentOptions { seed, scale })?;
            for line in &output.summary {
                eprintln!("{line}");
            }
            write_output(out.as_deref(), output.csv.trim_end())
        }
        Command::Serve {
            serve_addr,
            data_dir,
            report_log,
        } => {
            if !data_dir.is_dir() {
                return Err(CliError::config(format!("data directory {} does not exist", data_dir.display())));
            }
            let registry = Arc::new(Registry::new(data_dir, report_log));
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::other(e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(serve_addr)
                    .await
                    .map_err(|e| CliError::other(format!("cannot bind {serve_addr}: {e}")))?;
                info!("listening on {}", listener.local_addr().map_err(|e| CliError::other(e.to_string()))?);
                axum::serve(listener, router(registry))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| CliError::other(e.to_string()))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).code, EXIT_CONFIG);
        assert_eq!(CliError::from(Error::InvalidSpec(vec![])).code, EXIT_CONFIG);
        assert_eq!(CliError::from(Error::Data("x".into())).code, EXIT_DATA);
        assert_eq!(CliError::from(Error::Empty("x")).code, EXIT_DATA);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from(["fastdata", "run", "--config", "a.json", "--seed", "9", "--mode", "streaming"]).unwrap();
        match cli.command {
            Command::Run { seed, mode, .. } => {
                assert_eq!(seed, Some(9));
                assert_eq!(mode, Some(ModeArg::Streaming));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["fastdata", "run"]).is_err());
    }
}
