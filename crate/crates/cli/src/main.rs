//! `uhs`: run scenarios, generate synthetic signals, serve the health server.

mod http;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use uhs_core::scenario::{run_scenario, Endpoint, ScenarioError, ScenarioScript};
use uhs_core::server::risk::{accuracy, synthetic_training_set, train_model, TrainConfig};
use uhs_core::server::{HealthServer, ServerConfig, SystemClock};
use uhs_core::synth::{synth_accel, synth_ppg, write_accel_csv, write_ppg_csv, SynthConfig, DEFAULT_FS_HZ};
use uhs_core::ActivityId;

use crate::http::HttpTransport;

#[derive(Parser)]
#[command(name = "uhs", version, about = "Wearable healthcare monitoring pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and print (or write) its report.
    Run(RunArgs),
    /// Write synthetic sensor signals as CSV.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Serve the health server API (and static files) over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a risk model on the synthetic labelled set and write it as JSON.
    Train(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Base URL of a running server, e.g. http://127.0.0.1:8080.
    #[arg(long, conflicts_with = "embedded")]
    server: Option<String>,
    /// Use an in-process server on virtual time (the default).
    #[arg(long)]
    embedded: bool,
    /// Doctor account used to register patients on a remote server.
    #[arg(long, env = "UHS_USER", requires = "server")]
    user: Option<String>,
    #[arg(long, env = "UHS_PASSWORD", requires = "server", hide_env_values = true)]
    password: Option<String>,
    #[arg(long)]
    dump_traces: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SignalArgs {
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_FS_HZ)]
    fs: f64,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Three-axis accelerometer trace for one activity (1 rest, 2 walk, 3 run, 4 fall).
    Accel {
        #[arg(long)]
        state: u8,
        #[command(flatten)]
        common: SignalArgs,
    },
    /// Red/infrared PPG trace for a saturation and heart rate.
    Ppg {
        #[arg(long)]
        spo2: f64,
        #[arg(long)]
        hr: f64,
        #[command(flatten)]
        common: SignalArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 1500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    /// Alert threshold stored with the model.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

/// Failure categories, each with its own exit code.
enum Failure {
    Config(String),
    Unreachable(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Unreachable(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Unreachable(m) | Failure::Io(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let m = e.to_string();
        if e.is_config() {
            Failure::Config(m)
        } else if e.is_unreachable() {
            Failure::Unreachable(m)
        } else if matches!(e, ScenarioError::Io { .. }) {
            Failure::Io(m)
        } else {
            Failure::Other(m)
        }
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(bytes).map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut script = ScenarioScript::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        script.seed = seed;
    }
    let endpoint = match &args.server {
        None => Endpoint::Embedded,
        Some(url) => {
            let (Some(username), Some(password)) = (args.user.clone(), args.password.clone()) else {
                return Err(Failure::Config("--server needs --user and --password (or UHS_USER/UHS_PASSWORD)".into()));
            };
            Endpoint::Remote { transport: Arc::new(HttpTransport::new(url)), username, password }
        }
    };
    let report = run_scenario(&script, &endpoint, args.dump_traces.as_deref())?;
    let json = report.to_json();
    match &args.report {
        Some(path) => {
            write_output(Some(path), json.as_bytes())?;
            for p in &report.patients {
                eprintln!(
                    "{}: {} observations, {} uploads, suppression {:.3}, {} stored",
                    p.patient_id, p.node.observations, p.node.uploads, p.suppression_ratio, p.server_stored
                );
            }
            eprintln!("{} alerts", report.alerts.len());
        }
        None => write_output(None, json.as_bytes())?,
    }
    Ok(())
}

fn cmd_synth(cmd: SynthCommand) -> Result<(), Failure> {
    let mut buf = Vec::new();
    let out = match cmd {
        SynthCommand::Accel { state, common } => {
            let state = ActivityId::from_code(state).map_err(|e| Failure::Config(e.to_string()))?;
            let mut cfg = SynthConfig::accel(state, common.duration, common.seed, common.noise);
            cfg.fs = common.fs;
            let samples = synth_accel(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            write_accel_csv(&mut buf, &samples).expect("writing to memory");
            common.out
        }
        SynthCommand::Ppg { spo2, hr, common } => {
            let mut cfg = SynthConfig::ppg(spo2, hr, common.duration, common.seed, common.noise);
            cfg.fs = common.fs;
            let samples = synth_ppg(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            write_ppg_csv(&mut buf, &samples).expect("writing to memory");
            common.out
        }
    };
    write_output(out.as_deref(), &buf)
}

fn cmd_serve(config: &Path) -> Result<(), Failure> {
    let cfg = ServerConfig::load(config).map_err(|e| Failure::Config(e.to_string()))?;
    let listen = cfg.listen.clone();
    let server = HealthServer::new(cfg, Arc::new(SystemClock)).map_err(|e| match e.status() {
        500 if e.code() == "storage" => Failure::Io(e.to_string()),
        _ => Failure::Config(e.to_string()),
    })?;
    let listener = tiny_http::Server::http(&listen).map_err(|e| Failure::Io(format!("listen on {listen}: {e}")))?;
    eprintln!("listening on http://{}", listener.server_addr());
    http::serve(Arc::new(server), listener);
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let data = synthetic_training_set(args.samples, args.seed);
    let hyper = TrainConfig { lr: args.lr, epochs: args.epochs, l2: args.l2 };
    let mut outcome = train_model(&data, &hyper).map_err(|e| Failure::Config(e.to_string()))?;
    outcome.model.threshold = args.threshold;
    outcome.model.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let json = serde_json::to_string_pretty(&outcome.model).expect("model serializes");
    write_output(Some(&args.out), format!("{json}\n").as_bytes())?;
    eprintln!(
        "final loss {:.5}, training accuracy {:.4}",
        outcome.loss_history.last().copied().unwrap_or(f64::NAN),
        accuracy(&outcome.model, &data)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(cmd) => cmd_synth(cmd),
        Command::Serve { config } => cmd_serve(&config),
        Command::Train(args) => cmd_train(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
