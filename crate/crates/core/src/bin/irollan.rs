use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irollan::backend::BackendMode;
use irollan::runtime::{run_to_dir, server, RunManifest, RuntimeError, Simulation, SimulationConfig, MANIFEST_FILE};

#[derive(Parser)]
#[command(name = "irollan", version, about = "Multi-agent social simulation over IrollanValley")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run autonomously and export the logs.
    Run(Common),
    /// Serve the JSON control endpoints.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
    /// Rerun from a run manifest (a file or a run directory).
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    world: Option<PathBuf>,
    /// Also write transcript.txt.
    #[arg(long)]
    transcript: bool,
}

impl Common {
    fn config(&self) -> Result<SimulationConfig, RuntimeError> {
        let mut cfg = match &self.config {
            Some(p) => SimulationConfig::load(p)?,
            None => SimulationConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(b) = self.backend {
            cfg.backend.mode = match b {
                BackendArg::Mock => BackendMode::Mock,
                BackendArg::Http => BackendMode::Http,
            };
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        if let Some(w) = &self.world {
            cfg.world = Some(w.clone());
        }
        cfg.transcript |= self.transcript;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("run"));
            let mut sim = Simulation::new(cfg)?;
            run_to_dir(&mut sim, &out)?;
            eprintln!("{} steps written to {}", sim.completed_steps(), out.display());
        }
        Command::Serve { common, listen } => {
            let sim = Simulation::new(common.config()?)?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {listen}");
            rt.block_on(server::serve(sim, listen))?;
        }
        Command::Replay { manifest, out } => {
            let path = if manifest.is_dir() {
                manifest.join(MANIFEST_FILE)
            } else {
                manifest
            };
            let mut sim = RunManifest::load(&path)?.simulation()?;
            run_to_dir(&mut sim, &out)?;
            eprintln!("{} steps replayed into {}", sim.completed_steps(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
