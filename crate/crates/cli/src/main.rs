//! `sodfeeder`: runs every command through the HTTP service, either one
//! given with `--server` or an embedded instance on a loopback port.

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tracing_subscriber::EnvFilter;

use sodfeeder_api as api;
use sodfeeder_client::{Client, ClientError};
use sodfeeder_core::dispatch::PolicyKind;
use sodfeeder_core::ppo::Checkpoint;
use sodfeeder_core::scenario::Scenario;

#[derive(Parser)]
#[command(version, about = "Semi-on-demand feeder corridor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    /// Use a running service instead of an embedded one.
    #[arg(long, global = true)]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode.
    Simulate {
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the learned zonal policy.
    Train {
        /// Overrides the network and sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the update budget.
        #[arg(long)]
        updates: Option<usize>,
        #[arg(long)]
        wall_clock_secs: Option<f64>,
    },
    /// Evaluate policies on a common seed set.
    Compare {
        /// Comma-separated policies, or `all`.
        #[arg(long, default_value = "all")]
        policy: String,
        /// File with one seed per line; defaults to the evaluation seeds.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the corridor network as CSV.
    DumpNetwork,
    /// Write one demand instance as CSV.
    DumpDemand {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug)]
struct Failure {
    category: String,
    message: String,
}

impl Failure {
    fn new(category: &str, message: impl Into<String>) -> Self {
        Self { category: category.into(), message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.category.as_str() {
            "usage" => 2,
            "config" => 3,
            "state" => 4,
            "numeric" => 5,
            "checkpoint" => 6,
            "io" => 7,
            _ => 8,
        }
    }
}

impl From<sodfeeder_core::Error> for Failure {
    fn from(e: sodfeeder_core::Error) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let filter = match EnvFilter::try_new(&cli.log_level) {
        Ok(f) => f,
        Err(e) => return report(Failure::new("usage", format!("bad --log-level: {e}"))),
    };
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_ansi(std::io::stderr().is_terminal()).init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return report(e.into()),
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("error [{}]: {}", f.category, f.message);
    ExitCode::from(f.exit_code())
}

async fn connect(server: Option<String>) -> Result<Client> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(sodfeeder_server::serve(listener));
    tracing::debug!("embedded service on {addr}");
    Ok(Client::new(format!("http://{addr}")))
}

async fn run(cli: Cli) -> Result<()> {
    let scenario = match &cli.config {
        Some(p) => Some(Scenario::load(p).map_err(|e| Failure::new("config", format!("{}: {e}", p.display())))?),
        None => None,
    };
    let client = connect(cli.server).await?;
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { policy, seed, checkpoint } => {
            let policy = parse_policy(&policy)?;
            let checkpoint = load_checkpoint(checkpoint.as_deref())?;
            let r = client.simulate(&api::SimulateRequest { scenario, policy, seed, checkpoint }).await?;
            write_json(out, "metrics.json", &r.result)?;
            write(out, "runs.csv", &r.runs_csv)?;
            write(out, "dispatch_log.csv", &r.dispatch_log_csv)?;
            let m = &r.result.metrics;
            println!("{policy} seed {seed}: served {} of {}, rejected {}", m.served, m.generated, m.rejected);
        }
        Command::Train { seed, updates, wall_clock_secs } => {
            let r = client.train(&api::TrainRequest { scenario, updates, wall_clock_secs, seed }).await?;
            write(out, "checkpoint.json", &r.checkpoint.to_json()?)?;
            write(out, "train_stats.csv", &r.stats_csv)?;
            println!("{} updates{}", r.stats.len(), if r.stopped_early { " (wall-clock limit)" } else { "" });
            if let Some(why) = r.aborted {
                return Err(Failure::new("numeric", format!("training aborted, last good checkpoint written: {why}")));
            }
        }
        Command::Compare { policy, seeds, checkpoint } => {
            let policies = parse_policies(&policy)?;
            let seeds = seeds.as_deref().map(read_seeds).transpose()?;
            let checkpoint = load_checkpoint(checkpoint.as_deref())?;
            let r = client.compare(&api::CompareRequest { scenario, policies, seeds, checkpoint }).await?;
            write(out, "aggregate.csv", &r.aggregate_csv)?;
            write(out, "runs.csv", &r.runs_csv)?;
            write(out, "dispatch_log.csv", &r.dispatch_log_csv)?;
            write(out, "action_density.csv", &r.action_density_csv)?;
            write_json(out, "summary.json", &r.comparison)?;
            for (p, runs) in &r.comparison.runs {
                let served = runs.iter().map(|m| m.served as f64).sum::<f64>() / runs.len().max(1) as f64;
                println!("{p}: {} runs, mean served {served:.2}", runs.len());
            }
            if let Some(first) = r.comparison.failures.first() {
                for f in &r.comparison.failures {
                    eprintln!("failed cell {} seed {} [{}]: {}", f.policy, f.seed, f.category, f.message);
                }
                return Err(Failure::new(&first.category, format!("{} cells failed", r.comparison.failures.len())));
            }
        }
        Command::DumpNetwork => {
            let r = client.network(&api::NetworkRequest { scenario }).await?;
            write(out, "nodes.csv", &r.nodes_csv)?;
            write(out, "edges.csv", &r.edges_csv)?;
            println!("{} nodes, {} edges", r.nodes, r.edges);
        }
        Command::DumpDemand { seed } => {
            let r = client.demand(&api::DemandRequest { scenario, seed }).await?;
            write(out, "requests.csv", &r.requests_csv)?;
            println!("{} requests", r.count);
        }
    }
    Ok(())
}

fn parse_policy(s: &str) -> Result<PolicyKind> {
    s.trim().parse().map_err(|e: sodfeeder_core::Error| Failure::new("usage", e.to_string()))
}

fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(PolicyKind::ALL.to_vec());
    }
    s.split(',').map(parse_policy).collect()
}

fn read_seeds(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)?;
    let seeds = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<u64>().map_err(|e| Failure::new("usage", format!("bad seed '{l}' in {}: {e}", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Failure::new("usage", format!("no seeds in {}", path.display())));
    }
    Ok(seeds)
}

fn load_checkpoint(path: Option<&Path>) -> Result<Option<Checkpoint>> {
    Ok(match path {
        Some(p) => Some(Checkpoint::load(p).map_err(|e| Failure::new("checkpoint", format!("{}: {e}", p.display())))?),
        None => None,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Failure::new("io", e.to_string()))?;
    write(dir, name, &s)
}
