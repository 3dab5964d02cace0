use std::io::IsTerminal;

use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Run the sodfeeder HTTP service.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt().with_env_filter(EnvFilter::new(&args.log_level)).with_ansi(std::io::stderr().is_terminal()).init();
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    sodfeeder_server::serve(listener).await
}
