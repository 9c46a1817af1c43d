use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Parser;
use hband_sim::{SimConfig, Simulator};

/// Simulated haptic band speaking the designer's UDP protocol.
#[derive(Debug, Parser)]
#[command(name = "hband-sim", version)]
struct Args {
    /// Server UDP address, host:port.
    #[arg(long, default_value = "127.0.0.1:9750")]
    server: String,
    /// Device id announced in HELLO.
    #[arg(long, default_value = "band-01")]
    id: String,
    /// Number of motors (1-8).
    #[arg(long, default_value_t = 3)]
    channels: u8,
    /// Write the playback trace as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Local UDP port; 0 picks a free one.
    #[arg(long, default_value_t = 0)]
    listen_port: u16,
    #[arg(long, default_value_t = 2000)]
    hello_interval_ms: u64,
    /// Test only: swallow the first N acknowledgements.
    #[arg(long, default_value_t = 0, hide = true)]
    drop_acks: u32,
}

fn resolve(server: &str) -> anyhow::Result<SocketAddr> {
    server
        .to_socket_addrs()
        .with_context(|| format!("cannot resolve {server}"))?
        .next()
        .with_context(|| format!("{server} resolves to no address"))
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    if !(1..=8).contains(&args.channels) {
        bail!("--channels must be between 1 and 8");
    }
    if !haptic_core::wire::is_valid_device_id(&args.id) {
        bail!("--id must be 1-64 characters of [A-Za-z0-9._-]");
    }
    let mut config = SimConfig::new(resolve(&args.server)?, args.id);
    config.channels = args.channels;
    config.listen = SocketAddr::from(([0, 0, 0, 0], args.listen_port));
    config.hello_interval = Duration::from_millis(args.hello_interval_ms.max(1));
    config.trace_path = args.trace;
    config.record = false;
    config.drop_acks = args.drop_acks;

    let sim = Simulator::spawn(config).context("starting simulator")?;
    println!("hband-sim {} listening on {}", sim.device_id(), sim.local_addr());
    sim.join();
    Ok(())
}
