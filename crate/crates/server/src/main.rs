use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use haptic_transport::{FaultPlan, TransportConfig, DEFAULT_UDP_PORT};
use hdesigner_server::{library::DEFAULT_LIBRARY_PATH, Server, ServerConfig, DEFAULT_HTTP_PORT};
use tracing_subscriber::EnvFilter;

/// Haptic pattern designer server.
#[derive(Debug, Parser)]
#[command(name = "hdesigner", version)]
struct Args {
    /// Address the HTTP API binds to.
    #[arg(long, env = "HDESIGNER_HTTP_HOST", default_value = "127.0.0.1")]
    http_host: IpAddr,
    /// 0 picks a free port.
    #[arg(long, env = "HDESIGNER_HTTP_PORT", default_value_t = DEFAULT_HTTP_PORT)]
    http_port: u16,
    /// Address the band socket binds to.
    #[arg(long, env = "HDESIGNER_UDP_HOST", default_value = "0.0.0.0")]
    udp_host: IpAddr,
    #[arg(long, env = "HDESIGNER_UDP_PORT", default_value_t = DEFAULT_UDP_PORT)]
    udp_port: u16,
    #[arg(long, env = "HDESIGNER_LIBRARY_PATH", default_value = DEFAULT_LIBRARY_PATH)]
    library_path: PathBuf,
    /// Directory with the built web UI.
    #[arg(long, env = "HDESIGNER_UI_DIR")]
    ui_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    ack_timeout_ms: u64,
    #[arg(long, default_value_t = 2000)]
    hello_interval_ms: u64,
    /// Drop the first N transmissions of every message (testing aid).
    #[arg(long, default_value_t = 0, hide = true)]
    fault_drop_n: u32,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();

    let ui_dir = args.ui_dir.or_else(|| {
        let default = PathBuf::from("ui/dist");
        default.join("index.html").is_file().then_some(default)
    });
    let config = ServerConfig {
        http_addr: SocketAddr::new(args.http_host, args.http_port),
        udp_addr: SocketAddr::new(args.udp_host, args.udp_port),
        library_path: args.library_path,
        ui_dir,
        transport: TransportConfig {
            ack_timeout: Duration::from_millis(args.ack_timeout_ms),
            hello_interval: Duration::from_millis(args.hello_interval_ms),
            faults: FaultPlan::drop_first(args.fault_drop_n),
            ..TransportConfig::default()
        },
    };
    let server = Server::start(config).await?;
    // Readers may go away; that must not take the server down.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "hdesigner http listening on {}", server.http_addr());
    let _ = writeln!(out, "hdesigner udp listening on {}", server.udp_addr());
    let _ = out.flush();
    drop(out);

    server
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}
