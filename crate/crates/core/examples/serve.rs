//! Serve a freshly simulated catalog for an annotation client.
//!
//! `cargo run --example serve [addr]`, then e.g. `curl localhost:8080/events`.

use reargap::commands::{simulate, SimulateOptions};
use reargap::conflict::WarningThresholds;
use reargap::service::{serve, ServiceConfig};
use reargap::synthetic::reference_camera;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().init();
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8080".into())
        .parse()?;
    let root = std::env::temp_dir().join("reargap-serve-example");
    simulate(
        &root,
        &SimulateOptions {
            count: 3,
            render_images: true,
            ..SimulateOptions::default()
        },
    )?;
    println!("catalog at {}; listening on {addr}", root.display());
    serve(ServiceConfig {
        root,
        addr,
        camera: reference_camera(),
        thresholds: WarningThresholds::default(),
    })
    .await?;
    Ok(())
}
