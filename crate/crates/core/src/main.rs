use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reargap::commands::{self, CommandError, SimulateOptions};
use reargap::service::{self, ServiceConfig};
use reargap::store::{read_results_csv, write_atomic, Catalog};

#[derive(Parser)]
#[command(name = "reargap", version, about = "Rearward gap estimation for truck lane changes")]
struct Cli {
    /// Camera intrinsics JSON.
    #[arg(long, global = true)]
    camera: Option<PathBuf>,
    /// Warning thresholds JSON.
    #[arg(long, global = true)]
    thresholds: Option<PathBuf>,
    /// Ramp intersection points, one "lat,lon" per line.
    #[arg(long = "ramp-db", global = true)]
    ramp_db: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the results CSV.
    Estimate {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Also write the catalog JSON here.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Print screening results as JSON lines.
    Screen {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
    },
    /// Write synthetic event bundles with ground truth.
    Simulate {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long = "trailer-length", default_value_t = 0.0)]
        trailer_length: f64,
        /// Render PNG frames.
        #[arg(long)]
        images: bool,
    },
    /// Camera versus radar distance errors.
    CompareRadar {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
    },
    /// Summaries and regressions over a results CSV.
    Stats {
        results: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Serve the annotation API over a catalog root.
    Serve {
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CommandError> {
    match out {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CommandError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CommandError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Estimate { bundles, catalog } => {
            let cam = commands::resolve_camera(cli.camera.as_deref(), &bundles)?;
            let th = commands::load_thresholds(cli.thresholds.as_deref())?;
            let db = commands::load_ramp_db(cli.ramp_db.as_deref())?;
            let loaded = commands::load_bundles(&bundles)?;
            let res = commands::estimate(&loaded, &cam, &th, &db)?;
            if let Some(p) = catalog {
                res.catalog.save(p)?;
            }
            emit(out, &res.csv)
        }
        Command::Screen { bundles } => {
            let db = commands::load_ramp_db(cli.ramp_db.as_deref())?;
            let loaded = commands::load_bundles(&bundles)?;
            let mut text = String::new();
            for r in commands::screen(&loaded, &db) {
                text += &serde_json::to_string(&r).map_err(|e| CommandError::Input(e.to_string()))?;
                text.push('\n');
            }
            emit(out, &text)
        }
        Command::Simulate {
            count,
            noise,
            trailer_length,
            images,
        } => {
            let dir = out.ok_or_else(|| CommandError::Input("simulate needs --out <dir>".into()))?;
            let opts = SimulateOptions {
                count,
                seed: cli.seed,
                pixel_noise_sigma: noise,
                trailer_length,
                render_images: images,
            };
            let dirs = commands::simulate(dir, &opts)?;
            eprintln!("wrote {} bundles to {}", dirs.len(), dir.display());
            Ok(())
        }
        Command::CompareRadar { bundles } => {
            let cam = commands::resolve_camera(cli.camera.as_deref(), &bundles)?;
            let loaded = commands::load_bundles(&bundles)?;
            emit(out, &to_json(&commands::compare_radar(&loaded, &cam)?)?)
        }
        Command::Stats { results, catalog } => {
            let text = std::fs::read_to_string(&results).map_err(|e| CommandError::Io {
                path: results.clone(),
                message: e.to_string(),
            })?;
            let rows = read_results_csv(&text)?;
            let catalog = catalog.map(Catalog::load).transpose()?;
            emit(out, &to_json(&commands::stats(&rows, catalog.as_ref()))?)
        }
        Command::Serve { root, addr } => {
            let camera = commands::resolve_camera(cli.camera.as_deref(), std::slice::from_ref(&root))?;
            let thresholds = commands::load_thresholds(cli.thresholds.as_deref())?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CommandError::Input(e.to_string()))?;
            rt.block_on(service::serve(ServiceConfig {
                root,
                addr,
                camera,
                thresholds,
            }))
            .map_err(|e| CommandError::Input(e.to_string()))
        }
    }
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
