use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use riseer::api;
use riseer::stages::{run_stage, Stage};
use riseer::store::{run_pipeline, RunInputs, RunOutcome, Store};
use riseer_core::ingest::write_records_csv;
use riseer_core::pipeline::PipelineConfig;
use riseer_core::synthgen::{demo_city, generate, ScenarioConfig};

#[derive(Parser)]
#[command(name = "riseer", version, about = "Regional industrial structure analytics")]
struct Cli {
    /// JSON pipeline config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Records as CSV, or JSON lines with a .jsonl extension.
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving the artifact documents.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic registry (CSV) plus a ground-truth sidecar.
    Synth {
        /// Scenario JSON; defaults to the demo city.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Approximate size of the demo city.
        #[arg(long, default_value_t = 100_000)]
        records: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monthly snapshots.
    Ingest(StageArgs),
    /// Snapshots and periods.
    Segment(StageArgs),
    /// Periods, clusters and their indicators.
    Cluster(StageArgs),
    /// Expanding-window forecasts.
    Forecast(StageArgs),
    /// Snapshot projection.
    Project(StageArgs),
    /// Clusters, lineage paths and growth rates.
    Paths(StageArgs),
    /// Full pipeline into an artifact store.
    Run {
        #[command(flatten)]
        stage: StageArgs,
        /// Recompute even if the store is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Serve a store over HTTP.
    Serve {
        #[arg(long, env = "RISEER_STORE")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static web bundle served outside /api.
        #[arg(long)]
        web: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(PipelineConfig::from_json(&bytes)?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn synth(scenario: Option<&Path>, seed: Option<u64>, records: usize, out: &Path) -> Result<()> {
    let mut cfg = match scenario {
        Some(p) => serde_json::from_slice::<ScenarioConfig>(&fs::read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => demo_city(seed.unwrap_or(7), records),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scenario = generate(&cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_records_csv(fs::File::create(out)?, &scenario.records)?;
    let truth = out.with_extension("truth.json");
    fs::write(&truth, serde_json::to_vec_pretty(&scenario.truth)?)?;
    println!("{} records -> {} (truth: {})", scenario.records.len(), out.display(), truth.display());
    Ok(())
}

async fn serve(store: &Path, addr: SocketAddr, web: Option<&Path>) -> Result<()> {
    let store = Store::open(store).with_context(|| format!("opening store {}", store.display()))?;
    log::info!("serving dataset {} on http://{addr}", store.manifest.dataset_id);
    let mut app = api::router(store);
    if let Some(dir) = web {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = || load_config(cli.config.as_deref());
    let stage = |stage: Stage, args: &StageArgs| -> Result<()> {
        for path in run_stage(stage, &args.input, &args.out, &config()?)? {
            println!("{}", path.display());
        }
        Ok(())
    };
    match &cli.command {
        Command::Synth { scenario, seed, records, out } => synth(scenario.as_deref(), *seed, *records, out),
        Command::Ingest(a) => stage(Stage::Ingest, a),
        Command::Segment(a) => stage(Stage::Segment, a),
        Command::Cluster(a) => stage(Stage::Cluster, a),
        Command::Forecast(a) => stage(Stage::Forecast, a),
        Command::Project(a) => stage(Stage::Project, a),
        Command::Paths(a) => stage(Stage::Paths, a),
        Command::Run { stage, force } => {
            let inputs = RunInputs::load(&stage.input, config()?)?;
            let outcome = run_pipeline(&stage.out, &inputs, *force)?;
            let verb = match outcome {
                RunOutcome::Written(_) => "wrote",
                RunOutcome::Unchanged(_) => "unchanged",
            };
            println!("{verb} {} ({})", stage.out.display(), outcome.manifest().dataset_id);
            Ok(())
        }
        Command::Serve { store, addr, web } => tokio::runtime::Runtime::new()?.block_on(serve(store, *addr, web.as_deref())),
    }
}
