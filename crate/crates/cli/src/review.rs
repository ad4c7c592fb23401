use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use probsmith_core::dataset::read_dataset;
use probsmith_review::{ReviewStore, StoreConfig};

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    /// Ledger and snapshot directory.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Built review UI to serve under `/`.
    #[arg(long = "static", value_name = "DIR")]
    static_dir: Option<PathBuf>,
    /// Problems to sample a new batch from.
    #[arg(long, requires_all = ["seeds", "annotators"])]
    problems: Option<PathBuf>,
    /// Seed problems shown next to each sampled problem.
    #[arg(long)]
    seeds: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Annotator ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    annotators: Vec<String>,
    /// Ledger entries between snapshots.
    #[arg(long, default_value_t = StoreConfig::default().snapshot_every)]
    snapshot_every: u64,
    /// Create the batch and exit without serving.
    #[arg(long)]
    prepare_only: bool,
}

pub fn serve(args: &ReviewServeArgs) -> Result<ExitCode> {
    let store = Arc::new(ReviewStore::open(&args.store, StoreConfig { snapshot_every: args.snapshot_every })?);
    if let (Some(problems), Some(seeds)) = (&args.problems, &args.seeds) {
        let pool = read_dataset(problems)?;
        let seed_pool = read_dataset(seeds)?;
        let b = store.create_batch(&pool, &seed_pool, args.size, args.rng_seed, &args.annotators)?;
        println!("batch {} ({} problems, {} annotators)", b.batch_id, b.problem_ids.len(), b.annotators.len());
    }
    if args.prepare_only {
        return Ok(ExitCode::SUCCESS);
    }
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(async {
        let listener =
            tokio::net::TcpListener::bind(args.addr).await.with_context(|| format!("binding {}", args.addr))?;
        println!("listening on http://{}", listener.local_addr()?);
        probsmith_review::serve(listener, store, args.static_dir.as_deref()).await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
