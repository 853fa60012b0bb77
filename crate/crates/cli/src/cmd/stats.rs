use crate::config::ConfigMap;
use crate::error::CliError;
use primcloud_core::pipeline::dataset_stats;
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Input dataset file
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output JSON path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clouds in the ACD nearest-neighbor subsample (0 disables)
    #[arg(long)]
    acd_sample: Option<usize>,
    /// Seed of the ACD subsample
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let input = cfg
        .merge_path(args.input, "input")
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let acd_sample: usize = cfg.merge_or(args.acd_sample, "acd-sample", 32)?;
    let seed: u64 = cfg.merge_or(args.seed, "seed", 0)?;

    let stats = dataset_stats(&input, acd_sample, seed)?;
    let json = serde_json::to_string_pretty(&stats)?;
    match cfg.merge_path(args.out, "out") {
        Some(path) => {
            std::fs::write(&path, json + "\n")?;
            println!("stats written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
