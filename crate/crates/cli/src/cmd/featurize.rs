use crate::config::ConfigMap;
use crate::error::CliError;
use clap::ArgAction;
use primcloud_core::io::write_feature_file;
use primcloud_core::pipeline::featurize_dataset;
use primcloud_core::DescriptorConfig;
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Input dataset file
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output feature file
    #[arg(long)]
    out: Option<PathBuf>,
    /// D2 histogram bins
    #[arg(long)]
    d2_bins: Option<usize>,
    /// D2 point pairs per cloud
    #[arg(long)]
    d2_pairs: Option<usize>,
    /// Drop the covariance-eigenvalue block
    #[arg(long, action = ArgAction::SetTrue)]
    no_eigen: Option<bool>,
    /// Append semantic-label frequencies
    #[arg(long, action = ArgAction::SetTrue)]
    label_hist: Option<bool>,
    /// Seed of the D2 pair stream
    #[arg(long)]
    pair_seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let input = cfg
        .merge_path(args.input, "input")
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let out = cfg
        .merge_path(args.out, "out")
        .ok_or_else(|| CliError::usage("--out is required"))?;
    let defaults = DescriptorConfig::default();
    let descriptor = DescriptorConfig {
        d2_bins: cfg.merge_or(args.d2_bins, "d2-bins", defaults.d2_bins)?,
        d2_pairs: cfg.merge_or(args.d2_pairs, "d2-pairs", defaults.d2_pairs)?,
        include_eigen: !cfg.merge_or(args.no_eigen.filter(|b| *b), "no_eigen", false)?,
        include_label_hist: cfg.merge_or(args.label_hist.filter(|b| *b), "label_hist", false)?,
        pair_seed: cfg.merge_or(args.pair_seed, "pair-seed", defaults.pair_seed)?,
    };
    descriptor
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let threads: usize = cfg.merge_or(args.threads, "threads", 0)?;

    let matrix = featurize_dataset(&input, &descriptor, threads)?;
    write_feature_file(&matrix, &out, Some(&descriptor))?;
    println!(
        "featurized {} clouds into {} ({} dims per row)",
        matrix.rows(),
        out.display(),
        matrix.cols()
    );
    Ok(())
}
