use crate::config::ConfigMap;
use crate::error::CliError;
use crate::parse;
use primcloud_core::io::{export_ply, DatasetReader};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Input dataset file
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory receiving obj_<index>.ply files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated object indices (default: all, capped by --limit)
    #[arg(long)]
    indices: Option<String>,
    /// Stop after this many exports
    #[arg(long)]
    limit: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let input = cfg
        .merge_path(args.input, "input")
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let out_dir = cfg
        .merge_path(args.out_dir, "out-dir")
        .ok_or_else(|| CliError::usage("--out-dir is required"))?;
    let wanted: Option<BTreeSet<u64>> = match cfg.merge(args.indices, "indices")? {
        Some(text) => Some(parse::index_list(&text)?.into_iter().collect()),
        None => None,
    };
    let limit: u64 = cfg.merge_or(args.limit, "limit", u64::MAX)?;

    std::fs::create_dir_all(&out_dir)?;
    let mut exported = 0u64;
    for record in DatasetReader::open(&input)? {
        if exported >= limit {
            break;
        }
        let record = record?;
        if let Some(set) = &wanted {
            if !set.contains(&record.object_index) {
                continue;
            }
        }
        let path = out_dir.join(format!("obj_{:06}.ply", record.object_index));
        export_ply(&record.cloud, &path)?;
        exported += 1;
    }
    println!("exported {exported} PLY files to {}", out_dir.display());
    Ok(())
}
