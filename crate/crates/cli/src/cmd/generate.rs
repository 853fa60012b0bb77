use crate::config::ConfigMap;
use crate::error::{spec_usage_error, CliError};
use crate::parse;
use clap::ArgAction;
use primcloud_core::pipeline::generate_dataset;
use primcloud_core::{PrimitiveKind, RctSpec, SamplerConfig};
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Output dataset file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of objects
    #[arg(long)]
    count: Option<u64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive leaf-count range, e.g. 1..6
    #[arg(long)]
    leaves: Option<String>,
    /// Comma-separated primitive kinds (default: all five)
    #[arg(long)]
    kinds: Option<String>,
    /// Comma-separated boolean operations (default: union)
    #[arg(long)]
    ops: Option<String>,
    /// Points per cloud
    #[arg(long)]
    points: Option<usize>,
    /// Inclusive uniform scale range, e.g. 0.5..1.0
    #[arg(long)]
    scale: Option<String>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Store per-point outward normals
    #[arg(long, action = ArgAction::SetTrue)]
    normals: Option<bool>,
    /// Keep raw world coordinates instead of centering and unit-scaling
    #[arg(long, action = ArgAction::SetTrue)]
    no_normalize: Option<bool>,
    /// key = value config file merged under the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let out = cfg
        .merge_path(args.out, "out")
        .ok_or_else(|| CliError::usage("--out is required"))?;
    let manifest_path = cfg.merge_path(args.manifest, "manifest").unwrap_or_else(|| {
        let mut os = out.as_os_str().to_owned();
        os.push(".manifest.json");
        PathBuf::from(os)
    });
    let count: u64 = cfg.require(args.count, "count")?;
    let seed: u64 = cfg.merge_or(args.seed, "seed", 0)?;
    let leaves = parse::leaf_range(&cfg.merge_or(args.leaves, "leaves", "1..6".into())?)?;
    let kinds = match cfg.merge(args.kinds, "kinds")? {
        Some(text) => parse::kinds(&text)?,
        None => PrimitiveKind::ALL.to_vec(),
    };
    let ops = parse::ops(&cfg.merge_or(args.ops, "ops", "union".into())?)?;
    let points: usize = cfg.merge_or(args.points, "points", 1024)?;
    let scale = parse::scale_range(&cfg.merge_or(args.scale, "scale", "0.5..1.0".into())?)?;
    let threads: usize = cfg.merge_or(args.threads, "threads", 0)?;
    let normals = cfg.merge_or(args.normals.filter(|b| *b), "normals", false)?;
    let no_normalize = cfg.merge_or(args.no_normalize.filter(|b| *b), "no_normalize", false)?;

    let spec = RctSpec {
        leaf_range: leaves,
        kinds,
        scale_range: scale,
        ops,
        master_seed: seed,
    };
    spec.validate().map_err(spec_usage_error)?;
    if points == 0 {
        return Err(CliError::usage("--points must be positive"));
    }
    let sampler = SamplerConfig {
        n_points: points,
        normalize: !no_normalize,
        with_normals: normals,
        ..SamplerConfig::default()
    };

    match generate_dataset(&spec, &sampler, count, threads, &out, &manifest_path) {
        Ok(outcome) => {
            println!(
                "generated {} objects in {:.2}s ({:.0} objects/s, {:.0} objects/min)",
                outcome.objects,
                outcome.elapsed_secs,
                outcome.objects_per_sec,
                outcome.objects_per_sec * 60.0
            );
            println!(
                "dataset {} (content hash {})",
                out.display(),
                outcome.manifest.content_hash
            );
            Ok(())
        }
        Err(e) => {
            // never leave a partial dataset behind
            let _ = std::fs::remove_file(&out);
            let _ = std::fs::remove_file(&manifest_path);
            Err(e.into())
        }
    }
}
