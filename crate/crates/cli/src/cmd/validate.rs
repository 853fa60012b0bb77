use crate::config::ConfigMap;
use crate::error::CliError;
use primcloud_core::io::Manifest;
use primcloud_core::pipeline::validate_dataset;
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct Args {
    /// Input dataset file
    #[arg(long)]
    input: Option<PathBuf>,
    /// Manifest path (default: <input>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Check only the first N records (hash always covers the whole file)
    #[arg(long)]
    limit: Option<u64>,
    /// Boundary-soundness tolerance
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let input = cfg
        .merge_path(args.input, "input")
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let manifest_path = cfg.merge_path(args.manifest, "manifest").unwrap_or_else(|| {
        let mut os = input.as_os_str().to_owned();
        os.push(".manifest.json");
        PathBuf::from(os)
    });
    let limit = cfg.merge(args.limit, "limit")?;
    let tol: f64 = cfg.merge_or(args.tol, "tol", 1e-6)?;

    let manifest = Manifest::load(&manifest_path)?;
    let report = validate_dataset(&input, &manifest, limit, tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.ok() {
        println!(
            "validate: OK — {} records checked, hash {}",
            report.records_checked, manifest.content_hash
        );
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "validation failed with {} breaches",
            report.breaches.len() + usize::from(!report.hash_ok)
        )))
    }
}
