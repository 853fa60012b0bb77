use crate::config::ConfigMap;
use crate::error::CliError;
use crate::parse;
use clap::ArgAction;
use primcloud_core::distill::{
    adaptivity_exact_all, adaptivity_proxy, adaptivity_proxy_inclusive, descending_order,
    run_distillation, DistillConfig,
};
use primcloud_core::metrics::mmd_squared;
use primcloud_core::stats::spearman_rho;
use primcloud_core::KernelConfig;
use std::io::Write;
use std::path::PathBuf;

/// Row cap for the exact-oracle cross-check.
const ORACLE_ROW_CAP: usize = 500;

#[derive(clap::Args)]
pub struct Args {
    /// Source features: a feature file, or a dataset to featurize
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target features: a feature file, or a dataset to featurize
    #[arg(long)]
    target: Option<PathBuf>,
    /// Retention ratio per pruning step
    #[arg(long)]
    ratio: Option<f64>,
    /// Size threshold the schedule never prunes below
    #[arg(long)]
    threshold: Option<usize>,
    /// Number of epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated kernel bandwidths (default: median heuristic)
    #[arg(long)]
    bandwidths: Option<String>,
    /// Report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Retained-id list path (one id per line)
    #[arg(long)]
    retained: Option<PathBuf>,
    /// Cross-check the proxy ranking against the exact oracle (<= 500 rows)
    #[arg(long, action = ArgAction::SetTrue)]
    exact_oracle: Option<bool>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let source = cfg
        .merge_path(args.source, "source")
        .ok_or_else(|| CliError::usage("--source is required"))?;
    let target = cfg
        .merge_path(args.target, "target")
        .ok_or_else(|| CliError::usage("--target is required"))?;
    let report_path = cfg
        .merge_path(args.report, "report")
        .unwrap_or_else(|| PathBuf::from("distill_report.json"));
    let retained_path = cfg
        .merge_path(args.retained, "retained")
        .unwrap_or_else(|| PathBuf::from("retained_ids.txt"));
    let dcfg = DistillConfig {
        retention_ratio: cfg.merge_or(args.ratio, "ratio", 0.7)?,
        size_threshold: cfg.merge_or(args.threshold, "threshold", 10_000)?,
        epochs: cfg.merge_or(args.epochs, "epochs", 5)?,
    };
    dcfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let threads: usize = cfg.merge_or(args.threads, "threads", 0)?;
    let exact_oracle = cfg.merge_or(args.exact_oracle.filter(|b| *b), "exact_oracle", false)?;

    let d = parse::load_features(&source, threads)?;
    let t = parse::load_features(&target, threads)?;
    if d.cols() != t.cols() {
        return Err(CliError::Runtime(format!(
            "feature dimensions differ: source {} vs target {}",
            d.cols(),
            t.cols()
        )));
    }

    let kcfg = match cfg.merge(args.bandwidths, "bandwidths")? {
        Some(text) => KernelConfig::new(parse::bandwidths(&text)?)
            .map_err(|e| CliError::usage(e.to_string()))?,
        None => KernelConfig::median_heuristic(&d, &t)?,
    };

    if exact_oracle {
        oracle_cross_check(&d, &t, &kcfg)?;
    }

    let report = run_distillation(&d, &t, &kcfg, &dcfg, |_, _| {})?;
    let last = report.epochs.last().expect("at least one epoch");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&retained_path)?);
        for id in &last.retained_ids {
            writeln!(f, "{id}")?;
        }
        f.flush()?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&report_path, json + "\n")?;
    println!(
        "distilled {} -> {} rows over {} epochs (r={}, size_t={}); final mmd^2 {:.6e}",
        d.rows(),
        last.size_after,
        report.config.epochs,
        report.config.retention_ratio,
        report.config.size_threshold,
        last.mmd_after
    );
    println!(
        "report {} | retained ids {}",
        report_path.display(),
        retained_path.display()
    );
    Ok(())
}

/// Spearman cross-check of the proxy ranking against the exact oracle,
/// gated by the small-perturbation condition that justifies the proxy.
/// Fails the command when the condition holds but the ranks disagree.
fn oracle_cross_check(
    d: &primcloud_core::FeatureMatrix,
    t: &primcloud_core::FeatureMatrix,
    kcfg: &KernelConfig,
) -> Result<(), CliError> {
    let probe = if d.rows() > ORACLE_ROW_CAP {
        let indices: Vec<usize> = (0..ORACLE_ROW_CAP).collect();
        d.select(&indices)
    } else {
        d.clone()
    };
    let exact = adaptivity_exact_all(&probe, t, kcfg)?;
    let proxy = adaptivity_proxy(&probe, t, kcfg)?;
    let inclusive = adaptivity_proxy_inclusive(&probe, t, kcfg)?;
    let rho = spearman_rho(&proxy.scores, &exact.scores);

    let d_full = mmd_squared(&probe, t, kcfg)?.sqrt();
    let max_delta = exact.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let condition_holds = max_delta <= 0.05 * d_full;
    let orders_agree = descending_order(&proxy) == descending_order(&inclusive);

    println!(
        "exact-oracle: spearman rho {rho:.5} over {} rows (max |delta| {max_delta:.3e}, 0.05*d {:.3e}, condition {}), self-term order agreement {}",
        probe.rows(),
        0.05 * d_full,
        if condition_holds { "holds" } else { "violated" },
        orders_agree
    );
    if condition_holds && rho < 0.99 {
        return Err(CliError::Runtime(format!(
            "proxy/exact rank correlation {rho:.5} below 0.99 while the perturbation condition holds"
        )));
    }
    Ok(())
}
