use crate::config::ConfigMap;
use crate::error::CliError;
use crate::parse;
use primcloud_core::distill::{adaptivity_exact, adaptivity_proxy};
use primcloud_core::metrics::FeatureMatrix;
use primcloud_core::pipeline::generate_object;
use primcloud_core::stats::log_log_slope;
use primcloud_core::{KernelConfig, RctSpec, SamplerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(clap::Args)]
pub struct Args {
    /// Directory receiving generation.csv and distill_scaling.csv
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Objects generated per leaf count
    #[arg(long)]
    gen_count: Option<u64>,
    /// Points per cloud for the generation bench
    #[arg(long)]
    points: Option<usize>,
    /// Largest leaf count
    #[arg(long)]
    max_leaves: Option<u32>,
    /// Comma-separated source sizes for the adaptivity scaling bench
    #[arg(long)]
    mmd_sizes: Option<String>,
    /// Target size for the adaptivity scaling bench
    #[arg(long)]
    mmd_target: Option<usize>,
    /// Exact-oracle probe rows per size
    #[arg(long)]
    exact_rows: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default 1 for stable timings)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn gaussian(rows: usize, cols: usize, seed: u64, shift: f64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x + shift
        })
        .collect();
    FeatureMatrix::new(rows, cols, data, (0..rows as u64).collect()).expect("gaussian matrix")
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let out_dir = cfg
        .merge_path(args.out_dir, "out-dir")
        .ok_or_else(|| CliError::usage("--out-dir is required"))?;
    let gen_count: u64 = cfg.merge_or(args.gen_count, "gen-count", 64)?;
    let points: usize = cfg.merge_or(args.points, "points", 1024)?;
    let max_leaves: u32 = cfg.merge_or(args.max_leaves, "max-leaves", 6)?;
    let sizes = match cfg.merge(args.mmd_sizes, "mmd-sizes")? {
        Some(text) => parse::usize_list(&text)?,
        None => vec![500, 1000, 2000],
    };
    let mmd_target: usize = cfg.merge_or(args.mmd_target, "mmd-target", 500)?;
    let exact_rows: usize = cfg.merge_or(args.exact_rows, "exact-rows", 4)?;
    let seed: u64 = cfg.merge_or(args.seed, "seed", 0)?;
    let threads: usize = cfg.merge_or(args.threads, "threads", 1)?;
    if max_leaves < 1 || gen_count == 0 || sizes.is_empty() {
        return Err(CliError::usage("bench sizes must be positive"));
    }

    std::fs::create_dir_all(&out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // generation time by leaf count
    let gen_csv_path = out_dir.join("generation.csv");
    {
        let mut csv = std::io::BufWriter::new(std::fs::File::create(&gen_csv_path)?);
        writeln!(csv, "leaves,objects,mean_ms_per_object,objects_per_sec")?;
        let sampler = SamplerConfig {
            n_points: points,
            ..SamplerConfig::default()
        };
        for leaves in 1..=max_leaves {
            let spec = RctSpec {
                leaf_range: (leaves, leaves),
                master_seed: seed,
                ..RctSpec::default()
            };
            let t0 = Instant::now();
            pool.install(|| -> Result<(), CliError> {
                for i in 0..gen_count {
                    generate_object(&spec, &sampler, i)?;
                }
                Ok(())
            })?;
            let secs = t0.elapsed().as_secs_f64();
            writeln!(
                csv,
                "{leaves},{gen_count},{:.4},{:.2}",
                1000.0 * secs / gen_count as f64,
                gen_count as f64 / secs
            )?;
        }
        csv.flush()?;
    }

    // adaptivity scaling: per-score proxy cost vs projected all-rows exact
    let scaling_csv_path = out_dir.join("distill_scaling.csv");
    let mut proxy_per_score = Vec::new();
    let mut exact_all_rows = Vec::new();
    {
        let mut csv = std::io::BufWriter::new(std::fs::File::create(&scaling_csv_path)?);
        writeln!(
            csv,
            "m,n,proxy_total_s,proxy_per_score_us,exact_per_row_s,exact_all_rows_projected_s"
        )?;
        let t = gaussian(mmd_target, 8, seed ^ 0xBE7C, 1.0);
        let kcfg = KernelConfig::single(1.0).map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| -> Result<(), CliError> {
            for &m in &sizes {
                let dm = gaussian(m, 8, seed ^ m as u64, 0.0);
                let t0 = Instant::now();
                let scores = adaptivity_proxy(&dm, &t, &kcfg)?;
                let proxy_total = t0.elapsed().as_secs_f64();
                debug_assert_eq!(scores.len(), m);
                let probes = exact_rows.min(m);
                let t0 = Instant::now();
                for k in 0..probes {
                    adaptivity_exact(k * (m / probes), &dm, &t, &kcfg)?;
                }
                let per_row = t0.elapsed().as_secs_f64() / probes as f64;
                proxy_per_score.push(proxy_total / m as f64);
                exact_all_rows.push(per_row * m as f64);
                writeln!(
                    csv,
                    "{m},{mmd_target},{proxy_total:.5},{:.3},{per_row:.5},{:.2}",
                    1e6 * proxy_total / m as f64,
                    per_row * m as f64
                )?;
            }
            Ok(())
        })?;
        csv.flush()?;
    }

    let xs: Vec<f64> = sizes.iter().map(|m| *m as f64).collect();
    if xs.len() >= 2 {
        println!(
            "adaptivity scaling: per-score proxy exponent {:.3}, all-rows exact exponent {:.3}",
            log_log_slope(&xs, &proxy_per_score),
            log_log_slope(&xs, &exact_all_rows)
        );
    }
    println!(
        "bench CSVs: {} and {}",
        gen_csv_path.display(),
        scaling_csv_path.display()
    );
    Ok(())
}
