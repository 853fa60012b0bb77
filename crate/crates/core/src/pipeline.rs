//! Batch workflows tying the generator, sampler and dataset formats
//! together: chunked parallel generation with in-order writes, full dataset
//! re-validation and summary statistics.
//!
//! Every object is a pure function of `(spec, sampler config, index)`, so
//! the same spec produces byte-identical files at any thread count.

use crate::features::{batch_features, DescriptorConfig, FeatureError};
use crate::io::{
    read_dataset, DatasetReader, DatasetRecord, DatasetWriter, IoError, Manifest,
};
use crate::metrics::{augmented_chamfer_accelerated, FeatureMatrix, MetricsError};
use crate::prim::Membership;
use crate::rct::{
    derive_stream_seed, sample_rct, RctError, RctSample, RctSpec, SEED_STREAM_CLOUD,
};
use crate::sampler::{
    classify_membership, sample_labeled_cloud, LabeledPointCloud, SamplerConfig, SamplerError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Objects generated per parallel wave; bounds writer reordering memory.
const GENERATION_CHUNK: u64 = 1024;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rct(#[from] RctError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("validation failed: {0} invariant breaches")]
    ValidationFailed(usize),
}

/// Generates one object: the constructive tree plus its labeled cloud, each
/// from its own derived stream.
pub fn generate_object(
    spec: &RctSpec,
    cfg: &SamplerConfig,
    index: u64,
) -> Result<(RctSample, LabeledPointCloud), PipelineError> {
    let sample = sample_rct(spec, index)?;
    let seed = derive_stream_seed(spec.master_seed, index, SEED_STREAM_CLOUD);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = sample_labeled_cloud(&sample, cfg, &mut rng)?;
    Ok((sample, cloud))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateOutcome {
    pub manifest: Manifest,
    pub objects: u64,
    pub elapsed_secs: f64,
    pub objects_per_sec: f64,
}

/// Generates `count` objects on `threads` workers (0 = all cores) and
/// writes them, in index order, to `out` with a manifest at
/// `manifest_path`.
pub fn generate_dataset(
    spec: &RctSpec,
    cfg: &SamplerConfig,
    count: u64,
    threads: usize,
    out: &Path,
    manifest_path: &Path,
) -> Result<GenerateOutcome, PipelineError> {
    spec.validate()?;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let started = Instant::now();
    let mut writer = DatasetWriter::create(out, cfg.n_points as u32, cfg.with_normals)?;
    let mut next = 0u64;
    while next < count {
        let hi = (next + GENERATION_CHUNK).min(count);
        let chunk: Vec<Result<(RctSample, LabeledPointCloud), PipelineError>> = pool.install(|| {
            (next..hi)
                .into_par_iter()
                .map(|index| generate_object(spec, cfg, index))
                .collect()
        });
        for item in chunk {
            let (sample, cloud) = item?;
            writer.append(&sample, &cloud)?;
        }
        next = hi;
    }
    let manifest = writer.finish(spec, cfg, manifest_path)?;
    let elapsed_secs = started.elapsed().as_secs_f64();
    Ok(GenerateOutcome {
        objects: count,
        elapsed_secs,
        objects_per_sec: if elapsed_secs > 0.0 {
            count as f64 / elapsed_secs
        } else {
            f64::INFINITY
        },
        manifest,
    })
}

/// Extracts descriptors for every record of a dataset file.
pub fn featurize_dataset(
    dataset: &Path,
    cfg: &DescriptorConfig,
    threads: usize,
) -> Result<FeatureMatrix, PipelineError> {
    let records = read_dataset(dataset)?;
    let clouds: Vec<LabeledPointCloud> = records.into_iter().map(|r| r.cloud).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| batch_features(&clouds, cfg))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub records_checked: u64,
    pub hash_ok: bool,
    pub breaches: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.hash_ok && self.breaches.is_empty()
    }
}

/// Re-runs the generator invariants over a dataset file: content hash,
/// label consistency, bit-exact regeneration from the manifest's spec, and
/// boundary soundness of the regenerated (pre-normalization) points at
/// tolerance `tol`.
pub fn validate_dataset(
    dataset: &Path,
    manifest: &Manifest,
    limit: Option<u64>,
    tol: f64,
) -> Result<ValidationReport, PipelineError> {
    let mut breaches = Vec::new();

    let rehash = crate::io::recompute_content_hash(dataset)?;
    let hash_ok = format!("{rehash:016x}") == manifest.content_hash;
    if !hash_ok {
        breaches.push(format!(
            "content hash {rehash:016x} disagrees with manifest {}",
            manifest.content_hash
        ));
    }

    let reader = DatasetReader::open(dataset)?;
    let todo = limit.unwrap_or(u64::MAX);
    let records: Vec<DatasetRecord> = reader
        .take(todo as usize)
        .collect::<Result<_, _>>()?;

    let raw_cfg = SamplerConfig {
        normalize: false,
        ..manifest.sampler.clone()
    };
    let mut failures: Vec<String> = records
        .par_iter()
        .map(|record| -> Vec<String> {
            let mut local = Vec::new();
            let index = record.object_index;
            // label consistency against the embedded tree
            for (i, (sem, inst)) in record
                .cloud
                .semantic
                .iter()
                .zip(&record.cloud.instance)
                .enumerate()
            {
                if *inst as usize >= record.sample.leaf_count()
                    || *sem != record.sample.leaves[*inst as usize].kind().label()
                {
                    local.push(format!("object {index} point {i}: inconsistent labels"));
                    break;
                }
            }
            // regeneration: tree, raw points, and stored normalized floats
            match generate_object(&manifest.spec, &raw_cfg, index) {
                Ok((sample, raw_cloud)) => {
                    if sample != record.sample {
                        local.push(format!("object {index}: tree differs on regeneration"));
                    }
                    for (i, p) in raw_cloud.points.iter().enumerate() {
                        if classify_membership(&sample, *p, tol) != Membership::On {
                            local.push(format!(
                                "object {index} point {i}: regenerated point off boundary"
                            ));
                            break;
                        }
                    }
                    let stored_points = &record.cloud.points;
                    let expected = if manifest.sampler.normalize {
                        match crate::sampler::normalize_cloud(&raw_cloud.points) {
                            Ok((pts, _, _)) => pts,
                            Err(e) => {
                                local.push(format!("object {index}: {e}"));
                                return local;
                            }
                        }
                    } else {
                        raw_cloud.points.clone()
                    };
                    let mismatch = stored_points
                        .iter()
                        .zip(&expected)
                        .any(|(a, b)| {
                            a.x != f64::from(b.x as f32)
                                || a.y != f64::from(b.y as f32)
                                || a.z != f64::from(b.z as f32)
                        });
                    if mismatch {
                        local.push(format!("object {index}: stored points differ"));
                    }
                }
                Err(e) => local.push(format!("object {index}: regeneration failed: {e}")),
            }
            local
        })
        .flatten()
        .collect();
    breaches.append(&mut failures);

    Ok(ValidationReport {
        records_checked: records.len() as u64,
        hash_ok,
        breaches,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AcdSummary {
    pub sample_size: usize,
    pub nn_min: f64,
    pub nn_mean: f64,
    pub nn_median: f64,
    pub nn_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub object_count: u64,
    pub n_points: u32,
    pub leaf_histogram: BTreeMap<usize, u64>,
    pub op_histogram: BTreeMap<String, u64>,
    pub semantic_frequencies: Vec<f64>,
    pub acd: Option<AcdSummary>,
}

/// Summary statistics over a dataset file: leaf-count and operation
/// histograms, per-kind point-label frequencies, and nearest-neighbor
/// augmented-Chamfer diversity over a seeded subsample of clouds.
pub fn dataset_stats(
    dataset: &Path,
    acd_sample: usize,
    seed: u64,
) -> Result<DatasetStats, PipelineError> {
    let reader = DatasetReader::open(dataset)?;
    let header = reader.header();
    let want: std::collections::BTreeSet<u64> = if acd_sample > 1 && header.object_count > 0 {
        let take = acd_sample.min(header.object_count as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, header.object_count as usize, take)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    } else {
        Default::default()
    };

    let mut leaf_histogram = BTreeMap::new();
    let mut op_histogram = BTreeMap::new();
    let mut label_counts = [0u64; 5];
    let mut total_points = 0u64;
    let mut picked: Vec<LabeledPointCloud> = Vec::with_capacity(want.len());

    for record in reader {
        let record = record?;
        *leaf_histogram
            .entry(record.sample.leaf_count())
            .or_insert(0) += 1;
        for op in &record.sample.internal_ops {
            *op_histogram.entry(op.name().to_string()).or_insert(0) += 1;
        }
        for s in &record.cloud.semantic {
            label_counts[(*s).min(4) as usize] += 1;
        }
        total_points += record.cloud.len() as u64;
        if want.contains(&record.object_index) {
            picked.push(record.cloud);
        }
    }

    let acd = if picked.len() >= 2 {
        let mut nn = vec![f64::INFINITY; picked.len()];
        for i in 0..picked.len() {
            for j in i + 1..picked.len() {
                let d = augmented_chamfer_accelerated(&picked[i].points, &picked[j].points)?;
                nn[i] = nn[i].min(d);
                nn[j] = nn[j].min(d);
            }
        }
        let mut sorted = nn.clone();
        sorted.sort_by(f64::total_cmp);
        Some(AcdSummary {
            sample_size: picked.len(),
            nn_min: sorted[0],
            nn_mean: nn.iter().sum::<f64>() / nn.len() as f64,
            nn_median: sorted[sorted.len() / 2],
            nn_max: sorted[sorted.len() - 1],
        })
    } else {
        None
    };

    Ok(DatasetStats {
        object_count: header.object_count,
        n_points: header.n_points,
        leaf_histogram,
        op_histogram,
        semantic_frequencies: label_counts
            .iter()
            .map(|c| {
                if total_points > 0 {
                    *c as f64 / total_points as f64
                } else {
                    0.0
                }
            })
            .collect(),
        acd: acd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn small_spec(seed: u64) -> RctSpec {
        RctSpec {
            master_seed: seed,
            ..RctSpec::default()
        }
    }

    fn small_cfg() -> SamplerConfig {
        SamplerConfig {
            n_points: 128,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn thread_count_does_not_change_the_file() {
        let dir = tmp();
        let spec = small_spec(21);
        let cfg = small_cfg();
        let p1 = dir.path().join("t1.p3ds");
        let p8 = dir.path().join("t8.p3ds");
        let m1 = generate_dataset(&spec, &cfg, 64, 1, &p1, &dir.path().join("m1.json")).unwrap();
        let m8 = generate_dataset(&spec, &cfg, 64, 8, &p8, &dir.path().join("m8.json")).unwrap();
        assert_eq!(m1.manifest.content_hash, m8.manifest.content_hash);
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p8).unwrap());
    }

    #[test]
    fn validation_passes_on_fresh_data_and_catches_tampering() {
        let dir = tmp();
        let spec = small_spec(22);
        let cfg = small_cfg();
        let path = dir.path().join("d.p3ds");
        let mpath = dir.path().join("d.manifest.json");
        let outcome = generate_dataset(&spec, &cfg, 12, 0, &path, &mpath).unwrap();
        let report = validate_dataset(&path, &outcome.manifest, None, 1e-6).unwrap();
        assert!(report.ok(), "{:?}", report.breaches);
        assert_eq!(report.records_checked, 12);

        // flip one payload byte: the hash must catch it
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        let tampered = validate_dataset(&path, &outcome.manifest, Some(0), 1e-6).unwrap();
        assert!(!tampered.hash_ok);
    }

    #[test]
    fn stats_reflect_the_generation_setup() {
        let dir = tmp();
        let spec = small_spec(23);
        let cfg = small_cfg();
        let path = dir.path().join("d.p3ds");
        generate_dataset(&spec, &cfg, 32, 0, &path, &dir.path().join("m.json")).unwrap();
        let stats = dataset_stats(&path, 8, 1).unwrap();
        assert_eq!(stats.object_count, 32);
        assert_eq!(stats.n_points, 128);
        // union-only dataset
        assert!(stats.op_histogram.keys().all(|k| k == "union"));
        let leaf_total: u64 = stats.leaf_histogram.values().sum();
        assert_eq!(leaf_total, 32);
        let freq_sum: f64 = stats.semantic_frequencies.iter().sum();
        assert!((freq_sum - 1.0).abs() < 1e-9);
        let acd = stats.acd.expect("acd summary");
        assert_eq!(acd.sample_size, 8);
        assert!(acd.nn_min > 0.0);
        assert!(acd.nn_min <= acd.nn_median && acd.nn_median <= acd.nn_max);
    }

    #[test]
    fn featurize_matches_direct_extraction() {
        let dir = tmp();
        let spec = small_spec(24);
        let cfg = small_cfg();
        let path = dir.path().join("d.p3ds");
        generate_dataset(&spec, &cfg, 6, 0, &path, &dir.path().join("m.json")).unwrap();
        let dcfg = DescriptorConfig::default();
        let matrix = featurize_dataset(&path, &dcfg, 2).unwrap();
        assert_eq!(matrix.rows(), 6);
        assert_eq!(matrix.cols(), dcfg.descriptor_len());
        assert_eq!(matrix.row_ids(), &[0, 1, 2, 3, 4, 5]);

        let records = read_dataset(&path).unwrap();
        let direct =
            crate::features::extract_descriptor(&records[3].cloud, &dcfg).unwrap();
        assert_eq!(matrix.row(3), direct.as_slice());
    }
}
