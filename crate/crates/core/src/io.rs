//! Persistent formats, all little-endian and bit-stable across platforms:
//!
//! * **Dataset file** (`P3DS`): header `magic "P3DS" | version u16 |
//!   object_count u64 | n_points u32 | flags u8` (flag bit 0 = normals
//!   present), followed by per-object records in ascending object index.
//!   Each record is `object_index u64 | json_len u32 | constructive-tree
//!   JSON | n_points x (3 f32 coords [+ 3 f32 normals] + semantic u8 +
//!   instance u8)`. The tree JSON is a flat node array: leaves carry
//!   `params` (tagged by kind) and `pose` (`rotation [w,x,y,z]`,
//!   `translation`, `scale`); internal nodes carry `op`, `left`, `right`,
//!   the applied `delta` and the recorded `anchor` point.
//! * **Feature file** (`P3DF`): `magic "P3DF" | m u64 | d u32`, then `m`
//!   row ids (u64) and `m x d` f32 values row-major, exactly
//!   `16 + 8m + 4md` bytes. A JSON sidecar at `<path>.json` documents the
//!   descriptor config when one applies. External tools can produce this
//!   format to inject learned features.
//! * **PLY export**: binary little-endian PLY with per-vertex
//!   `x y z [nx ny nz] semantic instance`.
//! * **Manifest**: JSON echo of the generation setup plus an FNV-1a 64-bit
//!   content hash over the record stream for reproducibility checks.

use crate::features::DescriptorConfig;
use crate::metrics::{FeatureMatrix, MetricsError};
use crate::rct::{RctSample, RctSpec};
use crate::sampler::{LabeledPointCloud, SamplerConfig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const DATASET_MAGIC: &[u8; 4] = b"P3DS";
const FEATURE_MAGIC: &[u8; 4] = b"P3DF";
const DATASET_VERSION: u16 = 1;
/// Byte offset of the object-count field in the dataset header.
const COUNT_OFFSET: u64 = 6;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("heterogeneous records: {0}")]
    HeterogeneousRecords(String),
    #[error("object {next} appended after {prev}; records must be ascending")]
    NonAscendingIndex { prev: u64, next: u64 },
    #[error("duplicate object index {0}")]
    DuplicateIndex(u64),
    #[error("corrupt record {index}: {msg}")]
    CorruptRecord { index: u64, msg: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Streaming FNV-1a 64-bit hash.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = (self.0 ^ u64::from(*b)).wrapping_mul(0x100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Generation provenance for a dataset file; the hash re-verifies on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub spec: RctSpec,
    pub sampler: SamplerConfig,
    pub object_count: u64,
    /// FNV-1a 64 over all record bytes in index order, as 16 hex digits.
    pub content_hash: String,
    pub tool_version: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, IoError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u16,
    pub object_count: u64,
    pub n_points: u32,
    pub has_normals: bool,
}

/// Sequential dataset writer; records must arrive in ascending object
/// index. The header count is patched on [`DatasetWriter::finish`].
pub struct DatasetWriter {
    w: BufWriter<File>,
    n_points: u32,
    has_normals: bool,
    count: u64,
    hash: Fnv1a,
    last_index: Option<u64>,
}

impl DatasetWriter {
    pub fn create(path: &Path, n_points: u32, has_normals: bool) -> Result<DatasetWriter, IoError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&0u64.to_le_bytes())?; // object count, patched at finish
        w.write_all(&n_points.to_le_bytes())?;
        w.write_all(&[u8::from(has_normals)])?;
        Ok(DatasetWriter {
            w,
            n_points,
            has_normals,
            count: 0,
            hash: Fnv1a::new(),
            last_index: None,
        })
    }

    pub fn append(&mut self, sample: &RctSample, cloud: &LabeledPointCloud) -> Result<(), IoError> {
        let index = cloud.source.object_index;
        if let Some(prev) = self.last_index {
            if index <= prev {
                return Err(IoError::NonAscendingIndex { prev, next: index });
            }
        }
        if cloud.len() != self.n_points as usize {
            return Err(IoError::HeterogeneousRecords(format!(
                "record {index} has {} points, file holds {}",
                cloud.len(),
                self.n_points
            )));
        }
        if cloud.normals.is_some() != self.has_normals {
            return Err(IoError::HeterogeneousRecords(format!(
                "record {index} normals presence disagrees with the file header"
            )));
        }
        if sample.provenance.object_index != index {
            return Err(IoError::CorruptRecord {
                index,
                msg: "tree and cloud disagree on the object index".into(),
            });
        }
        let bytes = encode_record(sample, cloud)?;
        self.hash.update(&bytes);
        self.w.write_all(&bytes)?;
        self.count += 1;
        self.last_index = Some(index);
        Ok(())
    }

    /// Patches the header count, writes the manifest and returns it.
    pub fn finish(
        mut self,
        spec: &RctSpec,
        sampler: &SamplerConfig,
        manifest_path: &Path,
    ) -> Result<Manifest, IoError> {
        self.w.flush()?;
        let mut file = self.w.into_inner().map_err(|e| IoError::Io(e.into_error()))?;
        file.seek(SeekFrom::Start(COUNT_OFFSET))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.sync_all()?;
        let manifest = Manifest {
            format_version: u16::from(DATASET_VERSION),
            spec: spec.clone(),
            sampler: sampler.clone(),
            object_count: self.count,
            content_hash: format!("{:016x}", self.hash.finish()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        manifest.save(manifest_path)?;
        Ok(manifest)
    }
}

fn encode_record(sample: &RctSample, cloud: &LabeledPointCloud) -> Result<Vec<u8>, IoError> {
    let json = serde_json::to_vec(sample)?;
    let stride = point_stride(cloud.normals.is_some());
    let mut out = Vec::with_capacity(12 + json.len() + cloud.len() * stride);
    out.extend_from_slice(&cloud.source.object_index.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for i in 0..cloud.len() {
        let p = &cloud.points[i];
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if let Some(normals) = &cloud.normals {
            let n = &normals[i];
            for c in [n.x, n.y, n.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.push(cloud.semantic[i]);
        out.push(cloud.instance[i]);
    }
    Ok(out)
}

fn point_stride(has_normals: bool) -> usize {
    12 + if has_normals { 12 } else { 0 } + 2
}

/// One decoded dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub object_index: u64,
    pub sample: RctSample,
    pub cloud: LabeledPointCloud,
}

/// Sequential dataset reader; iterates records in file order.
pub struct DatasetReader {
    r: BufReader<File>,
    header: DatasetHeader,
    remaining: u64,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<DatasetReader, IoError> {
        let mut r = BufReader::new(File::open(path)?);
        let magic: [u8; 4] = read_array(&mut r)?;
        if &magic != DATASET_MAGIC {
            return Err(IoError::BadMagic {
                expected: *DATASET_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != DATASET_VERSION {
            return Err(IoError::UnsupportedVersion(version));
        }
        let object_count = u64::from_le_bytes(read_array(&mut r)?);
        let n_points = u32::from_le_bytes(read_array(&mut r)?);
        let flags = u8::from_le_bytes(read_array(&mut r)?);
        Ok(DatasetReader {
            r,
            header: DatasetHeader {
                version,
                object_count,
                n_points,
                has_normals: flags & 1 != 0,
            },
            remaining: object_count,
        })
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<DatasetRecord, IoError> {
        let object_index = u64::from_le_bytes(read_array(&mut self.r)?);
        let json_len = u32::from_le_bytes(read_array(&mut self.r)?) as usize;
        let mut json = vec![0u8; json_len];
        self.r.read_exact(&mut json)?;
        let sample: RctSample =
            serde_json::from_slice(&json).map_err(|e| IoError::CorruptRecord {
                index: object_index,
                msg: e.to_string(),
            })?;
        let n = self.header.n_points as usize;
        let mut points = Vec::with_capacity(n);
        let mut normals = self.header.has_normals.then(|| Vec::with_capacity(n));
        let mut semantic = Vec::with_capacity(n);
        let mut instance = Vec::with_capacity(n);
        let mut payload = vec![0u8; n * point_stride(self.header.has_normals)];
        self.r.read_exact(&mut payload)?;
        let mut cur = payload.as_slice();
        let take_f32 = |cur: &mut &[u8]| -> f64 {
            let (head, rest) = cur.split_at(4);
            *cur = rest;
            f64::from(f32::from_le_bytes(head.try_into().expect("f32 bytes")))
        };
        for _ in 0..n {
            points.push(Vector3::new(
                take_f32(&mut cur),
                take_f32(&mut cur),
                take_f32(&mut cur),
            ));
            if let Some(ns) = normals.as_mut() {
                ns.push(Vector3::new(
                    take_f32(&mut cur),
                    take_f32(&mut cur),
                    take_f32(&mut cur),
                ));
            }
            semantic.push(cur[0]);
            instance.push(cur[1]);
            cur = &cur[2..];
        }

        let leaf_count = sample.leaf_count();
        if sample.provenance.object_index != object_index {
            return Err(IoError::CorruptRecord {
                index: object_index,
                msg: "embedded tree disagrees on the object index".into(),
            });
        }
        if let Some(bad) = semantic.iter().find(|s| **s >= 5) {
            return Err(IoError::CorruptRecord {
                index: object_index,
                msg: format!("semantic label {bad} out of range"),
            });
        }
        if let Some(bad) = instance.iter().find(|i| **i as usize >= leaf_count) {
            return Err(IoError::CorruptRecord {
                index: object_index,
                msg: format!("instance label {bad} >= leaf count {leaf_count}"),
            });
        }

        Ok(DatasetRecord {
            object_index,
            cloud: LabeledPointCloud {
                points,
                semantic,
                instance,
                normals,
                source: sample.provenance,
            },
            sample,
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<DatasetRecord, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.read_record())
    }
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], IoError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Writes a dataset from an unordered stream of objects; records land on
/// disk in ascending object index regardless of production order.
pub fn write_dataset(
    objects: impl IntoIterator<Item = (RctSample, LabeledPointCloud)>,
    path: &Path,
    manifest_path: &Path,
    spec: &RctSpec,
    sampler: &SamplerConfig,
) -> Result<Manifest, IoError> {
    let mut sorted = BTreeMap::new();
    for (sample, cloud) in objects {
        let index = cloud.source.object_index;
        if sorted.insert(index, (sample, cloud)).is_some() {
            return Err(IoError::DuplicateIndex(index));
        }
    }
    let has_normals = sorted
        .values()
        .next()
        .map_or(sampler.with_normals, |(_, c)| c.normals.is_some());
    let mut writer = DatasetWriter::create(path, sampler.n_points as u32, has_normals)?;
    for (_, (sample, cloud)) in &sorted {
        writer.append(sample, cloud)?;
    }
    writer.finish(spec, sampler, manifest_path)
}

/// Reads every record of a dataset file.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, IoError> {
    DatasetReader::open(path)?.collect()
}

/// Recomputes the content hash over the raw record stream, without decoding
/// point payloads.
pub fn recompute_content_hash(path: &Path) -> Result<u64, IoError> {
    let mut reader = DatasetReader::open(path)?;
    let stride = point_stride(reader.header.has_normals);
    let n = reader.header.n_points as usize;
    let mut hash = Fnv1a::new();
    for _ in 0..reader.header.object_count {
        let head: [u8; 12] = read_array(&mut reader.r)?;
        hash.update(&head);
        let json_len = u32::from_le_bytes(head[8..12].try_into().expect("len bytes")) as usize;
        let mut body = vec![0u8; json_len + n * stride];
        reader.r.read_exact(&mut body)?;
        hash.update(&body);
    }
    Ok(hash.finish())
}

// --- PLY export ----------------------------------------------------------

/// Binary little-endian PLY with per-vertex coordinates, optional normals
/// and the two label channels.
pub fn export_ply(cloud: &LabeledPointCloud, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    header.push_str("property uchar semantic\nproperty uchar instance\nend_header\n");
    w.write_all(header.as_bytes())?;
    for i in 0..cloud.len() {
        let p = &cloud.points[i];
        for c in [p.x, p.y, p.z] {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
        if let Some(normals) = &cloud.normals {
            let n = &normals[i];
            for c in [n.x, n.y, n.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        w.write_all(&[cloud.semantic[i], cloud.instance[i]])?;
    }
    w.flush()?;
    Ok(())
}

// --- feature files --------------------------------------------------------

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes a feature matrix (`P3DF`); values are stored as f32. When a
/// descriptor config is given it is recorded in a JSON sidecar next to the
/// file.
pub fn write_feature_file(
    matrix: &FeatureMatrix,
    path: &Path,
    descriptor: Option<&DescriptorConfig>,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.cols() as u32).to_le_bytes())?;
    for id in matrix.row_ids() {
        w.write_all(&id.to_le_bytes())?;
    }
    for v in matrix.data() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    if let Some(cfg) = descriptor {
        let mut sw = BufWriter::new(File::create(sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut sw, cfg)?;
        sw.write_all(b"\n")?;
        sw.flush()?;
    }
    Ok(())
}

/// Reads a feature matrix back; rejects truncated or padded files so a
/// partial matrix is never returned.
pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != FEATURE_MAGIC {
        return Err(IoError::BadMagic {
            expected: *FEATURE_MAGIC,
            found: magic,
        });
    }
    let m = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let d = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if m == 0 || d == 0 {
        return Err(IoError::LengthMismatch(format!(
            "{m}x{d} feature matrix violates the m >= 1, d >= 1 invariant"
        )));
    }
    let expected = 8 * m + 4 * m * d;
    let mut body = Vec::with_capacity(expected);
    r.read_to_end(&mut body)?;
    if body.len() != expected {
        return Err(IoError::LengthMismatch(format!(
            "feature payload holds {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut row_ids = Vec::with_capacity(m);
    for chunk in body[..8 * m].chunks_exact(8) {
        row_ids.push(u64::from_le_bytes(chunk.try_into().expect("u64 bytes")));
    }
    let mut data = Vec::with_capacity(m * d);
    for chunk in body[8 * m..].chunks_exact(4) {
        data.push(f64::from(f32::from_le_bytes(
            chunk.try_into().expect("f32 bytes"),
        )));
    }
    Ok(FeatureMatrix::new(m, d, data, row_ids)?)
}
