//! Parsers for flag syntaxes shared by several subcommands.

use crate::error::CliError;
use primcloud_core::metrics::FeatureMatrix;
use primcloud_core::rct::BoolOp;
use primcloud_core::PrimitiveKind;
use std::path::Path;

/// `a..b` (inclusive) or a single `n`, for integer ranges.
pub fn leaf_range(text: &str) -> Result<(u32, u32), CliError> {
    let parse = |s: &str| -> Result<u32, CliError> {
        s.trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad leaf count {s:?}")))
    };
    match text.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let v = parse(text)?;
            Ok((v, v))
        }
    }
}

/// `a..b` (inclusive) or a single value, for float ranges.
pub fn scale_range(text: &str) -> Result<(f64, f64), CliError> {
    let parse = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad scale {s:?}")))
    };
    match text.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let v = parse(text)?;
            Ok((v, v))
        }
    }
}

pub fn kinds(text: &str) -> Result<Vec<PrimitiveKind>, CliError> {
    text.split(',')
        .map(|name| match name.trim().to_ascii_lowercase().as_str() {
            "sphere" => Ok(PrimitiveKind::Sphere),
            "box" => Ok(PrimitiveKind::Box),
            "cylinder" => Ok(PrimitiveKind::Cylinder),
            "cone" => Ok(PrimitiveKind::Cone),
            "torus" => Ok(PrimitiveKind::Torus),
            other => Err(CliError::usage(format!("unknown primitive kind {other:?}"))),
        })
        .collect()
}

pub fn ops(text: &str) -> Result<Vec<BoolOp>, CliError> {
    text.split(',')
        .map(|name| match name.trim().to_ascii_lowercase().as_str() {
            "union" => Ok(BoolOp::Union),
            "intersection" => Ok(BoolOp::Intersection),
            "difference" => Ok(BoolOp::Difference),
            other => Err(CliError::usage(format!("unknown operation {other:?}"))),
        })
        .collect()
}

pub fn bandwidths(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad bandwidth {s:?}")))
        })
        .collect()
}

pub fn index_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("bad object index {s:?}")))
        })
        .collect()
}

pub fn usize_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad size {s:?}")))
        })
        .collect()
}

/// Loads features from either a feature file (`P3DF`) or a dataset
/// (`P3DS`, featurized on the fly with the default descriptor).
pub fn load_features(path: &Path, threads: usize) -> Result<FeatureMatrix, CliError> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        f.read_exact(&mut magic)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    match &magic {
        b"P3DF" => Ok(primcloud_core::io::read_feature_file(path)?),
        b"P3DS" => Ok(primcloud_core::pipeline::featurize_dataset(
            path,
            &primcloud_core::DescriptorConfig::default(),
            threads,
        )?),
        other => Err(CliError::usage(format!(
            "{}: unrecognized magic {other:?} (expected a dataset or feature file)",
            path.display()
        ))),
    }
}
