use primcloud_core::distill::DistillError;
use primcloud_core::features::FeatureError;
use primcloud_core::io::IoError;
use primcloud_core::metrics::MetricsError;
use primcloud_core::pipeline::PipelineError;
use primcloud_core::rct::RctError;

/// Usage errors exit with 2, runtime errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    PipelineError,
    IoError,
    RctError,
    FeatureError,
    MetricsError,
    DistillError,
    std::io::Error,
    serde_json::Error
);

// A spec that fails validation is a usage problem, not a runtime one; the
// conversion above is for errors surfacing mid-run.
pub fn spec_usage_error(e: RctError) -> CliError {
    CliError::Usage(e.to_string())
}
