pub mod bench;
pub mod distill;
pub mod export;
pub mod featurize;
pub mod generate;
pub mod stats;
pub mod validate;
