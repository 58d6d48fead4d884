use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {id}: image file {path} not found")]
    MissingImage { id: String, path: PathBuf },

    #[error("record {id}: cannot decode {path}: {reason}")]
    Decode {
        id: String,
        path: PathBuf,
        reason: String,
    },

    #[error("record {id}: expected 3 channels, found {found}")]
    ChannelCount { id: String, found: u8 },

    #[error("duplicate (category, object_id, state_id) triple shared by {first} and {second}")]
    DuplicateTriple { first: String, second: String },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid resize {from_h}x{from_w} -> {to_h}x{to_w}: {reason}")]
    Resize {
        from_h: usize,
        from_w: usize,
        to_h: usize,
        to_w: usize,
        reason: &'static str,
    },

    #[error("palette fit needs at least k={k} pixels, got {pixels}")]
    TooFewPixels { k: usize, pixels: usize },

    #[error("palette fit needs at least k={k} distinct colors, got {distinct}")]
    TooFewColors { k: usize, distinct: usize },

    #[error("palette is empty")]
    EmptyPalette,

    #[error("token {token} at position {position} is out of range for vocabulary size {vocab}")]
    TokenOutOfRange {
        token: usize,
        position: usize,
        vocab: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model config: {0}")]
    ModelConfig(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in tensor {tensor} at index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("invalid train plan: {0}")]
    Plan(String),

    #[error("experiment design {design}: condition {condition} short by {deficit}")]
    PoolDeficit {
        design: &'static str,
        condition: String,
        deficit: usize,
    },

    #[error("konkle level {level}: {reason}")]
    KonkleDepth { level: usize, reason: String },

    #[error("unknown image id {0}")]
    UnknownId(String),

    #[error("aggregation group {0} is empty")]
    EmptyGroup(String),

    #[error("bad container: {0}")]
    Container(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv schema mismatch in {path}: {reason}")]
    CsvSchema { path: PathBuf, reason: String },

    #[error("configuration errors: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("output directory {0} is locked by another command")]
    Locked(PathBuf),

    #[error("palette has {palette} colors but the model vocabulary is {model}")]
    VocabMismatch { palette: usize, model: usize },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image encode error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingImage { .. } => "missing_image",
            Error::Decode { .. } => "decode",
            Error::ChannelCount { .. } => "channel_count",
            Error::DuplicateTriple { .. } => "duplicate_triple",
            Error::Manifest { .. } => "manifest",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Resize { .. } => "resize",
            Error::TooFewPixels { .. } => "too_few_pixels",
            Error::TooFewColors { .. } => "too_few_colors",
            Error::EmptyPalette => "empty_palette",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::Shape(_) => "shape",
            Error::ModelConfig(_) => "model_config",
            Error::EmptyBatch => "empty_batch",
            Error::NonFinite { .. } => "non_finite",
            Error::Plan(_) => "plan",
            Error::PoolDeficit { .. } => "pool_deficit",
            Error::KonkleDepth { .. } => "konkle_depth",
            Error::UnknownId(_) => "unknown_id",
            Error::EmptyGroup(_) => "empty_group",
            Error::Container(_) => "container",
            Error::Checkpoint(_) => "checkpoint",
            Error::CsvSchema { .. } => "csv_schema",
            Error::Config(_) => "config",
            Error::Locked(_) => "locked",
            Error::VocabMismatch { .. } => "vocab_mismatch",
            Error::Json { .. } => "json",
            Error::Csv(_) => "csv",
            Error::Image(_) => "image",
        }
    }
}
