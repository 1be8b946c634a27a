use std::path::PathBuf;

use crate::raster::BandTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("TIFF error: {0}")]
    Tiff(#[from] tiff::TiffError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    #[error("missing geotransform (no ModelPixelScale/ModelTiepoint tags)")]
    MissingGeotransform,

    #[error("anisotropic pixels unsupported (x = {x}, y = {y})")]
    AnisotropicPixels { x: f64, y: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids not co-registered: {0}")]
    NotCoRegistered(String),

    #[error("missing requested band tag {0}")]
    MissingTag(BandTag),

    #[error("band kind mismatch: expected {expected} band")]
    BandKind { expected: &'static str },

    #[error("target extent does not intersect the source grid")]
    EmptyIntersection,

    #[error("grid {width}x{height} is smaller than the required {required}x{required} window")]
    GridTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unmapped label {value} at pixel {index} (row {row}, col {col})")]
    UnmappedLabel {
        value: u32,
        index: usize,
        row: usize,
        col: usize,
    },

    #[error("invalid class id {0}")]
    InvalidClassId(u32),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("invalid class scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid transition rules: {0}")]
    InvalidRules(String),

    #[error("coverage gap at pixel (row {row}, col {col})")]
    CoverageGap { row: usize, col: usize },

    #[error("score channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("class count mismatch: {0} vs {1}")]
    ClassCountMismatch(usize, usize),

    #[error("empty confusion matrix")]
    EmptyMatrix,

    #[error("all per-class values are undefined")]
    AllUndefined,

    #[error("category-set mismatch: {0}")]
    CategoryMismatch(String),

    #[error("invalid scene spec: {0}")]
    InvalidSceneSpec(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("oracle violation: {0}")]
    OracleViolation(String),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 3 for oracle violations, 1 for I/O failures, 2 for
    /// everything else (invalid inputs, configs and parameters).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OracleViolation(_) => 3,
            Error::Io(_) | Error::IoPath { .. } => 1,
            _ => 2,
        }
    }
}
