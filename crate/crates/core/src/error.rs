//! Error types shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The analytic persistence derivative is singular at H = 0.
    #[error("persistence derivative is singular at H = 0; use a discrete delta instead")]
    DerivativeSingular,

    /// The biodiversity index is undefined for an empty species list.
    #[error("biodiversity index requires at least one species")]
    EmptySpeciesList,

    /// A requested target index cannot be reached with the available
    /// positive-benefit candidates.
    #[error("target index {target} unreachable: maximum achievable index is {max_achievable}")]
    TargetUnreachable { target: f64, max_achievable: f64 },

    /// Malformed input file. `line` is 1-based; 0 means the whole file.
    #[error("{}: {msg}", format_location(path, *line))]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    /// A raster's dimensions do not match the scenario grid.
    #[error("{path}: dimension mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    DimensionMismatch {
        path: String,
        expected_rows: u32,
        expected_cols: u32,
        found_rows: u32,
        found_cols: u32,
    },

    /// A class code not declared in the scenario's class table.
    #[error("unknown habitat class {code} referenced by {context}")]
    UnknownClass { code: i32, context: String },

    /// A cell id outside the scenario grid.
    #[error("unknown cell {cell_id} referenced by {context} (grid has {n_cells} cells)")]
    UnknownCell {
        cell_id: u64,
        context: String,
        n_cells: u64,
    },

    /// A shadow-price quote and a project delta were computed under
    /// different z values or targets.
    #[error("configuration mismatch: {0}")]
    TagMismatch(String),

    /// The scenario failed semantic validation.
    #[error("scenario validation failed:\n{0}")]
    InvalidScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_location(path: &str, line: u64) -> String {
    if line == 0 {
        path.to_string()
    } else {
        format!("{path}:{line}")
    }
}
