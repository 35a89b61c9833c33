use thiserror::Error;

/// Errors raised across the layout pipeline.
#[derive(Debug, Error)]
pub enum GlamError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported version: {0}")]
    Version(String),

    #[error("unknown category {0:?}")]
    Schema(String),

    #[error("unrecognized DocLayNet record: {0}")]
    Adapter(String),

    #[error("segment has no member rects")]
    EmptySegment,

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid checkpoint: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GlamError> = std::result::Result<T, E>;

impl GlamError {
    /// Converts a serde_json error into a [`GlamError::Parse`] carrying the
    /// byte offset of the failure within `input`.
    pub fn from_json(err: &serde_json::Error, input: &[u8]) -> Self {
        GlamError::Parse {
            offset: byte_offset(input, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

/// Maps serde_json's 1-based (line, column) onto a byte offset.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut line_start = 0;
    for (i, &b) in input.iter().enumerate() {
        if current == line {
            break;
        }
        if b == b'\n' {
            current += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(input.len())
}
