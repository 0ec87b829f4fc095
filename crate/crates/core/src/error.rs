//! The closed set of errors produced by every stage of the pipeline.
//!
//! Each variant's `Display` output starts with the variant name followed by a
//! colon, so messages are stable enough for golden tests and the CLI can print
//! them verbatim on failure.

use std::fmt;

/// Where in the input an error was found. Every field is optional because
/// not every stage knows about files, sheets or rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub file: Option<String>,
    pub sheet: Option<String>,
    pub row: Option<usize>,
}

impl Location {
    pub fn file(file: impl Into<String>) -> Self {
        Location {
            file: Some(file.into()),
            ..Location::default()
        }
    }

    pub fn sheet(sheet: impl Into<String>) -> Self {
        Location {
            sheet: Some(sheet.into()),
            ..Location::default()
        }
    }

    pub fn with_sheet(mut self, sheet: impl Into<String>) -> Self {
        self.sheet = Some(sheet.into());
        self
    }

    pub fn with_row(mut self, row: usize) -> Self {
        self.row = Some(row);
        self
    }

    fn is_empty(&self) -> bool {
        self.file.is_none() && self.sheet.is_none() && self.row.is_none()
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(file) = &self.file {
            parts.push(format!("file={file}"));
        }
        if let Some(sheet) = &self.sheet {
            parts.push(format!("sheet={sheet}"));
        }
        if let Some(row) = self.row {
            parts.push(format!("row={row}"));
        }
        write!(f, "{}", parts.join(", "))
    }
}

/// Human-readable detail plus an optional input location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub detail: String,
    pub location: Location,
}

impl Context {
    pub fn new(detail: impl Into<String>) -> Self {
        Context {
            detail: detail.into(),
            location: Location::default(),
        }
    }

    pub fn at(detail: impl Into<String>, location: Location) -> Self {
        Context {
            detail: detail.into(),
            location,
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.location.is_empty() {
            write!(f, "{}", self.detail)
        } else {
            write!(f, "{} (at {})", self.detail, self.location)
        }
    }
}

impl From<String> for Context {
    fn from(detail: String) -> Self {
        Context::new(detail)
    }
}

impl From<&str> for Context {
    fn from(detail: &str) -> Self {
        Context::new(detail)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("MalformedDocument: {0}")]
    MalformedDocument(Context),
    #[error("UnknownSheet: {0}")]
    UnknownSheet(Context),
    #[error("UnknownTable: {0}")]
    UnknownTable(Context),
    #[error("UnknownFamily: {0}")]
    UnknownFamily(Context),
    #[error("UnknownPurpose: {0}")]
    UnknownPurpose(Context),
    #[error("UnknownDomain: {0}")]
    UnknownDomain(Context),
    #[error("UnsupportedYear: {0}")]
    UnsupportedYear(Context),
    #[error("AmbiguousRequest: {0}")]
    AmbiguousRequest(Context),
    #[error("NoHeader: {0}")]
    NoHeader(Context),
    #[error("ShapeMismatch: expected {expected}, got {actual} ({context})")]
    ShapeMismatch {
        expected: Shape,
        actual: Shape,
        context: Context,
    },
    #[error("NetworkError: {0}")]
    NetworkError(Context),
    #[error("IntegrityFailure: {0}")]
    IntegrityFailure(Context),
    #[error("CacheMiss: {0}")]
    CacheMiss(Context),
    #[error("DuplicateKey: {0}")]
    DuplicateKey(Context),
    #[error("MissingKeyColumn: {0}")]
    MissingKeyColumn(Context),
    #[error("MissingCodeProperty: {0}")]
    MissingCodeProperty(Context),
    #[error("NonNumericColumn: {0}")]
    NonNumericColumn(Context),
    #[error("EmptyInput: {0}")]
    EmptyInput(Context),
}

impl PipelineError {
    /// The variant name, as printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            PipelineError::MalformedDocument(_) => "MalformedDocument",
            PipelineError::UnknownSheet(_) => "UnknownSheet",
            PipelineError::UnknownTable(_) => "UnknownTable",
            PipelineError::UnknownFamily(_) => "UnknownFamily",
            PipelineError::UnknownPurpose(_) => "UnknownPurpose",
            PipelineError::UnknownDomain(_) => "UnknownDomain",
            PipelineError::UnsupportedYear(_) => "UnsupportedYear",
            PipelineError::AmbiguousRequest(_) => "AmbiguousRequest",
            PipelineError::NoHeader(_) => "NoHeader",
            PipelineError::ShapeMismatch { .. } => "ShapeMismatch",
            PipelineError::NetworkError(_) => "NetworkError",
            PipelineError::IntegrityFailure(_) => "IntegrityFailure",
            PipelineError::CacheMiss(_) => "CacheMiss",
            PipelineError::DuplicateKey(_) => "DuplicateKey",
            PipelineError::MissingKeyColumn(_) => "MissingKeyColumn",
            PipelineError::MissingCodeProperty(_) => "MissingCodeProperty",
            PipelineError::NonNumericColumn(_) => "NonNumericColumn",
            PipelineError::EmptyInput(_) => "EmptyInput",
        }
    }

    pub(crate) fn malformed(detail: impl Into<Context>) -> Self {
        PipelineError::MalformedDocument(detail.into())
    }

    pub(crate) fn missing_column(name: &str) -> Self {
        PipelineError::MissingKeyColumn(Context::new(format!("no column named {name:?}")))
    }
}

/// Table dimensions as (rows, columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
