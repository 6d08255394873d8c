use std::fmt;

/// Broad class of a failure; also picks the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Input,
    Compute,
    Io,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Input => "input",
            ErrorKind::Compute => "compute",
            ErrorKind::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Config => 3,
            ErrorKind::Input => 4,
            ErrorKind::Compute => 5,
            ErrorKind::Io => 6,
        }
    }
}

/// A failure reported on one line as
/// `error kind=<kind> [file=<file> line=<n>] msg=<text>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub file: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            file: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn at(kind: ErrorKind, file: &str, line: usize, message: impl Into<String>) -> Self {
        Self {
            kind,
            file: Some(file.to_string()),
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Compute, message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error kind={}", self.kind.as_str())?;
        if let Some(file) = &self.file {
            write!(f, " file={}", file.replace(char::is_whitespace, "_"))?;
        }
        if let Some(line) = self.line {
            write!(f, " line={line}")?;
        }
        let msg: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, " msg={msg}")
    }
}

impl std::error::Error for CliError {}

impl From<tsr_core::TsrError> for CliError {
    fn from(e: tsr_core::TsrError) -> Self {
        CliError::compute(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
