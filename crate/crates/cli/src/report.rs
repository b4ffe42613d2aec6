use std::fmt;
use std::path::Path;

use serde::Serialize;
use zerostyle_core::Error;

pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
pub const EXIT_ENGINE: u8 = 5;
pub const EXIT_VERIFY: u8 = 6;
pub const EXIT_RESOURCE: u8 = 7;

/// One-line error: `error[<kind>]: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }

    /// Wraps an engine error, prefixing `context` (usually a path).
    pub fn engine(context: &str, e: Error) -> Self {
        let (code, kind) = match e.root() {
            Error::Io(_) | Error::Image(_) => (EXIT_IO, "io"),
            Error::Format(_) | Error::BlobRange { .. } | Error::Validation(_) => (EXIT_FORMAT, "format"),
            Error::ResourceLimit { .. } => (EXIT_RESOURCE, "resource"),
            _ => (EXIT_ENGINE, "engine"),
        };
        let message = if context.is_empty() {
            e.to_string()
        } else {
            format!("{context}: {e}")
        };
        Self::new(code, kind, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {one_line}", self.kind)
    }
}

pub fn ctx(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::engine(&path.display().to_string(), e)
}

/// Prints pretty JSON to stdout and optionally writes the same bytes to `file`.
pub fn emit<T: Serialize>(value: &T, file: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    print!("{text}");
    if let Some(p) = file {
        std::fs::write(p, &text).map_err(|e| CliError::new(EXIT_IO, "io", format!("{}: {e}", p.display())))?;
    }
    Ok(())
}
