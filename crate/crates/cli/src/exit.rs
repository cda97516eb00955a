//! Process exit codes. Machine consumers rely on these values; keep the
//! table in the README in step.

use std::fmt;
use std::process::ExitCode;

use aegis_core::assessment::AssessmentError;
use aegis_core::filter::FilterError;
use aegis_core::geometry::io::FormatError;
use aegis_core::geometry::GeometryError;
use aegis_core::perception::PerceptionError;
use aegis_core::sim::SimError;

pub const OK: u8 = 0;
pub const INTERNAL: u8 = 1;
/// Command-line usage errors (also what clap exits with).
pub const USAGE: u8 = 2;
pub const SCENARIO_INVALID: u8 = 3;
pub const IO: u8 = 4;
pub const DEGENERATE_INPUT: u8 = 5;
pub const UNSAFE_START: u8 = 6;
pub const FILTER: u8 = 7;
pub const PERCEPTION: u8 = 8;
pub const ASSESSMENT: u8 = 9;
/// Malformed trace, point or ellipsoid file.
pub const PARSE: u8 = 10;
pub const GEOMETRY: u8 = 11;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(IO, format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn geometry_code(e: &GeometryError) -> u8 {
    match e {
        GeometryError::DegenerateInput { .. } => DEGENERATE_INPUT,
        _ => GEOMETRY,
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self::new(geometry_code(&e), e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let code = match &e {
            FormatError::Io { .. } => IO,
            FormatError::Geometry(g) => geometry_code(g),
            _ => PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        let code = match &e {
            FilterError::UnsafeStart { .. } => UNSAFE_START,
            _ => FILTER,
        };
        Self::new(code, e.to_string())
    }
}

impl From<PerceptionError> for CliError {
    fn from(e: PerceptionError) -> Self {
        Self::new(PERCEPTION, e.to_string())
    }
}

impl From<AssessmentError> for CliError {
    fn from(e: AssessmentError) -> Self {
        Self::new(ASSESSMENT, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ScenarioInvalid { .. } => Self::new(SCENARIO_INVALID, e.to_string()),
            SimError::TraceFormat { .. } => Self::new(PARSE, e.to_string()),
            SimError::Io { .. } => Self::new(IO, e.to_string()),
            SimError::EmptyResults => Self::new(INTERNAL, e.to_string()),
            SimError::Filter(f) => f.into(),
            SimError::Perception(p) => p.into(),
            SimError::Assessment(a) => a.into(),
            SimError::Geometry(g) => g.into(),
        }
    }
}
