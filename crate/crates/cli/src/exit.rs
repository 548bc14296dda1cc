use forkeffect::Error;

pub const SUCCESS: i32 = 0;
pub const INPUT: i32 = 2;
pub const ESTIMATION: i32 = 3;
pub const PARTIAL: i32 = 4;
pub const USAGE: i32 = 64;

/// A command outcome other than success: exit code plus a one-line cause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(INPUT, message)
    }
}

pub fn code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidSpec(_) | Error::InvalidParameters(_) => USAGE,
        Error::Estimation(_) | Error::Singular(_) | Error::NonFinite { .. } => ESTIMATION,
        _ => INPUT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_for(&e), e.to_string())
    }
}

/// Attach the file an error came from, unless the message already names it.
pub fn at_path(path: &std::path::Path, e: Error) -> Failure {
    let shown = path.display().to_string();
    let msg = e.to_string();
    let message = if msg.contains(&shown) {
        msg
    } else {
        format!("{shown}: {msg}")
    };
    Failure::new(code_for(&e), message)
}
