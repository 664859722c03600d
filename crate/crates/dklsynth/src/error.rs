//! Failure classes and their process exit codes.

use std::fmt;

use dklsynth_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

/// Bad or unresolvable configuration.
#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A soundness audit or a validation check failed.
#[derive(Debug)]
pub struct AuditFailure(pub String);

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AuditFailure {}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Factorization { .. }
        | CoreError::NonFiniteLoss { .. }
        | CoreError::InfeasibleIntervals { .. }
        | CoreError::NonPositiveVariance(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Exit code for an error chain. Input files that cannot be read or parsed
/// count as configuration errors.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<AuditFailure>() {
            return EXIT_AUDIT;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
    }
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() || cause.is::<std::io::Error>() {
            return EXIT_CONFIG;
        }
    }
    1
}
