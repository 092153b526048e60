//! Library surface of the `cider` binary: command argument types and runners,
//! exposed so integration tests can drive commands in-process.

pub mod commands;

use cider_core::CiderError;

/// Exit code contract: 0 success, 2 configuration or contract error,
/// 3 numeric failure.
pub fn exit_code(err: &CiderError) -> i32 {
    match err {
        CiderError::Numeric { .. } => 3,
        _ => 2,
    }
}
