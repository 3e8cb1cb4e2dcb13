//! Front end of the `awopt` binary: configuration layering, run
//! directories and manifests, and the batch commands.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod matrix;

use awopt_core::Error;

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

pub const EXIT_PARTIAL: u8 = 4;
