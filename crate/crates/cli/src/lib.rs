//! Experiment harness around `mrfil-core`: INI configuration, pipeline
//! subcommands, deterministic run directories, and SVG learning curves.

pub mod commands;
pub mod config;
pub mod svg;

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFICATION_VIOLATION: i32 = 2;
    pub const RUNTIME: i32 = 3;
}

/// Maps a core error to its exit code: configuration and format problems are
/// usage errors, everything else is a runtime failure.
pub fn exit_code_for(err: &mrfil_core::Error) -> i32 {
    match err {
        mrfil_core::Error::Config(_) | mrfil_core::Error::Format(_) => exit_code::USAGE,
        _ => exit_code::RUNTIME,
    }
}
