//! Command-line and HTTP front ends for the warehouse engine.
//!
//! Every command is a function returning an [`Outcome`] so that the binary
//! and the tests share one code path.

pub mod commands;
pub mod server;

pub use commands::{cube, ingest, query, validate, CubeOps, OutputFormat, Outcome};
pub use server::{router, serve, AppState, ServerConfig};

use std::path::{Path, PathBuf};

/// A warehouse is named either by its directory or by its model document.
pub fn model_path(warehouse: &Path) -> PathBuf {
    if warehouse.is_dir() {
        warehouse.join(xwacoda_core::store::MODEL_FILE)
    } else {
        warehouse.to_path_buf()
    }
}

/// `@path` reads the file, anything else is taken literally.
pub fn inline_or_file(arg: &str) -> std::io::Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path),
        None => Ok(arg.to_string()),
    }
}
