//! The `tlsfd` command line and the HTTP JSON service.

mod cli;
mod http;

pub use cli::{run, Cli, Command};
pub use http::{router, serve, spectrum_preview, ServiceState, PREVIEW_FACTOR, PREVIEW_LEN};

/// Port used by `serve` when neither `--port` nor `TLSFD_PORT` is given.
pub const DEFAULT_PORT: u16 = 8080;
