//! Library side of the `har` command: settings resolution, backend
//! selection and the subcommands, exposed so tests can drive them with an
//! injected backend.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_classify, cmd_eval, cmd_knowledge, cmd_run, cmd_validate, open_backend, with_cache, RunOutcome};
pub use config::{BackendSpec, Options};
pub use error::{CliError, EXIT_DOMAIN, EXIT_USAGE};
