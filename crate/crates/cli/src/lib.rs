//! Operator entry point for locauth: key setup, registration, scenario runs,
//! attack games and test vectors.

pub mod commands;
pub mod keystore;
pub mod vectors;

pub use commands::{CliError, Game, RunOptions, EXIT_FAIL, EXIT_INVALID, EXIT_OK};
pub use keystore::{Keystore, KeystoreError};
