//! Command implementations and file formats behind the `phononwalk` binary,
//! exposed as a library so integration tests can parse what the commands
//! write.

pub mod commands;
pub mod error;
pub mod files;
pub mod scenario;
