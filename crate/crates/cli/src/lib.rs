//! Library half of the `imk` command-line tool: input schemas, reports and
//! the command implementations.

pub mod commands;
pub mod error;
pub mod presets;
pub mod report;
pub mod schema;
