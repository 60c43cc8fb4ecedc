//! Configuration, file formats, verification suites and the command-line front end
//! for `hodgelab-core`.

pub mod cli;
pub mod config;
pub mod format;
pub mod report;
pub mod suites;
