//! File formats, parallel runners and the command-line front end for `topobetti-core`.

pub mod cli;
pub mod format;
pub mod parallel;
pub mod report;
