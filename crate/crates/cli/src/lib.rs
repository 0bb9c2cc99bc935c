//! Library surface of the experiment runner: configuration schema, run
//! manifests, and the task implementations behind the `fwminact` binary.

pub mod config;
pub mod manifest;
pub mod tasks;
