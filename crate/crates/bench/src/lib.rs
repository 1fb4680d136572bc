//! Experiment harness behind the `dstc` binary.

pub mod csr;
pub mod fixture;
pub mod report;
pub mod run;
pub mod scenario;
