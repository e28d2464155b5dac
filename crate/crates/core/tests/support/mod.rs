//! Test-only oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

pub mod fd;
pub mod jacobi;
pub mod nets;
