//! Checks shared by the integration tests and the acceptance run. Each one
//! returns a short summary on success and the first discrepancy otherwise.
#![allow(dead_code)]

pub mod oracles;
pub mod structure;
