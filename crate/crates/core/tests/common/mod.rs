//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod asm;
pub mod campaigns;
pub mod intrusion;
pub mod isa;
pub mod oracles;
