//! Experiment runners, file formats and the command-line front end built on
//! [`timelag_core`].

pub use timelag_core::*;

pub mod bench;
pub mod cli;
pub mod experiments;
pub mod io;
pub mod report;
