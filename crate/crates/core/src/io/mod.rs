//! Configuration files, array presets and the CSV formats exchanged with the
//! command-line tool.

pub mod config;
pub mod formats;

pub use config::{ArrayModel, FitConfig, MaskChoice, RunConfig};
