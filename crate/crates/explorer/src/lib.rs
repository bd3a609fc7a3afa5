//! File formats, parallel drivers and the batch pipeline around `owa-core`.

pub mod ascii;
pub mod config;
pub mod error;
pub mod parallel;
pub mod pipeline;
pub mod prep;
pub mod render;
pub mod stack;
pub mod store;
pub mod synth;
pub mod tables;

pub use config::PipelineConfig;
pub use error::{Error, Result};
