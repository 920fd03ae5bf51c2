//! Configuration, run manifests and stage orchestration for the `curlground`
//! command-line tool.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::{parse_config, ConfigError, RunConfig};
pub use manifest::{read_manifest, write_manifest, RunManifest};
pub use pipeline::{run, run_pipeline, Command, Inputs};
