//! File formats, the model store and the command line around
//! [`expertgate_core`].
//!
//! - [`dataset`]: `EGD1` binary and CSV datasets
//! - [`weights`]: the `EGW1` layer container
//! - [`store`]: store directories with a manifest, gates and experts
//! - [`report`]: routing, relatedness and benchmark reports
//! - [`cli`]: the `expertgate` command

pub mod cli;
pub mod dataset;
mod error;
pub mod report;
pub mod store;
pub mod weights;

pub use error::{Error, Result};

use std::path::Path;

use expertgate_core::synth::SyntheticTaskSpec;

/// Reads a synthetic task spec from JSON.
pub fn load_task_spec(path: &Path) -> Result<SyntheticTaskSpec> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let spec: SyntheticTaskSpec = serde_json::from_slice(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}
