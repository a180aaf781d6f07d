//! Replay memory and the online validation buffer.

mod replay;
mod validation;

use std::path::Path;

pub use replay::{ReplayBuffer, ReplayStrategy};
pub use validation::{ValidationBuffer, ValidationStrategy};

use crate::error::{Error, Result};

/// Writes both buffers' states (event ids only) to a JSON file for debugging.
pub fn dump_state(path: &Path, replay: &ReplayBuffer, validation: &ValidationBuffer) -> Result<()> {
    let value = serde_json::json!({
        "replay": replay.dump(),
        "validation": validation.dump(),
    });
    let text = serde_json::to_string_pretty(&value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
