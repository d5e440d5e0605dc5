//! Versioned JSON model files.

use super::ModelBundle;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const MODEL_VERSION: u32 = 1;

/// Write the bundle as pretty JSON. Floats round-trip exactly.
pub fn save_model(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    bundle.validate()?;
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, bundle)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let bundle: ModelBundle = serde_json::from_reader(reader)
        .map_err(|e| Error::Model(format!("unreadable model file: {e}")))?;
    bundle.validate()?;
    Ok(bundle)
}
