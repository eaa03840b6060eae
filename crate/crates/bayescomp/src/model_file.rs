//! Versioned JSON model files.

use std::fs;
use std::path::Path;

use bayescomp_core::compensation::Provenance;
use bayescomp_core::Hmm;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: Hmm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ModelFile {
    pub fn new(model: Hmm, provenance: Option<Provenance>) -> Self {
        Self { schema_version: SCHEMA_VERSION, model, provenance }
    }

    /// Pretty-printed JSON with a trailing newline; equal files give equal bytes.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(HarnessError::json(path))?;
        check_version(file.schema_version, path)?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_canonical_json()).map_err(HarnessError::io(path))
    }
}

pub(crate) fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(HarnessError::Format {
            path: path.into(),
            detail: format!("schema_version {found} is not supported (expected {SCHEMA_VERSION})"),
        });
    }
    Ok(())
}
