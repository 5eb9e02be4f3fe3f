use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::PromptError;

const DEFAULT_TEMPLATE: &str = include_str!("../../templates/default.toml");

/// The prompt wording, loaded from a TOML file with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub task_segmentation: String,
    pub task_chapter: String,
    pub output_comprehensive: String,
    pub output_concise: String,
    pub output_chapter: String,
    pub explain: String,
    pub scope: String,
    /// Hex SHA-256 of the template source.
    #[serde(skip)]
    pub sha256: String,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut template: PromptTemplate =
            toml::from_str(source).map_err(|e| PromptError::Template(e.to_string()))?;
        template.sha256 = hex_sha256(source.as_bytes());
        Ok(template)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let source = fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&source)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Replaces `{key}` occurrences. Unknown placeholders are left verbatim.
pub(crate) fn fill(text: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        match tail.find('}') {
            Some(close) if vars.contains_key(&tail[..close]) => {
                out.push_str(&vars[&tail[..close]]);
                rest = &tail[close + 1..];
            }
            _ => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}
