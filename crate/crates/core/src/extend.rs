//! Rendering multi-valued fields as one joined cell or as exploded rows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_DELIMITER: &str = "|";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendMode {
    #[default]
    Join,
    Explode,
}

impl fmt::Display for ExtendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtendMode::Join => "join",
            ExtendMode::Explode => "explode",
        })
    }
}

impl FromStr for ExtendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "join" => Ok(ExtendMode::Join),
            "explode" => Ok(ExtendMode::Explode),
            other => Err(format!("unknown mode `{other}` (expected join or explode)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertySettings {
    pub mode: ExtendMode,
    pub delimiter: String,
}

impl Default for PropertySettings {
    fn default() -> Self {
        Self {
            mode: ExtendMode::Join,
            delimiter: DEFAULT_DELIMITER.to_owned(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("delimiter must not be empty in join mode")]
pub struct EmptyDelimiter;

impl PropertySettings {
    pub fn validate(&self) -> Result<(), EmptyDelimiter> {
        if self.mode == ExtendMode::Join && self.delimiter.is_empty() {
            return Err(EmptyDelimiter);
        }
        Ok(())
    }

    /// Cells for one field: a single joined cell, or one cell per value.
    /// No values gives no cells in either mode.
    pub fn render(&self, values: &[String]) -> Vec<String> {
        if values.is_empty() {
            return Vec::new();
        }
        match self.mode {
            ExtendMode::Join => vec![join_values(values, &self.delimiter)],
            ExtendMode::Explode => explode_values(values),
        }
    }
}

/// Joins values with `delimiter`; occurrences of the delimiter inside a
/// value are escaped by doubling.
pub fn join_values(values: &[String], delimiter: &str) -> String {
    let doubled = delimiter.repeat(2);
    values
        .iter()
        .map(|v| v.replace(delimiter, &doubled))
        .collect::<Vec<_>>()
        .join(delimiter)
}

pub fn explode_values(values: &[String]) -> Vec<String> {
    values.to_vec()
}
