//! Parsing of model responses into protocol directives.
//!
//! A response is scanned line by line. Recognized lines produce directives
//! in order; unrecognized lines are tolerated as free text. A description
//! line is held pending and attaches to the next progress record or subtask
//! announcement. A response that produces no directive at all, or a percent
//! line that cannot be read as a number, is malformed and triggers a retry
//! upstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Percents are clamped to this symmetric range.
pub const PERCENT_MIN: i64 = -100;
/// See [`PERCENT_MIN`].
pub const PERCENT_MAX: i64 = 100;

/// One instruction extracted from a model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    /// A frame description paired with a completion percent.
    ProgressRecord { description: String, percent: i64 },
    /// Request to open a child reasoning line for `subtask`. The response
    /// may describe the current frame first; that description rides along
    /// so the child can inherit it.
    NewSubtask {
        subtask: String,
        frame_description: Option<String>,
    },
    /// Request to see the next frame.
    NextFrame,
    /// The whole task is finished.
    TaskComplete,
}

/// A response that could not be read as any directive.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed model output: {0}")]
pub struct MalformedOutput(pub String);

fn parse_percent(text: &str) -> Result<i64, MalformedOutput> {
    let trimmed = text.trim().trim_end_matches('%').trim();
    let value: f64 = trimmed
        .parse()
        .map_err(|_| MalformedOutput(format!("unreadable percent `{text}`")))?;
    if !value.is_finite() {
        return Err(MalformedOutput(format!("non-finite percent `{text}`")));
    }
    Ok((value.round() as i64).clamp(PERCENT_MIN, PERCENT_MAX))
}

/// Parse a model response into its directives, in order of appearance.
pub fn parse_directives(text: &str) -> Result<Vec<Directive>, MalformedOutput> {
    let mut directives = Vec::new();
    let mut pending_description: Option<String> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("Frame description:") {
            pending_description = Some(rest.trim().to_string());
        } else if let Some(rest) = line
            .strip_prefix("Subtask completion percentage:")
            .or_else(|| line.strip_prefix("Task completion percentage:"))
        {
            directives.push(Directive::ProgressRecord {
                description: pending_description.take().unwrap_or_default(),
                percent: parse_percent(rest)?,
            });
        } else if let Some(rest) = line.strip_prefix("The robot needs to:") {
            directives.push(Directive::NewSubtask {
                subtask: rest.trim().to_string(),
                frame_description: pending_description.take(),
            });
        } else if line == "[next-frame]" {
            directives.push(Directive::NextFrame);
        } else if line.contains("[task-complete]") {
            directives.push(Directive::TaskComplete);
        }
    }
    if directives.is_empty() {
        return Err(MalformedOutput(
            "no directive found in response".to_string(),
        ));
    }
    Ok(directives)
}
