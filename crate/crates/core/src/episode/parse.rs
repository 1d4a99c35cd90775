//! Tagged-response parsing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::HighLevelDecision;

pub const TAGS: [&str; 3] = ["think", "think_summary", "action"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing <{0}> tag")]
    MissingTag(&'static str),
    #[error("label {0} is not among the overlaid labels")]
    HallucinatedLabel(char),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think: String,
    pub think_summary: String,
    pub decision: HighLevelDecision,
}

/// Body of the first `<tag>…</tag>` pair, if both delimiters are present.
pub fn extract_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(&text[start..end])
}

/// Which of `think`, `think_summary`, `action` are present.
pub fn tag_presence(text: &str) -> [bool; 3] {
    TAGS.map(|t| extract_tag(text, t).is_some())
}

/// Normalize free-form action text into a decision, without label checks.
pub fn normalize_action(raw: &str) -> Result<HighLevelDecision, ParseError> {
    let t = raw
        .trim()
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .to_ascii_lowercase();
    let t = t
        .strip_prefix("label ")
        .or_else(|| t.strip_prefix("waypoint "))
        .unwrap_or(&t)
        .trim();
    let squashed: String = t.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    match squashed.as_str() {
        "stop" => Ok(HighLevelDecision::Stop),
        "turnaround" => Ok(HighLevelDecision::TurnAround),
        s if s.len() == 1 && s.as_bytes()[0].is_ascii_alphabetic() => Ok(HighLevelDecision::GoTo(
            s.chars().next().unwrap().to_ascii_uppercase(),
        )),
        _ => Err(ParseError::UnknownAction(raw.trim().to_string())),
    }
}

/// Parse a tagged response; tags may appear in any order. `labels` are the
/// letters overlaid on the panorama.
pub fn parse_response(text: &str, labels: &[char]) -> Result<ParsedResponse, ParseError> {
    let mut bodies = [""; 3];
    for (i, tag) in TAGS.iter().enumerate() {
        bodies[i] = extract_tag(text, tag).ok_or(ParseError::MissingTag(tag))?;
    }
    let decision = normalize_action(bodies[2])?;
    if let HighLevelDecision::GoTo(l) = decision {
        if !labels.contains(&l) {
            return Err(ParseError::HallucinatedLabel(l));
        }
    }
    Ok(ParsedResponse {
        think: bodies[0].trim().to_string(),
        think_summary: bodies[1].trim().to_string(),
        decision,
    })
}

/// Render the three tags in canonical order.
pub fn format_response(think: &str, think_summary: &str, decision: HighLevelDecision) -> String {
    format!(
        "<think>{think}</think><think_summary>{think_summary}</think_summary><action>{}</action>",
        decision.action_text()
    )
}
