//! Tolerant parsing of model responses: extracts the JSON object from
//! surrounding prose or code fences, normalizes labels, and enforces the
//! response invariants.

use std::collections::BTreeMap;

use super::{ConditioningResponse, ProviderError, MAX_CANDIDATE_LABELS};
use crate::object_model::BACKGROUND_LABEL;

/// Trim plus ASCII lowercasing — the single normalization applied to every
/// label crossing the provider boundary. Idempotent.
pub fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Finds and parses the first JSON object in `raw`, tolerating prose and
/// code fences around it.
pub fn extract_json(raw: &str) -> Option<serde_json::Value> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(trimmed) {
        if v.is_object() {
            return Some(v);
        }
    }
    // scan for balanced top-level {...} candidates
    let bytes = trimmed.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' => {
                if depth > 0 {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &trimmed[start.unwrap()..=i];
                        if let Ok(v) = serde_json::from_str::<serde_json::Value>(candidate) {
                            if v.is_object() {
                                return Some(v);
                            }
                        }
                        start = None;
                    }
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a conditioning answer and verifies both labels are members of
/// `labels` (after normalization on both sides).
pub fn parse_conditioning_response(
    raw: &str,
    labels: &[String],
) -> Result<ConditioningResponse, ProviderError> {
    let value = extract_json(raw).ok_or_else(|| {
        ProviderError::MalformedResponse(format!("no JSON object in response: {}", snippet(raw)))
    })?;
    let field = |name: &str| -> Result<String, ProviderError> {
        value
            .get(name)
            .and_then(|v| v.as_str())
            .map(normalize_label)
            .ok_or_else(|| {
                ProviderError::MalformedResponse(format!("missing string field {name:?}"))
            })
    };
    let grasp_label = field("grasp_label")?;
    let task_label = field("task_label")?;
    let allowed: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
    for label in [&grasp_label, &task_label] {
        if !allowed.contains(label) {
            return Err(ProviderError::UnknownLabel(label.clone()));
        }
    }
    Ok(ConditioningResponse {
        grasp_label,
        task_label,
    })
}

/// Parses a candidate-label answer: unique normalized labels, background
/// stripped, capped at [`MAX_CANDIDATE_LABELS`].
pub fn parse_candidate_response(raw: &str) -> Result<Vec<String>, ProviderError> {
    let value = extract_json(raw).ok_or_else(|| {
        ProviderError::MalformedResponse(format!("no JSON object in response: {}", snippet(raw)))
    })?;
    let arr = value
        .get("labels")
        .and_then(|v| v.as_array())
        .ok_or_else(|| ProviderError::MalformedResponse("missing \"labels\" array".into()))?;
    let mut labels: Vec<String> = Vec::new();
    for item in arr {
        let raw_label = item.as_str().ok_or_else(|| {
            ProviderError::MalformedResponse("labels must be strings".into())
        })?;
        let label = normalize_label(raw_label);
        if label.is_empty() || label == BACKGROUND_LABEL {
            continue;
        }
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    if labels.is_empty() {
        return Err(ProviderError::ValidationFailed(
            "no usable candidate labels".into(),
        ));
    }
    labels.truncate(MAX_CANDIDATE_LABELS);
    Ok(labels)
}

/// Parses a mask-assignment answer. Every key must be a known mask id and
/// every value a candidate label or `background`; masks missing from the
/// answer are assigned `background`.
pub fn parse_assignment_response(
    raw: &str,
    mask_ids: &[u32],
    candidate_labels: &[String],
) -> Result<BTreeMap<u32, String>, ProviderError> {
    let value = extract_json(raw).ok_or_else(|| {
        ProviderError::MalformedResponse(format!("no JSON object in response: {}", snippet(raw)))
    })?;
    let map = value
        .get("assignments")
        .and_then(|v| v.as_object())
        .ok_or_else(|| {
            ProviderError::MalformedResponse("missing \"assignments\" object".into())
        })?;
    let allowed: Vec<String> = candidate_labels.iter().map(|l| normalize_label(l)).collect();
    let mut out: BTreeMap<u32, String> = BTreeMap::new();
    for (key, val) in map {
        let id: u32 = key.trim().parse().map_err(|_| {
            ProviderError::MalformedResponse(format!("mask id {key:?} is not an integer"))
        })?;
        if !mask_ids.contains(&id) {
            return Err(ProviderError::ValidationFailed(format!(
                "assignment references unknown mask id {id}"
            )));
        }
        let label = val
            .as_str()
            .map(normalize_label)
            .ok_or_else(|| ProviderError::MalformedResponse("labels must be strings".into()))?;
        if label != BACKGROUND_LABEL && !allowed.contains(&label) {
            return Err(ProviderError::UnknownLabel(label));
        }
        out.insert(id, label);
    }
    for &id in mask_ids {
        out.entry(id).or_insert_with(|| BACKGROUND_LABEL.to_string());
    }
    Ok(out)
}

fn snippet(raw: &str) -> String {
    let t = raw.trim();
    let cut: String = t.chars().take(80).collect();
    if cut.len() < t.len() {
        format!("{cut:?}…")
    } else {
        format!("{t:?}")
    }
}
