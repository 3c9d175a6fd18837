//! Reply grammars.
//!
//! Structured tasks reply with a fenced JSON block; the first block that
//! parses and carries the task's keys wins. Scoring replies end with a
//! `SCORE: x/10` line after free-text rationale. Report prose is free text.

use serde_json::{Map, Value};

use super::TaskKind;

pub fn parse(task: TaskKind, raw: &str) -> Option<Value> {
    match task {
        TaskKind::Score => parse_score(raw),
        TaskKind::ReportProse => {
            let text = raw.trim();
            (!text.is_empty()).then(|| serde_json::json!({ "text": text }))
        }
        _ => json_blocks(raw).into_iter().find(|v| well_formed(task, v)),
    }
}

/// Inverse of [`parse`] for well-formed documents.
pub fn render(task: TaskKind, parsed: &Value) -> String {
    match task {
        TaskKind::Score => {
            let rationale = parsed["rationale"].as_str().unwrap_or_default();
            format!("{}\nSCORE: {}/{}", rationale, parsed["score"], parsed["scale"])
        }
        TaskKind::ReportProse => parsed["text"].as_str().unwrap_or_default().to_string(),
        _ => format!("```json\n{parsed}\n```"),
    }
}

fn well_formed(task: TaskKind, v: &Value) -> bool {
    let Some(obj) = v.as_object() else { return false };
    if !task.reply_keys().iter().all(|k| obj.contains_key(*k)) {
        return false;
    }
    match task {
        TaskKind::InferComplexity => obj["k_max"].is_number() && obj["d_max"].is_number(),
        TaskKind::Summarize => {
            obj["label"].as_str().is_some_and(|s| !s.trim().is_empty()) && obj["description"].is_string()
        }
        TaskKind::Verify => obj["score"].is_number(),
        TaskKind::ElicitMatrix => obj["entries"].is_array(),
        TaskKind::LeaderConstraints => obj["constraints"].is_array(),
        TaskKind::Score | TaskKind::ReportProse => true,
    }
}

/// JSON objects found in fenced blocks, in order. Falls back to the whole
/// text when it contains no fence.
fn json_blocks(raw: &str) -> Vec<Value> {
    let mut out = Vec::new();
    let mut rest = raw;
    let mut fenced = false;
    while let Some(start) = rest.find("```") {
        fenced = true;
        let after = &rest[start + 3..];
        // Skip an optional language tag on the opening fence line.
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let Some(end) = body.find("```") else { break };
        if let Ok(v) = serde_json::from_str::<Value>(body[..end].trim()) {
            out.push(v);
        }
        rest = &body[end + 3..];
    }
    if !fenced {
        if let Ok(v) = serde_json::from_str::<Value>(raw.trim()) {
            out.push(v);
        }
    }
    out
}

fn parse_score(raw: &str) -> Option<Value> {
    let lines: Vec<&str> = raw.lines().collect();
    let (idx, line) = lines.iter().enumerate().rev().find(|(_, l)| l.trim_start().starts_with("SCORE:"))?;
    let fraction = line.trim_start()["SCORE:".len()..].trim();
    let (num, den) = fraction.split_once('/')?;
    let score: f64 = num.trim().parse().ok()?;
    let scale: f64 = den.trim().parse().ok()?;
    if !score.is_finite() || !scale.is_finite() || scale <= 0.0 {
        return None;
    }
    let rationale = lines[..idx].join("\n").trim().to_string();
    let mut obj = Map::new();
    obj.insert("rationale".into(), Value::String(rationale));
    obj.insert("score".into(), serde_json::Number::from_f64(score)?.into());
    obj.insert("scale".into(), serde_json::Number::from_f64(scale)?.into());
    Some(Value::Object(obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn first_valid_fenced_block_wins() {
        let raw = "Here you go:\n```json\n{\"oops\": 1}\n```\nand\n```json\n{\"k_max\": 7, \"d_max\": 3}\n```";
        assert_eq!(parse(TaskKind::InferComplexity, raw), Some(json!({"k_max": 7, "d_max": 3})));
    }

    #[test]
    fn bare_json_accepted_without_fences() {
        assert_eq!(parse(TaskKind::Verify, " {\"score\": 0.4} "), Some(json!({"score": 0.4})));
    }

    #[test]
    fn unparseable_replies_yield_none() {
        assert_eq!(parse(TaskKind::InferComplexity, "lots"), None);
        assert_eq!(parse(TaskKind::Summarize, "```json\n{\"label\": \"\", \"description\": \"x\"}\n```"), None);
        assert_eq!(parse(TaskKind::Score, "I would say seven"), None);
        assert_eq!(parse(TaskKind::Score, "SCORE: 7/0"), None);
        assert_eq!(parse(TaskKind::ReportProse, "   "), None);
    }

    #[test]
    fn score_line_parsed() {
        let v = parse(TaskKind::Score, "Good pool.\nKid friendly.\nSCORE: 7/10").unwrap();
        assert_eq!(v["score"], json!(7.0));
        assert_eq!(v["scale"], json!(10.0));
        assert_eq!(v["rationale"], json!("Good pool.\nKid friendly."));
    }

    #[test]
    fn round_trip_fixtures() {
        let fixtures = [
            (TaskKind::InferComplexity, json!({"k_max": 5, "d_max": 2})),
            (TaskKind::Summarize, json!({"label": "pool kids", "description": "Covers pool."})),
            (TaskKind::Verify, json!({"score": 0.75})),
            (TaskKind::ElicitMatrix, json!({"entries": [{"i": "0.1", "j": "0.2", "value": 3.0}]})),
            (TaskKind::LeaderConstraints, json!({"constraints": [{"i": "a", "j": "b", "beta": 3.0}]})),
            (TaskKind::Score, json!({"rationale": "ok", "score": 6.5, "scale": 10.0})),
            (TaskKind::ReportProse, json!({"text": "A wins."})),
        ];
        for (task, doc) in fixtures {
            assert_eq!(parse(task, &render(task, &doc)).as_ref(), Some(&doc), "{task}");
        }
    }
}
