//! Line-oriented mutation scripts.
//!
//! Each non-blank line that does not start with `#` reads
//! `ADD|REMOVE before-load|after-load <element>`, where `<element>` is a JSON
//! object `{"tag": "script", "attrs": [["src", "..."]], "text": "..."}`.
//! `attrs` may also be given as an object; `attrs` and `text` are optional.
//! An edit is written as a REMOVE followed by an ADD.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;
use thiserror::Error;

use super::{MutationEvent, RawElement};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationPhase {
    BeforeLoad,
    AfterLoad,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct MutationSyntaxError {
    pub line: usize,
    pub reason: String,
}

pub fn parse_mutation_script(text: &str) -> Result<Vec<MutationEvent>, MutationSyntaxError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |reason: String| MutationSyntaxError { line: i + 1, reason };
        let mut parts = line.splitn(3, char::is_whitespace);
        let action = match parts.next() {
            Some(a) if a.eq_ignore_ascii_case("ADD") => MutationAction::Add,
            Some(a) if a.eq_ignore_ascii_case("REMOVE") => MutationAction::Remove,
            other => return Err(fail(format!("expected ADD or REMOVE, found `{}`", other.unwrap_or("")))),
        };
        let phase = match parts.next() {
            Some("before-load") => MutationPhase::BeforeLoad,
            Some("after-load") => MutationPhase::AfterLoad,
            other => return Err(fail(format!("expected before-load or after-load, found `{}`", other.unwrap_or("")))),
        };
        let body = parts.next().ok_or_else(|| fail("missing element".into()))?;
        let element = parse_element(body.trim()).map_err(fail)?;
        out.push(MutationEvent { action, phase, element });
    }
    Ok(out)
}

fn parse_element(text: &str) -> Result<RawElement, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("bad element JSON: {e}"))?;
    let obj = v.as_object().ok_or("element must be a JSON object")?;
    let tag = obj.get("tag").and_then(Value::as_str).ok_or("element needs a string `tag`")?;
    let attrs = match obj.get("attrs") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|pair| match pair.as_array().map(Vec::as_slice) {
                Some([Value::String(k), Value::String(v)]) => Ok((k.to_ascii_lowercase(), v.clone())),
                _ => Err("each attribute must be a [name, value] pair of strings".to_string()),
            })
            .collect::<Result<_, _>>()?,
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.to_ascii_lowercase(), s.clone())),
                _ => Err(format!("attribute `{k}` must be a string")),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err("`attrs` must be an array or object".into()),
    };
    let text = match obj.get("text") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("`text` must be a string".into()),
    };
    Ok(RawElement { tag: tag.to_ascii_lowercase(), attrs, text })
}

impl MutationEvent {
    /// One line of a mutation script; the inverse of [`parse_mutation_script`].
    pub fn to_line(&self) -> String {
        let action = match self.action {
            MutationAction::Add => "ADD",
            MutationAction::Remove => "REMOVE",
        };
        let phase = match self.phase {
            MutationPhase::BeforeLoad => "before-load",
            MutationPhase::AfterLoad => "after-load",
        };
        let el = serde_json::json!({
            "tag": self.element.tag,
            "attrs": self.element.attrs,
            "text": self.element.text,
        });
        format!("{action} {phase} {el}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let script = "# comment\n\nADD after-load {\"tag\":\"script\",\"attrs\":[[\"src\",\"https://x.com/a.js\"]]}\nREMOVE before-load {\"tag\":\"SCRIPT\",\"text\":\"a()\"}\nadd after-load {\"tag\":\"div\",\"attrs\":{\"onclick\":\"f()\"}}\n";
        let evs = parse_mutation_script(script).unwrap();
        assert_eq!(evs.len(), 3);
        assert_eq!(evs[0].action, MutationAction::Add);
        assert_eq!(evs[0].element.get("src"), Some("https://x.com/a.js"));
        assert_eq!(evs[1].phase, MutationPhase::BeforeLoad);
        assert_eq!(evs[1].element.tag, "script");
        assert_eq!(evs[2].element.get("onclick"), Some("f()"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_mutation_script("ADD after-load {\"tag\":\"p\"}\nMOVE after-load {}").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_mutation_script("ADD later {\"tag\":\"p\"}").unwrap_err();
        assert!(err.reason.contains("before-load"));
        let err = parse_mutation_script("ADD after-load {\"tag\":").unwrap_err();
        assert!(err.reason.contains("JSON"));
        assert!(parse_mutation_script("ADD after-load").is_err());
    }

    #[test]
    fn line_roundtrip() {
        let ev = MutationEvent {
            action: MutationAction::Remove,
            phase: MutationPhase::AfterLoad,
            element: RawElement::new("iframe").attr("src", "https://b.com/ x").text("line\nbreak"),
        };
        let back = parse_mutation_script(&ev.to_line()).unwrap();
        assert_eq!(back, [ev]);
    }
}
