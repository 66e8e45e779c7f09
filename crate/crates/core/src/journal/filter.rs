//! Journal query filters and their query-string form.
//!
//! `instance_id=inst-000001&kind=HITL&actor=op-1&from=0&to=5000&payload.phase=open`
//!
//! `from` is inclusive and `to` exclusive. `payload.<a>.<b>=v` compares the
//! payload field at `/a/b` with `v`, read as JSON when it parses and as a
//! string otherwise.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::Millis;
use crate::journal::record::{JournalRecord, RecordKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JournalFilter {
    pub instance_id: Option<String>,
    pub kind: Option<RecordKind>,
    pub actor: Option<String>,
    pub from: Option<Millis>,
    pub to: Option<Millis>,
    /// JSON pointer into the payload and the value it must equal.
    #[serde(default)]
    pub payload: Vec<(String, Value)>,
}

impl JournalFilter {
    pub fn instance(id: impl Into<String>) -> Self {
        Self {
            instance_id: Some(id.into()),
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: RecordKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from > to {
                return Err(format!("time range is reversed: from {from} > to {to}"));
            }
        }
        for (pointer, _) in &self.payload {
            if !pointer.starts_with('/') || pointer.len() < 2 {
                return Err(format!("bad payload path '{pointer}'"));
            }
        }
        Ok(())
    }

    pub fn matches(&self, r: &JournalRecord) -> bool {
        if matches!(&self.instance_id, Some(id) if *id != r.instance_id) {
            return false;
        }
        if matches!(self.kind, Some(k) if k != r.kind) {
            return false;
        }
        if matches!(&self.actor, Some(a) if a != r.actor.as_str()) {
            return false;
        }
        if matches!(self.from, Some(f) if r.timestamp < f) {
            return false;
        }
        if matches!(self.to, Some(t) if r.timestamp >= t) {
            return false;
        }
        self.payload
            .iter()
            .all(|(p, v)| r.payload.pointer(p) == Some(v))
    }
}

/// Parses an URL query string into a filter. Unknown keys are errors.
pub fn parse_query(query: &str) -> Result<JournalFilter, String> {
    let mut f = JournalFilter::default();
    for (key, value) in form_urlencoded::parse(query.as_bytes()) {
        let dup = || format!("duplicate filter key '{key}'");
        match key.as_ref() {
            "instance_id" => {
                if f.instance_id.replace(value.into_owned()).is_some() {
                    return Err(dup());
                }
            }
            "kind" => {
                let kind = value.parse::<RecordKind>()?;
                if f.kind.replace(kind).is_some() {
                    return Err(dup());
                }
            }
            "actor" => {
                if f.actor.replace(value.into_owned()).is_some() {
                    return Err(dup());
                }
            }
            "from" | "to" => {
                let ts: Millis = value
                    .parse()
                    .map_err(|_| format!("'{key}' must be a millisecond timestamp, got {value:?}"))?;
                let slot = if key == "from" { &mut f.from } else { &mut f.to };
                if slot.replace(ts).is_some() {
                    return Err(dup());
                }
            }
            k => {
                let Some(path) = k.strip_prefix("payload.") else {
                    return Err(format!("unknown filter key '{k}'"));
                };
                if path.split('.').any(str::is_empty) {
                    return Err(format!("bad payload path '{path}'"));
                }
                let pointer: String = path
                    .split('.')
                    .map(|seg| format!("/{}", seg.replace('~', "~0").replace('/', "~1")))
                    .collect();
                let v = serde_json::from_str(&value).unwrap_or(Value::String(value.into_owned()));
                f.payload.push((pointer, v));
            }
        }
    }
    f.validate()?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let f = parse_query("instance_id=i%2D1&kind=HITL&actor=op&from=5&to=9&payload.phase=open&payload.action.confidence=0.5").unwrap();
        assert_eq!(f.instance_id.as_deref(), Some("i-1"));
        assert_eq!(f.kind, Some(RecordKind::Hitl));
        assert_eq!(f.from, Some(5));
        assert_eq!(f.payload[0], ("/phase".into(), Value::String("open".into())));
        assert_eq!(f.payload[1], ("/action/confidence".into(), serde_json::json!(0.5)));
    }

    #[test]
    fn rejects_malformed() {
        for q in ["kind=Nope", "from=x", "from=9&to=5", "bogus=1", "payload.=1", "payload.a..b=1", "kind=HITL&kind=HITL"] {
            assert!(parse_query(q).is_err(), "{q}");
        }
        assert_eq!(parse_query("").unwrap(), JournalFilter::default());
    }
}
