//! Fault injection. A fault turns a script into a modified copy; the runner
//! reads the faults it cannot express as edited steps.
//!
//! Spec strings: `drop_constraint`, `stall`, `error_burst:<rate>` and
//! `error_burst:<rate>@<event>`, optionally prefixed by `<kind>/` to aim the
//! fault at one agent kind of a fleet.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{ScenarioScript, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    /// The first decision that relays an upstream artifact forgets the first
    /// constraint it was given, and so does everything after it.
    DropConstraint,
    /// Effectful actions fail with probability `rate`. With `onset`, only
    /// once the kind has that many journaled events.
    ErrorBurst { rate: f64, onset: Option<u64> },
    /// Nobody answers the first checkpoint until it times out.
    Stall,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::DropConstraint => f.write_str("drop_constraint"),
            Fault::Stall => f.write_str("stall"),
            Fault::ErrorBurst { rate, onset: None } => write!(f, "error_burst:{rate}"),
            Fault::ErrorBurst {
                rate,
                onset: Some(at),
            } => write!(f, "error_burst:{rate}@{at}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("malformed fault spec '{spec}': {reason}")]
    Malformed { spec: String, reason: String },
    #[error("fault {fault} does not apply to script {script}: {reason}")]
    Inapplicable {
        fault: String,
        script: String,
        reason: String,
    },
}

/// A fault plus the kind it is aimed at (all kinds when `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: Option<String>,
    pub fault: Fault,
}

impl FaultSpec {
    pub fn applies_to(&self, agent_kind: &str) -> bool {
        self.kind.as_deref().is_none_or(|k| k == agent_kind)
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Some(k) => write!(f, "{k}/{}", self.fault),
            None => write!(f, "{}", self.fault),
        }
    }
}

impl FromStr for FaultSpec {
    type Err = FaultError;

    fn from_str(spec: &str) -> Result<Self, FaultError> {
        let bad = |reason: &str| FaultError::Malformed {
            spec: spec.to_owned(),
            reason: reason.to_owned(),
        };
        let (kind, body) = match spec.split_once('/') {
            Some((k, rest)) => {
                if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(bad("kind must be a non-empty name"));
                }
                (Some(k.to_owned()), rest)
            }
            None => (None, spec),
        };
        let fault = match body.split_once(':') {
            None if body == "drop_constraint" => Fault::DropConstraint,
            None if body == "stall" => Fault::Stall,
            Some(("error_burst", args)) => {
                let (rate, onset) = match args.split_once('@') {
                    Some((r, at)) => {
                        let at = at.parse::<u64>().map_err(|_| bad("onset must be an event count"))?;
                        (r, Some(at))
                    }
                    None => (args, None),
                };
                let rate = rate.parse::<f64>().map_err(|_| bad("rate must be a number"))?;
                if !(0.0..=1.0).contains(&rate) {
                    return Err(bad("rate must be within [0, 1]"));
                }
                Fault::ErrorBurst { rate, onset }
            }
            _ => return Err(bad("expected drop_constraint, stall or error_burst:<rate>[@<event>]")),
        };
        Ok(FaultSpec { kind, fault })
    }
}

/// Returns a copy of `script` with `fault` applied. The original is untouched.
pub fn inject_fault(script: &ScenarioScript, fault: Fault) -> Result<ScenarioScript, FaultError> {
    let inapplicable = |reason: &str| FaultError::Inapplicable {
        fault: fault.to_string(),
        script: script.name.clone(),
        reason: reason.to_owned(),
    };
    let mut out = script.clone();
    match &fault {
        Fault::DropConstraint => {
            if !script.has_decisions() {
                return Err(inapplicable("script has no decision steps"));
            }
            let relay = out.steps.iter().position(|s| {
                matches!(s, Step::Decision(d) if !d.consumes.is_empty() && !d.constraints.is_empty())
            });
            let Some(at) = relay else {
                return Err(inapplicable("no decision relays a constrained artifact"));
            };
            let dropped = match &out.steps[at] {
                Step::Decision(d) => d.constraints[0].clone(),
                _ => unreachable!("position matched a decision"),
            };
            for step in &mut out.steps[at..] {
                if let Step::Decision(d) = step {
                    d.constraints.retain(|c| *c != dropped);
                }
            }
        }
        Fault::ErrorBurst { .. } => {
            if !script.has_effects() {
                return Err(inapplicable("script has no effectful actions"));
            }
        }
        Fault::Stall => {
            if !script.has_actions() {
                return Err(inapplicable("script has no actions to hold a checkpoint"));
            }
        }
    }
    out.faults.push(fault);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script;

    #[test]
    fn parses_specs() {
        let s: FaultSpec = "collection_letter/error_burst:1.0@5000".parse().unwrap();
        assert_eq!(s.kind.as_deref(), Some("collection_letter"));
        assert_eq!(s.fault, Fault::ErrorBurst { rate: 1.0, onset: Some(5000) });
        assert_eq!(s.to_string(), "collection_letter/error_burst:1@5000");
        assert_eq!("stall".parse::<FaultSpec>().unwrap().fault, Fault::Stall);
        for bad in ["", "burst", "error_burst:", "error_burst:2", "error_burst:0.1@x", "/stall", "a b/stall", "stall:1"] {
            assert!(bad.parse::<FaultSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn drop_constraint_needs_decisions() {
        let mut s = script::payment(10);
        s.steps.retain(|st| !matches!(st, Step::Decision(_)));
        assert!(matches!(
            inject_fault(&s, Fault::DropConstraint),
            Err(FaultError::Inapplicable { .. })
        ));
    }

    #[test]
    fn drop_constraint_edits_the_relay_and_leaves_the_original() {
        let s = script::food_order();
        let faulty = inject_fault(&s, Fault::DropConstraint).unwrap();
        let constraints = |sc: &ScenarioScript| -> Vec<Vec<String>> {
            sc.steps
                .iter()
                .filter_map(|st| match st {
                    Step::Decision(d) => Some(d.constraints.clone()),
                    _ => None,
                })
                .collect()
        };
        let before = constraints(&s);
        let after = constraints(&faulty);
        assert_eq!(before[0], after[0]);
        assert!(before[1].contains(&script::ALLERGY.to_owned()));
        assert!(after[1..].iter().all(|c| !c.contains(&script::ALLERGY.to_owned())));
        assert_eq!(faulty.faults, vec![Fault::DropConstraint]);
        assert!(s.faults.is_empty());
    }
}
