//! Participants and their roles.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a registered participant (human, agent or internal subsystem).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The built-in monitoring subsystem. It has no token and never authenticates over the wire.
    pub fn sentinel() -> Self {
        Self(SENTINEL_ID.to_owned())
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ActorId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

pub const SENTINEL_ID: &str = "sentinel";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    Operator,
    Approver,
    Admin,
    Sentinel,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Agent,
        Role::Operator,
        Role::Approver,
        Role::Admin,
        Role::Sentinel,
    ];

    pub fn is_human(self) -> bool {
        matches!(self, Role::Operator | Role::Approver | Role::Admin)
    }

    /// Roles allowed to resolve checkpoints.
    pub fn can_resolve(self) -> bool {
        self.is_human()
    }

    /// Roles allowed to approve an autonomy increase.
    pub fn can_approve_autonomy(self) -> bool {
        matches!(self, Role::Approver | Role::Admin)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Agent => "agent",
            Role::Operator => "operator",
            Role::Approver => "approver",
            Role::Admin => "admin",
            Role::Sentinel => "sentinel",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub role: Role,
    /// Bearer secret. `None` for internal actors.
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
}

impl fmt::Debug for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Actor")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl Actor {
    pub fn new(id: impl Into<String>, role: Role, token: Option<String>) -> Self {
        Self {
            id: ActorId::new(id),
            role,
            token,
        }
    }

    pub fn sentinel() -> Self {
        Self {
            id: ActorId::sentinel(),
            role: Role::Sentinel,
            token: None,
        }
    }
}

/// Compares two byte strings in time independent of where they differ.
pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    let mut diff = a.len() ^ b.len();
    let n = a.len().max(b.len());
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        diff |= usize::from(x ^ y);
    }
    diff == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_time_eq_matches_plain_equality() {
        assert!(constant_time_eq(b"secret", b"secret"));
        assert!(!constant_time_eq(b"secret", b"secreT"));
        assert!(!constant_time_eq(b"secret", b"secret2"));
        assert!(!constant_time_eq(b"", b"x"));
        assert!(constant_time_eq(b"", b""));
    }

    #[test]
    fn token_is_not_serialized_or_debugged() {
        let a = Actor::new("op", Role::Operator, Some("hunter2".into()));
        let json = serde_json::to_string(&a).unwrap();
        assert!(!json.contains("hunter2"));
        assert!(!format!("{a:?}").contains("hunter2"));
    }
}
