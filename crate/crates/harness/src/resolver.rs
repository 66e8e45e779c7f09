//! Simulated human resolvers.

use std::collections::BTreeMap;

use agentgov_core::{Directive, RiskClass};
use serde::{Deserialize, Serialize};

/// Answers checkpoints by risk class after a seeded delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoResolver {
    pub policy: BTreeMap<RiskClass, Directive>,
    /// Inclusive bounds of the uniform response delay, in milliseconds.
    pub delay_ms: (u64, u64),
    pub seed: u64,
}

impl AutoResolver {
    pub fn approve_all(seed: u64) -> Self {
        Self {
            policy: RiskClass::ALL.iter().map(|r| (*r, Directive::Proceed)).collect(),
            delay_ms: (200, 2_000),
            seed,
        }
    }

    /// Modifies High, denies Critical, approves the rest.
    pub fn mixed(seed: u64) -> Self {
        Self::approve_all(seed)
            .with(RiskClass::High, Directive::ProceedWithModification)
            .with(RiskClass::Critical, Directive::DenyAndReplan)
    }

    pub fn with(mut self, risk: RiskClass, directive: Directive) -> Self {
        self.policy.insert(risk, directive);
        self
    }

    pub fn directive(&self, risk: RiskClass) -> Directive {
        self.policy.get(&risk).copied().unwrap_or(Directive::Proceed)
    }

    /// Response delay for the checkpoint identified by `key`. Independent of
    /// the order in which checkpoints are answered.
    pub fn delay_for(&self, key: u64) -> u64 {
        let (lo, hi) = self.delay_ms;
        if hi <= lo {
            return lo;
        }
        lo + splitmix(self.seed ^ splitmix(key)) % (hi - lo + 1)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
