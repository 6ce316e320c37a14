use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const BUILTIN_POLICIES: [&str; 4] = ["diligent", "distracted", "refuser", "random"];

const DILIGENT: &str = include_str!("../../scenarios/vs_saga/policies/diligent.toml");
const DISTRACTED: &str = include_str!("../../scenarios/vs_saga/policies/distracted.toml");
const REFUSER: &str = include_str!("../../scenarios/vs_saga/policies/refuser.toml");
const RANDOM: &str = include_str!("../../scenarios/vs_saga/policies/random.toml");

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown policy `{0}`")]
    Unknown(String),
    #[error("policy parse error: {0}")]
    Parse(String),
    #[error("policy `{policy}`: step {step} is earlier than the step before it")]
    Unordered { policy: String, step: usize },
    #[error("policy `{policy}`: {message}")]
    Invalid { policy: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScriptAction {
    /// Pick the choice with this text from the NPC's current node.
    Choose {
        npc: String,
        choice: String,
    },
    Teach {
        assignments: BTreeMap<String, String>,
    },
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Scripted {
        steps: Vec<ScriptStep>,
    },
    /// Each tick: act with `act_probability`; a submission fills each slot
    /// correctly with `correct_probability`.
    Random {
        act_probability: f64,
        correct_probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerPolicy {
    pub name: String,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

impl LearnerPolicy {
    pub fn from_toml(doc: &str) -> Result<Self, PolicyError> {
        let p: LearnerPolicy = toml::from_str(doc).map_err(|e| PolicyError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<Self, PolicyError> {
        let doc = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&doc)
    }

    pub fn builtin(name: &str) -> Result<Self, PolicyError> {
        let doc = match name {
            "diligent" => DILIGENT,
            "distracted" => DISTRACTED,
            "refuser" => REFUSER,
            "random" => RANDOM,
            other => return Err(PolicyError::Unknown(other.to_string())),
        };
        Self::from_toml(doc)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match &self.kind {
            PolicyKind::Scripted { steps } => {
                for (i, pair) in steps.windows(2).enumerate() {
                    if pair[1].at_ms < pair[0].at_ms {
                        return Err(PolicyError::Unordered {
                            policy: self.name.clone(),
                            step: i + 1,
                        });
                    }
                }
            }
            PolicyKind::Random {
                act_probability,
                correct_probability,
            } => {
                for (key, p) in [
                    ("act_probability", act_probability),
                    ("correct_probability", correct_probability),
                ] {
                    if !(0.0..=1.0).contains(p) {
                        return Err(PolicyError::Invalid {
                            policy: self.name.clone(),
                            message: format!("{key} {p} is outside [0, 1]"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
