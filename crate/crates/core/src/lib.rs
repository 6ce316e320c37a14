//! Runtime for a persuasive teachable agent.
//!
//! The agent is driven by hierarchical goal nets ([`goal_net`]), assesses the
//! learner's motivation and ability with a fuzzy cognitive map
//! ([`fcm`], [`persuasive`]), tracks environment events ([`events`]), stores
//! what it has been taught ([`knowledge`]) and emits persuasion cues
//! ([`agent`]). Authored content lives in a scenario document ([`scenario`]);
//! [`play`] turns learner input into engine events and [`harness`] drives
//! scripted learners for simulation.

pub mod agent;
pub mod events;
pub mod fcm;
pub mod goal_net;
pub mod harness;
pub mod knowledge;
pub mod par;
pub mod persuasive;
pub mod play;
pub mod scenario;

pub use agent::{AgentAction, AgentError, PtaAgent};
pub use events::{EventCategory, EventLog, EventRecord};
pub use fcm::{ConceptState, FcmModel, FixedPointReport, SquashSpec};
pub use goal_net::{GoalNet, GoalNetSet, InterpreterFrame};
pub use knowledge::{ConceptMapTemplate, GradeResult, KnowledgeBase, TaughtMap};
pub use persuasive::{LeafState, PersuasionAssessment, PersuasiveFcm};
pub use play::{ClientView, LearnerAction, Playthrough};
pub use scenario::{load_scenario, validate_scenario, Scenario};
