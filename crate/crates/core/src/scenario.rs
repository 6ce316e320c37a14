//! Scenario documents: goal nets, FCM, events, routing, NPC dialogue,
//! concept maps, cues and run-time settings in one TOML file.

use crate::agent::{CueCatalogs, CueSet, PREDICATE_NAMES, TASK_NAMES};
use crate::events::{EventCatalog, EventCategory, DEFAULT_IDLE_TIMEOUT_MS, DEFAULT_TIMEOUT_EVENT};
use crate::goal_net::{GoalNet, GoalNetSet};
use crate::knowledge::ConceptMapTemplate;
use crate::persuasive::{Factor, PersuasiveFcm};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped reference scenario, as authored.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/vs_saga.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dangling reference at `{path}`: {message}")]
    DanglingReference { path: String, message: String },
    #[error("invalid scenario at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub name: String,
}

/// Reasoning an event is routed to. `Neutral` events only feed the FCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Teachability,
    Practicability,
    Persuasion,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    /// Next node; the conversation ends when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<String>,
    /// Scene the learner moves to after choosing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueNode {
    pub id: String,
    pub line: String,
    #[serde(default)]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NpcScript {
    pub id: String,
    pub name: String,
    pub scene: String,
    #[serde(default)]
    pub distracter: bool,
    pub start: String,
    pub nodes: Vec<DialogueNode>,
}

impl NpcScript {
    pub fn node(&self, id: &str) -> Option<&DialogueNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assets {
    #[serde(default)]
    pub emotions: Vec<String>,
    #[serde(default)]
    pub animations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalNetsSection {
    pub main: String,
    pub nets: Vec<GoalNet>,
}

/// Lower bounds of the peripheral-cue intensity bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityBands {
    pub moderate: f64,
    pub high: f64,
}

impl Default for IntensityBands {
    fn default() -> Self {
        IntensityBands {
            moderate: 0.5,
            high: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Low,
    Moderate,
    High,
}

impl IntensityBands {
    pub fn classify(&self, value: f64) -> Intensity {
        if value >= self.high {
            Intensity::High
        } else if value >= self.moderate {
            Intensity::Moderate
        } else {
            Intensity::Low
        }
    }
}

/// Event names and texts used by the teaching loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeachingConfig {
    /// Concept map the learner teaches.
    pub template: String,
    /// Dialogue event carrying a submission.
    pub submit_event: String,
    pub decline_event: String,
    pub rejection_event: String,
    pub practicability_event: String,
    pub success_event: String,
    pub failure_event: String,
    pub request_prompt: String,
    pub repeat_prompt: String,
    pub revival_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revival_emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revival_animation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_idle_timeout")]
    pub idle_timeout_ms: u64,
    #[serde(default = "default_timeout_event")]
    pub timeout_event: String,
    #[serde(default = "default_batch_limit")]
    pub batch_limit: usize,
    #[serde(default = "default_cadence")]
    pub cadence_ms: u64,
    #[serde(default)]
    pub intensity_bands: IntensityBands,
    pub start_scene: String,
    pub greeting: String,
    pub teaching: TeachingConfig,
}

fn default_idle_timeout() -> u64 {
    DEFAULT_IDLE_TIMEOUT_MS
}

fn default_timeout_event() -> String {
    DEFAULT_TIMEOUT_EVENT.to_string()
}

fn default_batch_limit() -> usize {
    16
}

fn default_cadence() -> u64 {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub meta: Meta,
    pub config: ScenarioConfig,
    pub scenes: Vec<Scene>,
    pub events: EventCatalog,
    pub routing: BTreeMap<String, Route>,
    pub fcm: PersuasiveFcm,
    pub assets: Assets,
    pub cues: CueCatalogs,
    pub concept_maps: Vec<ConceptMapTemplate>,
    pub npcs: Vec<NpcScript>,
    pub goal_nets: GoalNetsSection,
}

impl Scenario {
    /// Parses without cross-reference checks.
    pub fn parse(doc: &str) -> Result<Scenario, ScenarioError> {
        if doc.trim().is_empty() {
            return Err(ScenarioError::Schema("empty document".into()));
        }
        let s: Scenario = toml::from_str(doc).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        if s.schema != SCHEMA_VERSION {
            return Err(ScenarioError::Schema(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                s.schema
            )));
        }
        Ok(s)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn goal_net_set(&self) -> Result<GoalNetSet, ScenarioError> {
        GoalNetSet::new(self.goal_nets.nets.clone(), &self.goal_nets.main).map_err(|e| ScenarioError::Invalid {
            path: "goal_nets".into(),
            message: e.to_string(),
        })
    }

    pub fn npc(&self, id: &str) -> Option<&NpcScript> {
        self.npcs.iter().find(|n| n.id == id)
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.id == id)
    }

    pub fn template(&self, id: &str) -> Option<&ConceptMapTemplate> {
        self.concept_maps.iter().find(|t| t.id == id)
    }

    pub fn route_of(&self, event: &str) -> Option<Route> {
        self.routing.get(event).copied()
    }
}

pub fn load_scenario(doc: &str) -> Result<Scenario, ScenarioError> {
    let scenario = Scenario::parse(doc)?;
    if let Some(f) = validate_scenario(&scenario)
        .into_iter()
        .find(|f| f.severity == Severity::Error)
    {
        return Err(match f.kind {
            FindingKind::DanglingReference => ScenarioError::DanglingReference {
                path: f.path,
                message: f.message,
            },
            _ => ScenarioError::Invalid {
                path: f.path,
                message: f.message,
            },
        });
    }
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let doc = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&doc)
}

pub fn reference_scenario() -> Scenario {
    load_scenario(REFERENCE_SCENARIO).expect("reference scenario is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DanglingReference,
    Invalid,
    Unreachable,
    EmptyCatalog,
    UnboundFactor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    /// Dotted key path of the offending entry.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Findings(Vec<Finding>);

impl Findings {
    fn error(&mut self, kind: FindingKind, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            severity: Severity::Error,
            kind,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, kind: FindingKind, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            severity: Severity::Warning,
            kind,
            path: path.into(),
            message: message.into(),
        });
    }

    fn dangling(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.error(FindingKind::DanglingReference, path, message);
    }
}

/// Cross-reference and content checks. Errors first, then warnings; an empty
/// list means the scenario is clean.
pub fn validate_scenario(s: &Scenario) -> Vec<Finding> {
    let mut out = Findings::default();
    check_events(s, &mut out);
    check_fcm(s, &mut out);
    check_config(s, &mut out);
    check_cues(s, &mut out);
    check_concept_maps(s, &mut out);
    check_npcs(s, &mut out);
    check_goal_nets(s, &mut out);
    let mut findings = out.0;
    findings.sort_by_key(|f| f.severity);
    findings
}

fn check_events(s: &Scenario, out: &mut Findings) {
    let mut seen = BTreeSet::new();
    for (cat, name) in s.events.iter() {
        if !seen.insert(name) {
            out.error(
                FindingKind::Invalid,
                format!("events.{}", cat.as_str()),
                format!("event `{name}` is listed twice"),
            );
        }
        if !s.routing.contains_key(name) {
            out.error(
                FindingKind::DanglingReference,
                format!("routing.\"{name}\""),
                format!("event `{name}` has no routing entry"),
            );
        }
    }
    for key in s.routing.keys() {
        if s.events.category_of(key).is_none() {
            out.dangling(format!("routing.\"{key}\""), format!("unknown event `{key}`"));
        }
    }
}

fn check_fcm(s: &Scenario, out: &mut Findings) {
    for key in s.fcm.leaves.keys() {
        if s.events.category_of(key).is_none() {
            out.dangling(format!("fcm.leaves.\"{key}\""), format!("unknown event `{key}`"));
        }
    }
    if let Err(e) = s.fcm.validate() {
        out.error(FindingKind::Invalid, "fcm", e.to_string());
    }
    for factor in Factor::ALL {
        if s.fcm.events_for(factor).next().is_none() {
            out.warning(
                FindingKind::UnboundFactor,
                "fcm.leaves",
                format!("factor {factor:?} has no bound events"),
            );
        }
    }
}

fn check_config(s: &Scenario, out: &mut Findings) {
    let c = &s.config;
    if c.idle_timeout_ms == 0 {
        out.error(FindingKind::Invalid, "config.idle_timeout_ms", "must be positive");
    }
    if c.batch_limit == 0 {
        out.error(FindingKind::Invalid, "config.batch_limit", "must be positive");
    }
    if c.cadence_ms == 0 {
        out.error(FindingKind::Invalid, "config.cadence_ms", "must be positive");
    }
    let b = c.intensity_bands;
    if b.moderate.is_nan() || b.high.is_nan() || b.moderate > b.high {
        out.error(
            FindingKind::Invalid,
            "config.intensity_bands",
            "moderate bound must not exceed the high bound",
        );
    }
    if !s.events.contains(EventCategory::Time, &c.timeout_event) {
        out.dangling(
            "config.timeout_event",
            format!("`{}` is not a time event", c.timeout_event),
        );
    }
    if s.scene(&c.start_scene).is_none() {
        out.dangling("config.start_scene", format!("unknown scene `{}`", c.start_scene));
    }
    let t = &c.teaching;
    if s.template(&t.template).is_none() {
        out.dangling(
            "config.teaching.template",
            format!("unknown concept map `{}`", t.template),
        );
    }
    let expected = [
        (
            "submit_event",
            &t.submit_event,
            EventCategory::Dialogue,
            Route::Teachability,
        ),
        (
            "decline_event",
            &t.decline_event,
            EventCategory::Dialogue,
            Route::Teachability,
        ),
        (
            "rejection_event",
            &t.rejection_event,
            EventCategory::TeachingFeedback,
            Route::Persuasion,
        ),
        (
            "practicability_event",
            &t.practicability_event,
            EventCategory::Practicability,
            Route::Practicability,
        ),
        (
            "success_event",
            &t.success_event,
            EventCategory::TeachingFeedback,
            Route::Neutral,
        ),
        (
            "failure_event",
            &t.failure_event,
            EventCategory::TeachingFeedback,
            Route::Persuasion,
        ),
    ];
    if let Some(e) = t.revival_emotion.as_ref().filter(|e| !s.assets.emotions.contains(e)) {
        out.dangling(
            "config.teaching.revival_emotion",
            format!("emotion `{e}` is not in assets"),
        );
    }
    if let Some(a) = t
        .revival_animation
        .as_ref()
        .filter(|a| !s.assets.animations.contains(a))
    {
        out.dangling(
            "config.teaching.revival_animation",
            format!("animation `{a}` is not in assets"),
        );
    }
    for (key, name, category, route) in expected {
        let path = format!("config.teaching.{key}");
        if !s.events.contains(category, name) {
            out.dangling(&path, format!("`{name}` is not a {category} event"));
        } else if s.route_of(name).is_some_and(|r| r != route) {
            out.error(
                FindingKind::Invalid,
                path,
                format!("`{name}` must be routed to {route:?}"),
            );
        }
    }
}

fn check_cues(s: &Scenario, out: &mut Findings) {
    let mut ids = BTreeSet::new();
    for cue in s.cues.all() {
        if !ids.insert(cue.id.clone()) {
            out.error(
                FindingKind::Invalid,
                "cues",
                format!("cue id `{}` is used twice", cue.id),
            );
        }
        if !s.fcm.cue_weights.contains_key(&cue.id) {
            out.dangling("fcm.cue_weights", format!("cue `{}` has no weight", cue.id));
        }
        if let Some(anim) = &cue.animation {
            if !s.assets.animations.contains(anim) {
                out.dangling(
                    format!("cues.affects.{}", cue.id),
                    format!("animation `{anim}` is not in assets"),
                );
            }
        }
        if let Some(emotion) = &cue.emotion {
            if !s.assets.emotions.contains(emotion) {
                out.dangling(
                    format!("cues.affects.{}", cue.id),
                    format!("emotion `{emotion}` is not in assets"),
                );
            }
        }
        if let Some(topic) = &cue.topic {
            if s.scene(topic).is_none() {
                out.dangling(
                    format!("cues.expert_hints.{}", cue.id),
                    format!("topic `{topic}` is not a scene"),
                );
            }
        }
    }
    for key in s.fcm.cue_weights.keys() {
        if !ids.contains(key) {
            out.dangling(format!("fcm.cue_weights.{key}"), format!("unknown cue `{key}`"));
        }
    }
    // Any persuasion-routed event can lead to either deficit, so every
    // catalog must be able to answer.
    if s.routing.values().any(|r| *r == Route::Persuasion) {
        for set in CueSet::ALL {
            if s.cues.set(set).is_empty() {
                out.warning(
                    FindingKind::EmptyCatalog,
                    "cues",
                    format!("{set} catalog is empty but persuasion is reachable"),
                );
            }
        }
    }
}

fn check_concept_maps(s: &Scenario, out: &mut Findings) {
    let mut ids = BTreeSet::new();
    for (i, t) in s.concept_maps.iter().enumerate() {
        if !ids.insert(&t.id) {
            out.error(
                FindingKind::Invalid,
                format!("concept_maps[{i}]"),
                format!("template id `{}` is used twice", t.id),
            );
        }
        if let Err(e) = t.validate() {
            out.error(FindingKind::Invalid, format!("concept_maps[{i}]"), e.to_string());
        }
    }
}

fn check_npcs(s: &Scenario, out: &mut Findings) {
    let mut ids = BTreeSet::new();
    for npc in &s.npcs {
        let base = format!("npcs.{}", npc.id);
        if !ids.insert(&npc.id) {
            out.error(FindingKind::Invalid, &base, "npc id is used twice");
        }
        if s.scene(&npc.scene).is_none() {
            out.dangling(format!("{base}.scene"), format!("unknown scene `{}`", npc.scene));
        }
        if npc.node(&npc.start).is_none() {
            out.dangling(format!("{base}.start"), format!("unknown node `{}`", npc.start));
            continue;
        }
        for node in &npc.nodes {
            for (ci, choice) in node.choices.iter().enumerate() {
                let path = format!("{base}.nodes.{}.choices[{ci}]", node.id);
                if let Some(event) = &choice.event {
                    if !s.events.contains(EventCategory::Dialogue, event) {
                        out.dangling(&path, format!("`{event}` is not a dialogue event"));
                    } else if npc.distracter && s.fcm.binding(event).map(|b| b.factor) != Some(Factor::DT) {
                        out.error(
                            FindingKind::Invalid,
                            &path,
                            format!("distracter emits `{event}`, which is not bound to distraction"),
                        );
                    }
                }
                if let Some(next) = &choice.next {
                    if npc.node(next).is_none() {
                        out.dangling(&path, format!("unknown node `{next}`"));
                    }
                }
                if let Some(scene) = &choice.scene {
                    if s.scene(scene).is_none() {
                        out.dangling(&path, format!("unknown scene `{scene}`"));
                    }
                }
            }
        }
        let reachable = reachable_nodes(npc);
        for node in &npc.nodes {
            if !reachable.contains(node.id.as_str()) {
                out.error(
                    FindingKind::Unreachable,
                    format!("{base}.nodes.{}", node.id),
                    "node is unreachable from the start node",
                );
            }
        }
        for node in &npc.nodes {
            if !reaches_end(npc, &node.id) {
                out.warning(
                    FindingKind::Unreachable,
                    format!("{base}.nodes.{}", node.id),
                    "no path from this node ends the conversation",
                );
            }
        }
    }
}

fn reachable_nodes(npc: &NpcScript) -> BTreeSet<&str> {
    let mut seen = BTreeSet::from([npc.start.as_str()]);
    let mut queue = VecDeque::from([npc.start.as_str()]);
    while let Some(id) = queue.pop_front() {
        let Some(node) = npc.node(id) else { continue };
        for next in node.choices.iter().filter_map(|c| c.next.as_deref()) {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

/// True when some choice sequence from `from` leaves the conversation. A node
/// without choices also ends it.
pub fn reaches_end(npc: &NpcScript, from: &str) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(id) = queue.pop_front() {
        let Some(node) = npc.node(id) else { continue };
        if node.choices.is_empty() || node.choices.iter().any(|c| c.next.is_none()) {
            return true;
        }
        for next in node.choices.iter().filter_map(|c| c.next.as_deref()) {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    false
}

fn check_goal_nets(s: &Scenario, out: &mut Findings) {
    for (i, net) in s.goal_nets.nets.iter().enumerate() {
        for t in &net.transitions {
            let path = format!("goal_nets.nets[{i}].transitions.{}", t.id);
            for task in &t.tasks {
                if !TASK_NAMES.contains(&task.as_str()) {
                    out.dangling(&path, format!("unknown task `{task}`"));
                }
            }
            for g in &t.guards {
                if !PREDICATE_NAMES.contains(&g.predicate.as_str()) {
                    out.dangling(&path, format!("unknown predicate `{}`", g.predicate));
                }
            }
        }
    }
    if let Err(e) = s.goal_net_set() {
        out.error(FindingKind::Invalid, "goal_nets", e.to_string());
    }
}
