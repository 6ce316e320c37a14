//! A single learner's run through a scenario: translates learner actions to
//! engine events, drives agent cycles, and keeps a journal of everything.

use crate::agent::{ActionKind, AgentAction, AgentError, CycleReport, PtaAgent, Reasoning, SUBMISSION_KEY};
use crate::events::{EventCategory, EventRecord};
use crate::knowledge::{acquire_teaching, Slot};
use crate::persuasive::PersuasionAssessment;
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Upper bound on cycles run for one learner action.
pub const MAX_CYCLES_PER_STEP: usize = 32;

#[derive(Debug, Error)]
pub enum PlayError {
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("the session is already completed")]
    SessionCompleted,
    #[error("cannot parse journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LearnerAction {
    DialogueChoice { npc: String, choice: usize },
    TeachSubmit { assignments: BTreeMap<String, String> },
    Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayStatus {
    Active,
    Completed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub emotion: Option<String>,
    pub animation: Option<String>,
    pub speech: Option<String>,
    /// Persona speaking, for attractive-source cues.
    pub persona: Option<String>,
    pub cue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TeachState {
    template: String,
    assignments: BTreeMap<String, String>,
    wrong_slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalEntry {
    Session {
        at: u64,
        scenario: String,
        version: String,
        seed: u64,
    },
    Learner {
        at: u64,
        action: LearnerAction,
    },
    Event {
        record: EventRecord,
    },
    Cycle {
        at: u64,
        reasoning: Option<Reasoning>,
        consumed: Vec<u64>,
        path: Vec<String>,
        assessment: Option<PersuasionAssessment>,
    },
    Action {
        action: AgentAction,
    },
}

impl JournalEntry {
    pub fn at(&self) -> u64 {
        match self {
            JournalEntry::Session { at, .. } | JournalEntry::Learner { at, .. } | JournalEntry::Cycle { at, .. } => *at,
            JournalEntry::Event { record } => record.at,
            JournalEntry::Action { action } => action.at,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            JournalEntry::Session { .. } => "session",
            JournalEntry::Learner { .. } => "learner",
            JournalEntry::Event { .. } => "event",
            JournalEntry::Cycle { .. } => "cycle",
            JournalEntry::Action { .. } => "action",
        }
    }

    /// Short label: event name, action kind, learner action type or reasoning.
    pub fn label(&self) -> String {
        match self {
            JournalEntry::Session { scenario, .. } => scenario.clone(),
            JournalEntry::Learner { action, .. } => match action {
                LearnerAction::DialogueChoice { .. } => "dialogue_choice".into(),
                LearnerAction::TeachSubmit { .. } => "teach_submit".into(),
                LearnerAction::Tick => "tick".into(),
            },
            JournalEntry::Event { record } => record.name.clone(),
            JournalEntry::Cycle { reasoning, .. } => match reasoning {
                Some(r) => serde_json::to_value(r)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                None => "none".into(),
            },
            JournalEntry::Action { action } => serde_json::to_value(&action.kind)
                .ok()
                .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
                .unwrap_or_default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    seq: usize,
    #[serde(flatten)]
    entry: JournalEntry,
}

pub fn journal_to_jsonl(journal: &[JournalEntry]) -> String {
    let mut out = String::new();
    for (seq, entry) in journal.iter().enumerate() {
        let line = JournalLine {
            seq,
            entry: entry.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("journal entries serialize"));
        out.push('\n');
    }
    out
}

pub fn journal_from_jsonl(doc: &str) -> Result<Vec<JournalEntry>, PlayError> {
    doc.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<JournalLine>(l)
                .map(|jl| jl.entry)
                .map_err(|e| PlayError::Journal {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Columns: seq, type, at, label, data (the entry as JSON).
pub fn journal_to_csv(journal: &[JournalEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seq", "type", "at", "label", "data"])
        .expect("in-memory csv write");
    for (seq, entry) in journal.iter().enumerate() {
        let data = serde_json::to_string(entry).expect("journal entries serialize");
        w.write_record([
            seq.to_string(),
            entry.type_name().to_string(),
            entry.at().to_string(),
            entry.label(),
            data,
        ])
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceView {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NpcView {
    pub id: String,
    pub name: String,
    pub distracter: bool,
    pub node: String,
    pub line: String,
    pub choices: Vec<ChoiceView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapView {
    pub template: String,
    pub prompt: String,
    pub slots: Vec<Slot>,
    pub labels: Vec<String>,
    pub assignments: BTreeMap<String, String>,
    /// Slots marked wrong by the last grading.
    pub wrong_slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneView {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientView {
    pub status: PlayStatus,
    pub clock: u64,
    pub scene: SceneView,
    pub npcs: Vec<NpcView>,
    pub presentation: Presentation,
    pub concept_map: Option<ConceptMapView>,
    pub pending_prompts: Vec<String>,
    pub cue_history: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Playthrough {
    scenario: Arc<Scenario>,
    agent: PtaAgent,
    seed: u64,
    now: u64,
    scene: String,
    npc_nodes: BTreeMap<String, String>,
    teach: Option<TeachState>,
    presentation: Presentation,
    status: PlayStatus,
    journal: Vec<JournalEntry>,
}

impl Playthrough {
    /// New run at the start scene with the greeting queued.
    pub fn start(scenario: Arc<Scenario>, seed: u64) -> Result<Self, PlayError> {
        let agent = PtaAgent::new(scenario.clone(), seed)?;
        let npc_nodes = scenario.npcs.iter().map(|n| (n.id.clone(), n.start.clone())).collect();
        let greeting = AgentAction {
            at: 0,
            kind: ActionKind::DialogueLine {
                text: scenario.config.greeting.clone(),
            },
        };
        let mut p = Playthrough {
            scene: scenario.config.start_scene.clone(),
            journal: vec![JournalEntry::Session {
                at: 0,
                scenario: scenario.meta.name.clone(),
                version: scenario.meta.version.clone(),
                seed,
            }],
            scenario,
            agent,
            seed,
            now: 0,
            npc_nodes,
            teach: None,
            presentation: Presentation::default(),
            status: PlayStatus::Active,
        };
        p.apply_agent_action(&greeting);
        p.journal.push(JournalEntry::Action { action: greeting });
        Ok(p)
    }

    /// Rebuilds a run by replaying the learner entries of a journal.
    pub fn replay(scenario: Arc<Scenario>, seed: u64, journal: &[JournalEntry]) -> Result<Self, PlayError> {
        let mut p = Playthrough::start(scenario, seed)?;
        for entry in journal {
            if let JournalEntry::Learner { at, action } = entry {
                p.apply(action.clone(), *at)?;
            }
        }
        Ok(p)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn agent(&self) -> &PtaAgent {
        &self.agent
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn status(&self) -> PlayStatus {
        self.status
    }

    pub fn scene(&self) -> &str {
        &self.scene
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn teach_open(&self) -> bool {
        self.teach.is_some() && self.status == PlayStatus::Active
    }

    pub fn to_jsonl(&self) -> String {
        journal_to_jsonl(&self.journal)
    }

    pub fn to_csv(&self) -> String {
        journal_to_csv(&self.journal)
    }

    /// Applies one learner action at logical time `now` (never earlier than
    /// the current clock) and runs agent cycles until the log is drained.
    /// Nothing changes when an error is returned.
    pub fn apply(&mut self, action: LearnerAction, now: u64) -> Result<ClientView, PlayError> {
        if self.status == PlayStatus::Completed {
            return Err(PlayError::SessionCompleted);
        }
        self.check(&action)?;
        let saved = self.clone();
        match self.apply_inner(action, now) {
            Ok(()) => Ok(self.view()),
            Err(e) => {
                *self = saved;
                Err(e)
            }
        }
    }

    fn check(&self, action: &LearnerAction) -> Result<(), PlayError> {
        match action {
            LearnerAction::Tick => Ok(()),
            LearnerAction::DialogueChoice { npc, choice } => {
                let script = self
                    .scenario
                    .npc(npc)
                    .filter(|n| n.scene == self.scene)
                    .ok_or_else(|| PlayError::IllegalAction(format!("`{npc}` is not in scene `{}`", self.scene)))?;
                let node = script.node(&self.npc_nodes[npc]).expect("validated dialogue node");
                if *choice >= node.choices.len() {
                    return Err(PlayError::IllegalAction(format!(
                        "`{npc}` offers {} choices, not #{choice}",
                        node.choices.len()
                    )));
                }
                Ok(())
            }
            LearnerAction::TeachSubmit { assignments } => {
                let Some(teach) = &self.teach else {
                    return Err(PlayError::IllegalAction("no teaching prompt is open".into()));
                };
                let template = self
                    .scenario
                    .template(&teach.template)
                    .expect("validated teaching template");
                acquire_teaching(template, assignments, 0)
                    .map(|_| ())
                    .map_err(|e| PlayError::IllegalAction(e.to_string()))
            }
        }
    }

    fn apply_inner(&mut self, action: LearnerAction, now: u64) -> Result<(), PlayError> {
        let now = now.max(self.now);
        self.now = now;
        self.journal.push(JournalEntry::Learner {
            at: now,
            action: action.clone(),
        });
        for record in self.agent.advance_clock(now) {
            self.journal.push(JournalEntry::Event { record });
        }

        match action {
            LearnerAction::Tick => {}
            LearnerAction::DialogueChoice { npc, choice } => {
                let script = self.scenario.npc(&npc).expect("checked npc").clone();
                let node = script.node(&self.npc_nodes[&npc]).expect("checked node");
                let picked = node.choices[choice].clone();
                if let Some(event) = &picked.event {
                    let payload = BTreeMap::from([
                        ("npc".to_string(), npc.clone()),
                        ("choice".to_string(), picked.text.clone()),
                    ]);
                    let record = self.agent.emit(EventCategory::Dialogue, event, payload)?;
                    self.journal.push(JournalEntry::Event { record });
                }
                let next = picked.next.clone().unwrap_or_else(|| script.start.clone());
                self.npc_nodes.insert(npc, next);
                if let Some(scene) = picked.scene {
                    self.agent.set_stage(&scene);
                    self.scene = scene;
                }
            }
            LearnerAction::TeachSubmit { assignments } => {
                let teach = self.teach.as_mut().expect("checked teach prompt");
                teach.assignments = assignments.clone();
                let payload = BTreeMap::from([(
                    SUBMISSION_KEY.to_string(),
                    serde_json::to_string(&assignments).expect("assignments serialize"),
                )]);
                let name = self.scenario.config.teaching.submit_event.clone();
                let record = self.agent.emit(EventCategory::Dialogue, &name, payload)?;
                self.journal.push(JournalEntry::Event { record });
            }
        }
        self.drain(now)
    }

    fn drain(&mut self, now: u64) -> Result<(), PlayError> {
        for _ in 0..MAX_CYCLES_PER_STEP {
            if self.status == PlayStatus::Completed || self.agent.log().pending_count() == 0 {
                break;
            }
            let report = self.agent.run_cycle(now)?;
            if !report.ran() {
                break;
            }
            self.record_cycle(report);
        }
        Ok(())
    }

    fn record_cycle(&mut self, report: CycleReport) {
        self.journal.push(JournalEntry::Cycle {
            at: report.at,
            reasoning: report.reasoning,
            consumed: report.consumed,
            path: report.path,
            assessment: report.assessment,
        });
        for action in report.actions {
            self.apply_agent_action(&action);
            self.journal.push(JournalEntry::Action { action });
        }
        for record in report.events {
            self.journal.push(JournalEntry::Event { record });
        }
    }

    fn apply_agent_action(&mut self, action: &AgentAction) {
        match &action.kind {
            ActionKind::DisplayCue { cue, .. } => {
                if let Some(c) = self.scenario.cues.get(cue) {
                    self.presentation = Presentation {
                        emotion: c.emotion,
                        animation: c.animation,
                        speech: Some(c.text),
                        persona: c.persona,
                        cue: Some(c.id),
                    };
                }
            }
            ActionKind::RequestTeaching { template, prompt } => {
                if self.teach.is_none() {
                    self.teach = Some(TeachState {
                        template: template.clone(),
                        assignments: BTreeMap::new(),
                        wrong_slots: Vec::new(),
                    });
                }
                self.say(prompt);
            }
            ActionKind::RepeatTeachingPrompt { text, slots } => {
                if let Some(t) = &mut self.teach {
                    t.wrong_slots = slots.clone();
                }
                self.say(text);
            }
            ActionKind::CarryOutSolution { .. } => {
                if let Some(t) = &mut self.teach {
                    t.wrong_slots.clear();
                }
                self.status = PlayStatus::Completed;
                let t = &self.scenario.config.teaching;
                self.presentation = Presentation {
                    emotion: t.revival_emotion.clone(),
                    animation: t.revival_animation.clone(),
                    speech: Some(t.revival_text.clone()),
                    ..Presentation::default()
                };
            }
            ActionKind::DialogueLine { text } => self.say(text),
        }
    }

    fn say(&mut self, text: &str) {
        self.presentation = Presentation {
            speech: Some(text.to_string()),
            ..Presentation::default()
        };
    }

    /// Everything a client needs to render, derived from run state only.
    pub fn view(&self) -> ClientView {
        let scene = self.scenario.scene(&self.scene).expect("validated scene");
        let npcs = self
            .scenario
            .npcs
            .iter()
            .filter(|n| n.scene == self.scene)
            .map(|n| {
                let node = n.node(&self.npc_nodes[&n.id]).expect("validated dialogue node");
                NpcView {
                    id: n.id.clone(),
                    name: n.name.clone(),
                    distracter: n.distracter,
                    node: node.id.clone(),
                    line: node.line.clone(),
                    choices: node
                        .choices
                        .iter()
                        .enumerate()
                        .map(|(index, c)| ChoiceView {
                            index,
                            text: c.text.clone(),
                        })
                        .collect(),
                }
            })
            .collect();
        let concept_map = self.teach.as_ref().map(|t| {
            let template = self.scenario.template(&t.template).expect("validated template");
            ConceptMapView {
                template: template.id.clone(),
                prompt: template.prompt.clone(),
                slots: template.slots.clone(),
                labels: template.labels.clone(),
                assignments: t.assignments.clone(),
                wrong_slots: t.wrong_slots.clone(),
            }
        });
        let pending_prompts = if self.teach_open() {
            vec!["teach".to_string()]
        } else {
            Vec::new()
        };
        ClientView {
            status: self.status,
            clock: self.now,
            scene: SceneView {
                id: scene.id.clone(),
                name: scene.name.clone(),
            },
            npcs,
            presentation: self.presentation.clone(),
            concept_map,
            pending_prompts,
            cue_history: self.agent.cue_history().to_vec(),
        }
    }

    /// Index of the choice with `text` offered by `npc` right now.
    pub fn choice_index(&self, npc: &str, text: &str) -> Option<usize> {
        let script = self.scenario.npc(npc).filter(|n| n.scene == self.scene)?;
        let node = script.node(self.npc_nodes.get(npc)?)?;
        node.choices.iter().position(|c| c.text == text)
    }
}
