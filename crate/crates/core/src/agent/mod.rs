//! The teachable agent: one goal-net main loop per cycle, with the reasoning
//! sub-nets bound to the task functions in [`tasks`].

mod cues;
mod tasks;

pub use cues::{pick_least_used, Affect, AttractiveSource, CueCatalogs, CueSet, ExpertHint, PersuasionCue};
pub use tasks::{PREDICATE_NAMES, TASK_NAMES};

use crate::events::{EventCategory, EventError, EventLog, EventRecord};
use crate::goal_net::{GoalNetError, GoalNetSet, Interpreter, InterpreterFrame};
use crate::knowledge::{GradeResult, KnowledgeBase, KnowledgeError, TaughtMap};
use crate::persuasive::{evaluate, LeafState, PersuasionAssessment, PersuasiveError};
use crate::scenario::{Intensity, Route, Scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Payload key under which a teach submission carries its slot -> label map
/// (JSON encoded).
pub const SUBMISSION_KEY: &str = "submission";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("event `{0}` has no routing entry")]
    UnroutedEvent(String),
    #[error("the {0} cue catalog is empty")]
    EmptyCatalog(CueSet),
    #[error("unknown concept map `{0}`")]
    UnknownTemplate(String),
    #[error("malformed teach submission: {0}")]
    InvalidSubmission(String),
    #[error("main routine did not return to its start state (active: {0})")]
    Stalled(String),
    #[error(transparent)]
    GoalNet(#[from] GoalNetError),
    #[error(transparent)]
    Persuasive(#[from] PersuasiveError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reasoning {
    Teachability,
    Practicability,
    Persuasion,
}

impl Reasoning {
    fn route(self) -> Route {
        match self {
            Reasoning::Teachability => Route::Teachability,
            Reasoning::Practicability => Route::Practicability,
            Reasoning::Persuasion => Route::Persuasion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    DisplayCue { cue: String, set: CueSet },
    RequestTeaching { template: String, prompt: String },
    CarryOutSolution { template: String },
    RepeatTeachingPrompt { text: String, slots: Vec<String> },
    DialogueLine { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    pub at: u64,
    #[serde(flatten)]
    pub kind: ActionKind,
}

/// What one call to [`PtaAgent::run_cycle`] did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub at: u64,
    pub reasoning: Option<Reasoning>,
    /// Ids of events marked processed.
    pub consumed: Vec<u64>,
    /// Transitions fired, as `net/transition`.
    pub path: Vec<String>,
    pub assessment: Option<PersuasionAssessment>,
    pub actions: Vec<AgentAction>,
    /// Records appended to the log during the cycle, timer events included.
    pub events: Vec<EventRecord>,
}

impl CycleReport {
    /// False for cycles that found nothing to do.
    pub fn ran(&self) -> bool {
        !self.consumed.is_empty()
    }
}

/// Per-cycle working memory shared by the task functions.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    pub done: bool,
    pub batch: Vec<EventRecord>,
    pub reasoning: Option<Reasoning>,
    pub consumed: Vec<u64>,
    pub actions: Vec<AgentAction>,
    pub assessment: Option<PersuasionAssessment>,
    pub cue: Option<PersuasionCue>,
    pub submission: Option<BTreeMap<String, String>>,
    pub rejected: bool,
    pub taught: Option<TaughtMap>,
    pub learnt: Option<TaughtMap>,
    pub grade: Option<GradeResult>,
}

/// Everything the task functions may touch.
#[derive(Debug, Clone)]
pub struct AgentState {
    scenario: Arc<Scenario>,
    pub leaves: LeafState,
    pub kb: KnowledgeBase,
    pub log: EventLog,
    pub cue_history: Vec<String>,
    cue_counts: BTreeMap<String, u32>,
    /// Current scene; expert hints tagged with it are preferred.
    pub stage: String,
    pub(crate) now: u64,
    pub(crate) cycle: Scratch,
}

impl AgentState {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn cue_count(&self, id: &str) -> u32 {
        self.cue_counts.get(id).copied().unwrap_or(0)
    }

    /// Chooses a cue for `assessment`, records it and pulses its indicator.
    pub fn select_cue(&mut self, assessment: &PersuasionAssessment) -> Result<Option<PersuasionCue>, AgentError> {
        let Some(set) = cue_set_for(&self.scenario, assessment) else {
            return Ok(None);
        };
        let candidates = self.scenario.cues.set(set);
        let topic = (set == CueSet::ExpertHint).then_some(self.stage.as_str());
        let cue = pick_least_used(&candidates, &self.cue_counts, topic)
            .ok_or(AgentError::EmptyCatalog(set))?
            .clone();
        self.cue_history.push(cue.id.clone());
        *self.cue_counts.entry(cue.id.clone()).or_insert(0) += 1;
        self.leaves.pulse_cue(&cue.id);
        Ok(Some(cue))
    }

    pub(crate) fn emit(&mut self, category: EventCategory, name: &str) -> Result<EventRecord, AgentError> {
        Ok(self.log.emit_event(category, name, BTreeMap::new())?)
    }

    pub(crate) fn act(&mut self, kind: ActionKind) {
        let at = self.now;
        self.cycle.actions.push(AgentAction { at, kind });
    }
}

/// Which catalog answers the assessment: ability first, then motivation by
/// peripheral-cue intensity.
pub fn cue_set_for(scenario: &Scenario, a: &PersuasionAssessment) -> Option<CueSet> {
    if a.ability_low {
        Some(CueSet::ExpertHint)
    } else if a.motivation_low {
        match scenario.config.intensity_bands.classify(a.peripheral_cue) {
            Intensity::High => Some(CueSet::Affect),
            _ => Some(CueSet::AttractiveSource),
        }
    } else {
        None
    }
}

/// Picks one reasoning for a batch: practicability, then teachability, then
/// persuasion. `None` when every event is neutral.
pub fn select_reasoning(scenario: &Scenario, batch: &[EventRecord]) -> Result<Option<Reasoning>, AgentError> {
    let mut best: Option<Reasoning> = None;
    for e in batch {
        let route = scenario
            .route_of(&e.name)
            .ok_or_else(|| AgentError::UnroutedEvent(e.name.clone()))?;
        let r = match route {
            Route::Practicability => Reasoning::Practicability,
            Route::Teachability => Reasoning::Teachability,
            Route::Persuasion => Reasoning::Persuasion,
            Route::Neutral => continue,
        };
        best = Some(match best {
            None => r,
            Some(b) => priority_max(b, r),
        });
    }
    Ok(best)
}

fn priority_max(a: Reasoning, b: Reasoning) -> Reasoning {
    let rank = |r: Reasoning| match r {
        Reasoning::Practicability => 0,
        Reasoning::Teachability => 1,
        Reasoning::Persuasion => 2,
    };
    if rank(b) < rank(a) {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone)]
pub struct PtaAgent {
    nets: Arc<GoalNetSet>,
    frame: InterpreterFrame,
    state: AgentState,
}

impl PtaAgent {
    pub fn new(scenario: Arc<Scenario>, seed: u64) -> Result<Self, AgentError> {
        let nets = Arc::new(scenario.goal_net_set()?);
        let frame = InterpreterFrame::new(&nets, seed);
        let c = &scenario.config;
        let log = EventLog::new(Arc::new(scenario.events.clone()), c.idle_timeout_ms, &c.timeout_event);
        let state = AgentState {
            leaves: LeafState::new(&scenario.fcm),
            kb: KnowledgeBase::new(scenario.concept_maps.iter().cloned()),
            log,
            cue_history: Vec::new(),
            cue_counts: BTreeMap::new(),
            stage: c.start_scene.clone(),
            now: 0,
            cycle: Scratch::default(),
            scenario,
        };
        Ok(PtaAgent { nets, frame, state })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.state.scenario
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.state.log
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.state.kb
    }

    pub fn leaves(&self) -> &LeafState {
        &self.state.leaves
    }

    pub fn frame(&self) -> &InterpreterFrame {
        &self.frame
    }

    pub fn cue_history(&self) -> &[String] {
        &self.state.cue_history
    }

    pub fn set_stage(&mut self, scene: &str) {
        self.state.stage = scene.to_string();
    }

    /// True when the main routine sits at its root with no sub-net running.
    pub fn at_start(&self) -> bool {
        let main = self.nets.main();
        self.frame.net == main.id
            && self.frame.call_stack.is_empty()
            && self.frame.active.len() == 1
            && self.frame.active.contains(&main.root)
    }

    /// Moves the logical clock forward; returns any timer events fired.
    pub fn advance_clock(&mut self, now: u64) -> Vec<EventRecord> {
        self.state.log.advance_to(now)
    }

    pub fn emit(
        &mut self,
        category: EventCategory,
        name: &str,
        payload: BTreeMap<String, String>,
    ) -> Result<EventRecord, AgentError> {
        Ok(self.state.log.emit_event(category, name, payload)?)
    }

    /// Current assessment without side effects.
    pub fn assess(&self) -> Result<PersuasionAssessment, AgentError> {
        Ok(evaluate(&self.state.scenario.fcm, &self.state.leaves)?)
    }

    pub fn select_cue(&mut self, assessment: &PersuasionAssessment) -> Result<Option<PersuasionCue>, AgentError> {
        self.state.select_cue(assessment)
    }

    /// Runs one detect-interpret-reason cycle at logical time `now`. On error
    /// the agent is left exactly as it was before the call.
    pub fn run_cycle(&mut self, now: u64) -> Result<CycleReport, AgentError> {
        let saved_state = self.state.clone();
        let saved_frame = self.frame.clone();
        match self.cycle_inner(now) {
            Ok(report) => Ok(report),
            Err(e) => {
                self.state = saved_state;
                self.frame = saved_frame;
                Err(e)
            }
        }
    }

    fn cycle_inner(&mut self, now: u64) -> Result<CycleReport, AgentError> {
        let last_id = self.state.log.records().last().map_or(0, |r| r.id);
        let trace_len = self.frame.trace.len();
        self.state.log.advance_to(now);
        self.state.now = now.max(self.state.log.clock());
        self.state.cycle = Scratch::default();

        let interpreter = Interpreter::new(&self.nets, tasks::registry());
        interpreter
            .advance(&mut self.frame, &mut self.state)
            .map_err(unwrap_task_error)?;
        if !self.at_start() {
            let active: Vec<&str> = self.frame.active.iter().map(String::as_str).collect();
            return Err(AgentError::Stalled(format!(
                "{}: {}",
                self.frame.net,
                active.join(", ")
            )));
        }

        let scratch = std::mem::take(&mut self.state.cycle);
        Ok(CycleReport {
            at: self.state.now,
            reasoning: scratch.reasoning,
            consumed: scratch.consumed,
            path: self.frame.trace[trace_len..].iter().map(ToString::to_string).collect(),
            assessment: scratch.assessment,
            actions: scratch.actions,
            events: self
                .state
                .log
                .records()
                .iter()
                .filter(|r| r.id > last_id)
                .cloned()
                .collect(),
        })
    }
}

fn unwrap_task_error(e: GoalNetError) -> AgentError {
    match e {
        GoalNetError::Task { task, source } => match source.downcast::<AgentError>() {
            Ok(inner) => *inner,
            Err(source) => AgentError::GoalNet(GoalNetError::Task { task, source }),
        },
        other => AgentError::GoalNet(other),
    }
}

impl Reasoning {
    /// Events of this reasoning plus neutral ones are consumed by a cycle.
    pub(crate) fn consumes(self, route: Route) -> bool {
        route == self.route() || route == Route::Neutral
    }
}
