use super::{ActionKind, AgentError, AgentState, Reasoning, SUBMISSION_KEY};
use crate::events::EventCategory;
use crate::goal_net::{TaskFailure, TaskRegistry, TaskSignal};
use crate::knowledge::{acquire_teaching, evaluate_taught};
use crate::persuasive::evaluate;
use std::collections::BTreeMap;
use std::sync::OnceLock;

pub const TASK_NAMES: [&str; 18] = [
    "DetectEvent",
    "InterpretEvent",
    "SelectReasoning",
    "Finish",
    "RequireTeaching",
    "CheckResponse",
    "InitializeTeaching",
    "AcquireKnowledge",
    "SaveKnowledge",
    "GenerateRejectionEvent",
    "QueryKB",
    "Reasoning",
    "CarryOutSol",
    "GenerateWrongSolEvent",
    "FCMCalculation",
    "CheckMotAbi",
    "SelectCue",
    "ExecuteCue",
];

pub const PREDICATE_NAMES: [&str; 7] = [
    "route_practicability",
    "route_teachability",
    "route_persuasion",
    "knowledge_submitted",
    "response_rejected",
    "solution_correct",
    "persuasion_needed",
];

type Outcome = Result<TaskSignal, TaskFailure>;

fn fail(e: impl Into<AgentError>) -> TaskFailure {
    Box::new(e.into())
}

const GO: Outcome = Ok(TaskSignal::Proceed);

pub(crate) fn registry() -> &'static TaskRegistry<AgentState> {
    static REGISTRY: OnceLock<TaskRegistry<AgentState>> = OnceLock::new();
    REGISTRY.get_or_init(build)
}

fn build() -> TaskRegistry<AgentState> {
    TaskRegistry::new()
        .task("DetectEvent", detect_event)
        .task("InterpretEvent", interpret_event)
        .task("SelectReasoning", select_reasoning)
        .task("Finish", |s: &mut AgentState| {
            s.cycle.done = true;
            GO
        })
        .task("RequireTeaching", require_teaching)
        .task("CheckResponse", check_response)
        .task("InitializeTeaching", initialize_teaching)
        .task("AcquireKnowledge", acquire_knowledge)
        .task("SaveKnowledge", save_knowledge)
        .task("GenerateRejectionEvent", |s: &mut AgentState| {
            let name = s.scenario.config.teaching.rejection_event.clone();
            s.emit(EventCategory::TeachingFeedback, &name).map_err(fail)?;
            GO
        })
        .task("QueryKB", |s: &mut AgentState| {
            let template = &s.scenario.config.teaching.template;
            s.cycle.learnt = s.kb.query_learnt(template).cloned();
            GO
        })
        .task("Reasoning", reasoning)
        .task("CarryOutSol", carry_out_solution)
        .task("GenerateWrongSolEvent", generate_wrong_solution)
        .task("FCMCalculation", |s: &mut AgentState| {
            let a = evaluate(&s.scenario.fcm, &s.leaves).map_err(fail)?;
            s.leaves.clear_cue_pulses();
            s.cycle.assessment = Some(a);
            GO
        })
        .task("CheckMotAbi", |_: &mut AgentState| GO)
        .task("SelectCue", |s: &mut AgentState| {
            let Some(a) = s.cycle.assessment else { return GO };
            s.cycle.cue = s.select_cue(&a).map_err(fail)?;
            GO
        })
        .task("ExecuteCue", |s: &mut AgentState| {
            if let Some(cue) = s.cycle.cue.clone() {
                s.act(ActionKind::DisplayCue {
                    cue: cue.id,
                    set: cue.set,
                });
            }
            GO
        })
        .predicate("route_practicability", |s: &AgentState| {
            s.cycle.reasoning == Some(Reasoning::Practicability)
        })
        .predicate("route_teachability", |s: &AgentState| {
            s.cycle.reasoning == Some(Reasoning::Teachability)
        })
        .predicate("route_persuasion", |s: &AgentState| {
            s.cycle.reasoning == Some(Reasoning::Persuasion)
        })
        .predicate("knowledge_submitted", |s: &AgentState| s.cycle.submission.is_some())
        .predicate("response_rejected", |s: &AgentState| s.cycle.rejected)
        .predicate("solution_correct", |s: &AgentState| {
            s.cycle.grade.as_ref().is_some_and(|g| g.correct)
        })
        .predicate("persuasion_needed", |s: &AgentState| {
            s.cycle.assessment.is_some_and(|a| a.needs_persuasion())
        })
}

fn detect_event(s: &mut AgentState) -> Outcome {
    if s.cycle.done {
        return Ok(TaskSignal::Wait);
    }
    let batch = s.log.peek_due(s.scenario.config.batch_limit);
    if batch.is_empty() {
        return Ok(TaskSignal::Wait);
    }
    s.cycle.batch = batch;
    GO
}

fn interpret_event(s: &mut AgentState) -> Outcome {
    for e in &s.cycle.batch {
        if s.leaves.is_bound(&e.name) {
            s.leaves.activate(&e.name).map_err(fail)?;
        }
    }
    GO
}

fn select_reasoning(s: &mut AgentState) -> Outcome {
    let reasoning = super::select_reasoning(&s.scenario, &s.cycle.batch).map_err(fail)?;
    let consumed: Vec<u64> = s
        .cycle
        .batch
        .iter()
        .filter(|e| match reasoning {
            None => true,
            Some(r) => s.scenario.route_of(&e.name).is_some_and(|route| r.consumes(route)),
        })
        .map(|e| e.id)
        .collect();
    s.log.mark_processed(&consumed);
    s.cycle.reasoning = reasoning;
    s.cycle.consumed = consumed;
    GO
}

/// Batch events called `name` that this cycle consumed.
fn consumed_named<'a>(s: &'a AgentState, name: &'a str) -> impl Iterator<Item = &'a crate::events::EventRecord> + 'a {
    s.cycle
        .batch
        .iter()
        .filter(move |e| e.name == name && s.cycle.consumed.contains(&e.id))
}

fn require_teaching(s: &mut AgentState) -> Outcome {
    let t = &s.scenario.config.teaching;
    let answered = consumed_named(s, &t.submit_event).any(|e| e.payload.contains_key(SUBMISSION_KEY))
        || consumed_named(s, &t.decline_event).next().is_some();
    if !answered {
        let kind = ActionKind::RequestTeaching {
            template: t.template.clone(),
            prompt: t.request_prompt.clone(),
        };
        s.act(kind);
    }
    GO
}

fn check_response(s: &mut AgentState) -> Outcome {
    let t = &s.scenario.config.teaching;
    let latest = consumed_named(s, &t.submit_event)
        .filter_map(|e| e.payload.get(SUBMISSION_KEY))
        .last()
        .cloned();
    let rejected = consumed_named(s, &t.decline_event).next().is_some();
    if let Some(raw) = latest {
        let map: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| fail(AgentError::InvalidSubmission(e.to_string())))?;
        s.cycle.submission = Some(map);
    }
    s.cycle.rejected = rejected;
    GO
}

fn initialize_teaching(s: &mut AgentState) -> Outcome {
    let id = &s.scenario.config.teaching.template;
    if s.kb.template(id).is_none() {
        return Err(fail(AgentError::UnknownTemplate(id.clone())));
    }
    GO
}

fn acquire_knowledge(s: &mut AgentState) -> Outcome {
    let id = s.scenario.config.teaching.template.clone();
    let template =
        s.kb.template(&id)
            .ok_or_else(|| fail(AgentError::UnknownTemplate(id.clone())))?;
    let submission = s.cycle.submission.clone().unwrap_or_default();
    let taught = acquire_teaching(template, submission, s.now).map_err(fail)?;
    s.cycle.taught = Some(taught);
    GO
}

fn save_knowledge(s: &mut AgentState) -> Outcome {
    if let Some(taught) = s.cycle.taught.take() {
        s.kb.save(taught);
        let name = s.scenario.config.teaching.practicability_event.clone();
        s.emit(EventCategory::Practicability, &name).map_err(fail)?;
    }
    GO
}

fn reasoning(s: &mut AgentState) -> Outcome {
    let id = s.scenario.config.teaching.template.clone();
    let template =
        s.kb.template(&id)
            .ok_or_else(|| fail(AgentError::UnknownTemplate(id.clone())))?;
    let learnt = match s.cycle.learnt.clone() {
        Some(t) => t,
        None => acquire_teaching(template, Vec::<(String, String)>::new(), s.now).map_err(fail)?,
    };
    s.cycle.grade = Some(evaluate_taught(template, &learnt).map_err(fail)?);
    GO
}

fn carry_out_solution(s: &mut AgentState) -> Outcome {
    let t = s.scenario.config.teaching.clone();
    s.act(ActionKind::CarryOutSolution { template: t.template });
    s.emit(EventCategory::TeachingFeedback, &t.success_event)
        .map_err(fail)?;
    GO
}

fn generate_wrong_solution(s: &mut AgentState) -> Outcome {
    let t = s.scenario.config.teaching.clone();
    s.emit(EventCategory::TeachingFeedback, &t.failure_event)
        .map_err(fail)?;
    let slots = s
        .cycle
        .grade
        .as_ref()
        .map(|g| g.diff.keys().cloned().collect())
        .unwrap_or_default();
    s.act(ActionKind::RepeatTeachingPrompt {
        text: t.repeat_prompt,
        slots,
    });
    GO
}
