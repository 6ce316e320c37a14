//! Scripted and random learners, session metrics and the FCM experiment.

mod policy;

pub use policy::{LearnerPolicy, PolicyError, PolicyKind, ScriptAction, ScriptStep, BUILTIN_POLICIES};

use crate::agent::{ActionKind, CueSet};
use crate::events::EventCategory;
use crate::fcm::ReportTable;
use crate::par;
use crate::persuasive::{evaluate_with_report, LeafState, PersuasionAssessment, PersuasiveError, STEM_CONCEPTS};
use crate::play::{JournalEntry, LearnerAction, PlayError, PlayStatus, Playthrough};
use crate::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Mixed into the seed so the learner's draws do not share a stream with
/// the agent's.
const LEARNER_STREAM: u64 = 0x6c65_6172_6e65_7221;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy `{policy}` step {step}: {message}")]
    Script {
        policy: String,
        step: usize,
        message: String,
    },
    #[error(transparent)]
    Play(#[from] PlayError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueCounts {
    #[serde(rename = "EH")]
    pub expert_hints: usize,
    #[serde(rename = "AS")]
    pub attractive_sources: usize,
    #[serde(rename = "AF")]
    pub affects: usize,
}

impl CueCounts {
    pub fn get(&self, set: CueSet) -> usize {
        match set {
            CueSet::ExpertHint => self.expert_hints,
            CueSet::AttractiveSource => self.attractive_sources,
            CueSet::Affect => self.affects,
        }
    }

    pub fn total(&self) -> usize {
        self.expert_hints + self.attractive_sources + self.affects
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub dialogue: usize,
    pub time: usize,
    pub teaching_feedback: usize,
    pub practicability: usize,
}

impl EventCounts {
    pub fn get(&self, c: EventCategory) -> usize {
        match c {
            EventCategory::Dialogue => self.dialogue,
            EventCategory::Time => self.time,
            EventCategory::TeachingFeedback => self.teaching_feedback,
            EventCategory::Practicability => self.practicability,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub cues: CueCounts,
    pub teach_attempts: usize,
    /// Logical time of the first carried-out solution.
    pub first_success_at: Option<u64>,
    pub events: EventCounts,
    pub cycles: usize,
    pub final_assessment: Option<PersuasionAssessment>,
}

impl SessionMetrics {
    /// Recomputes metrics from a session journal.
    pub fn from_journal(journal: &[JournalEntry]) -> Self {
        let mut m = SessionMetrics::default();
        for entry in journal {
            match entry {
                JournalEntry::Learner {
                    action: LearnerAction::TeachSubmit { .. },
                    ..
                } => m.teach_attempts += 1,
                JournalEntry::Event { record } => match record.category {
                    EventCategory::Dialogue => m.events.dialogue += 1,
                    EventCategory::Time => m.events.time += 1,
                    EventCategory::TeachingFeedback => m.events.teaching_feedback += 1,
                    EventCategory::Practicability => m.events.practicability += 1,
                },
                JournalEntry::Cycle { assessment, .. } => {
                    m.cycles += 1;
                    if assessment.is_some() {
                        m.final_assessment = *assessment;
                    }
                }
                JournalEntry::Action { action } => match &action.kind {
                    ActionKind::DisplayCue { set, .. } => match set {
                        CueSet::ExpertHint => m.cues.expert_hints += 1,
                        CueSet::AttractiveSource => m.cues.attractive_sources += 1,
                        CueSet::Affect => m.cues.affects += 1,
                    },
                    ActionKind::CarryOutSolution { .. } => {
                        m.first_success_at.get_or_insert(action.at);
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub policy: String,
    pub seed: u64,
    pub journal: Vec<JournalEntry>,
    pub metrics: SessionMetrics,
    pub completed: bool,
}

impl Simulation {
    pub fn to_jsonl(&self) -> String {
        crate::play::journal_to_jsonl(&self.journal)
    }
}

/// Drives a fresh run with `policy` for up to `max_ticks` agent ticks of the
/// scenario cadence. Deterministic in (scenario, policy, seed).
pub fn simulate(
    scenario: Arc<Scenario>,
    policy: &LearnerPolicy,
    seed: u64,
    max_ticks: u64,
) -> Result<Simulation, SimError> {
    if max_ticks == 0 {
        return Ok(Simulation {
            policy: policy.name.clone(),
            seed,
            journal: Vec::new(),
            metrics: SessionMetrics::default(),
            completed: false,
        });
    }
    let cadence = scenario.config.cadence_ms;
    let mut run = Playthrough::start(scenario, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LEARNER_STREAM);
    let mut next_step = 0;

    'ticks: for tick in 1..=max_ticks {
        let t = tick * cadence;
        match &policy.kind {
            PolicyKind::Scripted { steps } => {
                while let Some(step) = steps.get(next_step).filter(|s| s.at_ms <= t) {
                    if let Some(action) = scripted_action(&run, policy, next_step, step)? {
                        run.apply(action, step.at_ms)?;
                    }
                    next_step += 1;
                    if run.status() == PlayStatus::Completed {
                        break 'ticks;
                    }
                }
            }
            PolicyKind::Random {
                act_probability,
                correct_probability,
            } => {
                if let Some(action) = random_action(&run, &mut rng, *act_probability, *correct_probability) {
                    run.apply(action, t)?;
                    if run.status() == PlayStatus::Completed {
                        break 'ticks;
                    }
                }
            }
        }
        run.apply(LearnerAction::Tick, t)?;
        if run.status() == PlayStatus::Completed {
            break;
        }
    }

    let journal = run.journal().to_vec();
    Ok(Simulation {
        policy: policy.name.clone(),
        seed,
        metrics: SessionMetrics::from_journal(&journal),
        completed: run.status() == PlayStatus::Completed,
        journal,
    })
}

fn scripted_action(
    run: &Playthrough,
    policy: &LearnerPolicy,
    index: usize,
    step: &ScriptStep,
) -> Result<Option<LearnerAction>, SimError> {
    Ok(match &step.action {
        ScriptAction::Idle => None,
        ScriptAction::Choose { npc, choice } => {
            let idx = run.choice_index(npc, choice).ok_or_else(|| SimError::Script {
                policy: policy.name.clone(),
                step: index,
                message: format!("`{npc}` does not offer \"{choice}\" in scene `{}`", run.scene()),
            })?;
            Some(LearnerAction::DialogueChoice {
                npc: npc.clone(),
                choice: idx,
            })
        }
        ScriptAction::Teach { assignments } => Some(LearnerAction::TeachSubmit {
            assignments: assignments.clone(),
        }),
    })
}

fn random_action(
    run: &Playthrough,
    rng: &mut ChaCha8Rng,
    act_probability: f64,
    correct_probability: f64,
) -> Option<LearnerAction> {
    if rng.random::<f64>() >= act_probability {
        return None;
    }
    if run.teach_open() && rng.random_bool(0.5) {
        let template = run
            .scenario()
            .template(&run.scenario().config.teaching.template)
            .expect("validated template");
        let assignments = template
            .slots
            .iter()
            .map(|slot| {
                let label = if rng.random::<f64>() < correct_probability {
                    template.key[&slot.id].clone()
                } else {
                    template.labels[rng.random_range(0..template.labels.len())].clone()
                };
                (slot.id.clone(), label)
            })
            .collect();
        return Some(LearnerAction::TeachSubmit { assignments });
    }
    let view = run.view();
    let offers: Vec<(&str, usize)> = view
        .npcs
        .iter()
        .flat_map(|n| n.choices.iter().map(move |c| (n.id.as_str(), c.index)))
        .collect();
    if offers.is_empty() {
        return None;
    }
    let (npc, choice) = offers[rng.random_range(0..offers.len())];
    Some(LearnerAction::DialogueChoice {
        npc: npc.to_string(),
        choice,
    })
}

/// One simulation per seed, run on the worker pool when the `parallel`
/// feature is enabled. Results keep seed order.
pub fn simulate_batch(
    scenario: Arc<Scenario>,
    policy: &LearnerPolicy,
    seeds: &[u64],
    max_ticks: u64,
) -> Vec<Result<Simulation, SimError>> {
    par::map(seeds, |&seed| simulate(scenario.clone(), policy, seed, max_ticks))
}

pub fn simulate_batch_sequential(
    scenario: Arc<Scenario>,
    policy: &LearnerPolicy,
    seeds: &[u64],
    max_ticks: u64,
) -> Vec<Result<Simulation, SimError>> {
    par::map_sequential(seeds, |&seed| simulate(scenario.clone(), policy, seed, max_ticks))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmExperiment {
    pub table: ReportTable,
    pub assessments: Vec<PersuasionAssessment>,
}

/// Column title for an event set.
pub fn set_label(set: &[String]) -> String {
    if set.is_empty() {
        "Steady State".to_string()
    } else {
        set.join(" + ")
    }
}

/// Evaluates each event set on fresh leaves and tabulates the stem fixed
/// points side by side.
pub fn fcm_experiment(scenario: &Scenario, sets: &[Vec<String>]) -> Result<FcmExperiment, PersuasiveError> {
    let fcm = &scenario.fcm;
    let columns = par::map(sets, |set| {
        let mut leaves = LeafState::new(fcm);
        for event in set {
            leaves.activate(event)?;
        }
        evaluate_with_report(fcm, &leaves)
    });
    let mut table = ReportTable::new(STEM_CONCEPTS.iter().map(|s| s.to_string()).collect());
    let mut assessments = Vec::with_capacity(sets.len());
    for (set, column) in sets.iter().zip(columns) {
        let (assessment, report) = column?;
        table.push(&set_label(set), &report);
        assessments.push(assessment);
    }
    Ok(FcmExperiment { table, assessments })
}

#[derive(Debug, Deserialize)]
struct SetsDoc {
    sets: Vec<Vec<String>>,
}

/// Parses `sets = [[...], ...]` from TOML.
pub fn parse_event_sets(doc: &str) -> Result<Vec<Vec<String>>, toml::de::Error> {
    toml::from_str::<SetsDoc>(doc).map(|d| d.sets)
}

/// Per-run means over a batch, keyed by figure name.
pub fn summarize(runs: &[Simulation]) -> BTreeMap<String, f64> {
    let n = runs.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Simulation) -> f64| runs.iter().map(f).sum::<f64>() / n;
    BTreeMap::from([
        ("runs".to_string(), runs.len() as f64),
        ("completed".to_string(), mean(&|s| f64::from(u8::from(s.completed)))),
        ("cues_eh".to_string(), mean(&|s| s.metrics.cues.expert_hints as f64)),
        (
            "cues_as".to_string(),
            mean(&|s| s.metrics.cues.attractive_sources as f64),
        ),
        ("cues_af".to_string(), mean(&|s| s.metrics.cues.affects as f64)),
        ("teach_attempts".to_string(), mean(&|s| s.metrics.teach_attempts as f64)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn scenario() -> Arc<Scenario> {
        Arc::new(reference_scenario())
    }

    fn builtin(name: &str) -> LearnerPolicy {
        LearnerPolicy::builtin(name).unwrap()
    }

    #[test]
    fn zero_ticks_is_empty() {
        let sim = simulate(scenario(), &builtin("diligent"), 1, 0).unwrap();
        assert!(sim.journal.is_empty());
        assert_eq!(sim.metrics, SessionMetrics::default());
    }

    #[test]
    fn diligent_succeeds_without_affect_cues() {
        let sim = simulate(scenario(), &builtin("diligent"), 1, 200).unwrap();
        assert!(sim.completed);
        assert!(sim.metrics.first_success_at.is_some());
        assert_eq!(sim.metrics.cues.affects, 0);
        assert_eq!(sim.metrics.teach_attempts, 1);
    }

    #[test]
    fn refuser_is_persuaded_before_succeeding() {
        let sim = simulate(scenario(), &builtin("refuser"), 1, 200).unwrap();
        let rejections = sim
            .journal
            .iter()
            .filter(|e| matches!(e, JournalEntry::Event { record } if record.name == "Teaching rejected"))
            .count();
        assert!(rejections >= 1);
        assert!(sim.metrics.cues.total() >= 1);
        let first_cue = sim
            .journal
            .iter()
            .position(|e| matches!(e, JournalEntry::Action { action } if matches!(action.kind, ActionKind::DisplayCue { .. })))
            .unwrap();
        let success = sim
            .journal
            .iter()
            .position(|e| matches!(e, JournalEntry::Action { action } if matches!(action.kind, ActionKind::CarryOutSolution { .. })))
            .unwrap();
        assert!(first_cue < success);
    }

    #[test]
    fn distracted_gets_expert_hints() {
        let sim = simulate(scenario(), &builtin("distracted"), 1, 400).unwrap();
        assert!(sim.metrics.cues.expert_hints >= 1, "{:?}", sim.metrics);
    }

    #[test]
    fn metrics_match_the_exported_log() {
        for name in BUILTIN_POLICIES {
            let sim = simulate(scenario(), &builtin(name), 11, 300).unwrap();
            let parsed = crate::play::journal_from_jsonl(&sim.to_jsonl()).unwrap();
            assert_eq!(SessionMetrics::from_journal(&parsed), sim.metrics, "{name}");
        }
    }

    #[test]
    fn same_seed_same_log() {
        let a = simulate(scenario(), &builtin("random"), 5, 300).unwrap();
        let b = simulate(scenario(), &builtin("random"), 5, 300).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    #[test]
    fn batch_orders_match() {
        let seeds: Vec<u64> = (0..8).collect();
        let par: Vec<String> = simulate_batch(scenario(), &builtin("random"), &seeds, 100)
            .into_iter()
            .map(|r| r.unwrap().to_jsonl())
            .collect();
        let seq: Vec<String> = simulate_batch_sequential(scenario(), &builtin("random"), &seeds, 100)
            .into_iter()
            .map(|r| r.unwrap().to_jsonl())
            .collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn steady_state_is_one_column() {
        let exp = fcm_experiment(&reference_scenario(), &[vec![]]).unwrap();
        assert_eq!(exp.table.columns.len(), 1);
        assert_eq!(exp.table.columns[0].0, "Steady State");
    }

    #[test]
    fn bogus_event_is_unbound() {
        let err = fcm_experiment(&reference_scenario(), &[vec!["bogus".into()]]).unwrap_err();
        assert!(matches!(err, PersuasiveError::UnboundEvent(e) if e == "bogus"));
    }

    #[test]
    fn event_sets_parse() {
        let sets = parse_event_sets("sets = [[], [\"Apply diffusion\"]]").unwrap();
        assert_eq!(sets, vec![vec![], vec!["Apply diffusion".to_string()]]);
    }
}
