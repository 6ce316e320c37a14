//! Scripted sessions against frozen journal shapes. Regenerate with
//! `PTA_BLESS=1 cargo test -p pta-core --test golden` after an intended
//! behaviour change and review the diff.
mod common;

use common::*;
use pta_core::agent::ActionKind;
use pta_core::harness::{simulate, LearnerPolicy, Simulation};
use pta_core::play::JournalEntry;
use pta_core::scenario::reference_scenario;
use std::sync::Arc;

const SEED: u64 = 7;
const TICKS: u64 = 200;

fn run(policy: &str) -> Simulation {
    let p = LearnerPolicy::builtin(policy).unwrap();
    simulate(Arc::new(reference_scenario()), &p, SEED, TICKS).unwrap()
}

fn next_cycle_after(journal: &[JournalEntry], i: usize) -> Option<String> {
    journal[i + 1..].iter().find_map(reasoning_of)
}

fn has_event(journal: &[JournalEntry], name: &str) -> bool {
    journal
        .iter()
        .any(|e| matches!(e, JournalEntry::Event { record } if record.name == name))
}

#[test]
fn golden_shapes() {
    for policy in ["diligent", "refuser", "distracted"] {
        let sim = run(policy);
        check_golden(&format!("{policy}.txt"), &journal_shape(&sim.journal)).unwrap();
    }
}

#[test]
fn refusal_takes_the_rejection_branch() {
    let sim = run("refuser");
    let j = &sim.journal;
    let i = cycle_with(j, "teachability/GenerateRejectionEvent").expect("rejection path");
    assert_eq!(reasoning_of(&j[i]).as_deref(), Some("teachability"));
    assert!(has_event(j, "Teaching rejected"));
    assert_eq!(next_cycle_after(j, i).as_deref(), Some("persuasion"));
}

#[test]
fn wrong_map_then_persuasion() {
    let sim = run("distracted");
    let j = &sim.journal;
    let i = cycle_with(j, "practicability/GenerateWrongSolEvent").expect("wrong-solution path");
    assert!(has_event(j, "Teach Failure"));
    assert_eq!(next_cycle_after(j, i).as_deref(), Some("persuasion"));
    let repeat = j.iter().find_map(|e| match e {
        JournalEntry::Action { action } => match &action.kind {
            ActionKind::RepeatTeachingPrompt { slots, .. } => Some(slots.clone()),
            _ => None,
        },
        _ => None,
    });
    assert_eq!(repeat, Some(vec!["process".to_string()]));
}

#[test]
fn correct_map_carries_out_the_solution() {
    for policy in ["diligent", "refuser", "distracted"] {
        let sim = run(policy);
        let j = &sim.journal;
        assert!(sim.completed, "{policy}");
        let i = cycle_with(j, "practicability/CarryOutSol").expect("carry-out path");
        assert!(j[i..].iter().any(|e| matches!(e, JournalEntry::Action { action }
            if matches!(action.kind, ActionKind::CarryOutSolution { .. }))));
        match j.last() {
            Some(JournalEntry::Event { record }) => assert_eq!(record.name, "Teach success"),
            other => panic!("{policy}: log ends with {other:?}"),
        }
    }
}

#[test]
fn all_three_sub_goal_nets_are_exercised() {
    let mut seen = std::collections::BTreeSet::new();
    for policy in ["diligent", "refuser", "distracted"] {
        for e in &run(policy).journal {
            if let Some(r) = reasoning_of(e) {
                seen.insert(r);
            }
        }
    }
    for r in ["teachability", "practicability", "persuasion"] {
        assert!(seen.contains(r), "{r} never ran");
    }
}
