//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero if any fails.
mod common;

use common::*;
use pta_core::agent::ActionKind;
use pta_core::events::EventCategory;
use pta_core::fcm::{ConceptState, FcmModel, FixedPointConfig, SquashSpec};
use pta_core::harness::{fcm_experiment, simulate, LearnerPolicy, BUILTIN_POLICIES};
use pta_core::knowledge::{acquire_teaching, evaluate_taught, KnowledgeBase};
use pta_core::play::{JournalEntry, LearnerAction, Playthrough};
use pta_core::scenario::{reference_scenario, Scenario};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

const EMIT_ENV: &str = "PTA_ACCEPTANCE_EMIT";
const REPLAY_SEED: u64 = 42;
const REPLAY_TICKS: u64 = 300;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario() -> Arc<Scenario> {
    Arc::new(reference_scenario())
}

fn fcm_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng(20_240_501);
    let cfg = FixedPointConfig {
        tol: 1e-12,
        max_iter: 500,
    };
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let (w, lambda, start) = random_model(&mut rng, 10);
        let model = FcmModel::new(names(start.len()), w.clone(), SquashSpec::sigmoid(lambda))
            .map_err(|e| format!("model {case}: {e}"))?;
        let step = model
            .step_state(&ConceptState(start.clone()))
            .map_err(|e| e.to_string())?;
        for (a, b) in step.values().iter().zip(oracle_step(&w, lambda, &start)) {
            worst = worst.max((a - b).abs());
        }
        let report = model
            .run_to_fixed_point(&ConceptState(start.clone()), cfg)
            .map_err(|e| e.to_string())?;
        let (fp, iters, converged) = oracle_fixed_point(&w, lambda, &start, cfg.tol, cfg.max_iter);
        ensure(report.iterations == iters && report.converged == converged, || {
            format!("model {case}: {} iterations vs oracle {iters}", report.iterations)
        })?;
        for (a, b) in report.final_state().unwrap().values().iter().zip(&fp) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = t0.elapsed();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} > 1e-9"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 models, max deviation {worst:e}, {elapsed:.2?}"))
}

fn bivalent_table() -> Outcome {
    let model = four_concept_model();
    for (start, expected) in FOUR_CONCEPT_NEXT {
        let next = model
            .step_state(&ConceptState(start.iter().map(|&b| f64::from(b)).collect()))
            .map_err(|e| e.to_string())?;
        let got: Vec<u8> = next.values().iter().map(|&v| v as u8).collect();
        ensure(got == expected, || {
            format!("{start:?} -> {got:?}, expected {expected:?}")
        })?;
        ensure(next.values().iter().all(|&v| v == 0.0 || v == 1.0), || {
            "non-binary output".into()
        })?;
    }
    Ok("16/16 start states match".into())
}

fn cumulative_event_trend() -> Outcome {
    let sc = scenario();
    let sets: Vec<Vec<String>> = [
        vec!["Apply diffusion"],
        vec!["Apply diffusion", "Apply osmosis"],
        vec!["Apply diffusion", "Apply osmosis", "Apply evaporation"],
    ]
    .iter()
    .map(|s| s.iter().map(|e| e.to_string()).collect())
    .collect();
    let t0 = Instant::now();
    let exp = fcm_experiment(&sc, &sets).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let mot: Vec<f64> = exp.assessments.iter().map(|a| a.motivation).collect();
    let ab: Vec<f64> = exp.assessments.iter().map(|a| a.ability).collect();
    ensure(mot.windows(2).all(|w| w[1] > w[0]), || {
        format!("motivation {mot:?} not increasing")
    })?;
    ensure(ab.windows(2).all(|w| w[1] >= w[0]), || {
        format!("ability {ab:?} decreasing")
    })?;
    for a in &exp.assessments {
        for v in [a.motivation, a.ability, a.peripheral_cue] {
            ensure((0.0..=1.0).contains(&v), || format!("{v} outside [0, 1]"))?;
        }
    }
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "motivation {:.7} -> {:.7} -> {:.7}, ability {:.7} -> {:.7} -> {:.7}, {elapsed:.2?}",
        mot[0], mot[1], mot[2], ab[0], ab[1], ab[2]
    ))
}

fn gating() -> Outcome {
    let sc = scenario();
    let policy = LearnerPolicy::builtin("random").map_err(|e| e.to_string())?;
    let (mut cues, mut triggered) = (0usize, 0usize);
    for seed in 0..200u64 {
        let sim = simulate(sc.clone(), &policy, seed, 400).map_err(|e| e.to_string())?;
        let names: BTreeMap<u64, (EventCategory, String)> = sim
            .journal
            .iter()
            .filter_map(|e| match e {
                JournalEntry::Event { record } => Some((record.id, (record.category, record.name.clone()))),
                _ => None,
            })
            .collect();
        let mut current = None;
        let mut session_cues = 0;
        let mut needs_cue = false;
        for e in &sim.journal {
            match e {
                JournalEntry::Cycle {
                    assessment, consumed, ..
                } => {
                    current = Some(*assessment);
                    let trigger = consumed.iter().any(|id| match names.get(id) {
                        Some((EventCategory::Time, _)) => true,
                        Some((_, n)) => *n == sc.config.teaching.rejection_event,
                        None => false,
                    });
                    if trigger && assessment.is_some_and(|a| a.motivation_low) {
                        needs_cue = true;
                    }
                }
                JournalEntry::Action { action } if matches!(action.kind, ActionKind::DisplayCue { .. }) => {
                    session_cues += 1;
                    let ok = matches!(current, Some(Some(a)) if a.motivation_low || a.ability_low);
                    ensure(ok, || {
                        format!("seed {seed}: cue at {} with both flags false", action.at)
                    })?;
                }
                JournalEntry::Learner { .. } => current = None,
                _ => {}
            }
        }
        if needs_cue {
            triggered += 1;
            ensure(session_cues > 0, || {
                format!("seed {seed}: low motivation after a trigger but no cue")
            })?;
        }
        cues += session_cues;
    }
    ensure(triggered > 0, || {
        "no session reached a rejection or timeout with low motivation".into()
    })?;
    Ok(format!(
        "200 sessions, {cues} cues, {triggered} sessions with a low-motivation trigger"
    ))
}

fn cycle_paths() -> Outcome {
    let sc = scenario();
    let mut seen = std::collections::BTreeSet::new();
    for policy in ["diligent", "refuser", "distracted"] {
        let p = LearnerPolicy::builtin(policy).map_err(|e| e.to_string())?;
        let sim = simulate(sc.clone(), &p, 7, 200).map_err(|e| e.to_string())?;
        check_golden(&format!("{policy}.txt"), &journal_shape(&sim.journal))?;
        seen.extend(sim.journal.iter().filter_map(reasoning_of));
        let j = &sim.journal;
        let carry = cycle_with(j, "practicability/CarryOutSol").ok_or(format!("{policy}: no CarryOutSol"))?;
        ensure(
            j[carry..].iter().any(|e| matches!(e, JournalEntry::Action { action } if matches!(action.kind, ActionKind::CarryOutSolution { .. }))),
            || format!("{policy}: no carry_out_solution action"),
        )?;
        ensure(j.last().map(|e| e.label()).as_deref() == Some("Teach success"), || {
            format!("{policy}: log does not end with Teach success")
        })?;
        let next_reasoning = |i: usize| j[i + 1..].iter().find_map(reasoning_of);
        match policy {
            "refuser" => {
                let i = cycle_with(j, "teachability/GenerateRejectionEvent").ok_or("refuser: no rejection path")?;
                ensure(next_reasoning(i).as_deref() == Some("persuasion"), || {
                    "refuser: rejection not followed by persuasion".into()
                })?;
            }
            "distracted" => {
                let i = cycle_with(j, "practicability/GenerateWrongSolEvent")
                    .ok_or("distracted: no wrong-solution path")?;
                ensure(next_reasoning(i).as_deref() == Some("persuasion"), || {
                    "distracted: wrong map not followed by persuasion".into()
                })?;
            }
            _ => {}
        }
    }
    ensure(seen.len() >= 3, || format!("only {seen:?} exercised"))?;
    Ok("3 golden logs match; teachability, practicability and persuasion exercised".into())
}

fn emit_logs(dir: &Path) -> Result<(), String> {
    let sc = scenario();
    for policy in BUILTIN_POLICIES {
        let p = LearnerPolicy::builtin(policy).map_err(|e| e.to_string())?;
        let sim = simulate(sc.clone(), &p, REPLAY_SEED, REPLAY_TICKS).map_err(|e| e.to_string())?;
        std::fs::write(dir.join(format!("{policy}.jsonl")), sim.to_jsonl()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn replay() -> Outcome {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let base = std::env::temp_dir().join(format!("pta-acceptance-{}", std::process::id()));
    let mut dirs: Vec<PathBuf> = Vec::new();
    for run in 0..2 {
        let dir = base.join(format!("run{run}"));
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let status = Command::new(&exe)
            .env(EMIT_ENV, &dir)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("child run {run} failed: {status}"))?;
        dirs.push(dir);
    }
    let mut bytes = 0;
    for policy in BUILTIN_POLICIES {
        let a = std::fs::read(dirs[0].join(format!("{policy}.jsonl"))).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(format!("{policy}.jsonl"))).map_err(|e| e.to_string())?;
        ensure(!a.is_empty() && a == b, || {
            format!("{policy}: logs differ between processes")
        })?;
        bytes += a.len();
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok(format!(
        "{} policies, seed {REPLAY_SEED}, {bytes} bytes identical across 2 processes",
        BUILTIN_POLICIES.len()
    ))
}

fn idle_timer() -> Outcome {
    let sc = scenario();
    let mut p = Playthrough::start(sc.clone(), 1).map_err(|e| e.to_string())?;
    let timeouts = |p: &Playthrough| {
        p.journal()
            .iter()
            .filter(|e| matches!(e, JournalEntry::Event { record } if record.category == EventCategory::Time))
            .map(|e| e.at())
            .collect::<Vec<u64>>()
    };
    let expect = |p: &mut Playthrough, now: u64, want: &[u64]| -> Result<(), String> {
        p.apply(LearnerAction::Tick, now).map_err(|e| e.to_string())?;
        let got = timeouts(p);
        ensure(got == want, || {
            format!("after tick at {now}: timeouts {got:?}, expected {want:?}")
        })
    };
    expect(&mut p, 299_999, &[])?;
    expect(&mut p, 300_000, &[])?;
    expect(&mut p, 300_001, &[300_000])?;
    expect(&mut p, 600_000, &[300_000])?;
    expect(&mut p, 600_001, &[300_000, 600_000])?;
    let choice = p
        .choice_index("sharman", "Tell me about diffusion")
        .ok_or("sharman choice missing")?;
    p.apply(
        LearnerAction::DialogueChoice {
            npc: "sharman".into(),
            choice,
        },
        700_000,
    )
    .map_err(|e| e.to_string())?;
    expect(&mut p, 1_000_000, &[300_000, 600_000])?;
    expect(&mut p, 1_000_001, &[300_000, 600_000, 1_000_000])?;
    expect(
        &mut p,
        1_900_001,
        &[300_000, 600_000, 1_000_000, 1_300_000, 1_600_000, 1_900_000],
    )?;
    Ok("one timeout per silent 300000 ms window; dialogue at 700000 moved the next to 1000000".into())
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

fn knowledge_round_trip() -> Outcome {
    let sc = scenario();
    let template = sc.template(&sc.config.teaching.template).ok_or("template missing")?;
    let correct: Vec<(String, String)> = template.key.iter().map(|(s, l)| (s.clone(), l.clone())).collect();
    let mut wrong = correct.clone();
    wrong[0].1 = template.labels.iter().find(|l| **l != wrong[0].1).unwrap().clone();
    let mut partial = correct.clone();
    partial[1].1 = String::new();
    let mut checked = 0;
    for base in [&correct, &wrong, &partial] {
        let mut kb = KnowledgeBase::new(sc.concept_maps.clone());
        let reference = evaluate_taught(
            template,
            &acquire_teaching(template, base.clone(), 0).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        for (k, order) in permutations(base).into_iter().enumerate() {
            let taught = acquire_teaching(template, order, k as u64).map_err(|e| e.to_string())?;
            kb.save(taught.clone());
            let snapshot = kb.clone();
            let back = kb.query_learnt(&template.id).ok_or("query returned nothing")?;
            ensure(*back == taught, || "query did not return the saved map".into())?;
            let g1 = evaluate_taught(template, back).map_err(|e| e.to_string())?;
            let g2 = evaluate_taught(template, back).map_err(|e| e.to_string())?;
            ensure(g1 == g2 && g1 == reference, || format!("grade changed with order {k}"))?;
            ensure(kb == snapshot, || "grading mutated the knowledge base".into())?;
            checked += 1;
        }
        ensure(reference.correct == std::ptr::eq(base, &correct), || {
            "correctness flag wrong".into()
        })?;
    }
    Ok(format!("{checked} orderings of 3 maps graded identically"))
}

fn main() {
    if let Some(dir) = std::env::var_os(EMIT_ENV) {
        if let Err(e) = emit_logs(Path::new(&dir)) {
            eprintln!("{e}");
            std::process::exit(1);
        }
        return;
    }
    let criteria: [Criterion; 8] = [
        ("fcm-oracle-equivalence", fcm_oracle),
        ("bivalent-step-table", bivalent_table),
        ("cumulative-event-trend", cumulative_event_trend),
        ("persuasion-gating", gating),
        ("cycle-path-conformance", cycle_paths),
        ("determinism-replay", replay),
        ("idle-timer", idle_timer),
        ("knowledge-round-trip", knowledge_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name:<24} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
