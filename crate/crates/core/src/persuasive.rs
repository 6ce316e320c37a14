//! The persuasive FCM.
//!
//! Environment events are leaf concepts bound to one persuasion factor each:
//! personal relevance (RL), personal responsibility (RS) and need for
//! cognition (NC) feed motivation; prior knowledge (PK), distraction (DT) and
//! repetition (RP) feed ability. Executed peripheral cues feed the cue stem.
//!
//! Evaluation aggregates the active leaves into a raw stem input
//! `[Mot, Ab, PeriCue]`, squashes it into the starting stem state and iterates
//! the 3x3 stem map to a fixed point while the active leaves stay clamped:
//! `A' = f(A · W + A + raw)`.

use crate::fcm::{ConceptState, FcmError, FcmModel, FixedPointConfig, FixedPointReport, SquashSpec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const STEM_CONCEPTS: [&str; 3] = ["Motivation", "Ability", "Peripheral Cue"];
pub const MOTIVATION: usize = 0;
pub const ABILITY: usize = 1;
pub const PERIPHERAL_CUE: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum PersuasiveError {
    #[error("event `{0}` is not bound to a leaf of the persuasive FCM")]
    UnboundEvent(String),
    #[error("cue `{0}` has no weight in the persuasive FCM")]
    UnboundCue(String),
    #[error("leaf state does not match the FCM bindings: {0}")]
    DimensionMismatch(String),
    #[error("invalid persuasive FCM: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fcm(#[from] FcmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    /// Personal relevance.
    RL,
    /// Personal responsibility.
    RS,
    /// Need for cognition.
    NC,
    /// Prior knowledge.
    PK,
    /// Distraction.
    DT,
    /// Repetition.
    RP,
}

impl Factor {
    pub const ALL: [Factor; 6] = [Factor::RL, Factor::RS, Factor::NC, Factor::PK, Factor::DT, Factor::RP];

    /// Index of the stem concept this factor feeds.
    pub fn stem(self) -> usize {
        match self {
            Factor::RL | Factor::RS | Factor::NC => MOTIVATION,
            Factor::PK | Factor::DT | Factor::RP => ABILITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafBinding {
    pub factor: Factor,
    pub weight: f64,
}

fn default_baseline() -> f64 {
    0.5
}

/// Thresholds below which motivation or ability counts as low.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    #[serde(default = "default_baseline")]
    pub motivation: f64,
    #[serde(default = "default_baseline")]
    pub ability: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            motivation: default_baseline(),
            ability: default_baseline(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersuasiveFcm {
    /// Event name -> factor binding.
    pub leaves: BTreeMap<String, LeafBinding>,
    /// Cue id -> weight on the peripheral-cue stem.
    #[serde(default)]
    pub cue_weights: BTreeMap<String, f64>,
    /// Rows and columns ordered as [`STEM_CONCEPTS`].
    pub stem: [[f64; 3]; 3],
    #[serde(default)]
    pub baselines: Baselines,
    #[serde(default)]
    pub squash: SquashSpec,
    #[serde(default)]
    pub convergence: FixedPointConfig,
}

impl PersuasiveFcm {
    pub fn validate(&self) -> Result<(), PersuasiveError> {
        for (event, binding) in &self.leaves {
            let w = binding.weight;
            if !w.is_finite() {
                return Err(PersuasiveError::Invalid(format!("weight of `{event}` is not finite")));
            }
            match binding.factor {
                Factor::DT if w > 0.0 => {
                    return Err(PersuasiveError::Invalid(format!(
                        "distracter `{event}` must have a weight <= 0, got {w}"
                    )))
                }
                Factor::DT => {}
                f if w < 0.0 => {
                    return Err(PersuasiveError::Invalid(format!(
                        "{f:?} event `{event}` must have a weight >= 0, got {w}"
                    )))
                }
                _ => {}
            }
        }
        for (cue, w) in &self.cue_weights {
            if !w.is_finite() {
                return Err(PersuasiveError::Invalid(format!("weight of cue `{cue}` is not finite")));
            }
        }
        self.stem_model()?;
        self.convergence.validate()?;
        let (lo, hi) = self.squash.bounds();
        for (name, b) in [
            ("motivation", self.baselines.motivation),
            ("ability", self.baselines.ability),
        ] {
            if !(lo..=hi).contains(&b) {
                return Err(PersuasiveError::Invalid(format!(
                    "{name} baseline {b} is outside the squash range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn stem_model(&self) -> Result<FcmModel, FcmError> {
        FcmModel::new(
            STEM_CONCEPTS.iter().map(|s| s.to_string()).collect(),
            self.stem.iter().map(|r| r.to_vec()).collect(),
            self.squash,
        )
    }

    /// Events bound to `factor`, in name order.
    pub fn events_for(&self, factor: Factor) -> impl Iterator<Item = &str> {
        self.leaves
            .iter()
            .filter(move |(_, b)| b.factor == factor)
            .map(|(e, _)| e.as_str())
    }

    pub fn binding(&self, event: &str) -> Option<&LeafBinding> {
        self.leaves.get(event)
    }
}

/// Latched event activations plus the cue indicators pulsed this cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafState {
    activation: BTreeMap<String, u8>,
    #[serde(default)]
    cue_pulses: BTreeSet<String>,
}

impl LeafState {
    /// Every bound event starts at 0.
    pub fn new(fcm: &PersuasiveFcm) -> Self {
        LeafState {
            activation: fcm.leaves.keys().map(|k| (k.clone(), 0)).collect(),
            cue_pulses: BTreeSet::new(),
        }
    }

    /// Latches `event` to 1. Returns whether the value changed.
    pub fn activate(&mut self, event: &str) -> Result<bool, PersuasiveError> {
        let slot = self
            .activation
            .get_mut(event)
            .ok_or_else(|| PersuasiveError::UnboundEvent(event.to_string()))?;
        let changed = *slot == 0;
        *slot = 1;
        Ok(changed)
    }

    pub fn is_active(&self, event: &str) -> bool {
        self.activation.get(event) == Some(&1)
    }

    pub fn is_bound(&self, event: &str) -> bool {
        self.activation.contains_key(event)
    }

    pub fn active_events(&self) -> impl Iterator<Item = &str> {
        self.activation
            .iter()
            .filter(|(_, v)| **v == 1)
            .map(|(k, _)| k.as_str())
    }

    pub fn pulse_cue(&mut self, cue: &str) {
        self.cue_pulses.insert(cue.to_string());
    }

    pub fn clear_cue_pulses(&mut self) {
        self.cue_pulses.clear();
    }

    pub fn cue_pulses(&self) -> &BTreeSet<String> {
        &self.cue_pulses
    }
}

/// Non-mutating activation, for callers that keep states immutable.
pub fn activate_leaf(state: &LeafState, event: &str) -> Result<LeafState, PersuasiveError> {
    let mut next = state.clone();
    next.activate(event)?;
    Ok(next)
}

/// Raw stem input: per-stem dot products of active leaves with their weights,
/// and of pulsed cue indicators with the cue weights.
pub fn aggregate_factors(fcm: &PersuasiveFcm, leaves: &LeafState) -> Result<[f64; 3], PersuasiveError> {
    if leaves.activation.len() != fcm.leaves.len() {
        return Err(PersuasiveError::DimensionMismatch(format!(
            "{} leaves for {} bindings",
            leaves.activation.len(),
            fcm.leaves.len()
        )));
    }
    let mut raw = [0.0; 3];
    for (event, &value) in &leaves.activation {
        let binding = fcm
            .leaves
            .get(event)
            .ok_or_else(|| PersuasiveError::DimensionMismatch(format!("unknown leaf `{event}`")))?;
        raw[binding.factor.stem()] += f64::from(value) * binding.weight;
    }
    for cue in &leaves.cue_pulses {
        let w = fcm
            .cue_weights
            .get(cue)
            .ok_or_else(|| PersuasiveError::UnboundCue(cue.clone()))?;
        raw[PERIPHERAL_CUE] += w;
    }
    Ok(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersuasionAssessment {
    pub motivation: f64,
    pub ability: f64,
    pub peripheral_cue: f64,
    pub motivation_low: bool,
    pub ability_low: bool,
    /// False when the stem iteration hit `max_iter`.
    pub converged: bool,
}

impl PersuasionAssessment {
    pub fn needs_persuasion(&self) -> bool {
        self.motivation_low || self.ability_low
    }
}

/// Stem fixed point and the assessment derived from it.
pub fn evaluate_with_report(
    fcm: &PersuasiveFcm,
    leaves: &LeafState,
) -> Result<(PersuasionAssessment, FixedPointReport), PersuasiveError> {
    let raw = aggregate_factors(fcm, leaves)?;
    let model = fcm.stem_model()?;
    let start = ConceptState(raw.iter().map(|&x| fcm.squash.apply(x)).collect());
    let report = model.run_driven_to_fixed_point(&start, &raw, fcm.convergence)?;
    let fp = report.final_state().expect("trajectory is never empty").values();
    let (motivation, ability, peripheral_cue) = (fp[MOTIVATION], fp[ABILITY], fp[PERIPHERAL_CUE]);
    let assessment = PersuasionAssessment {
        motivation,
        ability,
        peripheral_cue,
        motivation_low: motivation < fcm.baselines.motivation,
        ability_low: ability < fcm.baselines.ability,
        converged: report.converged,
    };
    Ok((assessment, report))
}

pub fn evaluate(fcm: &PersuasiveFcm, leaves: &LeafState) -> Result<PersuasionAssessment, PersuasiveError> {
    evaluate_with_report(fcm, leaves).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fcm() -> PersuasiveFcm {
        let leaves = [
            ("Apply diffusion", Factor::RL, 0.4),
            ("Help Mayor NPC", Factor::RS, 0.2),
            ("Learn diffusion", Factor::PK, 0.3),
            ("Chat with animal NPC", Factor::DT, -0.6),
        ]
        .into_iter()
        .map(|(e, factor, weight)| (e.to_string(), LeafBinding { factor, weight }))
        .collect();
        PersuasiveFcm {
            leaves,
            cue_weights: BTreeMap::from([("af-sad".to_string(), 0.3)]),
            stem: [[0.0; 3]; 3],
            baselines: Baselines::default(),
            squash: SquashSpec::default(),
            convergence: FixedPointConfig::default(),
        }
    }

    #[test]
    fn activation_latches_one_entry() {
        let f = fcm();
        let s = LeafState::new(&f);
        let s = activate_leaf(&s, "Learn diffusion").unwrap();
        assert_eq!(s.active_events().collect::<Vec<_>>(), ["Learn diffusion"]);
        let again = activate_leaf(&s, "Learn diffusion").unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn distracter_leaf_is_bound() {
        let f = fcm();
        let mut s = LeafState::new(&f);
        assert!(s.activate("Chat with animal NPC").unwrap());
        assert_eq!(f.binding("Chat with animal NPC").unwrap().factor, Factor::DT);
    }

    #[test]
    fn unbound_event_rejected() {
        let mut s = LeafState::new(&fcm());
        assert_eq!(
            s.activate("Dance party"),
            Err(PersuasiveError::UnboundEvent("Dance party".into()))
        );
    }

    #[test]
    fn zero_leaves_aggregate_to_zero() {
        let f = fcm();
        assert_eq!(aggregate_factors(&f, &LeafState::new(&f)).unwrap(), [0.0; 3]);
    }

    #[test]
    fn single_term_aggregate() {
        let f = fcm();
        let mut s = LeafState::new(&f);
        s.activate("Apply diffusion").unwrap();
        assert_eq!(aggregate_factors(&f, &s).unwrap(), [0.4, 0.0, 0.0]);
        s.pulse_cue("af-sad");
        assert_eq!(aggregate_factors(&f, &s).unwrap(), [0.4, 0.0, 0.3]);
        s.clear_cue_pulses();
        assert_eq!(aggregate_factors(&f, &s).unwrap()[PERIPHERAL_CUE], 0.0);
    }

    #[test]
    fn mismatched_leaf_state_rejected() {
        let f = fcm();
        let mut other = f.clone();
        other.leaves.remove("Help Mayor NPC");
        let s = LeafState::new(&other);
        assert!(matches!(
            aggregate_factors(&f, &s),
            Err(PersuasiveError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn weight_signs_enforced() {
        let mut f = fcm();
        f.validate().unwrap();
        f.leaves.get_mut("Chat with animal NPC").unwrap().weight = 0.1;
        assert!(f.validate().is_err());
        let mut f = fcm();
        f.leaves.get_mut("Learn diffusion").unwrap().weight = -0.1;
        assert!(f.validate().is_err());
        let mut f = fcm();
        f.baselines.ability = 1.5;
        assert!(f.validate().is_err());
    }

    #[test]
    fn flags_follow_baselines() {
        let mut f = fcm();
        let s = LeafState::new(&f);
        let a = evaluate(&f, &s).unwrap();
        assert!(a.converged);
        assert_eq!(a.motivation_low, a.motivation < 0.5);
        f.baselines.motivation = a.motivation;
        let a2 = evaluate(&f, &s).unwrap();
        assert!(!a2.motivation_low, ">= baseline counts as high");
    }
}
