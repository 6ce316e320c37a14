//! Domain (expert) concept maps and the knowledge the learner has taught.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("template `{template}` has no slot `{slot}`")]
    UnknownSlot { template: String, slot: String },
    #[error("template `{template}` has no label `{label}`")]
    UnknownLabel { template: String, label: String },
    #[error("taught map belongs to `{taught}`, not `{template}`")]
    TemplateMismatch { template: String, taught: String },
    #[error("invalid concept map template `{template}`: {message}")]
    InvalidTemplate { template: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub id: String,
    /// Surrounding text shown with the blank.
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapTemplate {
    pub id: String,
    pub prompt: String,
    pub slots: Vec<Slot>,
    /// Draggable labels; may include decoys.
    pub labels: Vec<String>,
    /// Slot id -> correct label.
    pub key: BTreeMap<String, String>,
}

/// Case-insensitive, whitespace-collapsed form used for matching labels.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl ConceptMapTemplate {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let invalid = |message: String| KnowledgeError::InvalidTemplate {
            template: self.id.clone(),
            message,
        };
        if self.key.len() != self.slots.len() {
            return Err(invalid(format!(
                "{} key entries for {} slots",
                self.key.len(),
                self.slots.len()
            )));
        }
        for slot in &self.slots {
            let Some(answer) = self.key.get(&slot.id) else {
                return Err(invalid(format!("slot `{}` has no key", slot.id)));
            };
            if self.find_label(answer).is_none() {
                return Err(invalid(format!("key label `{answer}` is not offered")));
            }
        }
        Ok(())
    }

    pub fn has_slot(&self, slot: &str) -> bool {
        self.slots.iter().any(|s| s.id == slot)
    }

    /// The offered label matching `label` after normalization.
    pub fn find_label(&self, label: &str) -> Option<&str> {
        let wanted = normalize_label(label);
        self.labels
            .iter()
            .find(|l| normalize_label(l) == wanted)
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaughtMap {
    pub template: String,
    /// Every template slot; `None` when left empty.
    pub assignments: BTreeMap<String, Option<String>>,
    pub taught_at: u64,
}

/// Builds a taught map from slot -> label assignments. Empty strings count as
/// empty slots; unassigned slots are stored empty.
pub fn acquire_teaching<I, S, L>(
    template: &ConceptMapTemplate,
    assignments: I,
    taught_at: u64,
) -> Result<TaughtMap, KnowledgeError>
where
    I: IntoIterator<Item = (S, L)>,
    S: AsRef<str>,
    L: AsRef<str>,
{
    let mut map: BTreeMap<String, Option<String>> = template.slots.iter().map(|s| (s.id.clone(), None)).collect();
    for (slot, label) in assignments {
        let (slot, label) = (slot.as_ref(), label.as_ref());
        let entry = map.get_mut(slot).ok_or_else(|| KnowledgeError::UnknownSlot {
            template: template.id.clone(),
            slot: slot.to_string(),
        })?;
        if label.trim().is_empty() {
            *entry = None;
            continue;
        }
        let canonical = template.find_label(label).ok_or_else(|| KnowledgeError::UnknownLabel {
            template: template.id.clone(),
            label: label.to_string(),
        })?;
        *entry = Some(canonical.to_string());
    }
    Ok(TaughtMap {
        template: template.id.clone(),
        assignments: map,
        taught_at,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDiff {
    pub given: Option<String>,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub correct: bool,
    /// Wrong or empty slots only.
    pub diff: BTreeMap<String, SlotDiff>,
}

pub fn evaluate_taught(template: &ConceptMapTemplate, taught: &TaughtMap) -> Result<GradeResult, KnowledgeError> {
    if taught.template != template.id {
        return Err(KnowledgeError::TemplateMismatch {
            template: template.id.clone(),
            taught: taught.template.clone(),
        });
    }
    let mut diff = BTreeMap::new();
    for slot in &template.slots {
        let expected = &template.key[&slot.id];
        let given = taught.assignments.get(&slot.id).cloned().flatten();
        let ok = given
            .as_deref()
            .is_some_and(|g| normalize_label(g) == normalize_label(expected));
        if !ok {
            diff.insert(
                slot.id.clone(),
                SlotDiff {
                    given,
                    expected: expected.clone(),
                },
            );
        }
    }
    Ok(GradeResult {
        correct: diff.is_empty(),
        diff,
    })
}

/// Expert templates plus the latest taught map per template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    domain: BTreeMap<String, ConceptMapTemplate>,
    learnt: BTreeMap<String, TaughtMap>,
}

impl KnowledgeBase {
    pub fn new<I: IntoIterator<Item = ConceptMapTemplate>>(templates: I) -> Self {
        KnowledgeBase {
            domain: templates.into_iter().map(|t| (t.id.clone(), t)).collect(),
            learnt: BTreeMap::new(),
        }
    }

    pub fn template(&self, id: &str) -> Option<&ConceptMapTemplate> {
        self.domain.get(id)
    }

    /// Stores `taught`, replacing any earlier teaching of the same template.
    pub fn save(&mut self, taught: TaughtMap) {
        self.learnt.insert(taught.template.clone(), taught);
    }

    pub fn query_learnt(&self, template: &str) -> Option<&TaughtMap> {
        self.learnt.get(template)
    }

    pub fn learnt(&self) -> impl Iterator<Item = &TaughtMap> {
        self.learnt.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn osmosis_map() -> ConceptMapTemplate {
        let slot = |id: &str, context: &str| Slot {
            id: id.into(),
            context: context.into(),
        };
        ConceptMapTemplate {
            id: "osmosis-diffusion".into(),
            prompt: "Let's teach the water molecule about osmosis and diffusion".into(),
            slots: vec![
                slot("membrane", "Movement of particles through the ___"),
                slot("diffusion-from", "from an area of ___ to a lower concentration"),
                slot("osmosis-to", "from an area of high solvent concentration to a ___"),
                slot("osmosis-name", "is known as ___"),
            ],
            labels: vec![
                "Osmosis".into(),
                "Semi-Permeable Membrane".into(),
                "High Concentration".into(),
                "Low Solvent Concentration".into(),
            ],
            key: BTreeMap::from([
                ("membrane".into(), "Semi-Permeable Membrane".into()),
                ("diffusion-from".into(), "High Concentration".into()),
                ("osmosis-to".into(), "Low Solvent Concentration".into()),
                ("osmosis-name".into(), "Osmosis".into()),
            ]),
        }
    }

    fn correct() -> Vec<(&'static str, &'static str)> {
        vec![
            ("membrane", "Semi-Permeable Membrane"),
            ("diffusion-from", "High Concentration"),
            ("osmosis-to", "Low Solvent Concentration"),
            ("osmosis-name", "Osmosis"),
        ]
    }

    #[test]
    fn template_validates() {
        osmosis_map().validate().unwrap();
        let mut t = osmosis_map();
        t.key.insert("membrane".into(), "Cell Wall".into());
        assert!(t.validate().is_err());
    }

    #[test]
    fn full_assignment_is_stored_and_correct() {
        let t = osmosis_map();
        let taught = acquire_teaching(&t, correct(), 10).unwrap();
        assert!(taught.assignments.values().all(Option::is_some));
        let grade = evaluate_taught(&t, &taught).unwrap();
        assert!(grade.correct);
        assert!(grade.diff.is_empty());
    }

    #[test]
    fn partial_assignment_keeps_empty_slots() {
        let t = osmosis_map();
        let taught = acquire_teaching(&t, [("osmosis-name", "Osmosis")], 0).unwrap();
        assert_eq!(taught.assignments.values().filter(|v| v.is_none()).count(), 3);
    }

    #[test]
    fn unknown_slot_and_label_rejected() {
        let t = osmosis_map();
        assert!(matches!(
            acquire_teaching(&t, [("xyz", "Osmosis")], 0),
            Err(KnowledgeError::UnknownSlot { .. })
        ));
        assert!(matches!(
            acquire_teaching(&t, [("membrane", "Mitochondria")], 0),
            Err(KnowledgeError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn one_wrong_slot_gives_single_diff() {
        let t = osmosis_map();
        let mut a = correct();
        a[3].1 = "High Concentration";
        let grade = evaluate_taught(&t, &acquire_teaching(&t, a, 0).unwrap()).unwrap();
        assert!(!grade.correct);
        assert_eq!(grade.diff.len(), 1);
        assert_eq!(grade.diff["osmosis-name"].expected, "Osmosis");
    }

    #[test]
    fn empty_map_lists_every_slot() {
        let t = osmosis_map();
        let taught = acquire_teaching(&t, Vec::<(&str, &str)>::new(), 0).unwrap();
        let grade = evaluate_taught(&t, &taught).unwrap();
        assert!(!grade.correct);
        assert_eq!(grade.diff.len(), 4);
    }

    #[test]
    fn matching_ignores_case_and_spacing() {
        let t = osmosis_map();
        let taught = acquire_teaching(
            &t,
            [
                ("membrane", "  semi-permeable   MEMBRANE "),
                ("diffusion-from", "high concentration"),
                ("osmosis-to", "Low Solvent Concentration"),
                ("osmosis-name", "OSMOSIS"),
            ],
            0,
        )
        .unwrap();
        assert!(evaluate_taught(&t, &taught).unwrap().correct);
    }

    #[test]
    fn grading_other_template_fails() {
        let t = osmosis_map();
        let mut other = t.clone();
        other.id = "other".into();
        let taught = acquire_teaching(&other, correct(), 0).unwrap();
        assert!(matches!(
            evaluate_taught(&t, &taught),
            Err(KnowledgeError::TemplateMismatch { .. })
        ));
    }

    #[test]
    fn query_is_latest_wins_and_keyed() {
        let t = osmosis_map();
        let mut kb = KnowledgeBase::new([t.clone()]);
        assert!(kb.query_learnt(&t.id).is_none());
        kb.save(acquire_teaching(&t, [("membrane", "Osmosis")], 1).unwrap());
        let second = acquire_teaching(&t, correct(), 2).unwrap();
        kb.save(second.clone());
        assert_eq!(kb.query_learnt(&t.id), Some(&second));
        assert!(kb.query_learnt("another-template").is_none());
    }
}
