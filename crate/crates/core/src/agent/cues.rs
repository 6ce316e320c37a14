use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Which peripheral-cue catalog a cue belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CueSet {
    #[serde(rename = "EH")]
    ExpertHint,
    #[serde(rename = "AS")]
    AttractiveSource,
    #[serde(rename = "AF")]
    Affect,
}

impl CueSet {
    pub const ALL: [CueSet; 3] = [CueSet::ExpertHint, CueSet::AttractiveSource, CueSet::Affect];

    pub fn code(self) -> &'static str {
        match self {
            CueSet::ExpertHint => "EH",
            CueSet::AttractiveSource => "AS",
            CueSet::Affect => "AF",
        }
    }
}

impl fmt::Display for CueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertHint {
    pub id: String,
    pub text: String,
    /// Scene id the hint is most useful in.
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttractiveSource {
    pub id: String,
    pub persona: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affect {
    pub id: String,
    pub emotion: String,
    pub animation: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueCatalogs {
    #[serde(default)]
    pub expert_hints: Vec<ExpertHint>,
    #[serde(default)]
    pub attractive_sources: Vec<AttractiveSource>,
    #[serde(default)]
    pub affects: Vec<Affect>,
}

/// A catalog entry in presentation form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersuasionCue {
    pub id: String,
    pub set: CueSet,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub animation: Option<String>,
}

impl From<&ExpertHint> for PersuasionCue {
    fn from(h: &ExpertHint) -> Self {
        PersuasionCue {
            id: h.id.clone(),
            set: CueSet::ExpertHint,
            text: h.text.clone(),
            topic: Some(h.topic.clone()),
            persona: None,
            emotion: None,
            animation: None,
        }
    }
}

impl From<&AttractiveSource> for PersuasionCue {
    fn from(a: &AttractiveSource) -> Self {
        PersuasionCue {
            id: a.id.clone(),
            set: CueSet::AttractiveSource,
            text: a.message.clone(),
            topic: None,
            persona: Some(a.persona.clone()),
            emotion: None,
            animation: None,
        }
    }
}

impl From<&Affect> for PersuasionCue {
    fn from(a: &Affect) -> Self {
        PersuasionCue {
            id: a.id.clone(),
            set: CueSet::Affect,
            text: a.message.clone(),
            topic: None,
            persona: None,
            emotion: Some(a.emotion.clone()),
            animation: Some(a.animation.clone()),
        }
    }
}

impl CueCatalogs {
    /// Cues of one catalog, in authored order.
    pub fn set(&self, set: CueSet) -> Vec<PersuasionCue> {
        match set {
            CueSet::ExpertHint => self.expert_hints.iter().map(Into::into).collect(),
            CueSet::AttractiveSource => self.attractive_sources.iter().map(Into::into).collect(),
            CueSet::Affect => self.affects.iter().map(Into::into).collect(),
        }
    }

    pub fn all(&self) -> Vec<PersuasionCue> {
        CueSet::ALL.into_iter().flat_map(|s| self.set(s)).collect()
    }

    pub fn get(&self, id: &str) -> Option<PersuasionCue> {
        self.all().into_iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.expert_hints.len() + self.attractive_sources.len() + self.affects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Least-used-first choice within one catalog. Among equally used cues the
/// ones matching `topic` win, then authored order.
pub fn pick_least_used<'a>(
    candidates: &'a [PersuasionCue],
    counts: &BTreeMap<String, u32>,
    topic: Option<&str>,
) -> Option<&'a PersuasionCue> {
    let used = |c: &PersuasionCue| counts.get(&c.id).copied().unwrap_or(0);
    let fewest = candidates.iter().map(used).min()?;
    let tied = candidates.iter().filter(|c| used(c) == fewest);
    let mut first = None;
    for c in tied {
        if topic.is_some() && c.topic.as_deref() == topic {
            return Some(c);
        }
        first.get_or_insert(c);
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hints() -> Vec<PersuasionCue> {
        ["a", "b", "c"]
            .iter()
            .zip(["town", "lab", "lab"])
            .map(|(id, topic)| {
                PersuasionCue::from(&ExpertHint {
                    id: id.to_string(),
                    text: String::new(),
                    topic: topic.to_string(),
                })
            })
            .collect()
    }

    #[test]
    fn topic_breaks_ties_only_among_least_used() {
        let hs = hints();
        let mut counts = BTreeMap::new();
        assert_eq!(pick_least_used(&hs, &counts, Some("lab")).unwrap().id, "b");
        counts.insert("b".to_string(), 1);
        assert_eq!(pick_least_used(&hs, &counts, Some("lab")).unwrap().id, "c");
        counts.insert("c".to_string(), 1);
        assert_eq!(pick_least_used(&hs, &counts, Some("lab")).unwrap().id, "a");
        assert!(pick_least_used(&[], &counts, None).is_none());
    }

    #[test]
    fn set_codes_serialize_short() {
        assert_eq!(serde_json::to_string(&CueSet::Affect).unwrap(), "\"AF\"");
    }
}
