//! Hierarchical goal nets.
//!
//! A goal net is a bipartite graph of states and transitions. Arcs connect a
//! state to a transition or a transition to a state. A transition is enabled
//! when all of its input states are active (synchronization) and, on firing,
//! runs its task list and activates its selected output states:
//!
//! * `direct` - exactly one output (sequence)
//! * `fanout` - every output (concurrency)
//! * `conditional` - first guard whose predicate holds, else the default arc
//! * `probabilistic` - one output drawn from the frame's seeded generator
//!
//! Composite states are refined by a subnet; see [`interpreter`] for how the
//! interpreter enters and returns from them.

mod interpreter;

pub use interpreter::{
    AdvanceOutcome, CallFrame, FireOutcome, Interpreter, InterpreterFrame, TaskFailure, TaskFn, TaskRegistry,
    TaskSignal, TraceEntry, DEFAULT_MAX_FIRINGS,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Tolerance on the sum of probabilistic branch weights.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GoalNetError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("goal net `{net}`: {message}")]
    Graph { net: String, message: String },
    #[error("unknown goal net `{0}`")]
    UnknownNet(String),
    #[error("unknown transition `{transition}` in net `{net}`")]
    UnknownTransition { net: String, transition: String },
    #[error("transition `{0}` is not enabled")]
    NotEnabled(String),
    #[error("task `{0}` is not bound in the task registry")]
    UnknownTask(String),
    #[error("predicate `{0}` is not bound in the task registry")]
    UnknownPredicate(String),
    #[error("conditional transition `{0}` matched no guard and has no default arc")]
    GuardUnmatched(String),
    #[error("advance exceeded {0} firings")]
    CycleLimit(usize),
    #[error("task `{task}` failed: {source}")]
    Task {
        task: String,
        #[source]
        source: TaskFailure,
    },
}

impl GoalNetError {
    fn graph(net: &str, message: impl Into<String>) -> Self {
        GoalNetError::Graph {
            net: net.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    #[default]
    Atomic,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalState {
    pub id: String,
    #[serde(default)]
    pub kind: StateKind,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    #[default]
    Direct,
    Fanout,
    Conditional,
    Probabilistic,
}

/// A conditional branch: when `predicate` holds, the arc to `target` is taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub predicate: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWeight {
    pub target: String,
    pub probability: f64,
}

/// Output arcs of a transition are named by their target state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    #[serde(default)]
    pub kind: TransitionKind,
    #[serde(default)]
    pub tasks: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guards: Vec<Guard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<BranchWeight>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalNet {
    pub id: String,
    pub root: String,
    pub states: Vec<GoalState>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub arcs: Vec<Arc>,
    /// Composite state id -> id of the goal net refining it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subnets: BTreeMap<String, String>,
}

/// Parses a goal net from a TOML fragment and validates it.
pub fn load_goal_net(doc: &str) -> Result<GoalNet, GoalNetError> {
    let net: GoalNet = toml::from_str(doc).map_err(|e| GoalNetError::Schema(e.to_string()))?;
    net.validate()?;
    Ok(net)
}

impl GoalNet {
    pub fn state(&self, id: &str) -> Option<&GoalState> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn composite_states(&self) -> impl Iterator<Item = &GoalState> {
        self.states.iter().filter(|s| s.kind == StateKind::Composite)
    }

    /// Checks every structural invariant that does not depend on other nets.
    pub fn validate(&self) -> Result<(), GoalNetError> {
        let net = self.id.as_str();
        if !is_ascii_id(&self.id) {
            return Err(GoalNetError::graph(net, "net id must be a non-empty ASCII string"));
        }

        let mut states = BTreeSet::new();
        for s in &self.states {
            if !is_ascii_id(&s.id) {
                return Err(GoalNetError::graph(net, format!("bad state id {:?}", s.id)));
            }
            if !states.insert(s.id.as_str()) {
                return Err(GoalNetError::graph(net, format!("duplicate state `{}`", s.id)));
            }
        }
        let mut transitions = BTreeSet::new();
        for t in &self.transitions {
            if !is_ascii_id(&t.id) {
                return Err(GoalNetError::graph(net, format!("bad transition id {:?}", t.id)));
            }
            if states.contains(t.id.as_str()) || !transitions.insert(t.id.as_str()) {
                return Err(GoalNetError::graph(net, format!("duplicate node id `{}`", t.id)));
            }
        }
        if !states.contains(self.root.as_str()) {
            return Err(GoalNetError::graph(
                net,
                format!("root state `{}` does not exist", self.root),
            ));
        }

        let mut seen_arcs = BTreeSet::new();
        for a in &self.arcs {
            let from_state = states.contains(a.from.as_str());
            let from_trans = transitions.contains(a.from.as_str());
            let to_state = states.contains(a.to.as_str());
            let to_trans = transitions.contains(a.to.as_str());
            if !from_state && !from_trans {
                return Err(GoalNetError::graph(net, format!("dangling arc source `{}`", a.from)));
            }
            if !to_state && !to_trans {
                return Err(GoalNetError::graph(net, format!("dangling arc target `{}`", a.to)));
            }
            if from_state == to_state {
                return Err(GoalNetError::graph(
                    net,
                    format!("arc `{}` -> `{}` must join a state and a transition", a.from, a.to),
                ));
            }
            if !seen_arcs.insert((a.from.as_str(), a.to.as_str())) {
                return Err(GoalNetError::graph(
                    net,
                    format!("duplicate arc `{}` -> `{}`", a.from, a.to),
                ));
            }
        }

        for t in &self.transitions {
            let inputs: Vec<&str> = self.inputs_of(&t.id).collect();
            let outputs: Vec<&str> = self.outputs_of(&t.id).collect();
            if inputs.is_empty() {
                return Err(GoalNetError::graph(
                    net,
                    format!("transition `{}` has no input state", t.id),
                ));
            }
            if outputs.is_empty() {
                return Err(GoalNetError::graph(
                    net,
                    format!("transition `{}` has no output state", t.id),
                ));
            }
            validate_transition_kind(net, t, &outputs)?;
        }

        for s in &self.states {
            match (s.kind, self.subnets.get(&s.id)) {
                (StateKind::Composite, None) => {
                    return Err(GoalNetError::graph(
                        net,
                        format!("composite state `{}` has no subnet", s.id),
                    ))
                }
                (StateKind::Atomic, Some(_)) => {
                    return Err(GoalNetError::graph(
                        net,
                        format!("atomic state `{}` cannot have a subnet", s.id),
                    ))
                }
                _ => {}
            }
        }
        for key in self.subnets.keys() {
            if !states.contains(key.as_str()) {
                return Err(GoalNetError::graph(
                    net,
                    format!("subnet entry for unknown state `{key}`"),
                ));
            }
        }

        let reachable = self.reachable_states();
        if let Some(orphan) = self.states.iter().find(|s| !reachable.contains(s.id.as_str())) {
            return Err(GoalNetError::graph(
                net,
                format!("state `{}` is unreachable from root `{}`", orphan.id, self.root),
            ));
        }
        Ok(())
    }

    /// Input states of a transition, in arc order.
    pub fn inputs_of<'a>(&'a self, transition: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.arcs
            .iter()
            .filter(move |a| a.to == transition)
            .map(|a| a.from.as_str())
    }

    /// Output states of a transition, in arc order.
    pub fn outputs_of<'a>(&'a self, transition: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.arcs
            .iter()
            .filter(move |a| a.from == transition)
            .map(|a| a.to.as_str())
    }

    fn reachable_states(&self) -> BTreeSet<&str> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root.as_str()];
        while let Some(node) = stack.pop() {
            if !seen.insert(node) {
                continue;
            }
            for a in self.arcs.iter().filter(|a| a.from == node) {
                stack.push(a.to.as_str());
            }
        }
        self.states
            .iter()
            .map(|s| s.id.as_str())
            .filter(|id| seen.contains(id))
            .collect()
    }
}

fn validate_transition_kind(net: &str, t: &Transition, outputs: &[&str]) -> Result<(), GoalNetError> {
    if t.kind != TransitionKind::Conditional && (!t.guards.is_empty() || t.default.is_some()) {
        return Err(GoalNetError::graph(
            net,
            format!("only conditional transitions may carry guards (`{}`)", t.id),
        ));
    }
    if t.kind != TransitionKind::Probabilistic && !t.weights.is_empty() {
        return Err(GoalNetError::graph(
            net,
            format!("only probabilistic transitions may carry weights (`{}`)", t.id),
        ));
    }
    match t.kind {
        TransitionKind::Direct => {
            if outputs.len() != 1 {
                return Err(GoalNetError::graph(
                    net,
                    format!(
                        "direct transition `{}` has {} output arcs; use `fanout` for concurrency",
                        t.id,
                        outputs.len()
                    ),
                ));
            }
        }
        TransitionKind::Fanout => {}
        TransitionKind::Conditional => {
            if t.guards.is_empty() {
                return Err(GoalNetError::graph(
                    net,
                    format!("conditional transition `{}` has no guards", t.id),
                ));
            }
            let mut covered = BTreeSet::new();
            for target in t.guards.iter().map(|g| g.target.as_str()).chain(t.default.as_deref()) {
                if !outputs.contains(&target) {
                    return Err(GoalNetError::graph(
                        net,
                        format!(
                            "transition `{}` branches to `{target}` which is not an output arc",
                            t.id
                        ),
                    ));
                }
                if !covered.insert(target) {
                    return Err(GoalNetError::graph(
                        net,
                        format!("transition `{}` references output `{target}` twice", t.id),
                    ));
                }
            }
            if let Some(missing) = outputs.iter().find(|o| !covered.contains(*o)) {
                return Err(GoalNetError::graph(
                    net,
                    format!("output arc `{missing}` of `{}` has no guard", t.id),
                ));
            }
        }
        TransitionKind::Probabilistic => {
            let mut covered = BTreeSet::new();
            let mut sum = 0.0;
            for w in &t.weights {
                if !w.probability.is_finite() || w.probability < 0.0 {
                    return Err(GoalNetError::graph(
                        net,
                        format!("transition `{}` has an invalid probability {}", t.id, w.probability),
                    ));
                }
                if !outputs.contains(&w.target.as_str()) || !covered.insert(w.target.as_str()) {
                    return Err(GoalNetError::graph(
                        net,
                        format!("transition `{}` weights target `{}` incorrectly", t.id, w.target),
                    ));
                }
                sum += w.probability;
            }
            if covered.len() != outputs.len() {
                return Err(GoalNetError::graph(
                    net,
                    format!("every output arc of `{}` needs a weight", t.id),
                ));
            }
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(GoalNetError::graph(
                    net,
                    format!("probabilities of `{}` sum to {sum}, not 1", t.id),
                ));
            }
        }
    }
    Ok(())
}

fn is_ascii_id(id: &str) -> bool {
    !id.is_empty() && id.is_ascii()
}

/// Precomputed adjacency for one validated net.
#[derive(Debug, Clone)]
pub(crate) struct NetIndex {
    pub(crate) inputs: BTreeMap<String, Vec<String>>,
    pub(crate) outputs: BTreeMap<String, Vec<String>>,
    pub(crate) terminal: BTreeSet<String>,
}

impl NetIndex {
    fn build(net: &GoalNet) -> Self {
        let mut inputs = BTreeMap::new();
        let mut outputs = BTreeMap::new();
        for t in &net.transitions {
            inputs.insert(t.id.clone(), net.inputs_of(&t.id).map(str::to_string).collect());
            outputs.insert(t.id.clone(), net.outputs_of(&t.id).map(str::to_string).collect());
        }
        let terminal = net
            .states
            .iter()
            .filter(|s| !net.arcs.iter().any(|a| a.from == s.id))
            .map(|s| s.id.clone())
            .collect();
        NetIndex {
            inputs,
            outputs,
            terminal,
        }
    }
}

/// A main net together with every net reachable through composite states.
#[derive(Debug, Clone)]
pub struct GoalNetSet {
    main: String,
    nets: BTreeMap<String, GoalNet>,
    index: BTreeMap<String, NetIndex>,
}

impl GoalNetSet {
    /// Validates each net, resolves subnet references and rejects recursive
    /// composition.
    pub fn new(nets: Vec<GoalNet>, main: &str) -> Result<Self, GoalNetError> {
        let mut by_id = BTreeMap::new();
        for net in nets {
            net.validate()?;
            let id = net.id.clone();
            if by_id.insert(id.clone(), net).is_some() {
                return Err(GoalNetError::graph(&id, "duplicate goal net id"));
            }
        }
        if !by_id.contains_key(main) {
            return Err(GoalNetError::UnknownNet(main.to_string()));
        }
        for net in by_id.values() {
            for (state, sub) in &net.subnets {
                if !by_id.contains_key(sub) {
                    return Err(GoalNetError::graph(
                        &net.id,
                        format!("composite state `{state}` refers to unknown net `{sub}`"),
                    ));
                }
            }
        }
        // Composition must be acyclic: depth-first search with colouring.
        fn visit<'a>(
            id: &'a str,
            nets: &'a BTreeMap<String, GoalNet>,
            colour: &mut BTreeMap<&'a str, u8>,
        ) -> Result<(), GoalNetError> {
            match colour.get(id) {
                Some(2) => return Ok(()),
                Some(1) => return Err(GoalNetError::graph(id, "recursive composition through subnets")),
                _ => {}
            }
            colour.insert(id, 1);
            for sub in nets[id].subnets.values() {
                visit(sub, nets, colour)?;
            }
            colour.insert(id, 2);
            Ok(())
        }
        let mut colour = BTreeMap::new();
        for id in by_id.keys() {
            visit(id, &by_id, &mut colour)?;
        }

        let index = by_id
            .iter()
            .map(|(id, net)| (id.clone(), NetIndex::build(net)))
            .collect();
        Ok(GoalNetSet {
            main: main.to_string(),
            nets: by_id,
            index,
        })
    }

    pub fn main(&self) -> &GoalNet {
        &self.nets[&self.main]
    }

    pub fn get(&self, id: &str) -> Option<&GoalNet> {
        self.nets.get(id)
    }

    pub fn nets(&self) -> impl Iterator<Item = &GoalNet> {
        self.nets.values()
    }

    /// Terminal states (no outgoing arcs) of a net.
    pub fn terminal_states(&self, net: &str) -> Option<&BTreeSet<String>> {
        self.index.get(net).map(|i| &i.terminal)
    }

    pub(crate) fn index(&self, net: &str) -> Result<(&GoalNet, &NetIndex), GoalNetError> {
        match (self.nets.get(net), self.index.get(net)) {
            (Some(n), Some(i)) => Ok((n, i)),
            _ => Err(GoalNetError::UnknownNet(net.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
id = "tiny"
root = "S0"
states = [{ id = "S0" }, { id = "S1" }]
transitions = [{ id = "T0", kind = "direct" }]
arcs = [{ from = "S0", to = "T0" }, { from = "T0", to = "S1" }]
"#;

    #[test]
    fn minimal_net_loads() {
        let net = load_goal_net(MINIMAL).unwrap();
        assert_eq!(net.states.len(), 2);
        assert_eq!(net.transitions.len(), 1);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let doc = r#"
id = "p"
root = "S0"
states = [{ id = "S0" }, { id = "A" }, { id = "B" }]
arcs = [{ from = "S0", to = "T" }, { from = "T", to = "A" }, { from = "T", to = "B" }]
[[transitions]]
id = "T"
kind = "probabilistic"
weights = [{ target = "A", probability = 0.6 }, { target = "B", probability = 0.5 }]
"#;
        assert!(matches!(load_goal_net(doc), Err(GoalNetError::Graph { .. })));
    }

    #[test]
    fn dangling_arc_rejected() {
        let doc = MINIMAL.replace(r#"{ from = "T0", to = "S1" }"#, r#"{ from = "T0", to = "S9" }"#);
        let err = load_goal_net(&doc).unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");
    }

    #[test]
    fn state_to_state_arc_rejected() {
        let doc = MINIMAL.replace(r#"{ from = "T0", to = "S1" }"#, r#"{ from = "S0", to = "S1" }"#);
        assert!(matches!(load_goal_net(&doc), Err(GoalNetError::Graph { .. })));
    }

    #[test]
    fn missing_root_rejected() {
        let doc = MINIMAL.replace(r#"root = "S0""#, r#"root = "nope""#);
        assert!(matches!(load_goal_net(&doc), Err(GoalNetError::Graph { .. })));
    }

    #[test]
    fn malformed_doc_is_schema_error() {
        assert!(matches!(load_goal_net("id = 3"), Err(GoalNetError::Schema(_))));
        assert!(matches!(load_goal_net(""), Err(GoalNetError::Schema(_))));
    }

    #[test]
    fn unguarded_multi_output_direct_rejected() {
        let doc = r#"
id = "f"
root = "S0"
states = [{ id = "S0" }, { id = "A" }, { id = "B" }]
transitions = [{ id = "T", kind = "direct" }]
arcs = [{ from = "S0", to = "T" }, { from = "T", to = "A" }, { from = "T", to = "B" }]
"#;
        assert!(load_goal_net(doc).is_err());
        assert!(load_goal_net(&doc.replace("\"direct\"", "\"fanout\"")).is_ok());
    }

    #[test]
    fn conditional_guards_must_cover_outputs() {
        let doc = r#"
id = "c"
root = "S0"
states = [{ id = "S0" }, { id = "A" }, { id = "B" }]
arcs = [{ from = "S0", to = "T" }, { from = "T", to = "A" }, { from = "T", to = "B" }]
[[transitions]]
id = "T"
kind = "conditional"
guards = [{ predicate = "p", target = "A" }]
"#;
        assert!(load_goal_net(doc).is_err());
        let fixed = doc.replace(
            r#"guards = [{ predicate = "p", target = "A" }]"#,
            "guards = [{ predicate = \"p\", target = \"A\" }]\ndefault = \"B\"",
        );
        load_goal_net(&fixed).unwrap();
    }

    #[test]
    fn unreachable_state_rejected() {
        let doc = MINIMAL.replace(
            r#"states = [{ id = "S0" }, { id = "S1" }]"#,
            r#"states = [{ id = "S0" }, { id = "S1" }, { id = "island" }]"#,
        );
        assert!(load_goal_net(&doc).is_err());
    }

    fn composite(id: &str, sub: &str) -> GoalNet {
        let mut net = load_goal_net(MINIMAL).unwrap();
        net.id = id.to_string();
        net.states[1].kind = StateKind::Composite;
        net.subnets.insert("S1".into(), sub.into());
        net
    }

    #[test]
    fn recursive_composition_rejected() {
        let a = composite("a", "b");
        let b = composite("b", "a");
        let err = GoalNetSet::new(vec![a, b], "a").unwrap_err();
        assert!(err.to_string().contains("recursive"), "{err}");
    }

    #[test]
    fn composite_without_subnet_rejected() {
        let mut net = load_goal_net(MINIMAL).unwrap();
        net.states[1].kind = StateKind::Composite;
        assert!(net.validate().is_err());
    }

    #[test]
    fn set_resolves_subnets() {
        let mut leaf = load_goal_net(MINIMAL).unwrap();
        leaf.id = "leaf".into();
        let set = GoalNetSet::new(vec![composite("top", "leaf"), leaf], "top").unwrap();
        assert_eq!(set.main().id, "top");
        assert!(set.terminal_states("leaf").unwrap().contains("S1"));
    }
}
