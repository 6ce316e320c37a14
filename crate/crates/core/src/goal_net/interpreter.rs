//! Run-to-quiescence interpreter for [`GoalNetSet`]s.
//!
//! `advance` repeatedly fires the first enabled transition (document order)
//! of the net on top of the call stack. When a composite state becomes active
//! it is entered: a [`CallFrame`] saves the parent marking and the subnet root
//! is activated. When the subnet's sole active state is terminal the parent
//! marking is restored and the composite state counts as completed, which
//! enables its own outgoing transitions. A task may return
//! [`TaskSignal::Wait`], which aborts the firing without committing and ends
//! the advance.

use super::{GoalNetError, GoalNetSet, StateKind, TransitionKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub const DEFAULT_MAX_FIRINGS: usize = 10_000;

pub type TaskFailure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSignal {
    Proceed,
    /// Block until an external event arrives.
    Wait,
}

pub type TaskFn<C> = Box<dyn Fn(&mut C) -> Result<TaskSignal, TaskFailure> + Send + Sync>;
pub type PredicateFn<C> = Box<dyn Fn(&C) -> bool + Send + Sync>;

/// Named task functions and guard predicates. Immutable once built.
pub struct TaskRegistry<C> {
    tasks: HashMap<String, TaskFn<C>>,
    predicates: HashMap<String, PredicateFn<C>>,
}

impl<C> Default for TaskRegistry<C> {
    fn default() -> Self {
        TaskRegistry {
            tasks: HashMap::new(),
            predicates: HashMap::new(),
        }
    }
}

impl<C> fmt::Debug for TaskRegistry<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut tasks: Vec<_> = self.tasks.keys().collect();
        tasks.sort();
        let mut predicates: Vec<_> = self.predicates.keys().collect();
        predicates.sort();
        f.debug_struct("TaskRegistry")
            .field("tasks", &tasks)
            .field("predicates", &predicates)
            .finish()
    }
}

impl<C> TaskRegistry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn task<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&mut C) -> Result<TaskSignal, TaskFailure> + Send + Sync + 'static,
    {
        self.tasks.insert(name.to_string(), Box::new(f));
        self
    }

    pub fn predicate<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&C) -> bool + Send + Sync + 'static,
    {
        self.predicates.insert(name.to_string(), Box::new(f));
        self
    }

    pub fn has_task(&self, name: &str) -> bool {
        self.tasks.contains_key(name)
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.predicates.contains_key(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub net: String,
    pub transition: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.net, self.transition)
    }
}

/// Saved parent marking while a composite state's subnet runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFrame {
    pub composite: String,
    pub net: String,
    pub active: BTreeSet<String>,
    completed: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct InterpreterFrame {
    pub net: String,
    pub active: BTreeSet<String>,
    pub call_stack: Vec<CallFrame>,
    /// Active composite states whose subnet has already run.
    completed: BTreeSet<String>,
    pub seed: u64,
    rng: ChaCha8Rng,
    pub trace: Vec<TraceEntry>,
}

impl InterpreterFrame {
    /// Fresh frame at the root of the set's main net.
    pub fn new(nets: &GoalNetSet, seed: u64) -> Self {
        let main = nets.main();
        InterpreterFrame {
            net: main.id.clone(),
            active: BTreeSet::from([main.root.clone()]),
            call_stack: Vec::new(),
            completed: BTreeSet::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
        }
    }

    /// Returns to the main net's root, keeping the generator and trace.
    pub fn reset_to_root(&mut self, nets: &GoalNetSet) {
        let main = nets.main();
        self.net = main.id.clone();
        self.active = BTreeSet::from([main.root.clone()]);
        self.call_stack.clear();
        self.completed.clear();
    }

    /// Marks the given states active in the current net (test and tooling
    /// helper; composite states are treated as not yet entered).
    pub fn set_active<I: IntoIterator<Item = String>>(&mut self, states: I) {
        self.active = states.into_iter().collect();
        self.completed.clear();
    }

    pub fn is_completed(&self, state: &str) -> bool {
        self.completed.contains(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FireOutcome {
    Fired,
    /// A task asked to wait; nothing was committed.
    Waited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdvanceOutcome {
    /// The main net's sole active state is terminal.
    pub halted: bool,
    /// The advance stopped because a task signalled `Wait`.
    pub waiting: bool,
    pub firings: usize,
}

pub struct Interpreter<'a, C> {
    nets: &'a GoalNetSet,
    registry: &'a TaskRegistry<C>,
    max_firings: usize,
}

impl<'a, C> Interpreter<'a, C> {
    pub fn new(nets: &'a GoalNetSet, registry: &'a TaskRegistry<C>) -> Self {
        Interpreter {
            nets,
            registry,
            max_firings: DEFAULT_MAX_FIRINGS,
        }
    }

    pub fn with_max_firings(mut self, max: usize) -> Self {
        self.max_firings = max;
        self
    }

    fn input_ready(&self, frame: &InterpreterFrame, state: &str) -> bool {
        if !frame.active.contains(state) {
            return false;
        }
        let composite = self
            .nets
            .get(&frame.net)
            .and_then(|n| n.state(state))
            .is_some_and(|s| s.kind == StateKind::Composite);
        !composite || frame.completed.contains(state)
    }

    /// Whether every input state of `transition` is active in the current net.
    pub fn is_enabled(&self, frame: &InterpreterFrame, transition: &str) -> Result<bool, GoalNetError> {
        let (_, index) = self.nets.index(&frame.net)?;
        let inputs = index
            .inputs
            .get(transition)
            .ok_or_else(|| GoalNetError::UnknownTransition {
                net: frame.net.clone(),
                transition: transition.to_string(),
            })?;
        Ok(inputs.iter().all(|s| self.input_ready(frame, s)))
    }

    /// First enabled transition of the current net in document order.
    pub fn first_enabled(&self, frame: &InterpreterFrame) -> Result<Option<String>, GoalNetError> {
        let (net, _) = self.nets.index(&frame.net)?;
        for t in &net.transitions {
            if self.is_enabled(frame, &t.id)? {
                return Ok(Some(t.id.clone()));
            }
        }
        Ok(None)
    }

    /// Runs the transition's tasks, then moves the marking from its inputs to
    /// its selected outputs.
    pub fn fire_transition(
        &self,
        frame: &mut InterpreterFrame,
        transition: &str,
        ctx: &mut C,
    ) -> Result<FireOutcome, GoalNetError> {
        let (net, index) = self.nets.index(&frame.net)?;
        let t = net
            .transition(transition)
            .ok_or_else(|| GoalNetError::UnknownTransition {
                net: frame.net.clone(),
                transition: transition.to_string(),
            })?;
        if !self.is_enabled(frame, transition)? {
            return Err(GoalNetError::NotEnabled(transition.to_string()));
        }

        for name in &t.tasks {
            let task = self
                .registry
                .tasks
                .get(name)
                .ok_or_else(|| GoalNetError::UnknownTask(name.clone()))?;
            match task(ctx) {
                Ok(TaskSignal::Proceed) => {}
                Ok(TaskSignal::Wait) => return Ok(FireOutcome::Waited),
                Err(source) => {
                    return Err(GoalNetError::Task {
                        task: name.clone(),
                        source,
                    })
                }
            }
        }

        let outputs = &index.outputs[transition];
        let selected: Vec<String> = match t.kind {
            TransitionKind::Direct | TransitionKind::Fanout => outputs.clone(),
            TransitionKind::Conditional => {
                let mut chosen = None;
                for guard in &t.guards {
                    let pred = self
                        .registry
                        .predicates
                        .get(&guard.predicate)
                        .ok_or_else(|| GoalNetError::UnknownPredicate(guard.predicate.clone()))?;
                    if pred(ctx) {
                        chosen = Some(guard.target.clone());
                        break;
                    }
                }
                match chosen.or_else(|| t.default.clone()) {
                    Some(target) => vec![target],
                    None => return Err(GoalNetError::GuardUnmatched(transition.to_string())),
                }
            }
            TransitionKind::Probabilistic => {
                let draw: f64 = frame.rng.random();
                vec![pick_weighted(&t.weights, draw)]
            }
        };

        for input in &index.inputs[transition] {
            frame.active.remove(input);
            frame.completed.remove(input);
        }
        for out in selected {
            frame.completed.remove(&out);
            frame.active.insert(out);
        }
        frame.trace.push(TraceEntry {
            net: frame.net.clone(),
            transition: transition.to_string(),
        });
        Ok(FireOutcome::Fired)
    }

    /// Fires enabled transitions until quiescence, a wait signal, or halt.
    pub fn advance(&self, frame: &mut InterpreterFrame, ctx: &mut C) -> Result<AdvanceOutcome, GoalNetError> {
        let mut firings = 0;
        loop {
            let (net, index) = self.nets.index(&frame.net)?;

            if frame.active.len() == 1 {
                let only = frame.active.iter().next().expect("one active state");
                let unentered_composite = net
                    .state(only)
                    .is_some_and(|s| s.kind == StateKind::Composite && !frame.completed.contains(only));
                if index.terminal.contains(only) && !unentered_composite {
                    match frame.call_stack.pop() {
                        None => {
                            return Ok(AdvanceOutcome {
                                halted: true,
                                waiting: false,
                                firings,
                            })
                        }
                        Some(call) => {
                            frame.net = call.net;
                            frame.active = call.active;
                            frame.completed = call.completed;
                            frame.completed.insert(call.composite);
                            continue;
                        }
                    }
                }
            }

            let entering = net.states.iter().find(|s| {
                s.kind == StateKind::Composite && frame.active.contains(&s.id) && !frame.completed.contains(&s.id)
            });
            if let Some(state) = entering {
                let sub_id = &net.subnets[&state.id];
                let sub = self
                    .nets
                    .get(sub_id)
                    .ok_or_else(|| GoalNetError::UnknownNet(sub_id.clone()))?;
                frame.call_stack.push(CallFrame {
                    composite: state.id.clone(),
                    net: frame.net.clone(),
                    active: std::mem::take(&mut frame.active),
                    completed: std::mem::take(&mut frame.completed),
                });
                frame.net = sub.id.clone();
                frame.active.insert(sub.root.clone());
                continue;
            }

            let Some(next) = self.first_enabled(frame)? else {
                return Ok(AdvanceOutcome {
                    halted: false,
                    waiting: false,
                    firings,
                });
            };
            if firings >= self.max_firings {
                return Err(GoalNetError::CycleLimit(self.max_firings));
            }
            match self.fire_transition(frame, &next, ctx)? {
                FireOutcome::Fired => firings += 1,
                FireOutcome::Waited => {
                    return Ok(AdvanceOutcome {
                        halted: false,
                        waiting: true,
                        firings,
                    })
                }
            }
        }
    }
}

/// Inverse-CDF selection over weights in document order.
fn pick_weighted(weights: &[super::BranchWeight], draw: f64) -> String {
    let mut cumulative = 0.0;
    for w in weights {
        cumulative += w.probability;
        if draw < cumulative {
            return w.target.clone();
        }
    }
    // Rounding can leave the draw just above the final cumulative sum.
    weights
        .iter()
        .rev()
        .find(|w| w.probability > 0.0)
        .unwrap_or(&weights[weights.len() - 1])
        .target
        .clone()
}
