//! Direct checkers for safety, deadlock-freedom, termination and never-termination;
//! liveness through its mu-calculus encoding; and a path-semantic liveness oracle.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::context::{ReductionMode, TransitionLabel};
use crate::mucalc::{self, Property};
use crate::name::Role;
use crate::statespace::Lts;
use crate::types::{is_end_like, is_pure_crash_recovery};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub state: usize,
    pub context: String,
    /// Transition taken from this state; absent on the last step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub reason: String,
    /// Reductions from the initial context to the offending state.
    pub trace: Vec<TraceStep>,
    /// For lassos: reductions that return to the last state of `trace`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cycle: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    fn ok() -> Verdict {
        Verdict {
            holds: true,
            witness: None,
        }
    }

    fn fail(w: Witness) -> Verdict {
        Verdict {
            holds: false,
            witness: Some(w),
        }
    }
}

fn step(lts: &Lts, state: usize, label: Option<&TransitionLabel>) -> TraceStep {
    TraceStep {
        state,
        context: lts.states[state].to_string(),
        label: label.map(|l| l.to_string()),
    }
}

/// Reduction path from the initial state to `target` using BFS parents.
fn trace_to(lts: &Lts, parent: &BTreeMap<usize, (usize, usize)>, target: usize) -> Vec<TraceStep> {
    let mut rev = vec![step(lts, target, None)];
    let mut cur = target;
    while let Some(&(prev, e)) = parent.get(&cur) {
        rev.push(step(lts, prev, Some(&lts.edges[e].label)));
        cur = prev;
    }
    rev.reverse();
    rev
}

/// Transitions enabled at one state, grouped for the property clauses.
#[derive(Default)]
struct Enabled {
    /// (sender, receiver, label)
    outputs: Vec<(Role, Role, String)>,
    /// (receiver, sender), non-crash labels only
    inputs: BTreeSet<(Role, Role)>,
    stopped: BTreeSet<Role>,
    /// (sender, receiver, label)
    comms: BTreeSet<(Role, Role, String)>,
    /// (detector, crashed)
    detects: BTreeSet<(Role, Role)>,
}

impl Enabled {
    fn at(lts: &Lts, i: usize) -> Enabled {
        let mut en = Enabled::default();
        for e in lts.out_edges(i) {
            match &e.label {
                TransitionLabel::Output {
                    sender,
                    receiver,
                    label,
                    ..
                } => en
                    .outputs
                    .push((sender.clone(), receiver.clone(), label.to_string())),
                TransitionLabel::Input {
                    receiver,
                    sender,
                    label,
                    ..
                } if !label.is_crash() => {
                    en.inputs.insert((receiver.clone(), sender.clone()));
                }
                TransitionLabel::Stopped { role, .. } => {
                    en.stopped.insert(role.clone());
                }
                TransitionLabel::Comm {
                    sender,
                    receiver,
                    label,
                    ..
                } => {
                    en.comms
                        .insert((sender.clone(), receiver.clone(), label.to_string()));
                }
                TransitionLabel::CrashDetect {
                    detector, crashed, ..
                } => {
                    en.detects.insert((detector.clone(), crashed.clone()));
                }
                _ => {}
            }
        }
        en
    }

    fn can_reduce(&self) -> bool {
        !self.comms.is_empty() || !self.detects.is_empty()
    }
}

fn safety_violation(lts: &Lts, i: usize) -> Option<String> {
    let en = Enabled::at(lts, i);
    for (p, q, l) in &en.outputs {
        if en.inputs.contains(&(q.clone(), p.clone()))
            && !en.comms.contains(&(p.clone(), q.clone(), l.clone()))
        {
            return Some(format!(
                "{p} can send {l} to {q} and {q} waits for {p}, but they cannot communicate"
            ));
        }
    }
    for p in &en.stopped {
        for (q, from) in &en.inputs {
            if from == p && !en.detects.contains(&(q.clone(), p.clone())) {
                return Some(format!(
                    "{p} has crashed and {q} waits for {p} without handling the crash"
                ));
            }
        }
    }
    None
}

pub fn check_safety(lts: &Lts) -> Verdict {
    let (order, parent) = lts.reachable_by(lts.initial(), ReductionMode::MaybeCrash);
    for i in order {
        if let Some(reason) = safety_violation(lts, i) {
            return Verdict::fail(Witness {
                reason,
                trace: trace_to(lts, &parent, i),
                cycle: Vec::new(),
            });
        }
    }
    Verdict::ok()
}

fn stuck_entry(lts: &Lts, i: usize) -> Option<String> {
    if Enabled::at(lts, i).can_reduce() {
        return None;
    }
    lts.states[i]
        .session_entries(&lts.session)
        .find(|(_, t)| !(t.is_stop() || is_end_like(t) || is_pure_crash_recovery(t)))
        .map(|(r, t)| format!("no reduction is possible, but {}[{r}] still has type {t}", lts.session))
}

pub fn check_deadlock_freedom(lts: &Lts) -> Verdict {
    let (order, parent) = lts.reachable_by(lts.initial(), ReductionMode::MaybeCrash);
    for i in order {
        if let Some(reason) = stuck_entry(lts, i) {
            return Verdict::fail(Witness {
                reason,
                trace: trace_to(lts, &parent, i),
                cycle: Vec::new(),
            });
        }
    }
    Verdict::ok()
}

/// Deadlock freedom plus absence of infinite reduction sequences.
pub fn check_termination(lts: &Lts) -> Verdict {
    let df = check_deadlock_freedom(lts);
    if !df.holds {
        return df;
    }
    let (order, parent) = lts.reachable_by(lts.initial(), ReductionMode::MaybeCrash);
    let allowed: HashSet<usize> = order.iter().copied().collect();
    if let Some((entry, cycle)) = find_cycle(lts, &allowed, |l| l.is_reduction(ReductionMode::MaybeCrash)) {
        return Verdict::fail(Witness {
            reason: "reductions can go on forever".to_string(),
            trace: trace_to(lts, &parent, entry),
            cycle,
        });
    }
    Verdict::ok()
}

pub fn check_never_termination(lts: &Lts) -> Verdict {
    let (order, parent) = lts.reachable_by(lts.initial(), ReductionMode::MaybeCrash);
    for i in order {
        if !Enabled::at(lts, i).can_reduce() {
            return Verdict::fail(Witness {
                reason: "a context with no further reductions is reachable".to_string(),
                trace: trace_to(lts, &parent, i),
                cycle: Vec::new(),
            });
        }
    }
    Verdict::ok()
}

/// Liveness, decided by evaluating its mu-calculus encoding. A failing verdict
/// carries a lasso found by [`fair_lasso_oracle`] when one exists.
pub fn check_liveness(lts: &Lts) -> Verdict {
    if mucalc::holds(lts, Property::Live) {
        return Verdict::ok();
    }
    let witness = match fair_lasso_oracle(lts, usize::MAX) {
        OracleOutcome::NotLive(w) => w,
        _ => Witness {
            reason: "the liveness formula does not hold, but no unfair-free violating path was found"
                .to_string(),
            trace: vec![step(lts, lts.initial(), None)],
            cycle: Vec::new(),
        },
    };
    Verdict::fail(witness)
}

pub fn check(lts: &Lts, property: Property) -> Verdict {
    match property {
        Property::Safe => check_safety(lts),
        Property::Df => check_deadlock_freedom(lts),
        Property::Live => check_liveness(lts),
        Property::Term => check_termination(lts),
        Property::Nterm => check_never_termination(lts),
    }
}

/// Some cycle among `allowed` states over edges accepted by `keep`: returns a state
/// on it and the steps around it.
fn find_cycle(
    lts: &Lts,
    allowed: &HashSet<usize>,
    keep: impl Fn(&TransitionLabel) -> bool,
) -> Option<(usize, Vec<TraceStep>)> {
    let mut graph: DiGraph<usize, usize> = DiGraph::new();
    let mut node = BTreeMap::new();
    let mut sorted: Vec<usize> = allowed.iter().copied().collect();
    sorted.sort_unstable();
    for &i in &sorted {
        node.insert(i, graph.add_node(i));
    }
    for &i in &sorted {
        for (ei, e) in lts.out_edges(i).enumerate() {
            if keep(&e.label) && allowed.contains(&e.target) {
                graph.add_edge(node[&i], node[&e.target], ei);
            }
        }
    }
    for comp in tarjan_scc(&graph) {
        let members: HashSet<usize> = comp.iter().map(|n| graph[*n]).collect();
        let start = *members.iter().min().unwrap();
        let cyclic = members.len() > 1
            || lts
                .out_edges(start)
                .any(|e| keep(&e.label) && e.target == start);
        if cyclic {
            let walk = shortest_walk(lts, &members, start, start, &keep)?;
            return Some((start, walk));
        }
    }
    None
}

/// Shortest path of at least one step from `from` to `to` inside `within`.
fn shortest_walk(
    lts: &Lts,
    within: &HashSet<usize>,
    from: usize,
    to: usize,
    keep: &impl Fn(&TransitionLabel) -> bool,
) -> Option<Vec<TraceStep>> {
    let mut parent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let mut seen = HashSet::new();
    for (ei, e) in lts.out_edges(from).enumerate() {
        if keep(&e.label) && within.contains(&e.target) && seen.insert(e.target) {
            parent.insert(e.target, (from, ei));
            queue.push_back(e.target);
        }
    }
    let mut found = seen.contains(&to);
    while !found {
        let Some(i) = queue.pop_front() else { break };
        for (ei, e) in lts.out_edges(i).enumerate() {
            if keep(&e.label) && within.contains(&e.target) && seen.insert(e.target) {
                parent.insert(e.target, (i, ei));
                queue.push_back(e.target);
                if e.target == to {
                    found = true;
                }
            }
        }
    }
    if !found {
        return None;
    }
    let mut rev = Vec::new();
    let mut cur = to;
    loop {
        let (prev, ei) = parent[&cur];
        let label = lts.out_edges(prev).nth(ei).map(|e| e.label.clone());
        rev.push(step(lts, prev, label.as_ref()));
        cur = prev;
        if cur == from {
            break;
        }
    }
    rev.reverse();
    rev.push(step(lts, to, None));
    Some(rev)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Live,
    NotLive(Witness),
    /// Too many states, or the LTS lacks the structure the search relies on.
    Inconclusive(String),
}

/// A pending obligation: an output from `p` to `q`, or a non-crash input at `q` from `p`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Obligation {
    Send(Role, Role),
    Receive(Role, Role),
}

impl Obligation {
    fn enabled(&self, en: &Enabled) -> bool {
        match self {
            Obligation::Send(p, q) => en.outputs.iter().any(|(a, b, _)| a == p && b == q),
            Obligation::Receive(q, p) => en.inputs.contains(&(q.clone(), p.clone())),
        }
    }

    fn discharged_by(&self, l: &TransitionLabel) -> bool {
        match (self, l) {
            (Obligation::Send(p, q), TransitionLabel::Comm { sender, receiver, .. })
            | (Obligation::Receive(q, p), TransitionLabel::Comm { sender, receiver, .. }) => {
                sender == p && receiver == q
            }
            (
                Obligation::Receive(q, p),
                TransitionLabel::CrashDetect {
                    detector, crashed, ..
                },
            ) => detector == q && crashed == p,
            _ => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            Obligation::Send(p, q) => format!("{p} can send to {q}"),
            Obligation::Receive(q, p) => format!("{q} waits for a message from {p}"),
        }
    }
}

/// Fairness pair of a non-crashing reduction: communications between a sender and
/// a receiver, or detections of one role's crash by another.
fn fairness_pair(l: &TransitionLabel) -> Option<(u8, Role, Role)> {
    match l {
        TransitionLabel::Comm {
            sender, receiver, ..
        } => Some((0, sender.clone(), receiver.clone())),
        TransitionLabel::CrashDetect {
            detector, crashed, ..
        } => Some((1, detector.clone(), crashed.clone())),
        _ => None,
    }
}

/// Decide liveness from its path definition.
///
/// A violation is a reduction-reachable state with an enabled output (or non-crash
/// input) and a fair, non-crashing path from it on which no matching communication
/// (or crash detection) ever happens. Such a path either stops in a state with no
/// non-crashing reduction, or eventually stays inside a strongly connected set of
/// states that fires every pair it enables. The obligation stays enabled along the
/// path, since only its own discharge moves the waiting entry; this is checked.
pub fn fair_lasso_oracle(lts: &Lts, bound: usize) -> OracleOutcome {
    let (order, parent) = lts.reachable_by(lts.initial(), ReductionMode::MaybeCrash);
    if order.len() > bound {
        return OracleOutcome::Inconclusive(format!(
            "{} reduction-reachable states exceed the bound {bound}",
            order.len()
        ));
    }
    let enabled: BTreeMap<usize, Enabled> = order.iter().map(|&i| (i, Enabled::at(lts, i))).collect();
    let nc = |l: &TransitionLabel| l.is_reduction(ReductionMode::NonCrash);

    let mut obligations: BTreeSet<Obligation> = BTreeSet::new();
    for en in enabled.values() {
        for (p, q, _) in &en.outputs {
            obligations.insert(Obligation::Send(p.clone(), q.clone()));
        }
        for (q, p) in &en.inputs {
            obligations.insert(Obligation::Receive(q.clone(), p.clone()));
        }
    }

    for ob in &obligations {
        let holders: HashSet<usize> = order
            .iter()
            .copied()
            .filter(|i| ob.enabled(&enabled[i]))
            .collect();
        // Persistence: a non-discharging reduction keeps the obligation enabled.
        for &i in &holders {
            for e in lts.out_edges(i) {
                if nc(&e.label) && !ob.discharged_by(&e.label) && !holders.contains(&e.target) {
                    return OracleOutcome::Inconclusive(format!(
                        "obligation '{}' is dropped by {}",
                        ob.describe(),
                        e.label
                    ));
                }
            }
        }
        let mut sorted: Vec<usize> = holders.iter().copied().collect();
        sorted.sort_unstable();
        for &i in &sorted {
            if !enabled[&i].can_reduce() {
                return OracleOutcome::NotLive(Witness {
                    reason: format!("{}, but no further reduction is possible", ob.describe()),
                    trace: trace_to(lts, &parent, i),
                    cycle: Vec::new(),
                });
            }
        }
        let keep = |l: &TransitionLabel| nc(l) && !ob.discharged_by(l);
        if let Some(set) = fair_set(lts, &holders, &enabled, &keep) {
            let start = *set.iter().min().unwrap();
            let cycle = covering_walk(lts, &set, start, &keep);
            return OracleOutcome::NotLive(Witness {
                reason: format!("{}, but a fair path never lets it happen", ob.describe()),
                trace: trace_to(lts, &parent, start),
                cycle,
            });
        }
    }
    OracleOutcome::Live
}

/// A strongly connected set inside `within`, with at least one edge, that fires
/// (over `keep` edges) every fairness pair enabled at any of its states.
fn fair_set(
    lts: &Lts,
    within: &HashSet<usize>,
    enabled: &BTreeMap<usize, Enabled>,
    keep: &impl Fn(&TransitionLabel) -> bool,
) -> Option<HashSet<usize>> {
    let mut work: Vec<HashSet<usize>> = vec![within.clone()];
    while let Some(region) = work.pop() {
        let mut graph: DiGraph<usize, ()> = DiGraph::new();
        let mut sorted: Vec<usize> = region.iter().copied().collect();
        sorted.sort_unstable();
        let node: BTreeMap<usize, _> = sorted.iter().map(|&i| (i, graph.add_node(i))).collect();
        for &i in &sorted {
            for e in lts.out_edges(i) {
                if keep(&e.label) && region.contains(&e.target) {
                    graph.add_edge(node[&i], node[&e.target], ());
                }
            }
        }
        for comp in tarjan_scc(&graph) {
            let members: HashSet<usize> = comp.iter().map(|n| graph[*n]).collect();
            let mut fired = BTreeSet::new();
            let mut has_edge = false;
            for &i in &members {
                for e in lts.out_edges(i) {
                    if keep(&e.label) && members.contains(&e.target) {
                        has_edge = true;
                        if let Some(pair) = fairness_pair(&e.label) {
                            fired.insert(pair);
                        }
                    }
                }
            }
            if !has_edge {
                continue;
            }
            let bad: HashSet<usize> = members
                .iter()
                .copied()
                .filter(|i| {
                    lts.out_edges(*i)
                        .filter_map(|e| fairness_pair(&e.label))
                        .any(|pair| !fired.contains(&pair))
                })
                .collect();
            if bad.is_empty() {
                return Some(members);
            }
            let rest: HashSet<usize> = members.difference(&bad).copied().collect();
            if !rest.is_empty() {
                work.push(rest);
            }
        }
        let _ = enabled;
    }
    None
}

/// A closed walk from `start` through every `keep` edge inside `set`.
fn covering_walk(
    lts: &Lts,
    set: &HashSet<usize>,
    start: usize,
    keep: &impl Fn(&TransitionLabel) -> bool,
) -> Vec<TraceStep> {
    let mut walk: Vec<TraceStep> = Vec::new();
    let mut cur = start;
    let mut targets: Vec<(usize, usize)> = Vec::new();
    let mut sorted: Vec<usize> = set.iter().copied().collect();
    sorted.sort_unstable();
    for &i in &sorted {
        for (ei, e) in lts.out_edges(i).enumerate() {
            if keep(&e.label) && set.contains(&e.target) {
                targets.push((i, ei));
            }
        }
    }
    for (src, ei) in targets {
        if cur != src {
            if let Some(mut path) = shortest_walk(lts, set, cur, src, keep) {
                path.pop();
                walk.extend(path);
            }
        }
        let e = lts.out_edges(src).nth(ei).unwrap();
        walk.push(step(lts, src, Some(&e.label)));
        cur = e.target;
    }
    if cur != start {
        if let Some(mut path) = shortest_walk(lts, set, cur, start, keep) {
            path.pop();
            walk.extend(path);
        }
    }
    walk.push(step(lts, start, None));
    walk
}
