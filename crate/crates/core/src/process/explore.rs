//! Bounded exploration of the reliable process reduction, used to test type
//! safety, subject reduction and session fidelity on concrete systems.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::congruence::has_active_error;
use super::semantics::{filtered_step, ReliabilityMap, Rule};
use super::typing::{typecheck_up_to_annotations, ProcessTypingEnv};
use super::Process;
use crate::context::{reduction_successors, ReductionMode, TypingContext};
use crate::name::{Role, Session};

/// One reduction of a trace, with the reduct it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub rule: Rule,
    pub process: String,
}

#[derive(Debug, Clone)]
pub struct ExploreOutcome {
    /// Distinct processes visited, the initial one included.
    pub explored: usize,
    /// Longest depth actually reached.
    pub depth: usize,
    /// First reduction sequence ending in a process with an active error.
    pub error_trace: Option<Vec<TraceEntry>>,
}

/// Breadth-first search over `filtered_step` up to `depth` reductions.
/// Processes are identified by their printed congruence normal form.
fn bfs(
    p: &Process,
    reliable: &ReliabilityMap,
    depth: usize,
    mut visit: impl FnMut(&Process, &[TraceEntry]) -> bool,
) -> (usize, usize) {
    let start = super::congruence_normal(p);
    let mut seen: HashSet<String> = HashSet::from([start.to_string()]);
    let mut queue = VecDeque::from([(start, Vec::<TraceEntry>::new())]);
    let mut reached = 0;
    while let Some((q, trace)) = queue.pop_front() {
        reached = reached.max(trace.len());
        if !visit(&q, &trace) {
            break;
        }
        if trace.len() >= depth {
            continue;
        }
        for (rule, next) in filtered_step(&q, reliable) {
            let key = next.to_string();
            if seen.insert(key.clone()) {
                let mut t = trace.clone();
                t.push(TraceEntry { rule, process: key });
                queue.push_back((next, t));
            }
        }
    }
    (seen.len(), reached)
}

/// Check that no process reachable within `depth` reliable reductions has an active error.
pub fn explore_type_safety(p: &Process, reliable: &ReliabilityMap, depth: usize) -> ExploreOutcome {
    let mut error_trace = None;
    let (explored, reached) = bfs(p, reliable, depth, |q, trace| {
        if has_active_error(q) {
            error_trace = Some(trace.to_vec());
            false
        } else {
            true
        }
    });
    ExploreOutcome {
        explored,
        depth: reached,
        error_trace,
    }
}

/// Context reductions (crashes included) over every session of `g`.
pub fn context_reductions(g: &TypingContext, reliable: &ReliabilityMap) -> Vec<TypingContext> {
    let empty = BTreeSet::new();
    let mut out = Vec::new();
    for s in g.sessions() {
        let r = reliable.get(&s).unwrap_or(&empty);
        if let Ok(succ) = reduction_successors(g, &s, r, ReductionMode::MaybeCrash) {
            out.extend(succ.into_iter().map(|(_, next)| next));
        }
    }
    out
}

/// Contexts reachable from `g` in `min..=max` reductions.
fn contexts_within(
    g: &TypingContext,
    reliable: &ReliabilityMap,
    min: usize,
    max: usize,
) -> Vec<TypingContext> {
    let mut layer = vec![g.clone()];
    let mut seen: HashSet<TypingContext> = HashSet::new();
    let mut out = Vec::new();
    if min == 0 {
        seen.insert(g.clone());
        out.push(g.clone());
    }
    for depth in 1..=max {
        let mut next = Vec::new();
        for c in &layer {
            for d in context_reductions(c, reliable) {
                if depth >= min && seen.insert(d.clone()) {
                    out.push(d.clone());
                }
                next.push(d);
            }
        }
        next.sort_by_key(|c| c.to_string());
        next.dedup();
        layer = next;
    }
    out
}

#[derive(Debug, Clone)]
pub struct SubjectReductionFailure {
    pub trace: Vec<TraceEntry>,
    pub process: String,
}

#[derive(Debug, Clone)]
pub struct SubjectReductionOutcome {
    pub checked: usize,
    pub failures: Vec<SubjectReductionFailure>,
}

/// For every process reachable within `depth` reliable reductions, search the
/// contexts reachable from `gamma` for one that types it.
pub fn check_subject_reduction(
    theta: &ProcessTypingEnv,
    gamma: &TypingContext,
    reliable: &ReliabilityMap,
    p: &Process,
    depth: usize,
) -> SubjectReductionOutcome {
    // Each process reduction moves a context by at most one step, so the
    // contexts within `depth` steps are enough.
    let candidates = contexts_within(gamma, reliable, 0, depth);
    let mut failures = Vec::new();
    let mut checked = 0;
    bfs(p, reliable, depth, |q, trace| {
        checked += 1;
        let typed = candidates
            .iter()
            .any(|g| typecheck_up_to_annotations(theta, g, q).is_ok());
        if !typed {
            failures.push(SubjectReductionFailure {
                trace: trace.to_vec(),
                process: q.to_string(),
            });
        }
        true
    });
    SubjectReductionOutcome { checked, failures }
}

/// Process steps allowed to match one context reduction (calls unfold silently).
pub const FIDELITY_PROCESS_STEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct FidelityFailure {
    pub context: String,
    pub process: String,
}

#[derive(Debug, Clone)]
pub struct FidelityOutcome {
    /// Typed (context, process) pairs examined.
    pub checked: usize,
    pub failures: Vec<FidelityFailure>,
}

/// Session fidelity, bounded: from every examined pair whose context can reduce,
/// some sequence of 1 to [`FIDELITY_PROCESS_STEPS`] reliable process reductions
/// must reach a process typed by a one-step reduct of the context. Matched pairs are examined in turn, up to `depth` rounds.
pub fn check_session_fidelity(
    theta: &ProcessTypingEnv,
    gamma: &TypingContext,
    reliable: &ReliabilityMap,
    p: &Process,
    depth: usize,
) -> FidelityOutcome {
    let start = super::congruence_normal(p);
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut queue = VecDeque::from([(gamma.clone(), start, 0usize)]);
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut reduct_cache: HashMap<String, Vec<Process>> = HashMap::new();
    while let Some((g, q, round)) = queue.pop_front() {
        if !seen.insert((g.to_string(), q.to_string())) {
            continue;
        }
        checked += 1;
        if round >= depth || context_reductions(&g, reliable).is_empty() {
            continue;
        }
        let contexts = contexts_within(&g, reliable, 1, 1);
        let reducts = reduct_cache
            .entry(q.to_string())
            .or_insert_with(|| process_reducts(&q, reliable, FIDELITY_PROCESS_STEPS))
            .clone();
        let mut matched = false;
        for q2 in &reducts {
            for g2 in &contexts {
                if typecheck_up_to_annotations(theta, g2, q2).is_ok() {
                    matched = true;
                    queue.push_back((g2.clone(), q2.clone(), round + 1));
                }
            }
        }
        if !matched {
            failures.push(FidelityFailure {
                context: g.to_string(),
                process: q.to_string(),
            });
        }
    }
    FidelityOutcome { checked, failures }
}

/// Processes reachable in 1..=`steps` reliable reductions.
fn process_reducts(p: &Process, reliable: &ReliabilityMap, steps: usize) -> Vec<Process> {
    let mut out = Vec::new();
    let start = p.to_string();
    let mut seen: HashSet<String> = HashSet::new();
    bfs(p, reliable, steps, |q, trace| {
        if !trace.is_empty() && seen.insert(q.to_string()) && q.to_string() != start {
            out.push(q.clone());
        }
        true
    });
    out
}

/// Conditions under which fidelity is expected: a parallel of threads over the
/// free session `s`, each using endpoints of at most one role, and every
/// definition body guarded by a prefix.
pub fn plays_single_roles(p: &Process, s: &Session) -> Result<(), String> {
    unguarded_definition(p)?;
    let mut threads = Vec::new();
    collect_threads(p, &mut threads);
    let mut roles_seen: BTreeSet<Role> = BTreeSet::new();
    for t in &threads {
        let roles: BTreeSet<Role> = t
            .free_endpoints()
            .into_iter()
            .filter(|e| &e.session == s)
            .map(|e| e.role)
            .collect();
        if roles.len() > 1 {
            let rs: Vec<String> = roles.iter().map(|r| r.to_string()).collect();
            return Err(format!("thread {t} plays several roles: {}", rs.join(", ")));
        }
        for r in roles {
            if !roles_seen.insert(r.clone()) {
                return Err(format!("role {r} is played by more than one thread"));
            }
        }
    }
    Ok(())
}

fn collect_threads<'a>(p: &'a Process, out: &mut Vec<&'a Process>) {
    match p {
        Process::Par(ps) => ps.iter().for_each(|q| collect_threads(q, out)),
        Process::Def { body, .. } => collect_threads(body, out),
        Process::Nil => {}
        other => out.push(other),
    }
}

fn unguarded_definition(p: &Process) -> Result<(), String> {
    match p {
        Process::Def { def, body } => {
            if starts_with_call(&def.body) {
                return Err(format!("definition {} is not guarded", def.name));
            }
            unguarded_definition(&def.body)?;
            unguarded_definition(body)
        }
        Process::Par(ps) => ps.iter().try_for_each(unguarded_definition),
        Process::Restrict { body, .. } => unguarded_definition(body),
        Process::Select { cont, .. } => unguarded_definition(cont),
        Process::Branch { branches, .. } => branches
            .iter()
            .try_for_each(|b| unguarded_definition(&b.body)),
        _ => Ok(()),
    }
}

fn starts_with_call(p: &Process) -> bool {
    match p {
        Process::Call { .. } => true,
        Process::Par(ps) => ps.iter().any(starts_with_call),
        Process::Def { body, .. } | Process::Restrict { body, .. } => starts_with_call(body),
        _ => false,
    }
}
