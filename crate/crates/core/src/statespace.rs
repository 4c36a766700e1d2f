//! Breadth-first construction and export of the labelled transition system of a typing context.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::context::{successors_unchecked, ContextError, ReductionMode, TransitionLabel, TypingContext};
use crate::name::{Role, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
    pub max_depth: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 1_000_000,
            max_depth: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StateSpaceError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("state limit {limit} exceeded; {frontier} states were still waiting to be expanded")]
    StateLimit { limit: usize, frontier: usize },
    #[error("depth limit {limit} exceeded; {frontier} states were still waiting to be expanded")]
    DepthLimit { limit: usize, frontier: usize },
    #[error("session {0} has no entries in the context")]
    UnknownSession(Session),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub label: TransitionLabel,
}

/// Explicit transition system; state 0 is the initial context.
#[derive(Debug, Clone)]
pub struct Lts {
    pub session: Session,
    pub reliable: BTreeSet<Role>,
    pub states: Vec<TypingContext>,
    pub edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

pub fn build_lts(
    g: &TypingContext,
    s: &Session,
    reliable: &BTreeSet<Role>,
    limits: &Limits,
) -> Result<Lts, StateSpaceError> {
    g.validate()?;
    if g.roles(s).is_empty() {
        return Err(StateSpaceError::UnknownSession(s.clone()));
    }
    let mut index: HashMap<TypingContext, usize> = HashMap::new();
    let mut states = vec![g.clone()];
    let mut depth = vec![0usize];
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    let mut edges = Vec::new();
    index.insert(g.clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let mut succs = successors_unchecked(&states[i], s, reliable);
        // Discovery order breaks ties by rendered label.
        succs.sort_by_cached_key(|(l, _)| l.to_string());
        for (label, next) in succs {
            let target = match index.get(&next) {
                Some(&j) => j,
                None => {
                    if limits.max_depth.is_some_and(|d| depth[i] >= d) {
                        return Err(StateSpaceError::DepthLimit {
                            limit: limits.max_depth.unwrap(),
                            frontier: queue.len() + 1,
                        });
                    }
                    if states.len() >= limits.max_states {
                        return Err(StateSpaceError::StateLimit {
                            limit: limits.max_states,
                            frontier: queue.len() + 1,
                        });
                    }
                    let j = states.len();
                    index.insert(next.clone(), j);
                    states.push(next);
                    depth.push(depth[i] + 1);
                    out.push(Vec::new());
                    queue.push_back(j);
                    j
                }
            };
            out[i].push(edges.len());
            edges.push(Edge {
                source: i,
                target,
                label,
            });
        }
    }
    Ok(Lts {
        session: s.clone(),
        reliable: reliable.clone(),
        states,
        edges,
        out,
    })
}

impl Lts {
    /// Assemble an LTS from explicit parts, for hand-made systems. State 0 is initial.
    /// Returns `None` if an edge mentions a state index out of range or there are no states.
    pub fn from_parts(
        session: Session,
        reliable: BTreeSet<Role>,
        states: Vec<TypingContext>,
        edges: Vec<Edge>,
    ) -> Option<Lts> {
        if states.is_empty() {
            return None;
        }
        let mut out = vec![Vec::new(); states.len()];
        for (k, e) in edges.iter().enumerate() {
            if e.source >= states.len() || e.target >= states.len() {
                return None;
            }
            out[e.source].push(k);
        }
        Some(Lts {
            session,
            reliable,
            states,
            edges,
            out,
        })
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn out_edges(&self, state: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.out[state].iter().map(move |&e| &self.edges[e])
    }

    /// States reachable from the initial one through reductions (crashes included),
    /// in breadth-first order.
    pub fn reduction_reachable(&self) -> Vec<usize> {
        self.reachable_by(self.initial(), ReductionMode::MaybeCrash)
            .0
    }

    /// Breadth-first reachability along reductions of `mode`, with BFS parents
    /// (`parent[i] = (state, edge)`).
    pub fn reachable_by(
        &self,
        from: usize,
        mode: ReductionMode,
    ) -> (Vec<usize>, BTreeMap<usize, (usize, usize)>) {
        let mut seen = vec![false; self.states.len()];
        let mut order = Vec::new();
        let mut parent = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &e in &self.out[i] {
                let edge = &self.edges[e];
                if edge.label.is_reduction(mode) && !seen[edge.target] {
                    seen[edge.target] = true;
                    parent.insert(edge.target, (i, e));
                    queue.push_back(edge.target);
                }
            }
        }
        (order, parent)
    }

    /// Number of reduction edges (crashes included) between reduction-reachable states.
    pub fn reduction_edge_count(&self) -> usize {
        self.reduction_reachable()
            .into_iter()
            .map(|i| {
                self.out_edges(i)
                    .filter(|e| e.label.is_reduction(ReductionMode::MaybeCrash))
                    .count()
            })
            .sum()
    }

    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph lts {\n  node [shape=box, fontname=\"monospace\"];\n");
        for (i, g) in self.states.iter().enumerate() {
            let text: Vec<String> = g.entries().map(|(e, t)| format!("{e}: {t}")).collect();
            let extra = if i == self.initial() { ", peripheries=2" } else { "" };
            out.push_str(&format!(
                "  n{i} [label=\"{}\"{extra}];\n",
                esc(&text.join("\n")).replace('\n', "\\n")
            ));
        }
        for e in &self.edges {
            let style = if e.label.is_reduction(ReductionMode::MaybeCrash) {
                ""
            } else {
                ", style=dashed"
            };
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"{style}];\n",
                e.source,
                e.target,
                esc(&e.label.to_string())
            ));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct State {
            id: usize,
            entries: BTreeMap<String, String>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            session: &'a Session,
            reliable: &'a BTreeSet<Role>,
            initial: usize,
            states: Vec<State>,
            edges: &'a [Edge],
        }
        let doc = Doc {
            session: &self.session,
            reliable: &self.reliable,
            initial: self.initial(),
            states: self
                .states
                .iter()
                .enumerate()
                .map(|(id, g)| State {
                    id,
                    entries: g.entries().map(|(e, t)| (e.to_string(), t.to_string())).collect(),
                })
                .collect(),
            edges: &self.edges,
        };
        serde_json::to_value(doc).expect("serialisable")
    }
}
