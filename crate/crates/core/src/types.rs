//! Session types, well-formedness, unfolding and coinductive subtyping.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Deref;
use std::sync::Arc;

use serde::Serialize;

use crate::name::{Name, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasicType {
    Unit,
    Int,
    Bool,
    Real,
    Str,
}

impl BasicType {
    pub const ALL: [BasicType; 5] = [
        BasicType::Unit,
        BasicType::Int,
        BasicType::Bool,
        BasicType::Real,
        BasicType::Str,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BasicType::Unit => "unit",
            BasicType::Int => "int",
            BasicType::Bool => "bool",
            BasicType::Real => "real",
            BasicType::Str => "str",
        }
    }

    pub fn from_keyword(s: &str) -> Option<BasicType> {
        BasicType::ALL.into_iter().find(|b| b.keyword() == s)
    }

    /// Basic subtyping: reflexive, plus `int <: real`.
    pub fn is_subtype(self, other: BasicType) -> bool {
        self == other || (self == BasicType::Int && other == BasicType::Real)
    }
}

impl fmt::Display for BasicType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Crash,
    Named(Name),
}

impl Label {
    pub fn named(s: &str) -> Label {
        if s == "crash" {
            Label::Crash
        } else {
            Label::Named(Name::new(s))
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, Label::Crash)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Crash => f.write_str("crash"),
            Label::Named(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    Basic(BasicType),
    Session(Arc<SessionType>),
}

impl Payload {
    pub const UNIT: Payload = Payload::Basic(BasicType::Unit);

    pub fn is_subtype(&self, other: &Payload) -> bool {
        match (self, other) {
            (Payload::Basic(a), Payload::Basic(b)) => a.is_subtype(*b),
            (Payload::Session(a), Payload::Session(b)) => is_subtype(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceKind {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Branch {
    pub label: Label,
    pub payload: Payload,
    pub cont: Arc<SessionType>,
}

/// Branches of a choice. Order is kept for printing; equality and hashing ignore it.
#[derive(Debug, Clone)]
pub struct Branches(pub Vec<Branch>);

impl Branches {
    pub fn get(&self, label: &Label) -> Option<&Branch> {
        self.0.iter().find(|b| &b.label == label)
    }
}

impl Deref for Branches {
    type Target = [Branch];
    fn deref(&self) -> &[Branch] {
        &self.0
    }
}

impl PartialEq for Branches {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .all(|b| other.get(&b.label).is_some_and(|o| o == b))
    }
}

impl Eq for Branches {}

impl Hash for Branches {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let mut acc: u64 = 0;
        for b in &self.0 {
            let mut h = DefaultHasher::new();
            b.hash(&mut h);
            acc = acc.wrapping_add(h.finish());
        }
        state.write_usize(self.0.len());
        state.write_u64(acc);
    }
}

/// Name of a recursion binder, kept only for printing.
#[derive(Debug, Clone)]
pub struct VarHint(pub Name);

impl PartialEq for VarHint {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for VarHint {}
impl Hash for VarHint {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

/// Session types with recursion variables as de Bruijn indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SessionType {
    Choice {
        kind: ChoiceKind,
        peer: Role,
        branches: Branches,
    },
    Rec {
        hint: VarHint,
        body: Arc<SessionType>,
    },
    Var {
        index: usize,
        hint: VarHint,
    },
    End,
    Stop,
}

impl SessionType {
    pub fn end() -> Arc<SessionType> {
        Arc::new(SessionType::End)
    }

    pub fn stop() -> Arc<SessionType> {
        Arc::new(SessionType::Stop)
    }

    pub fn choice(kind: ChoiceKind, peer: &str, branches: Vec<Branch>) -> Arc<SessionType> {
        Arc::new(SessionType::Choice {
            kind,
            peer: Name::new(peer),
            branches: Branches(branches),
        })
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, SessionType::Stop)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyChoice,
    DuplicateLabel(Label),
    CrashInInternalChoice,
    UnboundVariable(Name),
    UnguardedRecursion,
    NestedStop,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyChoice => f.write_str("choice with no branches"),
            ViolationKind::DuplicateLabel(l) => write!(f, "duplicate label {l}"),
            ViolationKind::CrashInInternalChoice => f.write_str("crash in internal choice"),
            ViolationKind::UnboundVariable(v) => write!(f, "unbound recursion variable {v}"),
            ViolationKind::UnguardedRecursion => f.write_str("unguarded recursion"),
            ViolationKind::NestedStop => f.write_str("stop below the top level"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Path of branch labels from the root, e.g. `q!req/q?res`.
    pub path: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{} at top level", self.kind)
        } else {
            write!(f, "{} at {}", self.kind, self.path)
        }
    }
}

/// Check closedness, guardedness, label distinctness, crash placement and stop placement.
pub fn well_formed(t: &SessionType) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !t.is_stop() {
        let mut path = Vec::new();
        check_wf(t, 0, &mut path, &mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn check_wf(t: &SessionType, depth: usize, path: &mut Vec<String>, out: &mut Vec<Violation>) {
    let here = |path: &Vec<String>, kind| Violation {
        kind,
        path: path.join("/"),
    };
    match t {
        SessionType::End => {}
        SessionType::Stop => out.push(here(path, ViolationKind::NestedStop)),
        SessionType::Var { index, hint } => {
            if *index >= depth {
                out.push(here(path, ViolationKind::UnboundVariable(hint.0.clone())));
            }
        }
        SessionType::Rec { hint, body } => {
            if !guarded(body) {
                out.push(here(path, ViolationKind::UnguardedRecursion));
            }
            path.push(format!("rec {}", hint.0));
            check_wf(body, depth + 1, path, out);
            path.pop();
        }
        SessionType::Choice {
            kind,
            peer,
            branches,
        } => {
            if branches.is_empty() {
                out.push(here(path, ViolationKind::EmptyChoice));
            }
            let sym = match kind {
                ChoiceKind::Internal => '!',
                ChoiceKind::External => '?',
            };
            let mut seen = HashSet::new();
            for b in branches.iter() {
                path.push(format!("{peer}{sym}{}", b.label));
                if !seen.insert(&b.label) {
                    out.push(here(path, ViolationKind::DuplicateLabel(b.label.clone())));
                }
                if *kind == ChoiceKind::Internal && b.label.is_crash() {
                    out.push(here(path, ViolationKind::CrashInInternalChoice));
                }
                if let Payload::Session(s) = &b.payload {
                    path.push("payload".to_string());
                    check_wf(s, depth, path, out);
                    path.pop();
                }
                check_wf(&b.cont, depth, path, out);
                path.pop();
            }
        }
    }
}

/// A recursion body is guarded if no variable is reachable through `rec` binders alone.
fn guarded(body: &SessionType) -> bool {
    match body {
        SessionType::Var { .. } => false,
        SessionType::Rec { body, .. } => guarded(body),
        _ => true,
    }
}

/// Substitute the closed type `repl` for variable `depth`, lowering indices above it.
fn subst(t: &Arc<SessionType>, depth: usize, repl: &Arc<SessionType>) -> Arc<SessionType> {
    match &**t {
        SessionType::End | SessionType::Stop => t.clone(),
        SessionType::Var { index, hint } => {
            if *index == depth {
                repl.clone()
            } else if *index > depth {
                Arc::new(SessionType::Var {
                    index: index - 1,
                    hint: hint.clone(),
                })
            } else {
                t.clone()
            }
        }
        SessionType::Rec { hint, body } => Arc::new(SessionType::Rec {
            hint: hint.clone(),
            body: subst(body, depth + 1, repl),
        }),
        SessionType::Choice {
            kind,
            peer,
            branches,
        } => Arc::new(SessionType::Choice {
            kind: *kind,
            peer: peer.clone(),
            branches: Branches(
                branches
                    .iter()
                    .map(|b| Branch {
                        label: b.label.clone(),
                        payload: match &b.payload {
                            Payload::Session(s) => Payload::Session(subst(s, depth, repl)),
                            p => p.clone(),
                        },
                        cont: subst(&b.cont, depth, repl),
                    })
                    .collect(),
            ),
        }),
    }
}

/// Unfold top-level `rec` binders until the head is a choice, `end` or `stop`.
///
/// The argument must be closed and guarded.
pub fn unfold(t: &Arc<SessionType>) -> Arc<SessionType> {
    let mut cur = t.clone();
    while let SessionType::Rec { body, .. } = &*cur {
        cur = subst(body, 0, &cur);
    }
    cur
}

/// Coinductive session subtyping (`a` is a subtype of `b`).
pub fn is_subtype(a: &Arc<SessionType>, b: &Arc<SessionType>) -> bool {
    let mut assumed = HashSet::new();
    sub(a, b, &mut assumed)
}

fn sub(
    a: &Arc<SessionType>,
    b: &Arc<SessionType>,
    assumed: &mut HashSet<(Arc<SessionType>, Arc<SessionType>)>,
) -> bool {
    if Arc::ptr_eq(a, b) {
        return true;
    }
    if !assumed.insert((a.clone(), b.clone())) {
        return true;
    }
    let (ua, ub) = (unfold(a), unfold(b));
    match (&*ua, &*ub) {
        (SessionType::End, SessionType::End) | (SessionType::Stop, SessionType::Stop) => true,
        (
            SessionType::Choice {
                kind: ka,
                peer: pa,
                branches: ba,
            },
            SessionType::Choice {
                kind: kb,
                peer: pb,
                branches: bb,
            },
        ) if ka == kb && pa == pb => match ka {
            ChoiceKind::Internal => bb.iter().all(|super_b| {
                ba.get(&super_b.label).is_some_and(|sub_b| {
                    payload_sub(&super_b.payload, &sub_b.payload, assumed)
                        && sub(&sub_b.cont, &super_b.cont, assumed)
                })
            }),
            ChoiceKind::External => {
                if ba.len() == 1 && ba[0].label.is_crash() && bb.len() != 1 {
                    return false;
                }
                ba.iter().all(|sub_b| {
                    bb.get(&sub_b.label).is_some_and(|super_b| {
                        payload_sub(&sub_b.payload, &super_b.payload, assumed)
                            && sub(&sub_b.cont, &super_b.cont, assumed)
                    })
                })
            }
        },
        _ => false,
    }
}

fn payload_sub(
    a: &Payload,
    b: &Payload,
    assumed: &mut HashSet<(Arc<SessionType>, Arc<SessionType>)>,
) -> bool {
    match (a, b) {
        (Payload::Basic(x), Payload::Basic(y)) => x.is_subtype(*y),
        (Payload::Session(x), Payload::Session(y)) => sub(x, y, assumed),
        _ => false,
    }
}

/// `t ⊑ end`, i.e. `t` unfolds to `end`.
pub fn is_end_like(t: &Arc<SessionType>) -> bool {
    matches!(&*unfold(t), SessionType::End)
}

/// `t ⊑ q&{crash.T'}` for some `q`, `T'`: an input whose only branch is `crash`.
pub fn is_pure_crash_recovery(t: &Arc<SessionType>) -> bool {
    match &*unfold(t) {
        SessionType::Choice {
            kind: ChoiceKind::External,
            branches,
            ..
        } => branches.len() == 1 && branches[0].label.is_crash(),
        _ => false,
    }
}
