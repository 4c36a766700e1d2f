//! Modal mu-calculus over typing-context transition systems, and the property encodings.

use std::collections::{BTreeSet, HashMap, HashSet};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::context::TransitionLabel;
use crate::name::{Role, Session};
use crate::statespace::Lts;
use crate::types::{Label, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelKind {
    Output,
    Input,
    Comm,
    Crash,
    CrashDetect,
    Stopped,
}

/// Matches transition labels; `None` fields are wildcards.
///
/// Role fields follow the transition's subject: for `Output` and `Comm`, `p` sends
/// to `q`; for `Input`, `p` receives from `q`; for `CrashDetect`, `p` detects that
/// `q` crashed; `Crash` and `Stopped` use `p` only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LabelPattern {
    pub kind: Option<LabelKind>,
    pub session: Option<Session>,
    pub p: Option<Role>,
    pub q: Option<Role>,
    pub label: Option<Label>,
    pub payload: Option<Payload>,
}

impl LabelPattern {
    pub fn any() -> LabelPattern {
        LabelPattern::default()
    }

    fn of(kind: LabelKind, s: &Session, p: &Role, q: Option<&Role>, label: Option<&Label>) -> Self {
        LabelPattern {
            kind: Some(kind),
            session: Some(s.clone()),
            p: Some(p.clone()),
            q: q.cloned(),
            label: label.cloned(),
            payload: None,
        }
    }

    pub fn matches(&self, l: &TransitionLabel) -> bool {
        let (kind, key, payload) = key_of(l);
        let opt = |want: &Option<Role>, have: &Option<Role>| want.is_none() || want == have;
        self.kind.is_none_or(|k| k == kind)
            && self.session.as_ref().is_none_or(|s| s == &key.session)
            && opt(&self.p, &key.p)
            && opt(&self.q, &key.q)
            && (self.label.is_none() || self.label == key.label)
            && self.payload.as_ref().is_none_or(|w| Some(w) == payload)
    }

    /// Key under which matching edges are indexed, if the pattern pins all of it.
    fn index_key(&self) -> Option<Key> {
        let kind = self.kind?;
        let needs_q = !matches!(kind, LabelKind::Crash | LabelKind::Stopped);
        let needs_label = matches!(kind, LabelKind::Output | LabelKind::Input | LabelKind::Comm);
        if (needs_q && self.q.is_none()) || (needs_label && self.label.is_none()) {
            return None;
        }
        Some(Key {
            kind,
            session: self.session.clone()?,
            p: self.p.clone(),
            q: if needs_q { self.q.clone() } else { None },
            label: if needs_label { self.label.clone() } else { None },
        })
        .filter(|k| k.p.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    kind: LabelKind,
    session: Session,
    p: Option<Role>,
    q: Option<Role>,
    label: Option<Label>,
}

fn key_of(l: &TransitionLabel) -> (LabelKind, Key, Option<&Payload>) {
    let k = |kind, session: &Session, p: &Role, q: Option<&Role>, label: Option<&Label>| Key {
        kind,
        session: session.clone(),
        p: Some(p.clone()),
        q: q.cloned(),
        label: label.cloned(),
    };
    match l {
        TransitionLabel::Output {
            session,
            sender,
            receiver,
            label,
            payload,
        } => (
            LabelKind::Output,
            k(LabelKind::Output, session, sender, Some(receiver), Some(label)),
            Some(payload),
        ),
        TransitionLabel::Input {
            session,
            receiver,
            sender,
            label,
            payload,
        } => (
            LabelKind::Input,
            k(LabelKind::Input, session, receiver, Some(sender), Some(label)),
            Some(payload),
        ),
        TransitionLabel::Comm {
            session,
            sender,
            receiver,
            label,
        } => (
            LabelKind::Comm,
            k(LabelKind::Comm, session, sender, Some(receiver), Some(label)),
            None,
        ),
        TransitionLabel::Crash { session, role } => (
            LabelKind::Crash,
            k(LabelKind::Crash, session, role, None, None),
            None,
        ),
        TransitionLabel::CrashDetect {
            session,
            detector,
            crashed,
        } => (
            LabelKind::CrashDetect,
            k(LabelKind::CrashDetect, session, detector, Some(crashed), None),
            None,
        ),
        TransitionLabel::Stopped { session, role } => (
            LabelKind::Stopped,
            k(LabelKind::Stopped, session, role, None, None),
            None,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Diamond(LabelPattern, Box<Formula>),
    Box(LabelPattern, Box<Formula>),
    Var(String),
    Mu(String, Box<Formula>),
    Nu(String, Box<Formula>),
}

impl Formula {
    pub fn and(fs: Vec<Formula>) -> Formula {
        Formula::And(fs)
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        Formula::Or(fs)
    }

    pub fn diamond(a: LabelPattern, f: Formula) -> Formula {
        Formula::Diamond(a, Box::new(f))
    }

    pub fn boxed(a: LabelPattern, f: Formula) -> Formula {
        Formula::Box(a, Box::new(f))
    }

    pub fn var(x: &str) -> Formula {
        Formula::Var(x.to_string())
    }

    pub fn mu(x: &str, f: Formula) -> Formula {
        Formula::Mu(x.to_string(), Box::new(f))
    }

    pub fn nu(x: &str, f: Formula) -> Formula {
        Formula::Nu(x.to_string(), Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Negation of a variable-free formula, pushed to the leaves.
    pub fn negate(&self) -> Option<Formula> {
        Some(match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::And(fs) => Formula::Or(fs.iter().map(|f| f.negate()).collect::<Option<_>>()?),
            Formula::Or(fs) => Formula::And(fs.iter().map(|f| f.negate()).collect::<Option<_>>()?),
            Formula::Implies(a, b) => Formula::And(vec![(**a).clone(), b.negate()?]),
            Formula::Diamond(a, f) => Formula::Box(a.clone(), Box::new(f.negate()?)),
            Formula::Box(a, f) => Formula::Diamond(a.clone(), Box::new(f.negate()?)),
            Formula::Var(_) | Formula::Mu(..) | Formula::Nu(..) => return None,
        })
    }

    fn free_vars(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.free_vars(bound, out)),
            Formula::Implies(a, b) => {
                a.free_vars(bound, out);
                b.free_vars(bound, out);
            }
            Formula::Diamond(_, f) | Formula::Box(_, f) => f.free_vars(bound, out),
            Formula::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Formula::Mu(x, f) | Formula::Nu(x, f) => {
                bound.push(x.clone());
                f.free_vars(bound, out);
                bound.pop();
            }
        }
    }

    /// Number of nodes in the syntax tree.
    pub fn size(&self) -> usize {
        1 + match self {
            Formula::True | Formula::False | Formula::Var(_) => 0,
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(|f| f.size()).sum(),
            Formula::Implies(a, b) => a.size() + b.size(),
            Formula::Diamond(_, f) | Formula::Box(_, f) | Formula::Mu(_, f) | Formula::Nu(_, f) => {
                f.size()
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MuCalcError {
    #[error("formula has free variables: {0}")]
    Open(String),
    #[error("variable {0} occurs in the antecedent of an implication")]
    NonMonotone(String),
}

fn check_monotone(f: &Formula) -> Result<(), MuCalcError> {
    match f {
        Formula::True | Formula::False | Formula::Var(_) => Ok(()),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(check_monotone),
        Formula::Implies(a, b) => {
            let mut fv = BTreeSet::new();
            a.free_vars(&mut Vec::new(), &mut fv);
            if let Some(x) = fv.into_iter().next() {
                return Err(MuCalcError::NonMonotone(x));
            }
            check_monotone(a)?;
            check_monotone(b)
        }
        Formula::Diamond(_, g) | Formula::Box(_, g) | Formula::Mu(_, g) | Formula::Nu(_, g) => {
            check_monotone(g)
        }
    }
}

struct Evaluator<'a> {
    lts: &'a Lts,
    n: usize,
    index: HashMap<Key, Vec<usize>>,
    scanned: HashMap<LabelPattern, Vec<usize>>,
    closed: HashSet<usize>,
    cache: HashMap<usize, FixedBitSet>,
}

impl<'a> Evaluator<'a> {
    fn new(lts: &'a Lts) -> Self {
        let mut index: HashMap<Key, Vec<usize>> = HashMap::new();
        for (i, e) in lts.edges.iter().enumerate() {
            index.entry(key_of(&e.label).1).or_default().push(i);
        }
        Evaluator {
            lts,
            n: lts.states.len(),
            index,
            scanned: HashMap::new(),
            closed: HashSet::new(),
            cache: HashMap::new(),
        }
    }

    fn mark_closed(&mut self, f: &Formula) -> BTreeSet<String> {
        let mut fv = BTreeSet::new();
        match f {
            Formula::True | Formula::False => {}
            Formula::Var(x) => {
                fv.insert(x.clone());
            }
            Formula::And(fs) | Formula::Or(fs) => {
                for g in fs {
                    fv.extend(self.mark_closed(g));
                }
            }
            Formula::Implies(a, b) => {
                fv.extend(self.mark_closed(a));
                fv.extend(self.mark_closed(b));
            }
            Formula::Diamond(_, g) | Formula::Box(_, g) => fv = self.mark_closed(g),
            Formula::Mu(x, g) | Formula::Nu(x, g) => {
                fv = self.mark_closed(g);
                fv.remove(x);
            }
        }
        if fv.is_empty() {
            self.closed.insert(f as *const Formula as usize);
        }
        fv
    }

    fn edges(&mut self, a: &LabelPattern) -> Vec<usize> {
        if let Some(key) = a.index_key() {
            let mut v = self.index.get(&key).cloned().unwrap_or_default();
            if let Some(w) = &a.payload {
                v.retain(|&i| key_of(&self.lts.edges[i].label).2 == Some(w));
            }
            return v;
        }
        if let Some(v) = self.scanned.get(a) {
            return v.clone();
        }
        let v: Vec<usize> = (0..self.lts.edges.len())
            .filter(|&i| a.matches(&self.lts.edges[i].label))
            .collect();
        self.scanned.insert(a.clone(), v.clone());
        v
    }

    fn full(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.n);
        s.insert_range(..);
        s
    }

    fn eval(&mut self, f: &Formula, env: &mut Vec<(String, FixedBitSet)>) -> FixedBitSet {
        let id = f as *const Formula as usize;
        let closed = self.closed.contains(&id);
        if closed {
            if let Some(s) = self.cache.get(&id) {
                return s.clone();
            }
        }
        let r = match f {
            Formula::True => self.full(),
            Formula::False => FixedBitSet::with_capacity(self.n),
            Formula::And(fs) => {
                let mut acc = self.full();
                for g in fs {
                    let s = self.eval(g, env);
                    acc.intersect_with(&s);
                    if acc.is_clear() {
                        break;
                    }
                }
                acc
            }
            Formula::Or(fs) => {
                let mut acc = FixedBitSet::with_capacity(self.n);
                for g in fs {
                    let s = self.eval(g, env);
                    acc.union_with(&s);
                }
                acc
            }
            Formula::Implies(a, b) => {
                let mut na = self.eval(a, env);
                na.toggle_range(..);
                let sb = self.eval(b, env);
                na.union_with(&sb);
                na
            }
            Formula::Diamond(a, g) => {
                let target = self.eval(g, env);
                let mut out = FixedBitSet::with_capacity(self.n);
                for e in self.edges(a) {
                    let edge = &self.lts.edges[e];
                    if target.contains(edge.target) {
                        out.insert(edge.source);
                    }
                }
                out
            }
            Formula::Box(a, g) => {
                let target = self.eval(g, env);
                let mut out = self.full();
                for e in self.edges(a) {
                    let edge = &self.lts.edges[e];
                    if !target.contains(edge.target) {
                        out.set(edge.source, false);
                    }
                }
                out
            }
            Formula::Var(x) => env
                .iter()
                .rev()
                .find(|(y, _)| y == x)
                .map(|(_, s)| s.clone())
                .expect("bound variable"),
            Formula::Mu(x, g) | Formula::Nu(x, g) => {
                let start = if matches!(f, Formula::Mu(..)) {
                    FixedBitSet::with_capacity(self.n)
                } else {
                    self.full()
                };
                env.push((x.clone(), start));
                loop {
                    let next = self.eval(g, env);
                    let cur = &mut env.last_mut().unwrap().1;
                    if *cur == next {
                        break;
                    }
                    *cur = next;
                }
                env.pop().unwrap().1
            }
        };
        if closed {
            self.cache.insert(id, r.clone());
        }
        r
    }
}

/// States of `lts` satisfying the closed, monotone formula `f`.
pub fn eval(lts: &Lts, f: &Formula) -> Result<FixedBitSet, MuCalcError> {
    let mut fv = BTreeSet::new();
    f.free_vars(&mut Vec::new(), &mut fv);
    if !fv.is_empty() {
        return Err(MuCalcError::Open(fv.into_iter().collect::<Vec<_>>().join(", ")));
    }
    check_monotone(f)?;
    let mut ev = Evaluator::new(lts);
    ev.mark_closed(f);
    Ok(ev.eval(f, &mut Vec::new()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Safe,
    Df,
    Live,
    Term,
    Nterm,
}

impl Property {
    pub const ALL: [Property; 5] = [
        Property::Safe,
        Property::Df,
        Property::Live,
        Property::Term,
        Property::Nterm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Safe => "safe",
            Property::Df => "df",
            Property::Live => "live",
            Property::Term => "term",
            Property::Nterm => "nterm",
        }
    }

    pub fn from_name(s: &str) -> Option<Property> {
        Property::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Finite alphabet over which the property encodings quantify.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    pub session: Session,
    pub roles: Vec<Role>,
    /// Message labels other than `crash`.
    pub labels: Vec<Label>,
}

impl Alphabet {
    pub fn from_lts(lts: &Lts) -> Alphabet {
        let mut roles = BTreeSet::new();
        for g in &lts.states {
            roles.extend(g.roles(&lts.session));
        }
        let mut labels = BTreeSet::new();
        for e in &lts.edges {
            match &e.label {
                TransitionLabel::Output { label, .. }
                | TransitionLabel::Input { label, .. }
                | TransitionLabel::Comm { label, .. } => {
                    if !label.is_crash() {
                        labels.insert(label.clone());
                    }
                }
                _ => {}
            }
        }
        Alphabet {
            session: lts.session.clone(),
            roles: roles.into_iter().collect(),
            labels: labels.into_iter().collect(),
        }
    }

    fn pairs(&self) -> Vec<(&Role, &Role)> {
        let mut v = Vec::new();
        for p in &self.roles {
            for q in &self.roles {
                if p != q {
                    v.push((p, q));
                }
            }
        }
        v
    }
}

fn tt() -> Formula {
    Formula::True
}

fn ff() -> Formula {
    Formula::False
}

/// `a ⇒ b` as `¬a ∨ b`, with `a` variable-free.
fn imp(a: Formula, b: Formula) -> Formula {
    Formula::Or(vec![a.negate().expect("variable-free antecedent"), b])
}

struct Enc<'a> {
    al: &'a Alphabet,
}

impl Enc<'_> {
    fn comm(&self, p: &Role, q: &Role, l: &Label) -> LabelPattern {
        LabelPattern::of(LabelKind::Comm, &self.al.session, p, Some(q), Some(l))
    }

    fn out(&self, p: &Role, q: &Role, l: &Label) -> LabelPattern {
        LabelPattern::of(LabelKind::Output, &self.al.session, p, Some(q), Some(l))
    }

    /// `q` receives from `p`.
    fn input(&self, q: &Role, p: &Role, l: &Label) -> LabelPattern {
        LabelPattern::of(LabelKind::Input, &self.al.session, q, Some(p), Some(l))
    }

    fn crash(&self, p: &Role) -> LabelPattern {
        LabelPattern::of(LabelKind::Crash, &self.al.session, p, None, None)
    }

    fn stopped(&self, p: &Role) -> LabelPattern {
        LabelPattern::of(LabelKind::Stopped, &self.al.session, p, None, None)
    }

    /// `q` detects that `p` crashed.
    fn detect(&self, q: &Role, p: &Role) -> LabelPattern {
        LabelPattern::of(LabelKind::CrashDetect, &self.al.session, q, Some(p), None)
    }

    fn some_comm(&self, p: &Role, q: &Role) -> Formula {
        Formula::or(
            self.al
                .labels
                .iter()
                .map(|l| Formula::diamond(self.comm(p, q, l), tt()))
                .collect(),
        )
    }

    fn some_input(&self, q: &Role, p: &Role) -> Formula {
        Formula::or(
            self.al
                .labels
                .iter()
                .map(|l| Formula::diamond(self.input(q, p, l), tt()))
                .collect(),
        )
    }

    fn some_output(&self, p: &Role, q: &Role) -> Formula {
        Formula::or(
            self.al
                .labels
                .iter()
                .map(|l| Formula::diamond(self.out(p, q, l), tt()))
                .collect(),
        )
    }

    /// Every reduction leads to `x`.
    fn all_reductions(&self, x: &str) -> Formula {
        let mut conj = Vec::new();
        for p in &self.al.roles {
            conj.push(Formula::boxed(self.crash(p), Formula::var(x)));
        }
        for (p, q) in self.al.pairs() {
            for l in &self.al.labels {
                conj.push(Formula::boxed(self.comm(p, q, l), Formula::var(x)));
            }
            conj.push(Formula::boxed(self.detect(q, p), Formula::var(x)));
        }
        Formula::and(conj)
    }

    /// Every reduction of the pair (`p` sends to `q`, `q` detects `p`, `p` crashes) leads to `y`.
    fn pair_reductions(&self, p: &Role, q: &Role, y: &str) -> Formula {
        let mut conj: Vec<Formula> = self
            .al
            .labels
            .iter()
            .map(|l| Formula::boxed(self.comm(p, q, l), Formula::var(y)))
            .collect();
        conj.push(Formula::boxed(self.crash(p), Formula::var(y)));
        conj.push(Formula::boxed(self.detect(q, p), Formula::var(y)));
        Formula::and(conj)
    }

    fn progress(&self, y: &str) -> Formula {
        Formula::or(
            self.al
                .pairs()
                .into_iter()
                .map(|(p, q)| {
                    Formula::and(vec![
                        Formula::or(vec![
                            self.some_comm(p, q),
                            Formula::diamond(self.detect(q, p), tt()),
                        ]),
                        self.pair_reductions(p, q, y),
                    ])
                })
                .collect(),
        )
    }

    fn no_reduction(&self) -> Formula {
        let mut conj = Vec::new();
        for (p, q) in self.al.pairs() {
            for l in &self.al.labels {
                conj.push(Formula::boxed(self.comm(p, q, l), ff()));
            }
            conj.push(Formula::boxed(self.detect(p, q), ff()));
        }
        Formula::and(conj)
    }

    fn quiet(&self) -> Formula {
        let mut conj = Vec::new();
        for (p, q) in self.al.pairs() {
            for l in &self.al.labels {
                conj.push(Formula::boxed(self.input(p, q, l), ff()));
                conj.push(Formula::boxed(self.out(p, q, l), ff()));
            }
        }
        Formula::and(conj)
    }

    fn safe(&self) -> Formula {
        let mut conj = Vec::new();
        for (p, q) in self.al.pairs() {
            conj.push(imp(
                Formula::and(vec![
                    Formula::diamond(self.stopped(p), tt()),
                    self.some_input(q, p),
                ]),
                Formula::diamond(self.detect(q, p), tt()),
            ));
            for l in &self.al.labels {
                conj.push(imp(
                    Formula::and(vec![
                        Formula::diamond(self.out(p, q, l), tt()),
                        Formula::or(vec![
                            self.some_input(q, p),
                            Formula::diamond(self.stopped(q), tt()),
                        ]),
                    ]),
                    Formula::diamond(self.comm(p, q, l), tt()),
                ));
            }
        }
        conj.push(self.all_reductions("X"));
        Formula::nu("X", Formula::and(conj))
    }

    fn df_body(&self) -> Formula {
        Formula::and(vec![
            imp(self.no_reduction(), self.quiet()),
            self.all_reductions("X"),
        ])
    }

    fn nterm(&self) -> Formula {
        let mut disj = Vec::new();
        for (p, q) in self.al.pairs() {
            disj.push(self.some_comm(p, q));
            disj.push(Formula::diamond(self.detect(p, q), tt()));
        }
        Formula::nu(
            "X",
            Formula::and(vec![Formula::or(disj), self.all_reductions("X")]),
        )
    }

    fn live(&self) -> Formula {
        let mut conj = Vec::new();
        for (p, q) in self.al.pairs() {
            // q waits for a message from p
            conj.push(imp(
                self.some_input(q, p),
                Formula::mu(
                    "Y",
                    Formula::or(vec![
                        self.some_comm(p, q),
                        Formula::diamond(self.detect(q, p), tt()),
                        self.progress("Y"),
                    ]),
                ),
            ));
            // p wants to send to q
            conj.push(imp(
                self.some_output(p, q),
                Formula::mu(
                    "Y",
                    Formula::or(vec![self.some_comm(p, q), self.progress("Y")]),
                ),
            ));
        }
        conj.push(self.all_reductions("X"));
        Formula::nu("X", Formula::and(conj))
    }
}

/// The mu-calculus encoding of `property`, quantifiers expanded over `alphabet`.
/// Payloads are left as wildcards.
pub fn encode(property: Property, alphabet: &Alphabet) -> Formula {
    let e = Enc { al: alphabet };
    match property {
        Property::Safe => e.safe(),
        Property::Df => Formula::nu("X", e.df_body()),
        Property::Term => Formula::mu("X", e.df_body()),
        Property::Nterm => e.nterm(),
        Property::Live => e.live(),
    }
}

/// Whether the initial state of `lts` satisfies the encoding of `property`.
pub fn holds(lts: &Lts, property: Property) -> bool {
    let f = encode(property, &Alphabet::from_lts(lts));
    eval(lts, &f)
        .expect("encodings are closed and monotone")
        .contains(lts.initial())
}
