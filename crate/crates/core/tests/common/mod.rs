//! Shared helpers for the integration tests: corpus loading, random generators
//! and an independent brute-force enumerator of context transitions.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use crashmpst::context::{Endpoint, TransitionLabel, TypingContext};
use crashmpst::syntax::{parse_context, parse_type, ContextDoc};
use crashmpst::types::{is_subtype, unfold, BasicType, Branch, Branches, ChoiceKind, Label, Payload, SessionType};
use crashmpst::{build_lts, Limits, Lts, Name};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_text(file: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn load(file: &str) -> ContextDoc {
    parse_context(&corpus_text(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn roles(list: &[&str]) -> BTreeSet<Name> {
    list.iter().map(|r| Name::new(r)).collect()
}

/// LTS of a corpus document, optionally overriding its reliable set.
pub fn corpus_lts(file: &str, reliable: Option<&[&str]>) -> Lts {
    let doc = load(file);
    let r = reliable.map(roles).unwrap_or(doc.reliable.clone());
    build_lts(&doc.context, doc.session.as_ref().unwrap(), &r, &Limits::default()).unwrap()
}

/// The five context documents with their stated reliable sets.
pub const CORPUS: [&str; 5] = [
    "dns.mpst",
    "adder.mpst",
    "twobuyers.mpst",
    "negotiate.mpst",
    "broadcast.mpst",
];

pub const GAMMAS: [&str; 3] = ["gamma_a.mpst", "gamma_b.mpst", "gamma_c.mpst"];

/// Context of session `s` from `role = type` pairs in the text syntax.
pub fn context(entries: &[(&str, &str)]) -> TypingContext {
    TypingContext::from_entries(
        entries
            .iter()
            .map(|(r, t)| (Endpoint::new("s", r), parse_type(t).unwrap_or_else(|e| panic!("{t}: {e}")))),
    )
}

pub fn lts_of(entries: &[(&str, &str)], reliable: &[&str]) -> Lts {
    build_lts(&context(entries), &Name::new("s"), &roles(reliable), &Limits::default()).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random well-formed session types in the text syntax.
pub struct TypeGen<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub me: String,
    pub peers: Vec<String>,
    pub labels: Vec<&'static str>,
    vars: Vec<String>,
    next_var: usize,
}

impl<'a> TypeGen<'a> {
    pub fn new(rng: &'a mut ChaCha8Rng, me: &str, peers: &[&str]) -> Self {
        TypeGen {
            rng,
            me: me.to_string(),
            peers: peers.iter().filter(|p| **p != me).map(|p| p.to_string()).collect(),
            labels: vec!["a", "b", "c"],
            vars: Vec::new(),
            next_var: 0,
        }
    }

    pub fn ty(&mut self, depth: u32) -> String {
        let roll: f64 = self.rng.gen();
        if depth == 0 || roll < 0.15 {
            if !self.vars.is_empty() && self.rng.gen_bool(0.6) {
                return self.vars.choose(self.rng).unwrap().clone();
            }
            return "end".to_string();
        }
        if depth >= 2 && roll < 0.3 {
            let v = format!("t{}", self.next_var);
            self.next_var += 1;
            self.vars.push(v.clone());
            let body = self.choice(depth);
            self.vars.pop();
            return format!("rec {v}.{body}");
        }
        self.choice(depth)
    }

    fn payload(&mut self) -> &'static str {
        match self.rng.gen_range(0..10) {
            0 => "(int)",
            1 => "(real)",
            _ => "",
        }
    }

    pub fn choice(&mut self, depth: u32) -> String {
        let peer = self.peers.choose(self.rng).unwrap().clone();
        let internal = self.rng.gen_bool(0.5);
        let n = self.rng.gen_range(1..=2);
        let mut labels = self.labels.clone();
        labels.shuffle(self.rng);
        let mut branches = Vec::new();
        let pure_recovery = !internal && self.rng.gen_bool(0.1);
        if !pure_recovery {
            for l in labels.into_iter().take(n) {
                let pl = self.payload();
                let cont = self.ty(depth - 1);
                branches.push(format!("{l}{pl}.{cont}"));
            }
        }
        if !internal && (pure_recovery || self.rng.gen_bool(0.35)) {
            let cont = self.ty(depth - 1);
            branches.push(format!("crash.{cont}"));
        }
        let op = if internal { '!' } else { '?' };
        format!("{peer}{op}{{{}}}", branches.join(", "))
    }
}

pub fn random_type(rng: &mut ChaCha8Rng, depth: u32) -> Arc<SessionType> {
    let text = TypeGen::new(rng, "p", &["q", "r"]).ty(depth);
    parse_type(&text).unwrap_or_else(|e| panic!("generated {text}: {e}"))
}

/// A random context over 2..=4 roles with a random reliable subset, as text entries.
pub fn random_context(rng: &mut ChaCha8Rng) -> (Vec<(String, String)>, BTreeSet<Name>) {
    let all = ["p", "q", "r", "u"];
    let n = rng.gen_range(2..=4);
    let names = &all[..n];
    let mut entries = Vec::new();
    let mut reliable = BTreeSet::new();
    for r in names {
        let depth = rng.gen_range(1..=3);
        let t = TypeGen::new(rng, r, names).ty(depth);
        entries.push((r.to_string(), t));
        if rng.gen_bool(0.4) {
            reliable.insert(Name::new(r));
        }
    }
    (entries, reliable)
}

pub fn to_context(entries: &[(String, String)]) -> TypingContext {
    let pairs: Vec<(&str, &str)> = entries.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    context(&pairs)
}

/// Random contexts whose LTS has at most `max_reduction_states` reduction-reachable states.
pub fn random_lts_batch(seed: u64, count: usize, max_reduction_states: usize) -> Vec<(String, Lts)> {
    let mut rng = seeded(seed);
    let limits = Limits {
        max_states: 20_000,
        max_depth: None,
    };
    let mut out = Vec::new();
    while out.len() < count {
        let (entries, reliable) = random_context(&mut rng);
        let g = to_context(&entries);
        let Ok(lts) = build_lts(&g, &Name::new("s"), &reliable, &limits) else {
            continue;
        };
        if lts.reduction_reachable().len() <= max_reduction_states {
            let desc = format!("{g} with reliable {reliable:?}");
            out.push((desc, lts));
        }
    }
    out
}

/// One session's entries, keyed by role.
pub type State = BTreeMap<String, Arc<SessionType>>;

pub fn state_of(g: &TypingContext) -> State {
    g.entries().map(|(e, t)| (e.role.to_string(), t.clone())).collect()
}

fn name(s: &str) -> Name {
    Name::new(s)
}

/// Every transition of `g` obtained by enumerating rule instances one at a time.
pub fn brute_successors(g: &State, reliable: &BTreeSet<String>) -> Vec<(TransitionLabel, State)> {
    let s = name("s");
    let heads: BTreeMap<&String, Arc<SessionType>> = g.iter().map(|(r, t)| (r, unfold(t))).collect();
    let set = |r: &str, t: Arc<SessionType>| {
        let mut h = g.clone();
        h.insert(r.to_string(), t);
        h
    };
    let mut out = Vec::new();
    for (r, t) in g {
        let head = &heads[r];
        // Stopped: self-loop on crashed entries.
        if head.is_stop() {
            out.push((TransitionLabel::Stopped { session: s.clone(), role: name(r) }, g.clone()));
        }
        // Crash: any unreliable entry that is neither stop nor a subtype of end.
        if !head.is_stop() && !reliable.contains(r) && !is_subtype(t, &SessionType::end()) {
            out.push((TransitionLabel::Crash { session: s.clone(), role: name(r) }, set(r, SessionType::stop())));
        }
        let SessionType::Choice { kind, peer, branches } = &**head else {
            continue;
        };
        let peer_head = heads.get(&peer.to_string()).cloned();
        for b in branches.iter() {
            match kind {
                ChoiceKind::Internal => {
                    out.push((
                        TransitionLabel::Output {
                            session: s.clone(),
                            sender: name(r),
                            receiver: peer.clone(),
                            label: b.label.clone(),
                            payload: b.payload.clone(),
                        },
                        set(r, b.cont.clone()),
                    ));
                    let comm = TransitionLabel::Comm {
                        session: s.clone(),
                        sender: name(r),
                        receiver: peer.clone(),
                        label: b.label.clone(),
                    };
                    match peer_head.as_deref() {
                        Some(SessionType::Stop) => out.push((comm, set(r, b.cont.clone()))),
                        Some(SessionType::Choice {
                            kind: ChoiceKind::External,
                            peer: from,
                            branches: theirs,
                        }) if from.as_str() == r.as_str() => {
                            if let Some(m) = theirs.iter().find(|m| m.label == b.label) {
                                if b.payload.is_subtype(&m.payload) {
                                    let mut h = set(r, b.cont.clone());
                                    h.insert(peer.to_string(), m.cont.clone());
                                    out.push((comm, h));
                                }
                            }
                        }
                        _ => {}
                    }
                }
                ChoiceKind::External => {
                    out.push((
                        TransitionLabel::Input {
                            session: s.clone(),
                            receiver: name(r),
                            sender: peer.clone(),
                            label: b.label.clone(),
                            payload: b.payload.clone(),
                        },
                        set(r, b.cont.clone()),
                    ));
                    if b.label == Label::Crash && peer_head.as_deref().is_some_and(|h| h.is_stop()) {
                        out.push((
                            TransitionLabel::CrashDetect {
                                session: s.clone(),
                                detector: name(r),
                                crashed: peer.clone(),
                            },
                            set(r, b.cont.clone()),
                        ));
                    }
                }
            }
        }
    }
    out
}

pub struct BruteLts {
    pub states: Vec<State>,
    pub edges: Vec<(usize, TransitionLabel, usize)>,
}

impl BruteLts {
    pub fn reduction_reachable(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([0]);
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for (a, l, b) in &self.edges {
                let reduction = matches!(
                    l,
                    TransitionLabel::Comm { .. } | TransitionLabel::CrashDetect { .. } | TransitionLabel::Crash { .. }
                );
                if *a == i && reduction && seen.insert(*b) {
                    queue.push_back(*b);
                }
            }
        }
        seen
    }
}

/// Closure of [`brute_successors`] from `g`, with states compared structurally.
pub fn brute_lts(g: &State, reliable: &BTreeSet<String>) -> BruteLts {
    let mut states = vec![g.clone()];
    let mut index: HashMap<State, usize> = HashMap::from([(g.clone(), 0)]);
    let mut edges = Vec::new();
    let mut i = 0;
    while i < states.len() {
        for (l, h) in brute_successors(&states[i].clone(), reliable) {
            let j = *index.entry(h.clone()).or_insert_with(|| {
                states.push(h);
                states.len() - 1
            });
            edges.push((i, l, j));
        }
        i += 1;
    }
    BruteLts { states, edges }
}

/// Edge set of an LTS as (source entries, rendered label, target entries).
pub fn edge_set(lts: &Lts) -> BTreeSet<(String, String, String)> {
    let show = |g: &TypingContext| g.to_string();
    lts.edges
        .iter()
        .map(|e| (show(&lts.states[e.source]), e.label.to_string(), show(&lts.states[e.target])))
        .collect()
}

pub fn brute_edge_set(b: &BruteLts) -> BTreeSet<(String, String, String)> {
    let show = |s: &State| {
        TypingContext::from_entries(s.iter().map(|(r, t)| (Endpoint::new("s", r), t.clone()))).to_string()
    };
    b.edges
        .iter()
        .map(|(a, l, c)| (show(&b.states[*a]), l.to_string(), show(&b.states[*c])))
        .collect()
}

/// A supertype of `t`: drops internal branches, adds external ones, and adjusts
/// payloads in the permitted direction.
pub fn widen(rng: &mut ChaCha8Rng, t: &Arc<SessionType>) -> Arc<SessionType> {
    match &**t {
        SessionType::Choice { kind, peer, branches } => {
            let mut bs: Vec<Branch> = branches
                .iter()
                .map(|b| Branch {
                    label: b.label.clone(),
                    payload: match (&b.payload, kind) {
                        (Payload::Basic(BasicType::Int), ChoiceKind::External) if rng.gen_bool(0.5) => {
                            Payload::Basic(BasicType::Real)
                        }
                        (Payload::Basic(BasicType::Real), ChoiceKind::Internal) if rng.gen_bool(0.5) => {
                            Payload::Basic(BasicType::Int)
                        }
                        (p, _) => p.clone(),
                    },
                    cont: widen(rng, &b.cont),
                })
                .collect();
            match kind {
                ChoiceKind::Internal if bs.len() > 1 && rng.gen_bool(0.5) => {
                    let k = rng.gen_range(0..bs.len());
                    bs.remove(k);
                }
                ChoiceKind::External => {
                    let pure_recovery = bs.len() == 1 && bs[0].label.is_crash();
                    let fresh = Label::named("z");
                    if !pure_recovery && branches.get(&fresh).is_none() && rng.gen_bool(0.5) {
                        bs.push(Branch { label: fresh, payload: Payload::UNIT, cont: SessionType::end() });
                    }
                }
                _ => {}
            }
            Arc::new(SessionType::Choice { kind: *kind, peer: peer.clone(), branches: Branches(bs) })
        }
        SessionType::Rec { hint, body } => {
            Arc::new(SessionType::Rec { hint: hint.clone(), body: widen(rng, body) })
        }
        _ => t.clone(),
    }
}

