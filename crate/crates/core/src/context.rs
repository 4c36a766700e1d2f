//! Typing contexts and their labelled transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::name::{Name, Role, Session};
use crate::types::{
    is_end_like, unfold, well_formed, ChoiceKind, Label, Payload, SessionType,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub session: Session,
    pub role: Role,
}

impl Endpoint {
    pub fn new(session: &str, role: &str) -> Endpoint {
        Endpoint {
            session: Name::new(session),
            role: Name::new(role),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.session, self.role)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("ill-formed type for {endpoint}: {details}")]
    IllFormed { endpoint: String, details: String },
}

/// Finite map from endpoints (and variables) to types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TypingContext {
    entries: BTreeMap<Endpoint, Arc<SessionType>>,
    vars: BTreeMap<Name, Payload>,
}

impl TypingContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = (Endpoint, Arc<SessionType>)>>(it: I) -> Self {
        TypingContext {
            entries: it.into_iter().collect(),
            vars: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, ep: Endpoint, t: Arc<SessionType>) -> Option<Arc<SessionType>> {
        self.entries.insert(ep, t)
    }

    pub fn insert_var(&mut self, x: Name, t: Payload) -> Option<Payload> {
        self.vars.insert(x, t)
    }

    pub fn remove(&mut self, ep: &Endpoint) -> Option<Arc<SessionType>> {
        self.entries.remove(ep)
    }

    pub fn remove_var(&mut self, x: &str) -> Option<Payload> {
        self.vars.remove(x)
    }

    pub fn get(&self, ep: &Endpoint) -> Option<&Arc<SessionType>> {
        self.entries.get(ep)
    }

    pub fn get_var(&self, x: &str) -> Option<&Payload> {
        self.vars.get(x)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Endpoint, &Arc<SessionType>)> {
        self.entries.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = (&Name, &Payload)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len() + self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sessions(&self) -> BTreeSet<Session> {
        self.entries.keys().map(|e| e.session.clone()).collect()
    }

    pub fn roles(&self, s: &Session) -> BTreeSet<Role> {
        self.entries
            .keys()
            .filter(|e| &e.session == s)
            .map(|e| e.role.clone())
            .collect()
    }

    /// The entries of session `s`, keyed by role.
    pub fn session_entries<'a>(
        &'a self,
        s: &'a Session,
    ) -> impl Iterator<Item = (&'a Role, &'a Arc<SessionType>)> + 'a {
        self.entries
            .iter()
            .filter(move |(e, _)| &e.session == s)
            .map(|(e, t)| (&e.role, t))
    }

    fn with(&self, ep: &Endpoint, t: Arc<SessionType>) -> TypingContext {
        let mut g = self.clone();
        g.entries.insert(ep.clone(), t);
        g
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        for (ep, t) in &self.entries {
            well_formed(t).map_err(|vs| ContextError::IllFormed {
                endpoint: ep.to_string(),
                details: vs
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            })?;
        }
        for (x, p) in &self.vars {
            if let Payload::Session(t) = p {
                well_formed(t).map_err(|vs| ContextError::IllFormed {
                    endpoint: x.to_string(),
                    details: vs
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                })?;
            }
        }
        Ok(())
    }

    /// Pointwise subtyping on equal domains.
    pub fn is_subcontext(&self, other: &TypingContext) -> bool {
        self.entries.len() == other.entries.len()
            && self.vars.len() == other.vars.len()
            && self.entries.iter().all(|(ep, t)| {
                other
                    .entries
                    .get(ep)
                    .is_some_and(|u| crate::types::is_subtype(t, u))
            })
            && self
                .vars
                .iter()
                .all(|(x, p)| other.vars.get(x).is_some_and(|q| p.is_subtype(q)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind")]
pub enum TransitionLabel {
    Output {
        session: Session,
        sender: Role,
        receiver: Role,
        label: Label,
        #[serde(serialize_with = "payload_as_text")]
        payload: Payload,
    },
    Input {
        session: Session,
        receiver: Role,
        sender: Role,
        label: Label,
        #[serde(serialize_with = "payload_as_text")]
        payload: Payload,
    },
    Comm {
        session: Session,
        sender: Role,
        receiver: Role,
        label: Label,
    },
    Crash {
        session: Session,
        role: Role,
    },
    CrashDetect {
        session: Session,
        detector: Role,
        crashed: Role,
    },
    Stopped {
        session: Session,
        role: Role,
    },
}

fn payload_as_text<S: Serializer>(p: &Payload, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMode {
    /// Communications and crash detections.
    NonCrash,
    /// Communications, crash detections and crashes.
    MaybeCrash,
}

impl TransitionLabel {
    pub fn session(&self) -> &Session {
        match self {
            TransitionLabel::Output { session, .. }
            | TransitionLabel::Input { session, .. }
            | TransitionLabel::Comm { session, .. }
            | TransitionLabel::Crash { session, .. }
            | TransitionLabel::CrashDetect { session, .. }
            | TransitionLabel::Stopped { session, .. } => session,
        }
    }

    pub fn is_reduction(&self, mode: ReductionMode) -> bool {
        match self {
            TransitionLabel::Comm { .. } | TransitionLabel::CrashDetect { .. } => true,
            TransitionLabel::Crash { .. } => mode == ReductionMode::MaybeCrash,
            _ => false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TransitionLabel::Output { .. } => "Output",
            TransitionLabel::Input { .. } => "Input",
            TransitionLabel::Comm { .. } => "Comm",
            TransitionLabel::Crash { .. } => "Crash",
            TransitionLabel::CrashDetect { .. } => "CrashDetect",
            TransitionLabel::Stopped { .. } => "Stopped",
        }
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionLabel::Output {
                session,
                sender,
                receiver,
                label,
                payload,
            } => write!(
                f,
                "{session}:{sender}!{receiver}:{label}({payload})"
            ),
            TransitionLabel::Input {
                session,
                receiver,
                sender,
                label,
                payload,
            } => write!(
                f,
                "{session}:{receiver}?{sender}:{label}({payload})"
            ),
            TransitionLabel::Comm {
                session,
                sender,
                receiver,
                label,
            } => write!(f, "{session}:{sender}->{receiver}:{label}"),
            TransitionLabel::Crash { session, role } => write!(f, "{session}:{role} crash"),
            TransitionLabel::CrashDetect {
                session,
                detector,
                crashed,
            } => write!(f, "{session}:{detector} detects {crashed}"),
            TransitionLabel::Stopped { session, role } => write!(f, "{session}:{role} stopped"),
        }
    }
}

/// All transitions of session `s` from `g`, after validating every type in `g`.
pub fn successors(
    g: &TypingContext,
    s: &Session,
    reliable: &BTreeSet<Role>,
) -> Result<Vec<(TransitionLabel, TypingContext)>, ContextError> {
    g.validate()?;
    Ok(successors_unchecked(g, s, reliable))
}

/// Transitions restricted to reductions of the given mode.
pub fn reduction_successors(
    g: &TypingContext,
    s: &Session,
    reliable: &BTreeSet<Role>,
    mode: ReductionMode,
) -> Result<Vec<(TransitionLabel, TypingContext)>, ContextError> {
    Ok(successors(g, s, reliable)?
        .into_iter()
        .filter(|(l, _)| l.is_reduction(mode))
        .collect())
}

/// Like [`successors`], assuming `g` is already known to be well-formed.
pub(crate) fn successors_unchecked(
    g: &TypingContext,
    s: &Session,
    reliable: &BTreeSet<Role>,
) -> Vec<(TransitionLabel, TypingContext)> {
    let unfolded: BTreeMap<&Role, (Endpoint, Arc<SessionType>, Arc<SessionType>)> = g
        .session_entries(s)
        .map(|(r, t)| {
            (
                r,
                (
                    Endpoint {
                        session: s.clone(),
                        role: r.clone(),
                    },
                    t.clone(),
                    unfold(t),
                ),
            )
        })
        .collect();
    let mut out = Vec::new();

    for (role, (ep, t, u)) in &unfolded {
        match &**u {
            SessionType::Stop => out.push((
                TransitionLabel::Stopped {
                    session: s.clone(),
                    role: (*role).clone(),
                },
                g.clone(),
            )),
            SessionType::Choice {
                kind,
                peer,
                branches,
            } => {
                for b in branches.iter() {
                    let label = match kind {
                        ChoiceKind::Internal => TransitionLabel::Output {
                            session: s.clone(),
                            sender: (*role).clone(),
                            receiver: peer.clone(),
                            label: b.label.clone(),
                            payload: b.payload.clone(),
                        },
                        ChoiceKind::External => TransitionLabel::Input {
                            session: s.clone(),
                            receiver: (*role).clone(),
                            sender: peer.clone(),
                            label: b.label.clone(),
                            payload: b.payload.clone(),
                        },
                    };
                    out.push((label, g.with(ep, b.cont.clone())));
                }
            }
            _ => {}
        }
        if !u.is_stop() && !is_end_like(t) && !reliable.contains(*role) {
            out.push((
                TransitionLabel::Crash {
                    session: s.clone(),
                    role: (*role).clone(),
                },
                g.with(ep, SessionType::stop()),
            ));
        }
    }

    for (p, (ep_p, _, u)) in &unfolded {
        let SessionType::Choice {
            kind: ChoiceKind::Internal,
            peer: q,
            branches,
        } = &**u
        else {
            continue;
        };
        let Some((ep_q, _, uq)) = unfolded.get(q) else {
            continue;
        };
        match &**uq {
            SessionType::Stop => {
                for b in branches.iter() {
                    out.push((
                        TransitionLabel::Comm {
                            session: s.clone(),
                            sender: (*p).clone(),
                            receiver: q.clone(),
                            label: b.label.clone(),
                        },
                        g.with(ep_p, b.cont.clone()),
                    ));
                }
            }
            SessionType::Choice {
                kind: ChoiceKind::External,
                peer: from,
                branches: qbranches,
            } if from == *p => {
                for b in branches.iter() {
                    let Some(qb) = qbranches.get(&b.label) else {
                        continue;
                    };
                    if b.payload.is_subtype(&qb.payload) {
                        out.push((
                            TransitionLabel::Comm {
                                session: s.clone(),
                                sender: (*p).clone(),
                                receiver: q.clone(),
                                label: b.label.clone(),
                            },
                            g.with(ep_p, b.cont.clone()).with(ep_q, qb.cont.clone()),
                        ));
                    }
                }
            }
            _ => {}
        }
    }

    for (q, (ep_q, _, u)) in &unfolded {
        let SessionType::Choice {
            kind: ChoiceKind::External,
            peer: p,
            branches,
        } = &**u
        else {
            continue;
        };
        let Some(cb) = branches.get(&Label::Crash) else {
            continue;
        };
        if unfolded.get(p).is_some_and(|(_, _, up)| up.is_stop()) {
            out.push((
                TransitionLabel::CrashDetect {
                    session: s.clone(),
                    detector: (*q).clone(),
                    crashed: p.clone(),
                },
                g.with(ep_q, cb.cont.clone()),
            ));
        }
    }
    out
}
