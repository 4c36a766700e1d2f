use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use super::{Channel, Process, Value};
use crate::context::{Endpoint, TypingContext};
use crate::name::{Name, Role, Session};
use crate::properties::check_safety;
use crate::statespace::{build_lts, Limits};
use crate::types::{is_end_like, unfold, well_formed, ChoiceKind, Payload, SessionType};

/// Types of process variables declared outside the process.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProcessTypingEnv {
    pub decls: BTreeMap<Name, Vec<Payload>>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{rule} at {at}: {message}")]
pub struct TypingError {
    pub rule: &'static str,
    pub at: String,
    pub message: String,
}

/// Check `theta ; gamma ⊢ p`.
pub fn typecheck(
    theta: &ProcessTypingEnv,
    gamma: &TypingContext,
    p: &Process,
) -> Result<(), TypingError> {
    Typer::new(false).check(&theta.decls, gamma.clone(), p, &mut Vec::new())
}

/// Like [`typecheck`], but each restriction may be typed by any context its
/// annotation reaches through reductions (crashes included). Used to re-type
/// reducts, whose annotations still describe the initial protocol state.
pub fn typecheck_up_to_annotations(
    theta: &ProcessTypingEnv,
    gamma: &TypingContext,
    p: &Process,
) -> Result<(), TypingError> {
    Typer::new(true).check(&theta.decls, gamma.clone(), p, &mut Vec::new())
}

#[derive(Clone, PartialEq, Eq)]
enum Key {
    Ep(Endpoint),
    Var(Name),
}

impl Key {
    fn of_value(v: &Value) -> Option<Key> {
        match v {
            Value::Var(x) => Some(Key::Var(x.clone())),
            Value::Endpoint(e) => Some(Key::Ep(e.clone())),
            _ => None,
        }
    }

    fn of_channel(c: &Channel) -> Key {
        match c {
            Channel::Var(x) => Key::Var(x.clone()),
            Channel::Endpoint(e) => Key::Ep(e.clone()),
        }
    }

    fn show(&self) -> String {
        match self {
            Key::Ep(e) => e.to_string(),
            Key::Var(x) => x.to_string(),
        }
    }
}

fn lookup(g: &TypingContext, k: &Key) -> Option<Payload> {
    match k {
        Key::Ep(e) => g.get(e).map(|t| Payload::Session(t.clone())),
        Key::Var(x) => g.get_var(x.as_str()).cloned(),
    }
}

fn remove(g: &mut TypingContext, k: &Key) {
    match k {
        Key::Ep(e) => {
            g.remove(e);
        }
        Key::Var(x) => {
            g.remove_var(x.as_str());
        }
    }
}

fn put(g: &mut TypingContext, k: &Key, t: Arc<SessionType>) {
    match k {
        Key::Ep(e) => {
            g.insert(e.clone(), t);
        }
        Key::Var(x) => {
            g.insert_var(x.clone(), Payload::Session(t));
        }
    }
}

fn end_leftover(g: &TypingContext) -> Option<String> {
    for (e, t) in g.entries() {
        if !is_end_like(t) {
            return Some(format!("{e}: {t}"));
        }
    }
    for (x, p) in g.vars() {
        if let Payload::Session(t) = p {
            if !is_end_like(t) {
                return Some(format!("{x}: {t}"));
            }
        }
    }
    None
}

type SafetyKey = (TypingContext, Session, BTreeSet<Role>);

struct Typer {
    search_annotations: bool,
    safe_cache: RefCell<HashMap<SafetyKey, bool>>,
    reach_cache: RefCell<HashMap<SafetyKey, Vec<TypingContext>>>,
}

impl Typer {
    fn new(search_annotations: bool) -> Typer {
        Typer {
            search_annotations,
            safe_cache: RefCell::new(HashMap::new()),
            reach_cache: RefCell::new(HashMap::new()),
        }
    }

    fn is_safe(&self, g: &TypingContext, s: &Session, r: &BTreeSet<Role>) -> bool {
        let key = (g.clone(), s.clone(), r.clone());
        if let Some(v) = self.safe_cache.borrow().get(&key) {
            return *v;
        }
        let v = build_lts(g, s, r, &Limits::default())
            .map(|lts| check_safety(&lts).holds)
            .unwrap_or(false);
        self.safe_cache.borrow_mut().insert(key, v);
        v
    }

    fn candidates(&self, g: &TypingContext, s: &Session, r: &BTreeSet<Role>) -> Vec<TypingContext> {
        if !self.search_annotations {
            return vec![g.clone()];
        }
        let key = (g.clone(), s.clone(), r.clone());
        if let Some(v) = self.reach_cache.borrow().get(&key) {
            return v.clone();
        }
        let v = match build_lts(g, s, r, &Limits::default()) {
            Ok(lts) => lts
                .reduction_reachable()
                .into_iter()
                .map(|i| lts.states[i].clone())
                .collect(),
            Err(_) => vec![g.clone()],
        };
        self.reach_cache.borrow_mut().insert(key, v.clone());
        v
    }

    fn fail<T>(rule: &'static str, path: &[String], message: String) -> Result<T, TypingError> {
        Err(TypingError {
            rule,
            at: if path.is_empty() {
                "top level".to_string()
            } else {
                path.join(" / ")
            },
            message,
        })
    }

    /// Consume the value `v` sent or passed where payload type `want` is expected.
    fn consume_value(
        g: &mut TypingContext,
        v: &Value,
        want: &Payload,
        rule: &'static str,
        path: &[String],
    ) -> Result<(), TypingError> {
        if let Some(b) = v.basic_type() {
            return match want {
                Payload::Basic(w) if b.is_subtype(*w) => Ok(()),
                _ => Self::fail(rule, path, format!("value of type {b} where {want} is expected")),
            };
        }
        let k = Key::of_value(v).expect("non-literal value");
        let Some(have) = lookup(g, &k) else {
            return Self::fail(rule, path, format!("{} is not in the typing context", k.show()));
        };
        if !have.is_subtype(want) {
            return Self::fail(
                rule,
                path,
                format!("{} has type {have}, not a subtype of {want}", k.show()),
            );
        }
        if let Payload::Session(t) = want {
            if is_end_like(t) {
                return Self::fail(rule, path, format!("payload type {t} is a subtype of end"));
            }
        }
        remove(g, &k);
        Ok(())
    }

    fn check(
        &self,
        theta: &BTreeMap<Name, Vec<Payload>>,
        mut g: TypingContext,
        p: &Process,
        path: &mut Vec<String>,
    ) -> Result<(), TypingError> {
        match p {
            Process::Nil => match end_leftover(&g) {
                None => Ok(()),
                Some(e) => Self::fail("T-0", path, format!("{e} is not finished")),
            },
            Process::Error => Self::fail("T-error", path, "error is not typable".into()),
            Process::Crashed(e) => {
                match g.remove(e) {
                    Some(t) if t.is_stop() => {}
                    Some(t) => {
                        return Self::fail("T-stop", path, format!("{e} has type {t}, expected stop"))
                    }
                    None => return Self::fail("T-stop", path, format!("{e} is not in the typing context")),
                }
                match end_leftover(&g) {
                    None => Ok(()),
                    Some(x) => Self::fail("T-stop", path, format!("{x} is not finished")),
                }
            }
            Process::Par(ps) => {
                if ps.is_empty() {
                    return self.check(theta, g, &Process::Nil, path);
                }
                let names: Vec<_> = ps.iter().map(|q| q.free_names()).collect();
                let mut parts: Vec<TypingContext> = vec![TypingContext::new(); ps.len()];
                for (e, t) in g.entries() {
                    let users: Vec<usize> = (0..ps.len()).filter(|&i| names[i].0.contains(e)).collect();
                    if users.len() > 1 {
                        return Self::fail("T-par", path, format!("{e} is used by more than one parallel component"));
                    }
                    parts[users.first().copied().unwrap_or(0)].insert(e.clone(), t.clone());
                }
                for (x, t) in g.vars() {
                    let users: Vec<usize> = (0..ps.len()).filter(|&i| names[i].1.contains(x)).collect();
                    if users.len() > 1 {
                        return Self::fail("T-par", path, format!("{x} is used by more than one parallel component"));
                    }
                    parts[users.first().copied().unwrap_or(0)].insert_var(x.clone(), t.clone());
                }
                for (i, (q, part)) in ps.iter().zip(parts).enumerate() {
                    path.push(format!("par#{i}"));
                    self.check(theta, part, q, path)?;
                    path.pop();
                }
                Ok(())
            }
            Process::Restrict {
                session,
                annotation,
                body,
            } => {
                path.push(format!("new {session}"));
                if g.sessions().contains(session) {
                    return Self::fail("T-res", path, format!("session {session} is already in the context"));
                }
                let mut local = TypingContext::new();
                for (r, t) in &annotation.entries {
                    if let Err(vs) = well_formed(t) {
                        return Self::fail("T-res", path, format!("ill-formed annotation for {r}: {}", vs[0]));
                    }
                    local.insert(
                        Endpoint {
                            session: session.clone(),
                            role: r.clone(),
                        },
                        t.clone(),
                    );
                }
                let mut last_err = None;
                for cand in self.candidates(&local, session, &annotation.reliable) {
                    if !self.is_safe(&cand, session, &annotation.reliable) {
                        last_err.get_or_insert_with(|| TypingError {
                            rule: "T-res",
                            at: path.join(" / "),
                            message: format!("annotation {cand} is not safe"),
                        });
                        continue;
                    }
                    let mut inner = g.clone();
                    for (e, t) in cand.entries() {
                        inner.insert(e.clone(), t.clone());
                    }
                    match self.check(theta, inner, body, path) {
                        Ok(()) => {
                            path.pop();
                            return Ok(());
                        }
                        Err(e) => {
                            last_err = Some(e);
                        }
                    }
                }
                Err(last_err.expect("at least one candidate"))
            }
            Process::Select {
                chan,
                to,
                label,
                value,
                cont,
            } => {
                let k = Key::of_channel(chan);
                path.push(format!("{}[{to}]!{label}", k.show()));
                let Some(Payload::Session(t)) = lookup(&g, &k) else {
                    return Self::fail("T-select", path, format!("{} has no session type", k.show()));
                };
                let u = unfold(&t);
                let SessionType::Choice {
                    kind: ChoiceKind::Internal,
                    peer,
                    branches,
                } = &*u
                else {
                    return Self::fail("T-select", path, format!("{} has type {t}, not a selection", k.show()));
                };
                if peer != to {
                    return Self::fail("T-select", path, format!("{} selects towards {peer}, not {to}", k.show()));
                }
                let Some(b) = branches.get(label) else {
                    return Self::fail("T-select", path, format!("label {label} is not offered by {t}"));
                };
                if Key::of_value(value).as_ref() == Some(&k) {
                    return Self::fail("T-select", path, format!("{} is sent over itself", k.show()));
                }
                Self::consume_value(&mut g, value, &b.payload, "T-select", path)?;
                put(&mut g, &k, b.cont.clone());
                self.check(theta, g, cont, path)?;
                path.pop();
                Ok(())
            }
            Process::Branch {
                chan,
                from,
                branches,
            } => {
                let k = Key::of_channel(chan);
                path.push(format!("{}[{from}]?", k.show()));
                let Some(Payload::Session(t)) = lookup(&g, &k) else {
                    return Self::fail("T-branch", path, format!("{} has no session type", k.show()));
                };
                let u = unfold(&t);
                let SessionType::Choice {
                    kind: ChoiceKind::External,
                    peer,
                    branches: tb,
                } = &*u
                else {
                    return Self::fail("T-branch", path, format!("{} has type {t}, not a branching", k.show()));
                };
                if peer != from {
                    return Self::fail("T-branch", path, format!("{} receives from {peer}, not {from}", k.show()));
                }
                if tb.len() == 1 && tb[0].label.is_crash() && branches.len() != 1 {
                    return Self::fail(
                        "T-branch",
                        path,
                        "a pure crash-recovery type admits only a crash branch".into(),
                    );
                }
                for b in tb.iter() {
                    let Some(pb) = branches.iter().find(|pb| pb.label == b.label) else {
                        return Self::fail("T-branch", path, format!("missing branch {}", b.label));
                    };
                    let mut inner = g.clone();
                    put(&mut inner, &k, b.cont.clone());
                    if let Some(x) = &pb.binder {
                        if inner.get_var(x.as_str()).is_some() {
                            return Self::fail("T-branch", path, format!("binder {x} shadows a variable in scope"));
                        }
                        inner.insert_var(x.clone(), b.payload.clone());
                    }
                    path.push(b.label.to_string());
                    self.check(theta, inner, &pb.body, path)?;
                    path.pop();
                }
                path.pop();
                Ok(())
            }
            Process::Def { def, body } => {
                let mut theta2 = theta.clone();
                theta2.insert(
                    def.name.clone(),
                    def.params.iter().map(|(_, t)| t.clone()).collect(),
                );
                let mut params = TypingContext::new();
                for (x, t) in &def.params {
                    if params.insert_var(x.clone(), t.clone()).is_some() {
                        return Self::fail("T-def", path, format!("duplicate parameter {x}"));
                    }
                }
                path.push(format!("def {}", def.name));
                self.check(&theta2, params, &def.body, path)?;
                path.pop();
                self.check(&theta2, g, body, path)
            }
            Process::Call { name, args } => {
                path.push(format!("{name}(..)"));
                let Some(params) = theta.get(name) else {
                    return Self::fail("T-call", path, format!("process variable {name} is not declared"));
                };
                if params.len() != args.len() {
                    return Self::fail(
                        "T-call",
                        path,
                        format!("{name} expects {} arguments, got {}", params.len(), args.len()),
                    );
                }
                for (a, want) in args.iter().zip(params) {
                    Self::consume_value(&mut g, a, want, "T-call", path)?;
                }
                if let Some(e) = end_leftover(&g) {
                    return Self::fail("T-call", path, format!("{e} is not finished"));
                }
                path.pop();
                Ok(())
            }
        }
    }
}
