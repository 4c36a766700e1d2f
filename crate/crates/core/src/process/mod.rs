//! Processes with crash-stop semantics and their typing.

mod congruence;
pub mod explore;
mod semantics;
mod typing;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::context::Endpoint;
use crate::name::{Name, Role, Session};
use crate::types::{BasicType, Label, Payload, SessionType};

pub use congruence::{congruence_normal, has_active_error};
pub use semantics::{filtered_step, step, ReliabilityMap, Rule};
pub use typing::{typecheck, typecheck_up_to_annotations, ProcessTypingEnv, TypingError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Unit,
    Int(i64),
    Bool(bool),
    /// Real literal, kept as its source text.
    Real(String),
    Str(String),
    Var(Name),
    Endpoint(Endpoint),
}

impl Value {
    /// Basic type of a literal; `None` for variables and endpoints.
    pub fn basic_type(&self) -> Option<BasicType> {
        match self {
            Value::Unit => Some(BasicType::Unit),
            Value::Int(_) => Some(BasicType::Int),
            Value::Bool(_) => Some(BasicType::Bool),
            Value::Real(_) => Some(BasicType::Real),
            Value::Str(_) => Some(BasicType::Str),
            Value::Var(_) | Value::Endpoint(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Channel {
    Var(Name),
    Endpoint(Endpoint),
}

impl Channel {
    pub fn as_value(&self) -> Value {
        match self {
            Channel::Var(x) => Value::Var(x.clone()),
            Channel::Endpoint(e) => Value::Endpoint(e.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InputBranch {
    pub label: Label,
    pub binder: Option<Name>,
    pub body: Process,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Definition {
    pub name: Name,
    pub params: Vec<(Name, Payload)>,
    pub body: Process,
}

/// Typing annotation of a restricted session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Annotation {
    pub entries: Vec<(Role, Arc<SessionType>)>,
    pub reliable: BTreeSet<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Process {
    Nil,
    Par(Vec<Process>),
    Restrict {
        session: Session,
        annotation: Annotation,
        body: Box<Process>,
    },
    Select {
        chan: Channel,
        to: Role,
        label: Label,
        value: Value,
        cont: Box<Process>,
    },
    Branch {
        chan: Channel,
        from: Role,
        branches: Vec<InputBranch>,
    },
    Def {
        def: Box<Definition>,
        body: Box<Process>,
    },
    Call {
        name: Name,
        args: Vec<Value>,
    },
    Crashed(Endpoint),
    Error,
}

fn value_names(v: &Value, eps: &mut BTreeSet<Endpoint>, vars: &mut BTreeSet<Name>) {
    match v {
        Value::Var(x) => {
            vars.insert(x.clone());
        }
        Value::Endpoint(e) => {
            eps.insert(e.clone());
        }
        _ => {}
    }
}

impl Process {
    pub fn par(ps: Vec<Process>) -> Process {
        match ps.len() {
            0 => Process::Nil,
            1 => ps.into_iter().next().unwrap(),
            _ => Process::Par(ps),
        }
    }

    /// Free endpoints and free variables.
    pub fn free_names(&self) -> (BTreeSet<Endpoint>, BTreeSet<Name>) {
        let mut eps = BTreeSet::new();
        let mut vars = BTreeSet::new();
        self.collect_free(&mut eps, &mut vars);
        (eps, vars)
    }

    pub fn free_endpoints(&self) -> BTreeSet<Endpoint> {
        self.free_names().0
    }

    pub fn free_sessions(&self) -> BTreeSet<Session> {
        self.free_endpoints()
            .into_iter()
            .map(|e| e.session)
            .collect()
    }

    fn collect_free(&self, eps: &mut BTreeSet<Endpoint>, vars: &mut BTreeSet<Name>) {
        match self {
            Process::Nil | Process::Error => {}
            Process::Crashed(e) => {
                eps.insert(e.clone());
            }
            Process::Par(ps) => ps.iter().for_each(|p| p.collect_free(eps, vars)),
            Process::Restrict { session, body, .. } => {
                let (mut be, bv) = body.free_names();
                be.retain(|e| &e.session != session);
                eps.extend(be);
                vars.extend(bv);
            }
            Process::Select {
                chan, value, cont, ..
            } => {
                value_names(&chan.as_value(), eps, vars);
                value_names(value, eps, vars);
                cont.collect_free(eps, vars);
            }
            Process::Branch { chan, branches, .. } => {
                value_names(&chan.as_value(), eps, vars);
                for b in branches {
                    let (be, mut bv) = b.body.free_names();
                    if let Some(x) = &b.binder {
                        bv.remove(x);
                    }
                    eps.extend(be);
                    vars.extend(bv);
                }
            }
            Process::Def { def, body } => {
                let (de, mut dv) = def.body.free_names();
                for (x, _) in &def.params {
                    dv.remove(x);
                }
                eps.extend(de);
                vars.extend(dv);
                body.collect_free(eps, vars);
            }
            Process::Call { args, .. } => args.iter().for_each(|a| value_names(a, eps, vars)),
        }
    }

    /// Process variables called but not defined.
    pub fn free_process_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_calls(&mut out);
        out
    }

    fn collect_calls(&self, out: &mut BTreeSet<Name>) {
        match self {
            Process::Nil | Process::Error | Process::Crashed(_) => {}
            Process::Par(ps) => ps.iter().for_each(|p| p.collect_calls(out)),
            Process::Restrict { body, .. } => body.collect_calls(out),
            Process::Select { cont, .. } => cont.collect_calls(out),
            Process::Branch { branches, .. } => {
                branches.iter().for_each(|b| b.body.collect_calls(out))
            }
            Process::Def { def, body } => {
                let mut inner = BTreeSet::new();
                def.body.collect_calls(&mut inner);
                body.collect_calls(&mut inner);
                inner.remove(&def.name);
                out.extend(inner);
            }
            Process::Call { name, .. } => {
                out.insert(name.clone());
            }
        }
    }

    /// Capture-avoiding substitution of value `v` for variable `x`.
    pub fn subst(&self, x: &Name, v: &Value) -> Process {
        let sv = |w: &Value| match w {
            Value::Var(y) if y == x => v.clone(),
            other => other.clone(),
        };
        let sc = |c: &Channel| match c {
            Channel::Var(y) if y == x => match v {
                Value::Var(z) => Channel::Var(z.clone()),
                Value::Endpoint(e) => Channel::Endpoint(e.clone()),
                _ => c.clone(),
            },
            other => other.clone(),
        };
        match self {
            Process::Nil | Process::Error | Process::Crashed(_) => self.clone(),
            Process::Par(ps) => Process::Par(ps.iter().map(|p| p.subst(x, v)).collect()),
            Process::Restrict {
                session,
                annotation,
                body,
            } => Process::Restrict {
                session: session.clone(),
                annotation: annotation.clone(),
                body: Box::new(body.subst(x, v)),
            },
            Process::Select {
                chan,
                to,
                label,
                value,
                cont,
            } => Process::Select {
                chan: sc(chan),
                to: to.clone(),
                label: label.clone(),
                value: sv(value),
                cont: Box::new(cont.subst(x, v)),
            },
            Process::Branch {
                chan,
                from,
                branches,
            } => Process::Branch {
                chan: sc(chan),
                from: from.clone(),
                branches: branches
                    .iter()
                    .map(|b| InputBranch {
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        body: if b.binder.as_ref() == Some(x) {
                            b.body.clone()
                        } else {
                            b.body.subst(x, v)
                        },
                    })
                    .collect(),
            },
            Process::Def { def, body } => Process::Def {
                def: Box::new(Definition {
                    name: def.name.clone(),
                    params: def.params.clone(),
                    body: if def.params.iter().any(|(p, _)| p == x) {
                        def.body.clone()
                    } else {
                        def.body.subst(x, v)
                    },
                }),
                body: Box::new(body.subst(x, v)),
            },
            Process::Call { name, args } => Process::Call {
                name: name.clone(),
                args: args.iter().map(sv).collect(),
            },
        }
    }

    /// Rename free occurrences of session `from` to `to`.
    pub fn rename_session(&self, from: &Session, to: &Session) -> Process {
        let re = |e: &Endpoint| {
            if &e.session == from {
                Endpoint {
                    session: to.clone(),
                    role: e.role.clone(),
                }
            } else {
                e.clone()
            }
        };
        let rv = |v: &Value| match v {
            Value::Endpoint(e) => Value::Endpoint(re(e)),
            other => other.clone(),
        };
        let rc = |c: &Channel| match c {
            Channel::Endpoint(e) => Channel::Endpoint(re(e)),
            other => other.clone(),
        };
        match self {
            Process::Nil | Process::Error => self.clone(),
            Process::Crashed(e) => Process::Crashed(re(e)),
            Process::Par(ps) => Process::Par(ps.iter().map(|p| p.rename_session(from, to)).collect()),
            Process::Restrict {
                session,
                annotation,
                body,
            } => Process::Restrict {
                session: session.clone(),
                annotation: annotation.clone(),
                body: if session == from {
                    body.clone()
                } else {
                    Box::new(body.rename_session(from, to))
                },
            },
            Process::Select {
                chan,
                to: r,
                label,
                value,
                cont,
            } => Process::Select {
                chan: rc(chan),
                to: r.clone(),
                label: label.clone(),
                value: rv(value),
                cont: Box::new(cont.rename_session(from, to)),
            },
            Process::Branch {
                chan,
                from: r,
                branches,
            } => Process::Branch {
                chan: rc(chan),
                from: r.clone(),
                branches: branches
                    .iter()
                    .map(|b| InputBranch {
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        body: b.body.rename_session(from, to),
                    })
                    .collect(),
            },
            Process::Def { def, body } => Process::Def {
                def: Box::new(Definition {
                    name: def.name.clone(),
                    params: def.params.clone(),
                    body: def.body.rename_session(from, to),
                }),
                body: Box::new(body.rename_session(from, to)),
            },
            Process::Call { name, args } => Process::Call {
                name: name.clone(),
                args: args.iter().map(rv).collect(),
            },
        }
    }

    /// Rename calls to process variable `from` (not under a rebinding of it).
    pub fn rename_call(&self, from: &Name, to: &Name) -> Process {
        match self {
            Process::Nil | Process::Error | Process::Crashed(_) => self.clone(),
            Process::Par(ps) => Process::Par(ps.iter().map(|p| p.rename_call(from, to)).collect()),
            Process::Restrict {
                session,
                annotation,
                body,
            } => Process::Restrict {
                session: session.clone(),
                annotation: annotation.clone(),
                body: Box::new(body.rename_call(from, to)),
            },
            Process::Select {
                chan,
                to: r,
                label,
                value,
                cont,
            } => Process::Select {
                chan: chan.clone(),
                to: r.clone(),
                label: label.clone(),
                value: value.clone(),
                cont: Box::new(cont.rename_call(from, to)),
            },
            Process::Branch {
                chan,
                from: r,
                branches,
            } => Process::Branch {
                chan: chan.clone(),
                from: r.clone(),
                branches: branches
                    .iter()
                    .map(|b| InputBranch {
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        body: b.body.rename_call(from, to),
                    })
                    .collect(),
            },
            Process::Def { def, body } => {
                if &def.name == from {
                    self.clone()
                } else {
                    Process::Def {
                        def: Box::new(Definition {
                            name: def.name.clone(),
                            params: def.params.clone(),
                            body: def.body.rename_call(from, to),
                        }),
                        body: Box::new(body.rename_call(from, to)),
                    }
                }
            }
            Process::Call { name, args } => Process::Call {
                name: if name == from { to.clone() } else { name.clone() },
                args: args.clone(),
            },
        }
    }

    pub fn contains_error(&self) -> bool {
        match self {
            Process::Error => true,
            Process::Nil | Process::Crashed(_) | Process::Call { .. } => false,
            Process::Par(ps) => ps.iter().any(|p| p.contains_error()),
            Process::Restrict { body, .. } => body.contains_error(),
            Process::Select { cont, .. } => cont.contains_error(),
            Process::Branch { branches, .. } => branches.iter().any(|b| b.body.contains_error()),
            Process::Def { def, body } => def.body.contains_error() || body.contains_error(),
        }
    }
}
