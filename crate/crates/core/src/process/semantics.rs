use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::congruence::{instantiate, Config};
use super::{Channel, Process, Value};
use crate::name::{Role, Session};
use crate::types::Label;

/// Reliable roles of sessions that are free in the process being reduced.
pub type ReliabilityMap = BTreeMap<Session, BTreeSet<Role>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Comm,
    LabelMismatch,
    Call,
    CrashSelect,
    CrashBranch,
    LostValue,
    LostEndpoint,
    CrashDetect,
}

impl Rule {
    pub fn is_crash(self) -> bool {
        matches!(self, Rule::CrashSelect | Rule::CrashBranch)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Comm => "comm",
            Rule::LabelMismatch => "label-mismatch",
            Rule::Call => "call",
            Rule::CrashSelect => "crash-select",
            Rule::CrashBranch => "crash-branch",
            Rule::LostValue => "lost-value",
            Rule::LostEndpoint => "lost-endpoint",
            Rule::CrashDetect => "crash-detect",
        })
    }
}

/// One-step reducts of a closed process, each in congruence normal form.
///
/// Crash injection enables the rules that crash a selecting or branching thread;
/// message loss and crash detection are always enabled.
pub fn step(p: &Process, crash_injection: bool) -> Vec<(Rule, Process)> {
    let cfg = Config::from_process(p);
    dedup(
        raw_steps(&cfg, crash_injection)
            .into_iter()
            .map(|(r, c)| (r, c.rebuild()))
            .collect(),
    )
}

/// Reducts (with crash injection) that do not crash an endpoint of a reliable role.
/// Reliable roles of restricted sessions come from their annotations; those of
/// free sessions come from `reliable`.
pub fn filtered_step(p: &Process, reliable: &ReliabilityMap) -> Vec<(Rule, Process)> {
    let cfg = Config::from_process(p);
    let before = cfg.crashed_endpoints();
    let mut out = Vec::new();
    for (rule, next) in raw_steps(&cfg, true) {
        let violates = next
            .crashed_endpoints()
            .difference(&before)
            .any(|e| {
                next.reliable_of(&e.session)
                    .or_else(|| reliable.get(&e.session))
                    .is_some_and(|r| r.contains(&e.role))
            });
        if !violates {
            out.push((rule, next.rebuild()));
        }
    }
    dedup(out)
}

fn dedup(v: Vec<(Rule, Process)>) -> Vec<(Rule, Process)> {
    let mut seen = BTreeSet::new();
    v.into_iter()
        .filter(|(r, p)| seen.insert((*r, p.to_string())))
        .collect()
}

fn replace(cfg: &Config, remove: &[usize], add: Vec<Process>) -> Config {
    let mut c = cfg.clone();
    let mut idx = remove.to_vec();
    idx.sort_unstable_by(|a, b| b.cmp(a));
    for i in idx {
        c.threads.remove(i);
    }
    for p in add {
        c.add(p);
    }
    c
}

fn endpoint_of(c: &Channel) -> Option<&crate::context::Endpoint> {
    match c {
        Channel::Endpoint(e) => Some(e),
        Channel::Var(_) => None,
    }
}

fn raw_steps(cfg: &Config, crash_injection: bool) -> Vec<(Rule, Config)> {
    let mut out = Vec::new();
    let ts = &cfg.threads;
    for (i, t) in ts.iter().enumerate() {
        match t {
            Process::Call { name, args } => {
                if let Some(d) = cfg.def(name) {
                    if d.params.len() == args.len() {
                        out.push((Rule::Call, replace(cfg, &[i], vec![instantiate(d, args)])));
                    }
                }
            }
            Process::Select { chan, .. } | Process::Branch { chan, .. } if crash_injection => {
                if endpoint_of(chan).is_some() {
                    let rule = if matches!(t, Process::Select { .. }) {
                        Rule::CrashSelect
                    } else {
                        Rule::CrashBranch
                    };
                    let crashed = t
                        .free_endpoints()
                        .into_iter()
                        .map(Process::Crashed)
                        .collect();
                    out.push((rule, replace(cfg, &[i], crashed)));
                }
            }
            _ => {}
        }
    }
    for (i, recv) in ts.iter().enumerate() {
        for (j, send) in ts.iter().enumerate() {
            if i == j {
                continue;
            }
            match (recv, send) {
                (
                    Process::Branch {
                        chan: rc,
                        from,
                        branches,
                    },
                    Process::Select {
                        chan: sc,
                        to,
                        label,
                        value,
                        cont,
                    },
                ) => {
                    let (Some(re), Some(se)) = (endpoint_of(rc), endpoint_of(sc)) else {
                        continue;
                    };
                    if re.session != se.session || &re.role != to || &se.role != from {
                        continue;
                    }
                    match branches.iter().find(|b| &b.label == label && !b.label.is_crash()) {
                        Some(b) => {
                            let body = match &b.binder {
                                Some(x) => b.body.subst(x, value),
                                None => b.body.clone(),
                            };
                            out.push((
                                Rule::Comm,
                                replace(cfg, &[i, j], vec![body, (**cont).clone()]),
                            ));
                        }
                        None => out.push((
                            Rule::LabelMismatch,
                            replace(cfg, &[i, j], vec![Process::Error]),
                        )),
                    }
                }
                (
                    Process::Crashed(dead),
                    Process::Select {
                        chan: sc,
                        to,
                        value,
                        cont,
                        ..
                    },
                ) => {
                    let Some(se) = endpoint_of(sc) else { continue };
                    if dead.session != se.session || &dead.role != to {
                        continue;
                    }
                    match value {
                        Value::Endpoint(e) => out.push((
                            Rule::LostEndpoint,
                            replace(cfg, &[j], vec![(**cont).clone(), Process::Crashed(e.clone())]),
                        )),
                        Value::Var(_) => {}
                        _ => out.push((Rule::LostValue, replace(cfg, &[j], vec![(**cont).clone()]))),
                    }
                }
                (
                    Process::Crashed(dead),
                    Process::Branch {
                        chan: rc,
                        from,
                        branches,
                    },
                ) => {
                    let Some(re) = endpoint_of(rc) else { continue };
                    if dead.session != re.session || &dead.role != from {
                        continue;
                    }
                    if let Some(b) = branches.iter().find(|b| b.label == Label::Crash) {
                        out.push((Rule::CrashDetect, replace(cfg, &[j], vec![b.body.clone()])));
                    }
                }
                _ => {}
            }
        }
    }
    out
}
