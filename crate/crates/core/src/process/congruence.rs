use std::collections::{BTreeMap, BTreeSet};

use super::{Annotation, Definition, Process, Value};
use crate::name::{Name, Session};

/// A process in prenex form: restrictions and definitions hoisted over a flat
/// multiset of threads. Names are unique after [`Config::from_process`].
#[derive(Debug, Clone)]
pub(crate) struct Config {
    pub restrictions: Vec<(Session, Annotation)>,
    pub defs: Vec<Definition>,
    pub threads: Vec<Process>,
    used_sessions: BTreeSet<Session>,
    used_defs: BTreeSet<Name>,
}

fn fresh(base: &Name, used: &BTreeSet<Name>) -> Name {
    let mut n = 1;
    loop {
        let cand = Name::from(format!("{base}{n}"));
        if !used.contains(&cand) {
            return cand;
        }
        n += 1;
    }
}

impl Config {
    pub fn from_process(p: &Process) -> Config {
        let mut c = Config {
            restrictions: Vec::new(),
            defs: Vec::new(),
            threads: Vec::new(),
            used_sessions: p.free_sessions(),
            used_defs: p.free_process_vars(),
        };
        c.add(p.clone());
        c
    }

    /// Hoist binders out of `p` and add its threads.
    pub fn add(&mut self, p: Process) {
        match p {
            Process::Nil => {}
            Process::Par(ps) => ps.into_iter().for_each(|q| self.add(q)),
            Process::Restrict {
                session,
                annotation,
                body,
            } => {
                let (s, body) = if self.used_sessions.contains(&session) {
                    let s2 = fresh(&session, &self.used_sessions);
                    let b = body.rename_session(&session, &s2);
                    (s2, b)
                } else {
                    (session, *body)
                };
                self.used_sessions.insert(s.clone());
                self.restrictions.push((s, annotation));
                self.add(body);
            }
            Process::Def { def, body } => {
                let (def, body) = if self.used_defs.contains(&def.name) {
                    let x2 = fresh(&def.name, &self.used_defs);
                    let d = Definition {
                        name: x2.clone(),
                        params: def.params.clone(),
                        body: def.body.rename_call(&def.name, &x2),
                    };
                    let b = body.rename_call(&def.name, &x2);
                    (d, b)
                } else {
                    (*def, *body)
                };
                self.used_defs.insert(def.name.clone());
                self.defs.push(def);
                self.add(body);
            }
            thread => self.threads.push(thread),
        }
    }

    pub fn def(&self, name: &Name) -> Option<&Definition> {
        self.defs.iter().find(|d| &d.name == name)
    }

    pub fn reliable_of(&self, s: &Session) -> Option<&BTreeSet<Name>> {
        self.restrictions
            .iter()
            .find(|(r, _)| r == s)
            .map(|(_, a)| &a.reliable)
    }

    /// Canonical representative of the congruence class.
    pub fn rebuild(&self) -> Process {
        let mut threads = self.threads.clone();

        // Restrictions: drop dead ones and apply stop elimination.
        let mut restrictions = Vec::new();
        for (s, ann) in &self.restrictions {
            let mentioning: Vec<usize> = threads
                .iter()
                .enumerate()
                .filter(|(_, t)| t.free_sessions().contains(s))
                .map(|(i, _)| i)
                .collect();
            if mentioning.is_empty() {
                continue;
            }
            let all_crashed = mentioning
                .iter()
                .all(|&i| matches!(&threads[i], Process::Crashed(e) if &e.session == s));
            if all_crashed {
                let drop: BTreeSet<usize> = mentioning.into_iter().collect();
                threads = threads
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| !drop.contains(i))
                    .map(|(_, t)| t)
                    .collect();
                continue;
            }
            restrictions.push((s.clone(), ann.clone()));
        }

        // Group threads connected through restricted sessions.
        let restricted: BTreeMap<&Session, &Annotation> =
            restrictions.iter().map(|(s, a)| (s, a)).collect();
        let n = threads.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        let sessions_of: Vec<BTreeSet<Session>> = threads
            .iter()
            .map(|t| {
                t.free_sessions()
                    .into_iter()
                    .filter(|s| restricted.contains_key(s))
                    .collect()
            })
            .collect();
        let mut owner: BTreeMap<&Session, usize> = BTreeMap::new();
        for (i, ss) in sessions_of.iter().enumerate() {
            for s in ss {
                if let Some(&j) = owner.get(s) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                } else {
                    owner.insert(s, i);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut components: Vec<(String, Process)> = Vec::new();
        for members in groups.values() {
            let sessions: BTreeSet<&Session> =
                members.iter().flat_map(|&i| sessions_of[i].iter()).collect();
            let mut ts: Vec<(String, Process)> = members
                .iter()
                .map(|&i| (threads[i].to_string(), threads[i].clone()))
                .collect();
            ts.sort_by(|a, b| a.0.cmp(&b.0));
            let mut p = Process::par(ts.into_iter().map(|(_, t)| t).collect());
            for s in sessions.iter().rev() {
                p = Process::Restrict {
                    session: (*s).clone(),
                    annotation: restricted[s].clone(),
                    body: Box::new(p),
                };
            }
            components.push((p.to_string(), p));
        }
        components.sort_by(|a, b| a.0.cmp(&b.0));
        let mut body = Process::par(components.into_iter().map(|(_, p)| p).collect());

        // Live definitions, callees outermost.
        let mut live: BTreeSet<Name> = body.free_process_vars();
        loop {
            let more: BTreeSet<Name> = self
                .defs
                .iter()
                .filter(|d| live.contains(&d.name))
                .flat_map(|d| {
                    let mut c = d.body.free_process_vars();
                    c.remove(&d.name);
                    c
                })
                .filter(|x| !live.contains(x))
                .collect();
            if more.is_empty() {
                break;
            }
            live.extend(more);
        }
        let mut defs: Vec<&Definition> = self.defs.iter().filter(|d| live.contains(&d.name)).collect();
        defs.sort_by(|a, b| a.name.cmp(&b.name));
        // Innermost first: a definition must be inside every definition it calls.
        let mut ordered: Vec<&Definition> = Vec::new();
        while !defs.is_empty() {
            let idx = defs
                .iter()
                .position(|d| {
                    !defs.iter().any(|o| {
                        o.name != d.name && o.body.free_process_vars().contains(&d.name)
                    })
                })
                .unwrap_or(0);
            ordered.push(defs.remove(idx));
        }
        for d in ordered {
            body = Process::Def {
                def: Box::new(d.clone()),
                body: Box::new(body),
            };
        }
        body
    }

    pub fn crashed_endpoints(&self) -> BTreeSet<crate::context::Endpoint> {
        self.threads
            .iter()
            .filter_map(|t| match t {
                Process::Crashed(e) => Some(e.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn has_error(&self) -> bool {
        self.threads.iter().any(|t| matches!(t, Process::Error))
    }
}

/// Canonical form modulo structural congruence: parallel composition flattened
/// and sorted, `0` removed, restrictions narrowed to the threads that use them,
/// fully crashed or unused sessions removed, unused definitions removed.
pub fn congruence_normal(p: &Process) -> Process {
    Config::from_process(p).rebuild()
}

/// Whether the process has an `error` thread in an active position.
pub fn has_active_error(p: &Process) -> bool {
    Config::from_process(p).has_error()
}

pub(crate) fn instantiate(def: &Definition, args: &[Value]) -> Process {
    let mut body = def.body.clone();
    for ((x, _), v) in def.params.iter().zip(args) {
        body = body.subst(x, v);
    }
    body
}
