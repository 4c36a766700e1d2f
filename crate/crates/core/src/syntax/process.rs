//! `.proc` documents: optional `decl` lines typing free process variables, then one process.
//!
//! ```text
//! decl Loop(int)
//! new s:{p: q!{a.end}, q: p?{a.end}} reliable {q} in
//!   s[p][q]!a.0 | s[q][p]?{a.0, crash.0}
//! ```

use std::fmt;

use super::lexer::Tok;
use super::{describe, Parser, SyntaxError};
use crate::context::Endpoint;
use crate::name::Name;
use crate::process::{
    Annotation, Channel, Definition, InputBranch, Process, ProcessTypingEnv, Value,
};
use crate::types::{Label, Payload};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessDoc {
    pub theta: ProcessTypingEnv,
    pub process: Process,
}

const KEYWORDS: &[&str] = &["new", "def", "in", "decl", "reliable", "stopped", "error", "true", "false"];

pub fn parse_process(src: &str) -> Result<ProcessDoc, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut theta = ProcessTypingEnv::default();
    while p.is_kw("decl") {
        p.advance();
        let (line, col) = p.here();
        let name = p.expect_ident()?;
        p.expect_sym('(')?;
        let mut params = Vec::new();
        if !p.eat_sym(')') {
            loop {
                params.push(p.parse_closed_payload(&format!("a parameter of {name}"))?);
                if p.eat_sym(')') {
                    break;
                }
                p.expect_sym(',')?;
            }
        }
        p.eat_sym(';');
        if theta.decls.insert(Name::from(name.as_str()), params).is_some() {
            return Err(SyntaxError::Parse {
                line,
                col,
                message: format!("duplicate declaration of {name}"),
            });
        }
    }
    let process = p.parse_par()?;
    if !p.at_eof() {
        return p.err(format!("unexpected {} after process", describe(p.peek())));
    }
    Ok(ProcessDoc { theta, process })
}

impl Parser {
    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.is_kw(kw) {
            self.advance();
            Ok(())
        } else {
            self.err(format!("expected '{kw}', found {}", describe(self.peek())))
        }
    }

    fn expect_name(&mut self, what: &str) -> Result<Name, SyntaxError> {
        if let Tok::Ident(s) = self.peek() {
            if KEYWORDS.contains(&s.as_str()) {
                return self.err(format!("keyword '{s}' cannot be used as {what}"));
            }
        }
        Ok(Name::from(self.expect_ident()?))
    }

    fn parse_endpoint(&mut self) -> Result<Endpoint, SyntaxError> {
        let s = self.expect_name("a session name")?;
        self.expect_sym('[')?;
        let r = self.expect_ident()?;
        self.expect_sym(']')?;
        Ok(Endpoint {
            session: s,
            role: Name::from(r),
        })
    }

    /// `par := prefix ('|' prefix)*`
    pub(crate) fn parse_par(&mut self) -> Result<Process, SyntaxError> {
        let mut ps = vec![self.parse_prefix()?];
        while self.eat_sym('|') {
            ps.push(self.parse_prefix()?);
        }
        Ok(Process::par(ps))
    }

    fn parse_prefix(&mut self) -> Result<Process, SyntaxError> {
        match self.peek().clone() {
            Tok::Int(0) => {
                self.advance();
                Ok(Process::Nil)
            }
            Tok::Sym('(') => {
                self.advance();
                let p = self.parse_par()?;
                self.expect_sym(')')?;
                Ok(p)
            }
            Tok::Ident(kw) if kw == "error" => {
                self.advance();
                Ok(Process::Error)
            }
            Tok::Ident(kw) if kw == "stopped" => {
                self.advance();
                Ok(Process::Crashed(self.parse_endpoint()?))
            }
            Tok::Ident(kw) if kw == "new" => self.parse_restriction(),
            Tok::Ident(kw) if kw == "def" => self.parse_definition(),
            Tok::Ident(_) => self.parse_action(),
            t => self.err(format!("expected a process, found {}", describe(&t))),
        }
    }

    fn parse_restriction(&mut self) -> Result<Process, SyntaxError> {
        self.expect_kw("new")?;
        let session = self.expect_name("a session name")?;
        let mut annotation = Annotation::default();
        if self.eat_sym(':') {
            self.expect_sym('{')?;
            if !self.eat_sym('}') {
                loop {
                    let (line, col) = self.here();
                    let role = Name::from(self.expect_ident()?);
                    self.expect_sym(':')?;
                    let t = self.parse_closed_type(&format!("{session}[{role}]"))?;
                    if annotation.entries.iter().any(|(r, _)| *r == role) {
                        return Err(SyntaxError::Parse {
                            line,
                            col,
                            message: format!("duplicate annotation for {session}[{role}]"),
                        });
                    }
                    annotation.entries.push((role, t));
                    if self.eat_sym('}') {
                        break;
                    }
                    self.expect_sym(',')?;
                }
            }
        }
        if self.is_kw("reliable") {
            let (line, col) = self.here();
            self.advance();
            self.expect_sym('{')?;
            if !self.eat_sym('}') {
                loop {
                    annotation.reliable.insert(Name::from(self.expect_ident()?));
                    if self.eat_sym('}') {
                        break;
                    }
                    self.expect_sym(',')?;
                }
            }
            if let Some(r) = annotation
                .reliable
                .iter()
                .find(|r| !annotation.entries.iter().any(|(q, _)| q == *r))
            {
                return Err(SyntaxError::Parse {
                    line,
                    col,
                    message: format!("reliable role {r} is not annotated in session {session}"),
                });
            }
        }
        self.expect_kw("in")?;
        let body = self.parse_par()?;
        Ok(Process::Restrict {
            session,
            annotation,
            body: Box::new(body),
        })
    }

    fn parse_definition(&mut self) -> Result<Process, SyntaxError> {
        self.expect_kw("def")?;
        let name = self.expect_name("a process variable")?;
        self.expect_sym('(')?;
        let mut params: Vec<(Name, Payload)> = Vec::new();
        if !self.eat_sym(')') {
            loop {
                let x = self.expect_name("a parameter")?;
                self.expect_sym(':')?;
                let t = self.parse_closed_payload(&format!("parameter {x}"))?;
                if params.iter().any(|(y, _)| *y == x) {
                    return self.err(format!("duplicate parameter {x}"));
                }
                params.push((x, t));
                if self.eat_sym(')') {
                    break;
                }
                self.expect_sym(',')?;
            }
        }
        self.expect_sym('=')?;
        let body = self.parse_par()?;
        self.expect_kw("in")?;
        let rest = self.parse_par()?;
        Ok(Process::Def {
            def: Box::new(Definition { name, params, body }),
            body: Box::new(rest),
        })
    }

    /// Selection, branching or a call, all starting with an identifier.
    fn parse_action(&mut self) -> Result<Process, SyntaxError> {
        if *self.peek_at(1) == Tok::Sym('(') {
            let name = self.expect_name("a process variable")?;
            self.expect_sym('(')?;
            let mut args = Vec::new();
            if !self.eat_sym(')') {
                loop {
                    args.push(self.parse_value()?);
                    if self.eat_sym(')') {
                        break;
                    }
                    self.expect_sym(',')?;
                }
            }
            return Ok(Process::Call { name, args });
        }
        // `s[p][q]` names an endpoint channel; `x[q]` a channel variable.
        let chan = if *self.peek_at(1) == Tok::Sym('[') && *self.peek_at(4) == Tok::Sym('[') {
            Channel::Endpoint(self.parse_endpoint()?)
        } else {
            Channel::Var(self.expect_name("a channel")?)
        };
        self.expect_sym('[')?;
        let peer = Name::from(self.expect_ident()?);
        self.expect_sym(']')?;
        if self.eat_sym('!') {
            let label = self.parse_label()?;
            if label.is_crash() {
                return self.err("cannot send the crash label");
            }
            let value = if self.eat_sym('(') {
                if self.eat_sym(')') {
                    Value::Unit
                } else {
                    let v = self.parse_value()?;
                    self.expect_sym(')')?;
                    v
                }
            } else {
                Value::Unit
            };
            let cont = self.parse_continuation()?;
            Ok(Process::Select {
                chan,
                to: peer,
                label,
                value,
                cont: Box::new(cont),
            })
        } else if self.eat_sym('?') {
            let mut branches = Vec::new();
            if self.eat_sym('{') {
                loop {
                    branches.push(self.parse_input_branch()?);
                    if self.eat_sym('}') {
                        break;
                    }
                    self.expect_sym(',')?;
                    if self.eat_sym('}') {
                        break;
                    }
                }
            } else {
                branches.push(self.parse_input_branch()?);
            }
            let mut seen = Vec::new();
            for b in &branches {
                if seen.contains(&&b.label) {
                    return self.err(format!("duplicate branch label {}", b.label));
                }
                seen.push(&b.label);
            }
            Ok(Process::Branch {
                chan,
                from: peer,
                branches,
            })
        } else {
            self.err(format!("expected '!' or '?', found {}", describe(self.peek())))
        }
    }

    fn parse_label(&mut self) -> Result<Label, SyntaxError> {
        Ok(Label::named(&self.expect_ident()?))
    }

    fn parse_continuation(&mut self) -> Result<Process, SyntaxError> {
        if self.eat_sym('.') {
            self.parse_prefix()
        } else {
            Ok(Process::Nil)
        }
    }

    fn parse_input_branch(&mut self) -> Result<InputBranch, SyntaxError> {
        let label = self.parse_label()?;
        let binder = if self.eat_sym('(') {
            if self.eat_sym(')') {
                None
            } else {
                if label.is_crash() {
                    return self.err("the crash branch binds no value");
                }
                let x = self.expect_name("a binder")?;
                self.expect_sym(')')?;
                Some(x)
            }
        } else {
            None
        };
        let body = self.parse_continuation()?;
        Ok(InputBranch {
            label,
            binder,
            body,
        })
    }

    fn parse_value(&mut self) -> Result<Value, SyntaxError> {
        match self.peek().clone() {
            Tok::Sym('(') => {
                self.advance();
                self.expect_sym(')')?;
                Ok(Value::Unit)
            }
            Tok::Int(n) => {
                self.advance();
                Ok(Value::Int(n))
            }
            Tok::Real(r) => {
                self.advance();
                Ok(Value::Real(r))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Value::Str(s))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Value::Bool(s == "true"))
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::Sym('[') => {
                Ok(Value::Endpoint(self.parse_endpoint()?))
            }
            Tok::Ident(_) => Ok(Value::Var(self.expect_name("a variable")?)),
            t => self.err(format!("expected a value, found {}", describe(&t))),
        }
    }
}

fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Real(r) => f.write_str(r),
            Value::Str(s) => write_str_literal(f, s),
            Value::Var(x) => write!(f, "{x}"),
            Value::Endpoint(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Var(x) => write!(f, "{x}"),
            Channel::Endpoint(e) => write!(f, "{e}"),
        }
    }
}

/// `tight` asks for parentheses around forms whose scope would otherwise extend right.
fn write_process(f: &mut fmt::Formatter<'_>, p: &Process, tight: bool) -> fmt::Result {
    let open = tight && matches!(p, Process::Par(_) | Process::Restrict { .. } | Process::Def { .. });
    if open {
        f.write_str("(")?;
    }
    match p {
        Process::Nil => f.write_str("0")?,
        Process::Error => f.write_str("error")?,
        Process::Crashed(e) => write!(f, "stopped {e}")?,
        Process::Par(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(" | ")?;
                }
                write_process(f, q, true)?;
            }
        }
        Process::Restrict {
            session,
            annotation,
            body,
        } => {
            write!(f, "new {session}")?;
            if !annotation.entries.is_empty() {
                f.write_str(":{")?;
                for (i, (r, t)) in annotation.entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{r}: {t}")?;
                }
                f.write_str("}")?;
            }
            if !annotation.reliable.is_empty() {
                let rs: Vec<&str> = annotation.reliable.iter().map(|r| r.as_str()).collect();
                write!(f, " reliable {{{}}}", rs.join(", "))?;
            }
            f.write_str(" in ")?;
            write_process(f, body, false)?;
        }
        Process::Select {
            chan,
            to,
            label,
            value,
            cont,
        } => {
            write!(f, "{chan}[{to}]!{label}")?;
            if *value != Value::Unit {
                write!(f, "({value})")?;
            }
            if **cont != Process::Nil {
                f.write_str(".")?;
                write_process(f, cont, true)?;
            }
        }
        Process::Branch {
            chan,
            from,
            branches,
        } => {
            write!(f, "{chan}[{from}]?{{")?;
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", b.label)?;
                if let Some(x) = &b.binder {
                    write!(f, "({x})")?;
                }
                f.write_str(".")?;
                write_process(f, &b.body, true)?;
            }
            f.write_str("}")?;
        }
        Process::Def { def, body } => {
            write!(f, "def {}(", def.name)?;
            for (i, (x, t)) in def.params.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}: {t}")?;
            }
            f.write_str(") = ")?;
            write_process(f, &def.body, false)?;
            f.write_str(" in ")?;
            write_process(f, body, false)?;
        }
        Process::Call { name, args } => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
    }
    if open {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_process(f, self, false)
    }
}

/// Render a document in the syntax accepted by [`parse_process`].
pub fn print_process_doc(doc: &ProcessDoc) -> String {
    let mut out = String::new();
    for (name, params) in &doc.theta.decls {
        let ps: Vec<String> = params.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!("decl {name}({})\n", ps.join(", ")));
    }
    out.push_str(&doc.process.to_string());
    out.push('\n');
    out
}
