//! Text formats: `.mpst` context documents, `.proc` process documents, and their printers.

mod lexer;
mod process;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::context::{Endpoint, TypingContext};
use crate::name::{Name, Role, Session};
use crate::types::{
    well_formed, BasicType, Branch, Branches, ChoiceKind, Label, Payload, SessionType, VarHint,
};

pub use process::{parse_process, print_process_doc, ProcessDoc};

use lexer::{lex, Tok, Token};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("{line}:{col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: ill-formed type for {subject}: {details}")]
    IllFormed {
        line: usize,
        col: usize,
        subject: String,
        details: String,
    },
}

/// A parsed `.mpst` document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextDoc {
    pub session: Option<Session>,
    pub reliable: BTreeSet<Role>,
    pub context: TypingContext,
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const RESERVED: &[&str] = &["end", "stop", "rec", "crash"];

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Parser, SyntaxError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub(crate) fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub(crate) fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    pub(crate) fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        let (line, col) = self.here();
        Err(SyntaxError::Parse {
            line,
            col,
            message: message.into(),
        })
    }

    pub(crate) fn is_sym(&self, c: char) -> bool {
        *self.peek() == Tok::Sym(c)
    }

    pub(crate) fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub(crate) fn eat_sym(&mut self, c: char) -> bool {
        if self.is_sym(c) {
            self.advance();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}', found {}", describe(self.peek())))
        }
    }

    pub(crate) fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    /// `type := end | stop | rec X . type | IDENT ! branches | IDENT ? branches | X`
    pub(crate) fn parse_type(&mut self, env: &mut Vec<String>) -> Result<Arc<SessionType>, SyntaxError> {
        let id = self.expect_ident()?;
        match id.as_str() {
            "end" => return Ok(SessionType::end()),
            "stop" => return Ok(SessionType::stop()),
            "rec" => {
                let var = self.expect_ident()?;
                self.expect_sym('.')?;
                env.push(var.clone());
                let body = self.parse_type(env);
                env.pop();
                return Ok(Arc::new(SessionType::Rec {
                    hint: VarHint(Name::from(var)),
                    body: body?,
                }));
            }
            _ => {}
        }
        let kind = if self.eat_sym('!') {
            ChoiceKind::Internal
        } else if self.eat_sym('?') {
            ChoiceKind::External
        } else {
            let index = env
                .iter()
                .rev()
                .position(|v| *v == id)
                .unwrap_or(env.len());
            return Ok(Arc::new(SessionType::Var {
                index,
                hint: VarHint(Name::from(id)),
            }));
        };
        self.expect_sym('{')?;
        let mut branches = Vec::new();
        loop {
            let label = Label::named(&self.expect_ident()?);
            let payload = if self.eat_sym('(') {
                let p = self.parse_payload(env)?;
                self.expect_sym(')')?;
                p
            } else {
                Payload::UNIT
            };
            self.expect_sym('.')?;
            let cont = self.parse_type(env)?;
            branches.push(Branch {
                label,
                payload,
                cont,
            });
            if self.eat_sym(',') {
                if self.eat_sym('}') {
                    break;
                }
                continue;
            }
            self.expect_sym('}')?;
            break;
        }
        Ok(Arc::new(SessionType::Choice {
            kind,
            peer: Name::from(id),
            branches: Branches(branches),
        }))
    }

    /// A basic type keyword, or a session type.
    pub(crate) fn parse_payload(&mut self, env: &mut Vec<String>) -> Result<Payload, SyntaxError> {
        if let Tok::Ident(s) = self.peek() {
            if let Some(b) = BasicType::from_keyword(s) {
                if !matches!(self.peek_at(1), Tok::Sym('!') | Tok::Sym('?')) {
                    self.advance();
                    return Ok(Payload::Basic(b));
                }
            }
        }
        Ok(Payload::Session(self.parse_type(env)?))
    }

    /// Parse a closed type and check well-formedness, reporting at its start position.
    pub(crate) fn parse_closed_type(&mut self, subject: &str) -> Result<Arc<SessionType>, SyntaxError> {
        let (line, col) = self.here();
        let t = self.parse_type(&mut Vec::new())?;
        check_type(&t, subject, line, col)?;
        Ok(t)
    }

    pub(crate) fn parse_closed_payload(&mut self, subject: &str) -> Result<Payload, SyntaxError> {
        let (line, col) = self.here();
        let p = self.parse_payload(&mut Vec::new())?;
        if let Payload::Session(t) = &p {
            check_type(t, subject, line, col)?;
        }
        Ok(p)
    }
}

fn check_type(t: &SessionType, subject: &str, line: usize, col: usize) -> Result<(), SyntaxError> {
    well_formed(t).map_err(|vs| SyntaxError::IllFormed {
        line,
        col,
        subject: subject.to_string(),
        details: vs
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; "),
    })
}

pub(crate) fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(n) => format!("'{n}'"),
        Tok::Real(r) => format!("'{r}'"),
        Tok::Str(s) => format!("{s:?}"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parse a single closed session type.
pub fn parse_type(src: &str) -> Result<Arc<SessionType>, SyntaxError> {
    let mut p = Parser::new(src)?;
    let t = p.parse_closed_type("type")?;
    if !p.at_eof() {
        return p.err(format!("unexpected {} after type", describe(p.peek())));
    }
    Ok(t)
}

/// Parse an `.mpst` document:
///
/// ```text
/// session s
/// reliable p, r
/// s[p] = q!{req(str).q?{res.end, crash.end}}
/// ```
pub fn parse_context(src: &str) -> Result<ContextDoc, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut session: Option<Session> = None;
    let mut reliable = BTreeSet::new();
    let mut reliable_pos = None;
    let mut context = TypingContext::new();
    let mut first_session: Option<Session> = None;

    if p.is_kw("session") && matches!(p.peek_at(1), Tok::Ident(_)) && *p.peek_at(2) != Tok::Sym('[') {
        p.advance();
        session = Some(Name::from(p.expect_ident()?));
    }
    if p.is_kw("reliable") && *p.peek_at(1) != Tok::Sym('[') {
        p.advance();
        reliable_pos = Some(p.here());
        let braced = p.eat_sym('{');
        while matches!(p.peek(), Tok::Ident(_)) && *p.peek_at(1) != Tok::Sym('[') {
            reliable.insert(Name::from(p.expect_ident()?));
            if !p.eat_sym(',') {
                break;
            }
        }
        if braced {
            p.expect_sym('}')?;
        }
        p.eat_sym(';');
    }
    while !p.at_eof() {
        let (line, col) = p.here();
        let s = p.expect_ident()?;
        p.expect_sym('[')?;
        let r = p.expect_ident()?;
        p.expect_sym(']')?;
        p.expect_sym('=')?;
        let ep = Endpoint {
            session: Name::from(s),
            role: Name::from(r),
        };
        if let Some(hs) = &session {
            if *hs != ep.session {
                return Err(SyntaxError::Parse {
                    line,
                    col,
                    message: format!("binding for {ep} does not belong to session {hs}"),
                });
            }
        }
        first_session.get_or_insert_with(|| ep.session.clone());
        let t = p.parse_closed_type(&ep.to_string())?;
        if context.insert(ep.clone(), t).is_some() {
            return Err(SyntaxError::Parse {
                line,
                col,
                message: format!("duplicate binding for {ep}"),
            });
        }
        p.eat_sym(';');
    }
    let session = session.or(first_session);
    if let (Some(s), Some((line, col))) = (&session, reliable_pos) {
        let roles = context.roles(s);
        if let Some(r) = reliable.iter().find(|r| !roles.contains(*r)) {
            return Err(SyntaxError::Parse {
                line,
                col,
                message: format!("reliable role {r} has no entry in session {s}"),
            });
        }
    }
    Ok(ContextDoc {
        session,
        reliable,
        context,
    })
}

fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name) || BasicType::from_keyword(name).is_some()
}

pub(crate) fn write_type(f: &mut fmt::Formatter<'_>, t: &SessionType, env: &mut Vec<String>) -> fmt::Result {
    match t {
        SessionType::End => f.write_str("end"),
        SessionType::Stop => f.write_str("stop"),
        SessionType::Var { index, hint } => {
            if *index < env.len() {
                f.write_str(&env[env.len() - 1 - index])
            } else {
                write!(f, "{}", hint.0)
            }
        }
        SessionType::Rec { hint, body } => {
            let base = hint.0.as_str();
            let mut name = base.to_string();
            let mut n = 1;
            while env.contains(&name) || is_reserved(&name) {
                name = format!("{base}{n}");
                n += 1;
            }
            write!(f, "rec {name}.")?;
            env.push(name);
            let r = write_type(f, body, env);
            env.pop();
            r
        }
        SessionType::Choice {
            kind,
            peer,
            branches,
        } => {
            let sym = match kind {
                ChoiceKind::Internal => '!',
                ChoiceKind::External => '?',
            };
            write!(f, "{peer}{sym}{{")?;
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", b.label)?;
                match &b.payload {
                    Payload::Basic(BasicType::Unit) => {}
                    Payload::Basic(bt) => write!(f, "({bt})")?,
                    Payload::Session(s) => {
                        f.write_str("(")?;
                        write_type(f, s, env)?;
                        f.write_str(")")?;
                    }
                }
                f.write_str(".")?;
                write_type(f, &b.cont, env)?;
            }
            f.write_str("}")
        }
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_type(f, self, &mut Vec::new())
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Basic(b) => write!(f, "{b}"),
            Payload::Session(t) => write!(f, "{t}"),
        }
    }
}

impl fmt::Display for TypingContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (ep, t) in self.entries() {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{ep}: {t}")?;
        }
        for (x, p) in self.vars() {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{x}: {p}")?;
        }
        f.write_str("}")
    }
}

/// Render a document in the `.mpst` syntax accepted by [`parse_context`].
pub fn print_context_doc(doc: &ContextDoc) -> String {
    let mut out = String::new();
    if let Some(s) = &doc.session {
        out.push_str(&format!("session {s}\n"));
    }
    if !doc.reliable.is_empty() {
        let roles: Vec<&str> = doc.reliable.iter().map(|r| r.as_str()).collect();
        out.push_str(&format!("reliable {}\n", roles.join(", ")));
    }
    for (ep, t) in doc.context.entries() {
        out.push_str(&format!("{ep} = {t}\n"));
    }
    out
}
