use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(String),
    Str(String),
    Sym(char),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &str = "{}()[].,:;!?=|";

/// Split `src` into tokens. `#` and `//` start comments running to end of line.
pub fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let bump = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Ident(s),
                line: tl,
                col: tc,
            });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut s = String::new();
            s.push(c);
            bump(&mut i, &mut line, &mut col, c);
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
            }
            let is_real = i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit();
            if is_real {
                s.push('.');
                bump(&mut i, &mut line, &mut col, '.');
                while i < chars.len() && chars[i].is_ascii_digit() {
                    s.push(chars[i]);
                    {
                    let ch = chars[i];
                    bump(&mut i, &mut line, &mut col, ch);
                }
                }
                out.push(Token {
                    tok: Tok::Real(s),
                    line: tl,
                    col: tc,
                });
            } else {
                let n = s.parse::<i64>().map_err(|_| SyntaxError::Parse {
                    line: tl,
                    col: tc,
                    message: format!("integer literal {s} out of range"),
                })?;
                out.push(Token {
                    tok: Tok::Int(n),
                    line: tl,
                    col: tc,
                });
            }
        } else if c == '"' {
            bump(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => {
                        return Err(SyntaxError::Parse {
                            line: tl,
                            col: tc,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some('"') => {
                        bump(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') => {
                        bump(&mut i, &mut line, &mut col, '\\');
                        let e = chars.get(i).copied().unwrap_or('\\');
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        bump(&mut i, &mut line, &mut col, e);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                col: tc,
            });
        } else if SYMBOLS.contains(c) {
            bump(&mut i, &mut line, &mut col, c);
            out.push(Token {
                tok: Tok::Sym(c),
                line: tl,
                col: tc,
            });
        } else {
            return Err(SyntaxError::Parse {
                line: tl,
                col: tc,
                message: format!("unexpected character {c:?}"),
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}
