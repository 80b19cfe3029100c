use std::fmt;

use thiserror::Error;

use crate::names::is_name_char;

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// `#word`, stored without the `#`.
    Keyword(String),
    Name(String),
    Number { value: f64, text: String },
    Colon,
    Comma,
    Eq,
    Semi,
    Dot,
    Star,
    Plus,
    PlusEq,
    LParen,
    RParen,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "#{k}"),
            TokenKind::Name(n) => write!(f, "{n}"),
            TokenKind::Number { text, .. } => write!(f, "{text}"),
            TokenKind::Colon => f.write_str(":"),
            TokenKind::Comma => f.write_str(","),
            TokenKind::Eq => f.write_str("="),
            TokenKind::Semi => f.write_str(";"),
            TokenKind::Dot => f.write_str("."),
            TokenKind::Star => f.write_str("*"),
            TokenKind::Plus => f.write_str("+"),
            TokenKind::PlusEq => f.write_str("+="),
            TokenKind::LParen => f.write_str("("),
            TokenKind::RParen => f.write_str(")"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: unexpected character {ch:?}")]
pub struct LexError {
    pub pos: Pos,
    pub ch: char,
}

struct Cursor<'a> {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
    _src: &'a str,
}

impl Cursor<'_> {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            if !f(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn error_here(&self) -> LexError {
        LexError { pos: self.pos(), ch: self.peek(0).unwrap_or('\0') }
    }
}

fn is_digit(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_ascii_digit())
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor { chars: text.chars().collect(), i: 0, line: 1, col: 1, _src: text };
    let mut out = Vec::new();
    while let Some(c) = cur.peek(0) {
        let pos = cur.pos();
        if c.is_ascii_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek(1) == Some('/') {
            cur.take_while(|c| c != '\n');
            continue;
        }
        let kind = match c {
            '#' => {
                if !cur.peek(1).is_some_and(|c| c.is_ascii_alphabetic()) {
                    cur.bump();
                    return Err(cur.error_here());
                }
                cur.bump();
                TokenKind::Keyword(cur.take_while(|c| c.is_ascii_alphanumeric()))
            }
            '-' => {
                if !is_digit(cur.peek(1)) {
                    return Err(cur.error_here());
                }
                cur.bump();
                match lex_numeric(&mut cur)? {
                    TokenKind::Number { value, text } => TokenKind::Number { value: -value, text: format!("-{text}") },
                    _ => return Err(LexError { pos, ch: '-' }),
                }
            }
            c if c.is_ascii_digit() => lex_numeric(&mut cur)?,
            c if is_name_char(c) => TokenKind::Name(cur.take_while(is_name_char)),
            '+' => {
                cur.bump();
                if cur.peek(0) == Some('=') {
                    cur.bump();
                    TokenKind::PlusEq
                } else {
                    TokenKind::Plus
                }
            }
            ':' | ',' | '=' | ';' | '.' | '*' | '(' | ')' => {
                cur.bump();
                match c {
                    ':' => TokenKind::Colon,
                    ',' => TokenKind::Comma,
                    '=' => TokenKind::Eq,
                    ';' => TokenKind::Semi,
                    '.' => TokenKind::Dot,
                    '*' => TokenKind::Star,
                    '(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                }
            }
            _ => return Err(cur.error_here()),
        };
        out.push(Token { kind, pos });
    }
    Ok(out)
}

/// A run starting with a digit: a number when it reads as one, otherwise a
/// name (names may start with digits, e.g. `2nd`).
fn lex_numeric(cur: &mut Cursor<'_>) -> Result<TokenKind, LexError> {
    let at = |k: usize| cur.chars.get(k).copied();
    let digits_from = |mut k: usize| {
        while is_digit(at(k)) {
            k += 1;
        }
        k
    };
    let mut end = digits_from(cur.i);
    let mut punctuated = false;
    if at(end) == Some('.') && is_digit(at(end + 1)) {
        end = digits_from(end + 1);
        punctuated = true;
    }
    if matches!(at(end), Some('e') | Some('E')) {
        if is_digit(at(end + 1)) {
            end = digits_from(end + 1);
        } else if matches!(at(end + 1), Some('+') | Some('-')) && is_digit(at(end + 2)) {
            end = digits_from(end + 2);
            punctuated = true;
        }
    }
    if at(end).is_some_and(is_name_char) {
        if punctuated {
            while cur.i < end {
                cur.bump();
            }
            return Err(cur.error_here());
        }
        return Ok(TokenKind::Name(cur.take_while(is_name_char)));
    }
    let mut text = String::new();
    while cur.i < end {
        text.push(cur.bump().expect("in bounds"));
    }
    let value: f64 = text.parse().map_err(|_| cur.error_here())?;
    if !value.is_finite() {
        return Err(cur.error_here());
    }
    Ok(TokenKind::Number { value, text })
}
