//! Concrete text syntax.
//!
//! ```text
//! z ~ normal(m, v)                      // v is the VARIANCE
//! obs(normal(m, v), 1.5)
//! obs(normal(m, v), [1.5, 2.0, -0.3])   // k consecutive observes
//! x := if (a > b) c else d
//! x := 2.5
//! x := y
//! x := p(a, b)  |  x := p(a)  |  x := a + b  |  x := a - b  |  x := a * b
//! ```
//!
//! Commands are separated by newlines or `;`. `//` starts a comment.
//! An observed value may also name a variable previously bound by a
//! constant assignment; its literal is substituted.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{Command, ProcName, Program, Var};
use crate::semantics::ProcedureRegistry;
use crate::typeck::TypeError;

#[derive(Clone, Debug, PartialEq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown procedure `{0}`")]
    UnknownProcedure(String),
    #[error("procedure `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Type(TypeError),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Tilde,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Gt,
    Plus,
    Minus,
    Star,
    Sep,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(msg),
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut push = |tok| out.push(Token { tok, line: l0, col: c0 });
        match c {
            '\n' => {
                push(Tok::Sep);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            ';' => push(Tok::Sep),
            '~' => push(Tok::Tilde),
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            '[' => push(Tok::LBracket),
            ']' => push(Tok::RBracket),
            ',' => push(Tok::Comma),
            '>' => push(Tok::Gt),
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            ':' => {
                if chars.get(i + 1) == Some(&'=') {
                    push(Tok::Assign);
                    i += 2;
                    col += 2;
                    continue;
                }
                return Err(err(l0, c0, "expected `:=`".into()));
            }
            '/' => {
                if chars.get(i + 1) == Some(&'/') {
                    while i < chars.len() && chars[i] != '\n' {
                        i += 1;
                        col += 1;
                    }
                    continue;
                }
                return Err(err(l0, c0, "unexpected `/`".into()));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let x: f64 = s
                    .parse()
                    .map_err(|_| err(l0, c0, format!("malformed number `{s}`")))?;
                push(Tok::Num(x));
                col += i - start;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                push(Tok::Ident(s));
                col += i - start;
                continue;
            }
            other => return Err(err(l0, c0, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: [&str; 4] = ["normal", "obs", "if", "else"];

struct Parser<'r> {
    toks: Vec<Token>,
    pos: usize,
    vars: HashMap<String, Var>,
    names: Vec<String>,
    consts: HashMap<Var, f64>,
    registry: &'r ProcedureRegistry,
    commands: Vec<Command>,
    /// Source position of each command, for type diagnostics.
    spans: Vec<(usize, usize)>,
}

impl<'r> Parser<'r> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, t: &Token, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: t.line,
            col: t.col,
            kind: ParseErrorKind::Syntax(msg.into()),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            self.fail(&t, format!("expected {what}"))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(()),
            _ => self.fail(&t, format!("expected `{kw}`")),
        }
    }

    fn intern(&mut self, name: &str) -> Var {
        if let Some(v) = self.vars.get(name) {
            return *v;
        }
        let v = Var(self.names.len());
        self.names.push(name.to_string());
        self.vars.insert(name.to_string(), v);
        v
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(s.clone()),
            _ => self.fail(&t, "expected a variable name"),
        }
    }

    fn var(&mut self) -> Result<Var, ParseError> {
        let s = self.ident()?;
        Ok(self.intern(&s))
    }

    fn literal(&mut self) -> Result<f64, ParseError> {
        let mut sign = 1.0;
        if self.peek().tok == Tok::Minus {
            self.next();
            sign = -1.0;
        }
        let t = self.next();
        match t.tok {
            Tok::Num(x) => Ok(sign * x),
            _ => self.fail(&t, "expected a number"),
        }
    }

    /// Observed value: literal, or a variable bound to a constant.
    fn observed_value(&mut self) -> Result<f64, ParseError> {
        match self.peek().tok.clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let t = self.next();
                match self.vars.get(&name).and_then(|v| self.consts.get(v)) {
                    Some(x) => Ok(*x),
                    None => self.fail(
                        &t,
                        format!("observed value `{name}` is not a previously assigned constant"),
                    ),
                }
            }
            _ => self.literal(),
        }
    }

    fn normal_args(&mut self) -> Result<(Var, Var), ParseError> {
        self.expect_keyword("normal")?;
        self.expect(Tok::LParen, "`(`")?;
        let m = self.var()?;
        self.expect(Tok::Comma, "`,`")?;
        let v = self.var()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok((m, v))
    }

    fn push(&mut self, cmd: Command, at: &Token) {
        if let Command::AssignConst { target, value } = &cmd {
            self.consts.insert(*target, *value);
        }
        self.commands.push(cmd);
        self.spans.push((at.line, at.col));
    }

    fn call(&mut self, target: Var, name: String, at: &Token, args: Vec<Var>) -> Result<(), ParseError> {
        let Some(entry) = self.registry.get(&name) else {
            return Err(ParseError {
                line: at.line,
                col: at.col,
                kind: ParseErrorKind::UnknownProcedure(name),
            });
        };
        if entry.arity != args.len() {
            return Err(ParseError {
                line: at.line,
                col: at.col,
                kind: ParseErrorKind::Arity {
                    name,
                    expected: entry.arity,
                    found: args.len(),
                },
            });
        }
        let cmd = Command::Call {
            target,
            proc: ProcName(name),
            args,
        };
        self.push(cmd, at);
        Ok(())
    }

    fn statement(&mut self) -> Result<(), ParseError> {
        let start = self.peek().clone();
        if let Tok::Ident(s) = &start.tok {
            if s == "obs" {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let (mean, var) = self.normal_args()?;
                self.expect(Tok::Comma, "`,`")?;
                let mut values = Vec::new();
                if self.peek().tok == Tok::LBracket {
                    self.next();
                    loop {
                        values.push(self.observed_value()?);
                        let t = self.next();
                        match t.tok {
                            Tok::Comma => continue,
                            Tok::RBracket => break,
                            _ => return self.fail(&t, "expected `,` or `]`"),
                        }
                    }
                } else {
                    values.push(self.observed_value()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                for value in values {
                    self.push(Command::Observe { mean, var, value }, &start);
                }
                return Ok(());
            }
        }
        let target = self.var()?;
        let op = self.next();
        match op.tok {
            Tok::Tilde => {
                let (mean, var) = self.normal_args()?;
                self.push(Command::Sample { target, mean, var }, &start);
                Ok(())
            }
            Tok::Assign => self.rhs(target, &start),
            _ => self.fail(&op, "expected `~` or `:=`"),
        }
    }

    fn rhs(&mut self, target: Var, start: &Token) -> Result<(), ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(_) | Tok::Minus => {
                let value = self.literal()?;
                self.push(Command::AssignConst { target, value }, start);
                Ok(())
            }
            Tok::Ident(s) if s == "if" => {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let lhs = self.var()?;
                self.expect(Tok::Gt, "`>`")?;
                let rhs = self.var()?;
                self.expect(Tok::RParen, "`)`")?;
                let then_ = self.var()?;
                self.expect_keyword("else")?;
                let else_ = self.var()?;
                let cmd = Command::IfGt {
                    target,
                    lhs,
                    rhs,
                    then_,
                    else_,
                };
                self.push(cmd, start);
                Ok(())
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                match self.peek().tok.clone() {
                    Tok::LParen => {
                        self.next();
                        let mut args = vec![self.var()?];
                        while self.peek().tok == Tok::Comma {
                            self.next();
                            args.push(self.var()?);
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        self.call(target, name, &t, args)
                    }
                    op @ (Tok::Plus | Tok::Minus | Tok::Star) => {
                        self.next();
                        let lhs = self.intern(&name);
                        let rhs = self.var()?;
                        let proc = match op {
                            Tok::Plus => "add",
                            Tok::Minus => "sub",
                            _ => "mul",
                        };
                        self.call(target, proc.to_string(), &t, vec![lhs, rhs])
                    }
                    _ => {
                        let source = self.intern(&name);
                        self.push(Command::AssignVar { target, source }, start);
                        Ok(())
                    }
                }
            }
            _ => self.fail(&t, "expected an expression"),
        }
    }

    fn program(&mut self) -> Result<(), ParseError> {
        loop {
            while self.peek().tok == Tok::Sep {
                self.next();
            }
            if self.peek().tok == Tok::Eof {
                return Ok(());
            }
            self.statement()?;
            let t = self.peek().clone();
            match t.tok {
                Tok::Sep | Tok::Eof => {}
                _ => return self.fail(&t, "expected end of command"),
            }
        }
    }
}

/// Parse without type checking. Returns the commands and the symbol table
/// (variables numbered by first occurrence).
pub fn parse_untyped_with(
    text: &str,
    registry: &ProcedureRegistry,
) -> Result<(Vec<Command>, Vec<String>), ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        vars: HashMap::new(),
        names: Vec::new(),
        consts: HashMap::new(),
        registry,
        commands: Vec::new(),
        spans: Vec::new(),
    };
    p.program()?;
    Ok((p.commands, p.names))
}

pub fn parse_untyped(text: &str) -> Result<(Vec<Command>, Vec<String>), ParseError> {
    parse_untyped_with(text, ProcedureRegistry::builtin())
}

/// Parse and type-check against a procedure registry.
pub fn parse_with(text: &str, registry: &ProcedureRegistry) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        vars: HashMap::new(),
        names: Vec::new(),
        consts: HashMap::new(),
        registry,
        commands: Vec::new(),
        spans: Vec::new(),
    };
    p.program()?;
    let spans = p.spans;
    Program::new(p.commands, p.names).map_err(|e| {
        let (line, col) = spans[e.command()];
        ParseError {
            line,
            col,
            kind: ParseErrorKind::Type(e),
        }
    })
}

/// Parse and type-check against the built-in procedures.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    parse_with(text, ProcedureRegistry::builtin())
}
