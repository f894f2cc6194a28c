//! Recursive-descent parser for the query language.
//!
//! ```text
//! program  := (ruledef | querydef)*
//! ruledef  := "pred" name "(" vars ")" ":=" formula "."
//! querydef := "query" name ":=" formula "."
//! formula  := conj ("or" conj)*
//! conj     := unary ("and" unary)*
//! unary    := "not" unary | "exists" vars ":" unary | "(" formula ")" | atom
//! atom     := name "(" term ("," term)* ")"
//! term     := VARIABLE | STRING
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::iter::Peekable;
use std::str::CharIndices;

use thiserror::Error;

use super::ast::{Atom, Formula, Program, QueryDef, RuleDef, Span, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl ParseError {
    fn at(span: Span, message: impl Into<String>) -> Self {
        ParseError {
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Var(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Colon,
    Define,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name `{n}`"),
            Tok::Var(v) => format!("variable `{v}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Define => "`:=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    chars: Peekable<CharIndices<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.char_indices().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn ident(&mut self, first: char) -> String {
        let mut s = String::from(first);
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn string(&mut self, start: Span) -> Result<String, ParseError> {
        let mut s = String::new();
        loop {
            let here = Span::new(self.line, self.col);
            match self.bump() {
                None | Some('\n') => return Err(ParseError::at(start, "unterminated string literal")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c) => {
                        return Err(ParseError::at(
                            here,
                            format!("unknown escape `\\{c}` in string literal"),
                        ))
                    }
                    None => return Err(ParseError::at(start, "unterminated string literal")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, Span), ParseError> {
        self.skip_trivia();
        let span = Span::new(self.line, self.col);
        let Some(c) = self.bump() else {
            return Ok((Tok::Eof, span));
        };
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            ':' => {
                if self.peek() == Some('=') {
                    self.bump();
                    Tok::Define
                } else {
                    Tok::Colon
                }
            }
            '"' => Tok::Str(self.string(span)?),
            c if c.is_ascii_uppercase() => Tok::Var(self.ident(c)),
            c if c.is_ascii_lowercase() || c == '_' => Tok::Name(self.ident(c)),
            c => return Err(ParseError::at(span, format!("unexpected character `{c}`"))),
        };
        Ok((tok, span))
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

const KEYWORDS: [&str; 6] = ["pred", "query", "exists", "and", "or", "not"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn advance(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn expect(&mut self, want: Tok) -> Result<Span, ParseError> {
        let (tok, span) = self.advance();
        if tok == want {
            Ok(span)
        } else {
            Err(ParseError::at(
                span,
                format!("expected {}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn unexpected<T>(&self, what: &str) -> Result<T, ParseError> {
        Err(ParseError::at(
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        ))
    }

    fn name(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let (_, span) = self.advance();
                Ok((n, span))
            }
            _ => self.unexpected("a name"),
        }
    }

    fn vars(&mut self) -> Result<Vec<String>, ParseError> {
        let mut vars = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Var(v) => {
                    self.advance();
                    vars.push(v);
                }
                _ => return self.unexpected("a variable"),
            }
            if *self.peek() == Tok::Comma {
                self.advance();
            } else {
                return Ok(vars);
            }
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut program = Program::default();
        loop {
            if *self.peek() == Tok::Eof {
                return Ok(program);
            }
            if self.is_keyword("pred") {
                let (_, span) = self.advance();
                let (name, _) = self.name()?;
                self.expect(Tok::LParen)?;
                let params = self.vars()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Define)?;
                let body = self.formula()?;
                self.expect(Tok::Dot)?;
                program.rules.push(RuleDef {
                    name,
                    params,
                    body,
                    span,
                });
            } else if self.is_keyword("query") {
                let (_, span) = self.advance();
                let (name, _) = self.name()?;
                self.expect(Tok::Define)?;
                let body = self.formula()?;
                self.expect(Tok::Dot)?;
                program.queries.push(QueryDef { name, body, span });
            } else {
                return self.unexpected("`pred` or `query`");
            }
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.conj()?];
        while self.is_keyword("or") {
            self.advance();
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unary()?];
        while self.is_keyword("and") {
            self.advance();
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.is_keyword("not") {
            self.advance();
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        if self.is_keyword("exists") {
            self.advance();
            let vars = self.vars()?;
            self.expect(Tok::Colon)?;
            return Ok(Formula::Exists(vars, Box::new(self.unary()?)));
        }
        if *self.peek() == Tok::LParen {
            self.advance();
            let f = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(f);
        }
        self.atom().map(Formula::Atom)
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let (pred, span) = self.name()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        loop {
            let (tok, tspan) = self.advance();
            match tok {
                Tok::Var(v) => args.push(Term::Var(v)),
                Tok::Str(s) => args.push(Term::Sym(s)),
                other => {
                    return Err(ParseError::at(
                        tspan,
                        format!("expected a variable or string, found {}", other.describe()),
                    ))
                }
            }
            match self.advance() {
                (Tok::Comma, _) => continue,
                (Tok::RParen, _) => break,
                (other, s) => {
                    return Err(ParseError::at(
                        s,
                        format!("expected `,` or `)`, found {}", other.describe()),
                    ))
                }
            }
        }
        Ok(Atom { pred, args, span })
    }
}

/// Parses a whole program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let t = lexer.next_token()?;
        let eof = t.0 == Tok::Eof;
        toks.push(t);
        if eof {
            break;
        }
    }
    Parser { toks, pos: 0 }.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program() {
        assert_eq!(parse_program("").unwrap(), Program::default());
        assert_eq!(parse_program("  # only a comment\n").unwrap(), Program::default());
    }

    #[test]
    fn side_rule_is_a_disjunction() {
        let p = parse_program("pred side(A,B) := left(A,B) or right(A,B).").unwrap();
        assert_eq!(p.rules.len(), 1);
        let r = &p.rules[0];
        assert_eq!(r.params, vec!["A", "B"]);
        let ab = || vec![Term::var("A"), Term::var("B")];
        assert_eq!(
            r.body,
            Formula::Or(vec![Formula::atom("left", ab()), Formula::atom("right", ab())])
        );
    }

    #[test]
    fn chains_are_flattened_but_groups_are_kept() {
        let p = parse_program("query q := exists X: (a(X) and b(X) and (c(X) and d(X))).").unwrap();
        let Formula::Exists(_, body) = &p.queries[0].body else {
            panic!()
        };
        let Formula::And(parts) = body.as_ref() else { panic!() };
        assert_eq!(parts.len(), 3);
        assert!(matches!(parts[2], Formula::And(_)));
    }

    #[test]
    fn exists_binds_tighter_than_and() {
        let p = parse_program("query q := exists X: a(X) and b(X).").unwrap();
        assert!(matches!(p.queries[0].body, Formula::And(_)));
    }

    #[test]
    fn string_escapes() {
        let p = parse_program(r#"query q := exists X: object(X, "a \"b\" \\ c")."#).unwrap();
        let atom = p.queries[0].body.atoms()[0].clone();
        assert_eq!(atom.args[1], Term::sym("a \"b\" \\ c"));
        let err = parse_program(r#"query q := exists X: object(X, "bad \q")."#).unwrap_err();
        assert!(err.message.contains("unknown escape"), "{err}");
        assert_eq!((err.line, err.col), (1, 37));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_program("pred p(A) := left(A, A)\nquery q := x.").unwrap_err();
        assert_eq!((err.line, err.col), (2, 1));
        assert!(err.message.contains("expected `.`"), "{err}");
        let err = parse_program("query q := exists x: a(x).").unwrap_err();
        assert!(err.message.contains("expected a variable"));
        let err = parse_program("query q := a(X) @").unwrap_err();
        assert!(err.message.contains("unexpected character"));
        let err = parse_program("query and := a(X).").unwrap_err();
        assert!(err.message.contains("expected a name"));
    }

    #[test]
    fn atom_spans_point_at_predicate() {
        let p = parse_program("query q :=\n  exists X: object(X, \"tool\").").unwrap();
        let atom = p.queries[0].body.atoms()[0];
        assert_eq!((atom.span.line, atom.span.col), (2, 13));
    }
}
