//! Native text formats for TBoxes, ABoxes, queries and signatures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::ParseError;
use crate::model::{Abox, Atom, Concept, ConceptInclusion, ConjQuery, Signature, Symbol, TBox, UnionQuery, Var};

/// Head variables, body (if satisfiable) and the head position.
type Rule = (Vec<Var>, Option<ConjQuery>, (usize, usize));

const KEYWORDS: &[&str] = &["Top", "and", "some", "true", "false", "SubClassOf"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    fn at(line: usize, column: usize) -> Self {
        SourceSpan { file: "<input>".into(), line, column }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

impl ParseError {
    /// Attributes the error to a named file.
    pub fn in_file(mut self, file: impl Into<String>) -> Self {
        self.span.file = file.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Equals,
    Turnstile,
    Star,
    Pipe,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Turnstile => f.write_str("`:-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Pipe => f.write_str("`|`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (l, k) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        match c {
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            c if c.is_whitespace() => bump(&mut chars),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(s), line: l, col: k });
            }
            ':' => {
                bump(&mut chars);
                if chars.peek() == Some(&'-') {
                    bump(&mut chars);
                    out.push(Token { tok: Tok::Turnstile, line: l, col: k });
                } else {
                    return Err(err(l, k, "expected `:-`"));
                }
            }
            _ => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '=' => Tok::Equals,
                    '*' => Tok::Star,
                    '|' => Tok::Pipe,
                    other => return Err(err(l, k, &format!("unexpected character {other:?}"))),
                };
                bump(&mut chars);
                out.push(Token { tok, line: l, col: k });
            }
        }
    }
    Ok(out)
}

fn err(line: usize, col: usize, msg: &str) -> ParseError {
    ParseError { span: SourceSpan::at(line, col), message: msg.to_string() }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    allow_reserved: bool,
}

impl Parser {
    fn new(text: &str, allow_reserved: bool) -> Result<Self, ParseError> {
        let toks = lex(text)?;
        let lines = text.split('\n').count();
        let last_col = text.rsplit('\n').next().map(|l| l.chars().count() + 1).unwrap_or(1);
        Ok(Parser { toks, pos: 0, end: (lines, last_col), allow_reserved })
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_tok(&self) -> Option<&Tok> {
        self.peek().map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn error(&self, msg: &str) -> ParseError {
        let (l, c) = self.here();
        let found = match self.peek() {
            Some(t) => format!("{}", t.tok),
            None => "end of input".to_string(),
        };
        err(l, c, &format!("{msg}, found {found}"))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek_tok() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {tok}")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek_tok() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn raw_ident(&mut self) -> Result<(String, usize, usize), ParseError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), line, col }) => {
                let r = (s.clone(), *line, *col);
                self.pos += 1;
                Ok(r)
            }
            _ => Err(self.error("expected a name")),
        }
    }

    /// A user-level name: not a keyword, no reserved marker, starts with a letter.
    fn name(&mut self) -> Result<Symbol, ParseError> {
        let (s, l, c) = self.raw_ident()?;
        self.check_name(&s, l, c)?;
        Ok(Symbol::from(s))
    }

    fn check_name(&self, s: &str, l: usize, c: usize) -> Result<(), ParseError> {
        if KEYWORDS.contains(&s) {
            return Err(err(l, c, &format!("`{s}` is a keyword and cannot be used as a name")));
        }
        if !self.allow_reserved {
            if !s.starts_with(|ch: char| ch.is_ascii_alphabetic()) {
                return Err(err(l, c, &format!("name `{s}` must start with a letter")));
            }
            if s.contains(crate::model::RESERVED_MARKER) {
                return Err(err(l, c, &format!("name `{s}` uses the reserved marker `__`")));
            }
        }
        Ok(())
    }

    fn concept(&mut self) -> Result<Concept, ParseError> {
        let (s, l, c) = self.raw_ident()?;
        match s.as_str() {
            "Top" => Ok(Concept::Top),
            "and" => {
                self.expect(Tok::LParen)?;
                let mut parts = vec![self.concept()?];
                while self.eat(&Tok::Comma) {
                    parts.push(self.concept()?);
                }
                self.expect(Tok::RParen)?;
                Ok(Concept::and(parts))
            }
            "some" => {
                self.expect(Tok::LParen)?;
                let r = self.name()?;
                self.expect(Tok::Comma)?;
                let f = self.concept()?;
                self.expect(Tok::RParen)?;
                Ok(Concept::exists(r, f))
            }
            _ => {
                self.check_name(&s, l, c)?;
                Ok(Concept::Name(Symbol::from(s)))
            }
        }
    }

    fn tbox(&mut self) -> Result<TBox, ParseError> {
        let mut t = TBox::new();
        let mut last_line = 0;
        while !self.at_end() {
            let (line, _) = self.here();
            if line == last_line {
                return Err(self.error("expected a line break before the next inclusion"));
            }
            let lhs = self.concept()?;
            if !matches!(self.peek_tok(), Some(Tok::Ident(kw)) if kw == "SubClassOf") {
                return Err(self.error("expected `SubClassOf`"));
            }
            self.pos += 1;
            let rhs = self.concept()?;
            last_line = self.toks[self.pos - 1].line;
            t.insert(ConceptInclusion::new(lhs, rhs));
        }
        Ok(t)
    }

    fn var(&mut self) -> Result<Var, ParseError> {
        self.name()
    }

    /// `q(x, y) :- A(x), r(x, z), x = y.` Returns `None` for a `false` body.
    fn rule(&mut self) -> Result<Rule, ParseError> {
        let start = self.here();
        self.name()?;
        self.expect(Tok::LParen)?;
        let mut head = Vec::new();
        if !self.eat(&Tok::RParen) {
            head.push(self.var()?);
            while self.eat(&Tok::Comma) {
                head.push(self.var()?);
            }
            self.expect(Tok::RParen)?;
        }
        self.expect(Tok::Turnstile)?;
        let mut atoms = Vec::new();
        let mut is_false = false;
        let keyword = match self.peek_tok() {
            Some(Tok::Ident(s)) if s == "true" || s == "false" => Some(s.clone()),
            _ => None,
        };
        if let Some(kw) = keyword {
            self.pos += 1;
            is_false = kw == "false";
        } else {
            loop {
                let (s, l, c) = self.raw_ident()?;
                self.check_name(&s, l, c)?;
                if self.eat(&Tok::Equals) {
                    let y = self.var()?;
                    atoms.push(Atom::Eq(Symbol::from(s), y));
                } else {
                    self.expect(Tok::LParen)?;
                    let x = self.var()?;
                    if self.eat(&Tok::Comma) {
                        let y = self.var()?;
                        self.expect(Tok::RParen)?;
                        atoms.push(Atom::Role(Symbol::from(s), x, y));
                    } else {
                        self.expect(Tok::RParen)?;
                        atoms.push(Atom::Concept(Symbol::from(s), x));
                    }
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::Dot)?;
        if is_false {
            let mut seen = BTreeSet::new();
            if let Some(v) = head.iter().find(|v| !seen.insert((*v).clone())) {
                return Err(err(start.0, start.1, &format!("answer variable {v} repeated")));
            }
            return Ok((head, None, start));
        }
        let q = ConjQuery::new(head.clone(), atoms).map_err(|e| err(start.0, start.1, &e.to_string()))?;
        Ok((head, Some(q), start))
    }

    fn abox(&mut self) -> Result<Abox, ParseError> {
        let mut a = Abox::new();
        while !self.at_end() {
            let name = self.name()?;
            self.expect(Tok::LParen)?;
            let x = self.name()?;
            if self.eat(&Tok::Comma) {
                let y = self.name()?;
                self.expect(Tok::RParen)?;
                a.add_role(name, x, y);
            } else {
                self.expect(Tok::RParen)?;
                a.add_concept(name, x);
            }
            self.eat(&Tok::Dot);
        }
        Ok(a)
    }

    fn signature(&mut self) -> Result<Signature, ParseError> {
        let mut sig = Signature::default();
        while !self.at_end() {
            if self.eat(&Tok::Star) {
                sig.full = true;
                continue;
            }
            let n = self.name()?;
            sig.concept_names.insert(n.clone());
            sig.role_names.insert(n);
        }
        Ok(sig)
    }
}

fn finish<T>(p: &Parser, v: T) -> Result<T, ParseError> {
    if p.at_end() {
        Ok(v)
    } else {
        Err(p.error("unexpected trailing input"))
    }
}

pub fn parse_concept(text: &str) -> Result<Concept, ParseError> {
    let mut p = Parser::new(text, false)?;
    let c = p.concept()?;
    finish(&p, c)
}

/// Like [`parse_concept`], but accepts generated names containing the
/// reserved marker.
pub fn parse_concept_internal(text: &str) -> Result<Concept, ParseError> {
    let mut p = Parser::new(text, true)?;
    let c = p.concept()?;
    finish(&p, c)
}

pub fn parse_tbox(text: &str) -> Result<TBox, ParseError> {
    Parser::new(text, false)?.tbox()
}

pub fn parse_abox(text: &str) -> Result<Abox, ParseError> {
    Parser::new(text, false)?.abox()
}

pub fn parse_signature(text: &str) -> Result<Signature, ParseError> {
    Parser::new(text, false)?.signature()
}

pub fn parse_cq(text: &str) -> Result<ConjQuery, ParseError> {
    let mut p = Parser::new(text, false)?;
    let (_, q, start) = p.rule()?;
    let q = q.ok_or_else(|| err(start.0, start.1, "a conjunctive query cannot be `false`"))?;
    finish(&p, q)
}

/// Like [`parse_cq`], but accepts generated names.
pub fn parse_cq_internal(text: &str) -> Result<ConjQuery, ParseError> {
    let mut p = Parser::new(text, true)?;
    let (_, q, start) = p.rule()?;
    let q = q.ok_or_else(|| err(start.0, start.1, "a conjunctive query cannot be `false`"))?;
    finish(&p, q)
}

/// Rules separated by `|`; `q(x) :- false.` is the empty union.
pub fn parse_ucq(text: &str) -> Result<UnionQuery, ParseError> {
    let mut p = Parser::new(text, false)?;
    let mut head: Option<Vec<Var>> = None;
    let mut disjuncts = Vec::new();
    loop {
        let (h, q, start) = p.rule()?;
        match &head {
            None => head = Some(h),
            Some(prev) if *prev != h => {
                return Err(err(start.0, start.1, "all disjuncts must share the same answer variables"));
            }
            _ => {}
        }
        disjuncts.extend(q);
        if p.at_end() {
            break;
        }
        p.eat(&Tok::Pipe);
    }
    let head = head.unwrap_or_default();
    UnionQuery::new(head, disjuncts).map_err(|e| err(1, 1, &e.to_string()))
}

/// Renders a CQ with quantified variables renamed `y0, y1, ...` in canonical
/// order, skipping names already used by answer variables.
pub fn serialize_cq(q: &ConjQuery) -> String {
    let q = readable(q);
    let head: Vec<&str> = q.answer_vars().iter().map(|v| v.as_str()).collect();
    let body = if q.is_empty() {
        "true".to_string()
    } else {
        q.atoms().iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
    };
    format!("q({}) :- {}.", head.join(", "), body)
}

pub(crate) fn readable(q: &ConjQuery) -> ConjQuery {
    let c = q.canonical();
    let answer: BTreeSet<&Var> = c.answer_vars().iter().collect();
    let mut quantified: Vec<Var> = c.quantified_vars().into_iter().collect();
    // canonical names are __y<i>; order numerically
    quantified.sort_by_key(|v| {
        v.as_str().strip_prefix("__y").and_then(|n| n.parse::<usize>().ok()).unwrap_or(usize::MAX)
    });
    let mut map = BTreeMap::new();
    let mut next = 0usize;
    for v in quantified {
        let name = loop {
            let cand = Var::from(format!("y{next}"));
            next += 1;
            if !answer.contains(&cand) {
                break cand;
            }
        };
        map.insert(v, name);
    }
    c.rename(&map)
}

pub fn serialize_ucq(u: &UnionQuery) -> String {
    let u = u.canonical();
    if u.is_empty() {
        let head: Vec<&str> = u.answer_vars().iter().map(|v| v.as_str()).collect();
        return format!("q({}) :- false.", head.join(", "));
    }
    u.disjuncts().iter().map(serialize_cq).collect::<Vec<_>>().join("\n| ")
}

pub fn serialize_tbox(t: &TBox) -> String {
    t.iter().map(|ci| format!("{ci}\n")).collect()
}
