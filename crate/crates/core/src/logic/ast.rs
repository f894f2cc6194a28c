use std::fmt;

/// Line/column of a token, 1-based. Positions never take part in equality so
/// that re-parsed programs compare equal to their source.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Sym(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn sym(name: impl Into<String>) -> Self {
        Term::Sym(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Sym(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
    pub span: Span,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            pred: pred.into(),
            args,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Exists(Vec<String>, Box<Formula>),
}

impl std::ops::Not for Formula {
    type Output = Formula;

    fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }
}

impl Formula {
    pub fn atom(pred: &str, args: Vec<Term>) -> Self {
        Formula::Atom(Atom::new(pred, args))
    }

    pub fn exists(vars: &[&str], body: Formula) -> Self {
        Formula::Exists(vars.iter().map(|v| v.to_string()).collect(), Box::new(body))
    }

    /// Pre-order walk over every atom.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::Atom(a) => out.push(a),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_atoms(out)),
            Formula::Not(f) | Formula::Exists(_, f) => f.collect_atoms(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Formula,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryDef {
    pub name: String,
    pub body: Formula,
    pub span: Span,
}

impl QueryDef {
    /// First variable of the outermost `exists`, whose binding indexes the
    /// per-cell configuration map.
    pub fn subject(&self) -> Option<&str> {
        match &self.body {
            Formula::Exists(vars, _) => vars.first().map(String::as_str),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub rules: Vec<RuleDef>,
    pub queries: Vec<QueryDef>,
}

impl Program {
    pub fn rule(&self, name: &str) -> Option<&RuleDef> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn query(&self, name: &str) -> Option<&QueryDef> {
        self.queries.iter().find(|q| q.name == name)
    }

    /// Concatenates two programs, e.g. a prelude and a query file.
    pub fn merged(mut self, other: Program) -> Program {
        self.rules.extend(other.rules);
        self.queries.extend(other.queries);
        self
    }
}

/// Predicates whose truth comes from heatmap facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactPredicate {
    Object,
    Segment,
}

impl FactPredicate {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "object" => Some(FactPredicate::Object),
            "segment" => Some(FactPredicate::Segment),
            _ => None,
        }
    }

    pub fn kind(self) -> crate::heatmap::SymbolKind {
        match self {
            FactPredicate::Object => crate::heatmap::SymbolKind::Object,
            FactPredicate::Segment => crate::heatmap::SymbolKind::Segment,
        }
    }
}

/// Deterministic spatial relations between two grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Left,
    Right,
    Above,
    Below,
    Neighbor,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::Left,
        Builtin::Right,
        Builtin::Above,
        Builtin::Below,
        Builtin::Neighbor,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "left" => Some(Builtin::Left),
            "right" => Some(Builtin::Right),
            "above" => Some(Builtin::Above),
            "below" => Some(Builtin::Below),
            "neighbor" => Some(Builtin::Neighbor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Left => "left",
            Builtin::Right => "right",
            Builtin::Above => "above",
            Builtin::Below => "below",
            Builtin::Neighbor => "neighbor",
        }
    }
}
