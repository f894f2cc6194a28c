use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use super::ast::{Atom, Builtin, FactPredicate, Formula, Program, Span, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateName,
    ReservedName,
    DuplicateParameter,
    UnknownPredicate,
    ArityMismatch,
    BadArgument,
    EmptyLiteral,
    UnboundVariable,
    UnsafeNegation,
    Recursion,
    NotExistential,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::DuplicateName => "duplicate name",
            ViolationKind::ReservedName => "reserved name",
            ViolationKind::DuplicateParameter => "duplicate parameter",
            ViolationKind::UnknownPredicate => "unknown predicate",
            ViolationKind::ArityMismatch => "arity mismatch",
            ViolationKind::BadArgument => "bad argument",
            ViolationKind::EmptyLiteral => "empty literal",
            ViolationKind::UnboundVariable => "unbound variable",
            ViolationKind::UnsafeNegation => "unsafe negation",
            ViolationKind::Recursion => "recursive rule",
            ViolationKind::NotExistential => "query not existential",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Rule or query the violation was found in.
    pub statement: String,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}: in `{}`: {}",
            self.span,
            self.kind.label(),
            self.statement,
            self.message
        )
    }
}

/// Checks every well-formedness condition the compiler relies on. An empty
/// report means the program can be compiled.
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut v = Validator {
        program,
        arity: HashMap::new(),
        report: Vec::new(),
    };
    v.run();
    v.report
}

struct Validator<'p> {
    program: &'p Program,
    arity: HashMap<&'p str, usize>,
    report: Vec<Violation>,
}

impl<'p> Validator<'p> {
    fn push(&mut self, kind: ViolationKind, statement: &str, span: Span, message: String) {
        self.report.push(Violation {
            kind,
            statement: statement.to_string(),
            span,
            message,
        });
    }

    fn run(&mut self) {
        let mut names: HashSet<&str> = HashSet::new();
        for rule in &self.program.rules {
            if FactPredicate::from_name(&rule.name).is_some() || Builtin::from_name(&rule.name).is_some() {
                self.push(
                    ViolationKind::ReservedName,
                    &rule.name,
                    rule.span,
                    format!("`{}` is a built-in predicate", rule.name),
                );
            } else if !names.insert(&rule.name) {
                self.push(
                    ViolationKind::DuplicateName,
                    &rule.name,
                    rule.span,
                    format!("`{}` is defined more than once", rule.name),
                );
            } else {
                self.arity.insert(&rule.name, rule.params.len());
            }
            let mut params = HashSet::new();
            for p in &rule.params {
                if !params.insert(p) {
                    self.push(
                        ViolationKind::DuplicateParameter,
                        &rule.name,
                        rule.span,
                        format!("parameter {p} repeated"),
                    );
                }
            }
        }
        for query in &self.program.queries {
            if !names.insert(&query.name) {
                self.push(
                    ViolationKind::DuplicateName,
                    &query.name,
                    query.span,
                    format!("`{}` is defined more than once", query.name),
                );
            }
        }

        for rule in &self.program.rules {
            self.check_atoms(&rule.name, &rule.body);
            let mut scope: Vec<&str> = rule.params.iter().map(String::as_str).collect();
            self.check_scoping(&rule.name, &rule.body, &mut scope);
        }
        for query in &self.program.queries {
            if !matches!(query.body, Formula::Exists(..)) {
                self.push(
                    ViolationKind::NotExistential,
                    &query.name,
                    query.span,
                    "a query must start with `exists`".into(),
                );
            }
            self.check_atoms(&query.name, &query.body);
            self.check_scoping(&query.name, &query.body, &mut Vec::new());
        }
        self.check_recursion();
    }

    fn check_atoms(&mut self, stmt: &str, body: &Formula) {
        for atom in body.atoms() {
            self.check_atom(stmt, atom);
        }
    }

    fn check_atom(&mut self, stmt: &str, atom: &Atom) {
        for t in &atom.args {
            if let Term::Sym(s) = t {
                if s.is_empty() {
                    self.push(
                        ViolationKind::EmptyLiteral,
                        stmt,
                        atom.span,
                        format!("empty symbol literal in `{}`", atom.pred),
                    );
                }
            }
        }
        let expected = if FactPredicate::from_name(&atom.pred).is_some() || Builtin::from_name(&atom.pred).is_some() {
            2
        } else if let Some(&n) = self.arity.get(atom.pred.as_str()) {
            n
        } else {
            self.push(
                ViolationKind::UnknownPredicate,
                stmt,
                atom.span,
                format!("`{}` is neither built-in nor defined", atom.pred),
            );
            return;
        };
        if atom.args.len() != expected {
            self.push(
                ViolationKind::ArityMismatch,
                stmt,
                atom.span,
                format!("`{}` takes {expected} arguments, got {}", atom.pred, atom.args.len()),
            );
            return;
        }
        if FactPredicate::from_name(&atom.pred).is_some() {
            if atom.args[0].as_var().is_none() {
                self.push(
                    ViolationKind::BadArgument,
                    stmt,
                    atom.span,
                    format!("first argument of `{}` must be a variable", atom.pred),
                );
            }
            if atom.args[1].as_var().is_some() {
                self.push(
                    ViolationKind::BadArgument,
                    stmt,
                    atom.span,
                    format!("second argument of `{}` must be a symbol literal", atom.pred),
                );
            }
        } else if atom.args.iter().any(|t| t.as_var().is_none()) {
            self.push(
                ViolationKind::BadArgument,
                stmt,
                atom.span,
                format!("arguments of `{}` must be variables", atom.pred),
            );
        }
    }

    fn check_scoping<'f>(&mut self, stmt: &str, body: &'f Formula, scope: &mut Vec<&'f str>) {
        let mut free: Vec<(&str, bool, Span)> = Vec::new();
        collect_free(body, scope, false, &mut free);
        let mut seen = BTreeSet::new();
        for (var, in_not, span) in free {
            if !seen.insert(var) {
                continue;
            }
            if in_not {
                self.push(
                    ViolationKind::UnsafeNegation,
                    stmt,
                    span,
                    format!("{var} occurs under `not` but is never quantified"),
                );
            } else {
                self.push(
                    ViolationKind::UnboundVariable,
                    stmt,
                    span,
                    format!("{var} is not bound by `exists` or the rule head"),
                );
            }
        }
    }

    fn check_recursion(&mut self) {
        let rules = &self.program.rules;
        let index: HashMap<&str, usize> = rules.iter().enumerate().map(|(i, r)| (r.name.as_str(), i)).collect();
        let edges: Vec<Vec<usize>> = rules
            .iter()
            .map(|r| {
                r.body
                    .atoms()
                    .iter()
                    .filter_map(|a| index.get(a.pred.as_str()).copied())
                    .collect()
            })
            .collect();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; rules.len()];
        let mut on_cycle = BTreeSet::new();
        fn dfs(
            n: usize,
            edges: &[Vec<usize>],
            state: &mut [u8],
            stack: &mut Vec<usize>,
            on_cycle: &mut BTreeSet<usize>,
        ) {
            state[n] = 1;
            stack.push(n);
            for &m in &edges[n] {
                if state[m] == 1 {
                    let start = stack.iter().position(|&s| s == m).unwrap();
                    on_cycle.extend(stack[start..].iter().copied());
                } else if state[m] == 0 {
                    dfs(m, edges, state, stack, on_cycle);
                }
            }
            stack.pop();
            state[n] = 2;
        }
        for n in 0..rules.len() {
            if state[n] == 0 {
                dfs(n, &edges, &mut state, &mut Vec::new(), &mut on_cycle);
            }
        }
        for n in on_cycle {
            let r = &rules[n];
            self.push(
                ViolationKind::Recursion,
                &r.name,
                r.span,
                format!("`{}` depends on itself", r.name),
            );
        }
    }
}

fn collect_free<'f>(f: &'f Formula, scope: &mut Vec<&'f str>, in_not: bool, out: &mut Vec<(&'f str, bool, Span)>) {
    match f {
        Formula::Atom(a) => {
            for t in &a.args {
                if let Term::Var(v) = t {
                    if !scope.contains(&v.as_str()) {
                        out.push((v, in_not, a.span));
                    }
                }
            }
        }
        Formula::And(parts) | Formula::Or(parts) => {
            for p in parts {
                collect_free(p, scope, in_not, out);
            }
        }
        Formula::Not(inner) => collect_free(inner, scope, true, out),
        Formula::Exists(vars, body) => {
            let mark = scope.len();
            scope.extend(vars.iter().map(String::as_str));
            collect_free(body, scope, in_not, out);
            scope.truncate(mark);
        }
    }
}
