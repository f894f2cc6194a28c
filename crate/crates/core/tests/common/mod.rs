//! Shared helpers for integration tests: random instances and independent
//! reference implementations.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatialog::grounding::{Cell, FactTable, Grid, Proposal};
use spatialog::logic::{compile_query, shipped, Builtin, CompiledQuery, Formula, Program, Term};
use spatialog::SymbolKind;

pub fn compile(src: &str, name: &str) -> CompiledQuery {
    let program = shipped::with_prelude(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    compile_query(&program, name).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

pub fn tool_query(literal: bool) -> CompiledQuery {
    let src = if literal {
        shipped::TOOL_ON_FLOOR_LITERAL
    } else {
        shipped::TOOL_ON_FLOOR_CORRECTED
    };
    compile(src, "tool_on_floor")
}

pub fn pipe_query() -> CompiledQuery {
    compile(shipped::LEAKING_PIPE, "leaking_pipe")
}

pub fn proposal(id: u32, kind: SymbolKind, symbol: &str, x: u32, y: u32, prob: f64) -> Proposal {
    Proposal {
        id,
        kind,
        symbol: symbol.into(),
        cell: Cell::new(x, y),
        prob,
    }
}

pub fn table(side: usize, proposals: Vec<Proposal>) -> FactTable {
    FactTable::new(
        Grid {
            sigma: 1,
            rows: side,
            cols: side,
        },
        proposals,
        0.0,
        64,
    )
    .expect("test tables are valid")
}

const SYMBOLS: [(SymbolKind, &str); 3] = [
    (SymbolKind::Object, "a"),
    (SymbolKind::Object, "b"),
    (SymbolKind::Segment, "s"),
];

/// A seeded negation-free instance: up to `max_facts` proposals on a 4x4
/// grid and a query with 1 to 3 fact atoms and random guards.
pub struct Instance {
    pub source: String,
    pub query: CompiledQuery,
    pub table: FactTable,
}

fn fact_atom(kind: SymbolKind, var: &str, sym: &str) -> String {
    format!("{}({var}, \"{sym}\")", kind.as_str())
}

fn random_guard(rng: &mut ChaCha8Rng, vars: &[String]) -> Option<String> {
    if vars.len() < 2 {
        return None;
    }
    let pick = |rng: &mut ChaCha8Rng| {
        let mut v = vars.to_vec();
        v.shuffle(rng);
        let rel = Builtin::ALL[rng.gen_range(0..Builtin::ALL.len())].name();
        format!("{rel}({}, {})", v[0], v[1])
    };
    Some(match rng.gen_range(0..4) {
        0 => format!("not {}", pick(rng)),
        1 => format!("({} or {})", pick(rng), pick(rng)),
        _ => pick(rng),
    })
}

pub fn random_instance(seed: u64, max_facts: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_facts);
    let props: Vec<Proposal> = (0..n)
        .map(|i| {
            let (kind, sym) = SYMBOLS[rng.gen_range(0..SYMBOLS.len())];
            // coarse probabilities make ties between proofs common
            let prob = f64::from(rng.gen_range(1..=10u32)) / 10.0;
            proposal(i as u32, kind, sym, rng.gen_range(0..4), rng.gen_range(0..4), prob)
        })
        .collect();
    let atoms = rng.gen_range(1..=3);
    let vars: Vec<String> = (0..atoms).map(|i| format!("X{i}")).collect();
    let mut parts: Vec<String> = vars
        .iter()
        .map(|v| {
            let (kind, sym) = SYMBOLS[rng.gen_range(0..SYMBOLS.len())];
            fact_atom(kind, v, sym)
        })
        .collect();
    for _ in 0..rng.gen_range(0..=2) {
        if let Some(g) = random_guard(&mut rng, &vars) {
            parts.push(g);
        }
    }
    let source = format!("query q := exists {}: ({}).", vars.join(", "), parts.join(" and "));
    Instance {
        query: compile(&source, "q"),
        table: table(4, props),
        source,
    }
}

/// Reference semantics for the query language, straight from the formula:
/// quantifiers range over all proposals, rule calls substitute arguments,
/// and quantifiers under `not` skip proposals already bound on the path.
pub struct NaiveEval<'a> {
    pub program: &'a Program,
    pub table: &'a FactTable,
}

impl NaiveEval<'_> {
    fn lookup(env: &[(String, usize)], var: &str) -> usize {
        env.iter()
            .rev()
            .find(|(v, _)| v == var)
            .map(|&(_, i)| i)
            .expect("validated programs bind every variable")
    }

    pub fn holds(
        &self,
        f: &Formula,
        env: &mut Vec<(String, usize)>,
        bound: &mut Vec<usize>,
        excluded: &[usize],
    ) -> bool {
        match f {
            Formula::Atom(a) => {
                let arg = |i: usize, env: &[(String, usize)]| match &a.args[i] {
                    Term::Var(v) => Self::lookup(env, v),
                    Term::Sym(_) => unreachable!("built-ins and rule calls take variables"),
                };
                let props = self.table.proposals();
                match a.pred.as_str() {
                    "object" | "segment" => {
                        let p = &props[arg(0, env)];
                        let Term::Sym(sym) = &a.args[1] else { unreachable!() };
                        p.kind.as_str() == a.pred && &p.symbol == sym
                    }
                    name => {
                        if let Some(rel) = Builtin::from_name(name) {
                            let (l, r) = (props[arg(0, env)].cell, props[arg(1, env)].cell);
                            return spatialog::inference::relation_holds(rel, l, r);
                        }
                        let rule = self.program.rule(name).expect("validated programs define every rule");
                        let mut inner: Vec<(String, usize)> = rule
                            .params
                            .iter()
                            .enumerate()
                            .map(|(i, p)| (p.clone(), arg(i, env)))
                            .collect();
                        self.holds(&rule.body, &mut inner, bound, excluded)
                    }
                }
            }
            Formula::And(parts) => parts.iter().all(|p| self.holds(p, env, bound, excluded)),
            Formula::Or(parts) => parts.iter().any(|p| self.holds(p, env, bound, excluded)),
            Formula::Not(inner) => {
                let ex: Vec<usize> = bound.clone();
                !self.holds(inner, env, bound, &ex)
            }
            Formula::Exists(vars, body) => self.exists(vars, body, env, bound, excluded),
        }
    }

    fn exists(
        &self,
        vars: &[String],
        body: &Formula,
        env: &mut Vec<(String, usize)>,
        bound: &mut Vec<usize>,
        excluded: &[usize],
    ) -> bool {
        let Some((first, rest)) = vars.split_first() else {
            return self.holds(body, env, bound, excluded);
        };
        for idx in 0..self.table.len() {
            if excluded.contains(&idx) {
                continue;
            }
            env.push((first.clone(), idx));
            bound.push(idx);
            let ok = self.exists(rest, body, env, bound, excluded);
            bound.pop();
            env.pop();
            if ok {
                return true;
            }
        }
        false
    }

    /// Cells of the subject's proposals for which the query body holds.
    pub fn subject_cells(&self, query: &str) -> BTreeSet<Cell> {
        let q = self.program.query(query).expect("query exists");
        let Formula::Exists(vars, body) = &q.body else {
            panic!("queries start with exists")
        };
        let mut out = BTreeSet::new();
        for idx in 0..self.table.len() {
            let mut env = vec![(vars[0].clone(), idx)];
            let mut bound = vec![idx];
            if self.exists(&vars[1..], body, &mut env, &mut bound, &[]) {
                out.insert(self.table.proposals()[idx].cell);
            }
        }
        out
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn noisy_or(probs: impl IntoIterator<Item = f64>) -> f64 {
    1.0 - probs.into_iter().map(|p| 1.0 - p).product::<f64>()
}
