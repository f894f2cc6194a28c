//! Compilation of a query into a grounded evaluation plan.
//!
//! Rule calls are inlined (rules are never recursive), nested `exists` in the
//! positive part are hoisted, and the resulting conjunction is split into
//!
//! - join steps that bind variables to proposals (`object`/`segment` atoms,
//!   or any proposal at all for variables no fact atom mentions),
//! - deterministic guards built from the spatial relations, attached to the
//!   first join depth at which all their variables are bound,
//! - negated sub-plans for every `not` whose body mentions facts or
//!   quantifies new variables.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use super::ast::{Builtin, FactPredicate, Formula, Program, RuleDef, Term};
use super::print::print_formula;
use super::validate::{validate, Violation};
use crate::heatmap::SymbolKind;

/// Index of a variable in the binding vector used during evaluation.
pub type Slot = usize;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("program has {} validation error(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("query `{query}`: {message}")]
    Unsupported { query: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuardExpr {
    Rel(Builtin, Slot, Slot),
    And(Vec<GuardExpr>),
    Or(Vec<GuardExpr>),
    Not(Box<GuardExpr>),
}

impl GuardExpr {
    pub fn slots(&self, out: &mut BTreeSet<Slot>) {
        match self {
            GuardExpr::Rel(_, a, b) => {
                out.insert(*a);
                out.insert(*b);
            }
            GuardExpr::And(gs) | GuardExpr::Or(gs) => gs.iter().for_each(|g| g.slots(out)),
            GuardExpr::Not(g) => g.slots(out),
        }
    }

    pub fn builtins(&self, out: &mut BTreeSet<&'static str>) {
        match self {
            GuardExpr::Rel(b, _, _) => {
                out.insert(b.name());
            }
            GuardExpr::And(gs) | GuardExpr::Or(gs) => gs.iter().for_each(|g| g.builtins(out)),
            GuardExpr::Not(g) => g.builtins(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub expr: GuardExpr,
    /// Predicate name as written in the source, e.g. `side` for an inlined
    /// `left(..) or right(..)`.
    pub origin: String,
    /// Number of join steps that must be bound before the guard can run.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Proposal of the given symbol. When `binds` is false the slot is
    /// already bound and the step only checks the proposal's symbol.
    Fact {
        slot: Slot,
        kind: SymbolKind,
        symbol: String,
        binds: bool,
    },
    /// Any proposal of the fact table.
    Universe { slot: Slot },
}

impl Step {
    pub fn slot(&self) -> Slot {
        match self {
            Step::Fact { slot, .. } | Step::Universe { slot } => *slot,
        }
    }

    pub fn binds(&self) -> bool {
        match self {
            Step::Fact { binds, .. } => *binds,
            Step::Universe { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    /// Slots bound by enclosing plans before this one runs.
    pub outer: Vec<Slot>,
    /// Slots this plan binds.
    pub locals: Vec<Slot>,
    pub steps: Vec<Step>,
    pub guards: Vec<Guard>,
    pub negations: Vec<NegatedPlan>,
}

impl Plan {
    pub fn fact_atom_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Fact { .. })).count()
    }

    fn collect_symbols(&self, out: &mut BTreeSet<(SymbolKind, String)>) {
        for s in &self.steps {
            if let Step::Fact { kind, symbol, .. } = s {
                out.insert((*kind, symbol.clone()));
            }
        }
        for n in &self.negations {
            n.plan.collect_symbols(out);
        }
    }

    /// Whether any step, here or in a sub-plan, ranges over all proposals.
    pub fn uses_universe(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Universe { .. }))
            || self.negations.iter().any(|n| n.plan.uses_universe())
    }

    /// `(kind, symbol)` of every fact step, sub-plans included.
    pub fn fact_atoms(&self) -> Vec<(SymbolKind, String)> {
        let mut out = Vec::new();
        self.push_fact_atoms(&mut out);
        out
    }

    fn push_fact_atoms(&self, out: &mut Vec<(SymbolKind, String)>) {
        for s in &self.steps {
            if let Step::Fact { kind, symbol, .. } = s {
                out.push((*kind, symbol.clone()));
            }
        }
        for n in &self.negations {
            n.plan.push_fact_atoms(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegatedPlan {
    /// Source text of the negated formula.
    pub label: String,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledQuery {
    pub name: String,
    /// Variable whose cell indexes the per-cell configuration map.
    pub subject: Slot,
    pub slot_names: Vec<String>,
    pub plan: Plan,
    pub symbols: BTreeSet<(SymbolKind, String)>,
}

impl CompiledQuery {
    pub fn slot_count(&self) -> usize {
        self.slot_names.len()
    }

    pub fn subject_name(&self) -> &str {
        &self.slot_names[self.subject]
    }

    /// Source predicate names of the top-level guards.
    pub fn guard_origins(&self) -> BTreeSet<&str> {
        self.plan.guards.iter().map(|g| g.origin.as_str()).collect()
    }

    pub fn symbols_of(&self, kind: SymbolKind) -> Vec<&str> {
        self.symbols
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, s)| s.as_str())
            .collect()
    }

    /// The same joins without spatial guards or negations.
    pub fn without_spatial(&self) -> CompiledQuery {
        let mut q = self.clone();
        q.plan.guards.clear();
        q.plan.negations.clear();
        q.symbols = BTreeSet::new();
        q.plan.collect_symbols(&mut q.symbols);
        q
    }
}

/// Compiles the named query of a validated program.
pub fn compile_query(program: &Program, name: &str) -> Result<CompiledQuery, CompileError> {
    let query = program
        .query(name)
        .ok_or_else(|| CompileError::UnknownQuery(name.to_string()))?;
    let report = validate(program);
    if !report.is_empty() {
        return Err(CompileError::Invalid(report));
    }
    let mut b = Builder {
        query: &query.name,
        rules: program.rules.iter().map(|r| (r.name.as_str(), r)).collect(),
        slot_names: Vec::new(),
    };
    let plan = b.block(&query.body, &HashMap::new(), Vec::new())?;
    let mut symbols = BTreeSet::new();
    plan.collect_symbols(&mut symbols);
    Ok(CompiledQuery {
        name: query.name.clone(),
        // The outermost `exists` allocates the first slots.
        subject: 0,
        slot_names: b.slot_names,
        plan,
        symbols,
    })
}

type Env = HashMap<String, Slot>;

struct PendingNegation<'f> {
    label: String,
    body: &'f Formula,
    env: Env,
}

#[derive(Default)]
struct Parts<'f> {
    locals: Vec<Slot>,
    facts: Vec<(Slot, SymbolKind, String)>,
    guards: Vec<(GuardExpr, String)>,
    negations: Vec<PendingNegation<'f>>,
}

struct Builder<'p> {
    query: &'p str,
    rules: HashMap<&'p str, &'p RuleDef>,
    slot_names: Vec<String>,
}

impl<'p> Builder<'p> {
    fn fresh(&mut self, name: &str) -> Slot {
        self.slot_names.push(name.to_string());
        self.slot_names.len() - 1
    }

    fn unsupported<T>(&self, message: String) -> Result<T, CompileError> {
        Err(CompileError::Unsupported {
            query: self.query.to_string(),
            message,
        })
    }

    fn rule_env(rule: &RuleDef, args: &[Term], env: &Env) -> Env {
        rule.params
            .iter()
            .zip(args)
            .map(|(p, a)| (p.clone(), env[a.as_var().expect("validated: rule args are variables")]))
            .collect()
    }

    fn is_deterministic(&self, f: &Formula) -> bool {
        match f {
            Formula::Atom(a) => {
                if Builtin::from_name(&a.pred).is_some() {
                    true
                } else if FactPredicate::from_name(&a.pred).is_some() {
                    false
                } else {
                    self.is_deterministic(&self.rules[a.pred.as_str()].body)
                }
            }
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(|f| self.is_deterministic(f)),
            Formula::Not(f) => self.is_deterministic(f),
            Formula::Exists(..) => false,
        }
    }

    fn to_guard(&self, f: &Formula, env: &Env) -> GuardExpr {
        match f {
            Formula::Atom(a) => {
                let slot = |i: usize| env[a.args[i].as_var().expect("validated")];
                if let Some(b) = Builtin::from_name(&a.pred) {
                    GuardExpr::Rel(b, slot(0), slot(1))
                } else {
                    let rule = self.rules[a.pred.as_str()];
                    self.to_guard(&rule.body, &Self::rule_env(rule, &a.args, env))
                }
            }
            Formula::And(fs) => GuardExpr::And(fs.iter().map(|f| self.to_guard(f, env)).collect()),
            Formula::Or(fs) => GuardExpr::Or(fs.iter().map(|f| self.to_guard(f, env)).collect()),
            Formula::Not(f) => GuardExpr::Not(Box::new(self.to_guard(f, env))),
            Formula::Exists(..) => unreachable!("exists is never deterministic"),
        }
    }

    fn collect<'f>(
        &mut self,
        f: &'f Formula,
        env: &Env,
        origin: Option<&str>,
        parts: &mut Parts<'f>,
    ) -> Result<(), CompileError>
    where
        'p: 'f,
    {
        match f {
            Formula::Atom(a) => {
                if let Some(fp) = FactPredicate::from_name(&a.pred) {
                    let slot = env[a.args[0].as_var().expect("validated")];
                    let Term::Sym(symbol) = &a.args[1] else {
                        unreachable!("validated")
                    };
                    parts.facts.push((slot, fp.kind(), symbol.clone()));
                } else if Builtin::from_name(&a.pred).is_some() {
                    parts
                        .guards
                        .push((self.to_guard(f, env), origin.unwrap_or(&a.pred).to_string()));
                } else {
                    let rule: &'p RuleDef = self.rules[a.pred.as_str()];
                    let inner = Self::rule_env(rule, &a.args, env);
                    let origin = origin.unwrap_or(&rule.name);
                    if self.is_deterministic(&rule.body) {
                        parts
                            .guards
                            .push((self.to_guard(&rule.body, &inner), origin.to_string()));
                    } else {
                        self.collect(&rule.body, &inner, Some(origin), parts)?;
                    }
                }
            }
            Formula::And(fs) => {
                for g in fs {
                    self.collect(g, env, origin, parts)?;
                }
            }
            Formula::Exists(vars, body) => {
                let mut env = env.clone();
                for v in vars {
                    let slot = self.fresh(v);
                    env.insert(v.clone(), slot);
                    parts.locals.push(slot);
                }
                self.collect(body, &env, origin, parts)?;
            }
            Formula::Or(_) | Formula::Not(_) if self.is_deterministic(f) => {
                let origin = origin.map_or_else(|| print_formula(f), str::to_string);
                parts.guards.push((self.to_guard(f, env), origin));
            }
            Formula::Not(inner) => {
                let label = match origin {
                    Some(o) => format!("{o}: {}", print_formula(inner)),
                    None => print_formula(inner),
                };
                parts.negations.push(PendingNegation {
                    label,
                    body: inner,
                    env: env.clone(),
                });
            }
            Formula::Or(_) => {
                return self.unsupported(format!(
                    "disjunction over facts or quantifiers is not supported: {}",
                    print_formula(f)
                ))
            }
        }
        Ok(())
    }

    fn block(&mut self, f: &Formula, env: &Env, outer: Vec<Slot>) -> Result<Plan, CompileError> {
        let mut parts = Parts::default();
        self.collect(f, env, None, &mut parts)?;

        // Fact steps in source order, then one universe step per local that no
        // fact atom mentions.
        enum Cand {
            Fact(Slot, SymbolKind, String),
            Universe(Slot),
        }
        let mut cands: Vec<Option<Cand>> = parts
            .facts
            .iter()
            .map(|(s, k, sym)| Some(Cand::Fact(*s, *k, sym.clone())))
            .collect();
        let fact_slots: HashSet<Slot> = parts.facts.iter().map(|f| f.0).collect();
        cands.extend(
            parts
                .locals
                .iter()
                .filter(|s| !fact_slots.contains(s))
                .map(|&s| Some(Cand::Universe(s))),
        );

        let guard_slots: Vec<BTreeSet<Slot>> = parts
            .guards
            .iter()
            .map(|(g, _)| {
                let mut s = BTreeSet::new();
                g.slots(&mut s);
                s
            })
            .collect();
        let mut bound: HashSet<Slot> = outer.iter().copied().collect();
        let connected = |slot: Slot, bound: &HashSet<Slot>| {
            guard_slots
                .iter()
                .any(|gs| gs.contains(&slot) && gs.iter().any(|s| bound.contains(s)))
        };

        // Greedy order by estimated branching: checks on bound slots, then
        // facts pruned by a guard against bound slots, then free facts, then
        // universe steps.
        let mut steps = Vec::with_capacity(cands.len());
        while cands.iter().any(Option::is_some) {
            let (best, _) = cands
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
                .map(|(i, c)| {
                    let rank = match c {
                        Cand::Fact(s, ..) if bound.contains(s) => 0,
                        Cand::Fact(s, ..) if connected(*s, &bound) => 1,
                        Cand::Fact(..) => 2,
                        Cand::Universe(s) if connected(*s, &bound) => 3,
                        Cand::Universe(_) => 4,
                    };
                    (i, rank)
                })
                .min_by_key(|&(i, rank)| (rank, i))
                .unwrap();
            let step = match cands[best].take().unwrap() {
                Cand::Fact(slot, kind, symbol) => Step::Fact {
                    slot,
                    kind,
                    symbol,
                    binds: bound.insert(slot),
                },
                Cand::Universe(slot) => {
                    bound.insert(slot);
                    Step::Universe { slot }
                }
            };
            steps.push(step);
        }

        let mut guards = Vec::with_capacity(parts.guards.len());
        for ((expr, origin), slots) in parts.guards.into_iter().zip(guard_slots) {
            let mut ready: HashSet<Slot> = outer.iter().copied().collect();
            let mut depth = 0;
            while !slots.iter().all(|s| ready.contains(s)) {
                ready.insert(steps[depth].slot());
                depth += 1;
            }
            guards.push(Guard { expr, origin, depth });
        }

        let mut inner_outer = outer.clone();
        inner_outer.extend(parts.locals.iter().copied());
        let mut negations = Vec::with_capacity(parts.negations.len());
        for n in parts.negations {
            let plan = self.block(n.body, &n.env, inner_outer.clone())?;
            negations.push(NegatedPlan { label: n.label, plan });
        }

        Ok(Plan {
            outer,
            locals: parts.locals,
            steps,
            guards,
            negations,
        })
    }
}

/// Expands every rule call of `f` into the rule's body. Variables quantified
/// inside rule bodies are renamed so they cannot capture caller variables.
pub fn inline_formula(program: &Program, f: &Formula) -> Formula {
    let mut used: HashSet<String> = HashSet::new();
    let mut note = |f: &Formula| {
        for a in f.atoms() {
            for t in &a.args {
                if let Term::Var(v) = t {
                    used.insert(v.clone());
                }
            }
        }
    };
    note(f);
    program.rules.iter().for_each(|r| note(&r.body));
    let mut inl = Inliner {
        program,
        used,
        counter: 0,
    };
    inl.go(f, &HashMap::new(), false)
}

struct Inliner<'p> {
    program: &'p Program,
    used: HashSet<String>,
    counter: usize,
}

impl Inliner<'_> {
    fn fresh(&mut self, base: &str) -> String {
        loop {
            self.counter += 1;
            let name = format!("{base}_{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }

    fn go(&mut self, f: &Formula, subst: &HashMap<String, String>, rename: bool) -> Formula {
        let sub = |v: &String| subst.get(v).cloned().unwrap_or_else(|| v.clone());
        match f {
            Formula::Atom(a) => match self.program.rule(&a.pred) {
                Some(rule) => {
                    let inner: HashMap<String, String> = rule
                        .params
                        .iter()
                        .zip(&a.args)
                        .map(|(p, t)| (p.clone(), sub(&t.as_var().expect("validated").to_string())))
                        .collect();
                    self.go(&rule.body, &inner, true)
                }
                None => {
                    let mut a = a.clone();
                    for t in &mut a.args {
                        if let Term::Var(v) = t {
                            *v = sub(v);
                        }
                    }
                    Formula::Atom(a)
                }
            },
            Formula::And(fs) => Formula::And(fs.iter().map(|f| self.go(f, subst, rename)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| self.go(f, subst, rename)).collect()),
            Formula::Not(f) => Formula::Not(Box::new(self.go(f, subst, rename))),
            Formula::Exists(vars, body) => {
                if rename {
                    let mut inner = subst.clone();
                    let renamed: Vec<String> = vars
                        .iter()
                        .map(|v| {
                            let n = self.fresh(v);
                            inner.insert(v.clone(), n.clone());
                            n
                        })
                        .collect();
                    Formula::Exists(renamed, Box::new(self.go(body, &inner, rename)))
                } else {
                    let mut inner = subst.clone();
                    for v in vars {
                        inner.remove(v);
                    }
                    Formula::Exists(vars.clone(), Box::new(self.go(body, &inner, rename)))
                }
            }
        }
    }
}
