//! Proof enumeration and probability aggregation over fact tables.
//!
//! A proof binds every variable of a compiled query to a proposal such that
//! all fact atoms match and all spatial guards hold; its probability is the
//! product of the distinct proposals it uses. Proofs are grouped by the cell
//! of the subject variable and each group is combined with the configured
//! [`Aggregator`]. A negated sub-query contributes the factor
//! `1 - P(sub-query)`, where the sub-query ranges over every proposal except
//! the ones already bound by the enclosing proof.
//!
//! [`exact_probability`] is an independent possible-world oracle used to
//! measure how far the top-k approximation is from the true probability.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{Cell, FactTable, Pyramid};
use crate::logic::{Builtin, CompiledQuery, Guard, GuardExpr, NegatedPlan, Plan, Slot, Step};

const UNBOUND: usize = usize::MAX;

/// Largest fact universe [`exact_probability`] will enumerate.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("unknown built-in `{0}`")]
    UnknownBuiltin(String),
    #[error("the exact oracle is not a proof aggregator; use exact_probability")]
    ExactNotAggregator,
    #[error("exact inference refused: {count} facts referenced, limit is {limit}")]
    TooManyFacts { count: usize, limit: usize },
    #[error("empty pyramid")]
    EmptyPyramid,
}

/// How the proofs of one location are combined into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    /// Probability of the best proof.
    Max,
    /// Noisy-or over the `k` best proofs.
    TopK(usize),
    /// Exact possible-world enumeration; see [`exact_probability`].
    ExactOracle,
}

impl Default for Aggregator {
    fn default() -> Self {
        Aggregator::TopK(3)
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Max => f.write_str("max"),
            Aggregator::TopK(k) => write!(f, "topk({k})"),
            Aggregator::ExactOracle => f.write_str("exact"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = String;

    /// Accepts `max`, `exact`, `topk` (k = 3) and `topk:K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Aggregator::Max),
            "exact" => Ok(Aggregator::ExactOracle),
            "topk" => Ok(Aggregator::TopK(3)),
            _ => {
                let k = s
                    .strip_prefix("topk:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| format!("unknown aggregator `{s}` (expected max, topk or topk:K)"))?;
                Ok(Aggregator::TopK(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferParams {
    pub agg: Aggregator,
    /// Proofs kept per scale (and per negated sub-query evaluation).
    pub max_proofs: usize,
}

impl Default for InferParams {
    fn default() -> Self {
        InferParams {
            agg: Aggregator::default(),
            max_proofs: 10_000,
        }
    }
}

/// Evaluates a spatial built-in by name.
pub fn eval_builtin(name: &str, a: Cell, b: Cell) -> Result<bool, InferenceError> {
    Builtin::from_name(name)
        .map(|rel| relation_holds(rel, a, b))
        .ok_or_else(|| InferenceError::UnknownBuiltin(name.to_string()))
}

pub fn relation_holds(rel: Builtin, a: Cell, b: Cell) -> bool {
    match rel {
        Builtin::Left => a.x < b.x,
        Builtin::Right => a.x > b.x,
        Builtin::Above => a.y < b.y,
        Builtin::Below => a.y > b.y,
        Builtin::Neighbor => a.x.abs_diff(b.x) <= 1 && a.y.abs_diff(b.y) <= 1,
    }
}

fn guard_holds(expr: &GuardExpr, bindings: &[usize], table: &FactTable) -> bool {
    match expr {
        GuardExpr::Rel(rel, a, b) => {
            let props = table.proposals();
            relation_holds(*rel, props[bindings[*a]].cell, props[bindings[*b]].cell)
        }
        GuardExpr::And(gs) => gs.iter().all(|g| guard_holds(g, bindings, table)),
        GuardExpr::Or(gs) => gs.iter().any(|g| guard_holds(g, bindings, table)),
        GuardExpr::Not(g) => !guard_holds(g, bindings, table),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binding {
    pub slot: Slot,
    /// Index into [`FactTable::proposals`].
    pub index: usize,
    pub id: u32,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proof {
    /// Bindings made by the plan, in join order.
    pub bindings: Vec<Binding>,
    /// Sorted ids of the distinct proposals used.
    pub facts: Vec<u32>,
    /// Product of the facts' probabilities.
    pub prob: f64,
    /// `prob` times the factors of all negated sub-queries; equal to `prob`
    /// until negations are evaluated.
    pub weight: f64,
}

impl Proof {
    pub fn binding(&self, slot: Slot) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.slot == slot)
    }

    fn id_sequence(&self) -> impl Iterator<Item = u32> + '_ {
        self.bindings.iter().map(|b| b.id)
    }
}

/// Descending weight, then lexicographic id sequence.
fn proof_order(a: &Proof, b: &Proof) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.id_sequence().cmp(b.id_sequence()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Best proofs first, at most the requested cap (and at least one).
    pub proofs: Vec<Proof>,
    /// Whether proofs beyond the cap were dropped.
    pub truncated: bool,
}

/// A complete proof held in the bounded result heap. The greatest element
/// is the worst proof: lowest probability, then largest id sequence.
struct Kept {
    prob: f64,
    ids: Vec<u32>,
    idxs: Vec<usize>,
}

impl PartialEq for Kept {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Kept {}

impl PartialOrd for Kept {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Kept {
    fn cmp(&self, other: &Self) -> Ordering {
        other.prob.total_cmp(&self.prob).then_with(|| self.ids.cmp(&other.ids))
    }
}

/// Depth-first join with a bounded heap of the best `cap` proofs. Candidate
/// lists are sorted by descending probability, so once a partial proof falls
/// below the worst kept proof the rest of the list is skipped.
struct Search<'a> {
    plan: &'a Plan,
    table: &'a FactTable,
    excluded: &'a [usize],
    universe: &'a [usize],
    guards_at: Vec<Vec<&'a Guard>>,
    cap: usize,
    local: Vec<usize>,
    kept: BinaryHeap<Kept>,
    truncated: bool,
}

impl<'a> Search<'a> {
    fn guards_pass(&self, depth: usize, bindings: &[usize]) -> bool {
        self.guards_at[depth]
            .iter()
            .all(|g| guard_holds(&g.expr, bindings, self.table))
    }

    fn threshold(&self) -> Option<f64> {
        (self.kept.len() >= self.cap).then(|| self.kept.peek().map_or(f64::INFINITY, |k| k.prob))
    }

    fn offer(&mut self, prob: f64) {
        if let Some(t) = self.threshold() {
            self.truncated = true;
            if prob < t {
                return;
            }
        }
        let props = self.table.proposals();
        let entry = Kept {
            prob,
            ids: self.local.iter().map(|&i| props[i].id).collect(),
            idxs: self.local.clone(),
        };
        if self.kept.len() < self.cap {
            self.kept.push(entry);
        } else if self.kept.peek().is_some_and(|worst| entry < *worst) {
            self.kept.pop();
            self.kept.push(entry);
        }
    }

    fn descend(&mut self, depth: usize, slot: Slot, idx: usize, prob: f64, bindings: &mut [usize]) {
        bindings[slot] = idx;
        if self.guards_pass(depth + 1, bindings) {
            self.local.push(idx);
            self.run(depth + 1, prob, bindings);
            self.local.pop();
        }
    }

    fn run(&mut self, depth: usize, prob: f64, bindings: &mut [usize]) {
        if depth == self.plan.steps.len() {
            self.offer(prob);
            return;
        }
        let step = &self.plan.steps[depth];
        let table = self.table;
        let props = table.proposals();
        let candidates: &'a [usize] = match step {
            Step::Fact {
                slot,
                kind,
                symbol,
                binds: false,
            } => {
                let p = &props[bindings[*slot]];
                if p.kind == *kind && &p.symbol == symbol && self.guards_pass(depth + 1, bindings) {
                    self.run(depth + 1, prob, bindings);
                }
                return;
            }
            Step::Fact { kind, symbol, .. } => table.group(*kind, symbol),
            Step::Universe { .. } => self.universe,
        };
        let slot = step.slot();
        for (pos, &idx) in candidates.iter().enumerate() {
            if self.excluded.contains(&idx) {
                continue;
            }
            if self.local.contains(&idx) {
                self.descend(depth, slot, idx, prob, bindings);
                continue;
            }
            let p = prob * props[idx].prob;
            if self.threshold().is_some_and(|t| p < t) {
                self.truncated = true;
                // reusing an already bound proposal costs nothing
                let rest = &candidates[pos + 1..];
                let mut reused: Vec<usize> = self.local.iter().copied().filter(|i| rest.contains(i)).collect();
                reused.sort_unstable_by_key(|i| rest.iter().position(|r| r == i));
                reused.dedup();
                for i in reused {
                    self.descend(depth, slot, i, prob, bindings);
                }
                break;
            }
            self.descend(depth, slot, idx, p, bindings);
        }
        bindings[slot] = UNBOUND;
    }
}

/// Every proposal index by descending probability.
fn universe_order(table: &FactTable) -> Vec<usize> {
    let props = table.proposals();
    let mut all: Vec<usize> = (0..props.len()).collect();
    all.sort_by(|&a, &b| props[b].prob.total_cmp(&props[a].prob).then(a.cmp(&b)));
    all
}

fn enumerate_plan(
    plan: &Plan,
    table: &FactTable,
    universe: &[usize],
    bindings: &mut [usize],
    excluded: &[usize],
    cap: usize,
) -> Enumeration {
    let mut guards_at = vec![Vec::new(); plan.steps.len() + 1];
    for g in &plan.guards {
        guards_at[g.depth].push(g);
    }
    let mut search = Search {
        plan,
        table,
        excluded,
        universe,
        guards_at,
        cap: cap.max(1),
        local: Vec::new(),
        kept: BinaryHeap::new(),
        truncated: false,
    };
    if search.guards_pass(0, bindings) {
        search.run(0, 1.0, bindings);
    }

    let binding_steps: Vec<Slot> = plan.steps.iter().filter(|s| s.binds()).map(Step::slot).collect();
    let props = table.proposals();
    let proofs = search
        .kept
        .into_sorted_vec()
        .into_iter()
        .map(|k| {
            let bindings: Vec<Binding> = binding_steps
                .iter()
                .zip(&k.idxs)
                .map(|(&slot, &index)| Binding {
                    slot,
                    index,
                    id: props[index].id,
                    cell: props[index].cell,
                })
                .collect();
            let mut facts = k.ids;
            facts.sort_unstable();
            facts.dedup();
            Proof {
                bindings,
                facts,
                prob: k.prob,
                weight: k.prob,
            }
        })
        .collect();
    Enumeration {
        proofs,
        truncated: search.truncated,
    }
}

/// All proofs of the query's positive part, best first, truncated at `cap`.
/// Negated sub-queries are not evaluated here.
pub fn enumerate_proofs(query: &CompiledQuery, table: &FactTable, cap: usize) -> Enumeration {
    let mut bindings = vec![UNBOUND; query.slot_count()];
    enumerate_plan(&query.plan, table, &universe_order(table), &mut bindings, &[], cap)
}

/// Combines probabilities sorted in descending order.
pub fn combine(sorted: &[f64], agg: Aggregator) -> Result<f64, InferenceError> {
    match agg {
        Aggregator::Max => Ok(sorted.first().copied().unwrap_or(0.0)),
        Aggregator::TopK(k) => Ok(1.0 - sorted.iter().take(k).map(|p| 1.0 - p).product::<f64>()),
        Aggregator::ExactOracle => Err(InferenceError::ExactNotAggregator),
    }
}

/// Aggregates proofs sorted best first, using their weights.
pub fn aggregate(proofs: &[Proof], agg: Aggregator) -> Result<f64, InferenceError> {
    let weights: Vec<f64> = proofs.iter().map(|p| p.weight).collect();
    combine(&weights, agg)
}

fn bound_indices(bindings: &[usize]) -> Vec<usize> {
    bindings.iter().copied().filter(|&i| i != UNBOUND).collect()
}

/// Outer slots a negated plan reads, when its factor can be cached: a single
/// bound variable and no nested negation. Each excluded proposal then removes
/// at most one sub-proof, so the best `cap + excluded` sub-proofs computed
/// without exclusions determine the factor for every exclusion set.
fn cache_key_slots(plan: &Plan) -> Option<Vec<Slot>> {
    let locals = plan.steps.iter().filter(|s| s.binds()).count();
    if locals != 1 || !plan.negations.is_empty() {
        return None;
    }
    let mut slots = BTreeSet::new();
    for g in &plan.guards {
        g.expr.slots(&mut slots);
    }
    for s in &plan.steps {
        slots.insert(s.slot());
    }
    Some(slots.into_iter().filter(|s| !plan.locals.contains(s)).collect())
}

fn sub_cap(neg: &NegatedPlan, params: &InferParams) -> usize {
    // without nested negations the aggregate only reads the best k proofs
    match (neg.plan.negations.is_empty(), params.agg) {
        (true, Aggregator::Max) => 1,
        (true, Aggregator::TopK(k)) => k.min(params.max_proofs),
        _ => params.max_proofs,
    }
}

type FactorCache = HashMap<Vec<usize>, Vec<(f64, usize)>>;

/// Multiplies each proof's weight by the factors of the plan's negations.
fn apply_negations(
    plan: &Plan,
    table: &FactTable,
    universe: &[usize],
    bindings: &mut [usize],
    proofs: &mut [Proof],
    params: &InferParams,
) -> Result<(), InferenceError> {
    if plan.negations.is_empty() {
        return Ok(());
    }
    let keys: Vec<Option<Vec<Slot>>> = plan.negations.iter().map(|n| cache_key_slots(&n.plan)).collect();
    let mut caches: Vec<FactorCache> = vec![HashMap::new(); plan.negations.len()];
    for proof in proofs.iter_mut() {
        for b in &proof.bindings {
            bindings[b.slot] = b.index;
        }
        let excluded = bound_indices(bindings);
        for (i, neg) in plan.negations.iter().enumerate() {
            let factor = match &keys[i] {
                Some(slots) => {
                    let cap = sub_cap(neg, params);
                    let key: Vec<usize> = slots.iter().map(|&s| bindings[s]).collect();
                    let best = match caches[i].entry(key) {
                        Entry::Occupied(e) => e.into_mut(),
                        Entry::Vacant(e) => {
                            let en = enumerate_plan(&neg.plan, table, universe, bindings, &[], cap + excluded.len());
                            e.insert(en.proofs.iter().map(|p| (p.prob, p.bindings[0].index)).collect())
                        }
                    };
                    let weights: Vec<f64> = best
                        .iter()
                        .filter(|(_, idx)| !excluded.contains(idx))
                        .take(cap)
                        .map(|&(p, _)| p)
                        .collect();
                    1.0 - combine(&weights, params.agg)?
                }
                None => negation_factor(neg, table, universe, bindings, &excluded, params)?,
            };
            proof.weight *= factor;
        }
        for b in &proof.bindings {
            bindings[b.slot] = UNBOUND;
        }
    }
    Ok(())
}

fn negation_factor(
    neg: &NegatedPlan,
    table: &FactTable,
    universe: &[usize],
    bindings: &mut [usize],
    excluded: &[usize],
    params: &InferParams,
) -> Result<f64, InferenceError> {
    let mut en = enumerate_plan(&neg.plan, table, universe, bindings, excluded, sub_cap(neg, params));
    apply_negations(&neg.plan, table, universe, bindings, &mut en.proofs, params)?;
    en.proofs.sort_by(proof_order);
    Ok(1.0 - aggregate(&en.proofs, params.agg)?)
}

/// Probability that the negated sub-query fails, given the enclosing proof.
/// `bound` holds the enclosing proof's bindings as `(slot, proposal index)`;
/// those proposals are excluded from the sub-query's universe.
pub fn eval_negated(
    query: &CompiledQuery,
    neg: &NegatedPlan,
    table: &FactTable,
    bound: &[(Slot, usize)],
    params: &InferParams,
) -> Result<f64, InferenceError> {
    let mut bindings = vec![UNBOUND; query.slot_count()];
    for &(slot, idx) in bound {
        bindings[slot] = idx;
    }
    let excluded = bound_indices(&bindings);
    negation_factor(neg, table, &universe_order(table), &mut bindings, &excluded, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleInference {
    pub sigma: u32,
    pub prob: f64,
    /// Probability per subject cell.
    pub cells: BTreeMap<Cell, f64>,
    /// Strongest proof at the strongest cell.
    pub best: Option<Proof>,
    /// Proofs kept after the cap.
    pub proof_count: usize,
    pub truncated: bool,
}

/// Evaluates the query on one fact table.
pub fn infer_at_scale(
    query: &CompiledQuery,
    table: &FactTable,
    params: &InferParams,
) -> Result<ScaleInference, InferenceError> {
    if params.agg == Aggregator::ExactOracle {
        return Err(InferenceError::ExactNotAggregator);
    }
    let universe = universe_order(table);
    let mut bindings = vec![UNBOUND; query.slot_count()];
    let mut en = enumerate_plan(&query.plan, table, &universe, &mut bindings, &[], params.max_proofs);
    apply_negations(&query.plan, table, &universe, &mut bindings, &mut en.proofs, params)?;

    let proof_count = en.proofs.len();
    let mut groups: BTreeMap<Cell, Vec<Proof>> = BTreeMap::new();
    for proof in en.proofs {
        let cell = proof
            .binding(query.subject)
            .expect("the subject is bound by the positive plan")
            .cell;
        groups.entry(cell).or_default().push(proof);
    }
    let mut cells = BTreeMap::new();
    let mut best: Option<(Cell, f64)> = None;
    for (cell, proofs) in groups.iter_mut() {
        proofs.sort_by(proof_order);
        let p = aggregate(proofs, params.agg)?;
        cells.insert(*cell, p);
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((*cell, p));
        }
    }
    Ok(ScaleInference {
        sigma: table.sigma(),
        prob: best.map_or(0.0, |(_, p)| p),
        best: best.map(|(cell, _)| groups[&cell][0].clone()),
        cells,
        proof_count,
        truncated: en.truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationResult {
    pub query: String,
    pub prob: f64,
    /// Scale with the highest probability; the smallest one on ties.
    pub sigma: u32,
    pub cells: BTreeMap<Cell, f64>,
    pub best: Option<Proof>,
    pub per_scale: BTreeMap<u32, f64>,
    pub truncated: bool,
}

/// Runs every scale and keeps the most probable one.
pub fn infer_multiscale(
    query: &CompiledQuery,
    pyramid: &Pyramid,
    params: &InferParams,
) -> Result<ConfigurationResult, InferenceError> {
    let mut chosen: Option<ScaleInference> = None;
    let mut per_scale = BTreeMap::new();
    let mut truncated = false;
    for table in pyramid.values() {
        let r = infer_at_scale(query, table, params)?;
        per_scale.insert(r.sigma, r.prob);
        truncated |= r.truncated;
        if chosen.as_ref().is_none_or(|c| r.prob > c.prob) {
            chosen = Some(r);
        }
    }
    let chosen = chosen.ok_or(InferenceError::EmptyPyramid)?;
    Ok(ConfigurationResult {
        query: query.name.clone(),
        prob: chosen.prob,
        sigma: chosen.sigma,
        cells: chosen.cells,
        best: chosen.best,
        per_scale,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProb {
    pub x: u32,
    pub y: u32,
    pub p: f64,
}

/// JSON form of a [`ConfigurationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub query: String,
    pub prob: f64,
    pub sigma: u32,
    pub cells: Vec<CellProb>,
    pub per_scale: BTreeMap<u32, f64>,
    pub truncated: bool,
}

impl ResultDoc {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl From<&ConfigurationResult> for ResultDoc {
    fn from(r: &ConfigurationResult) -> Self {
        ResultDoc {
            query: r.query.clone(),
            prob: r.prob,
            sigma: r.sigma,
            cells: r.cells.iter().map(|(c, &p)| CellProb { x: c.x, y: c.y, p }).collect(),
            per_scale: r.per_scale.clone(),
            truncated: r.truncated,
        }
    }
}

/// Ground lineage of one plan: a disjunction of conjunctions, each being a
/// set of facts plus negated sub-lineages.
struct Conj {
    mask: u32,
    negs: Vec<Vec<Conj>>,
}

fn lineage_holds(dnf: &[Conj], world: u32) -> bool {
    dnf.iter()
        .any(|c| c.mask & world == c.mask && c.negs.iter().all(|n| !lineage_holds(n, world)))
}

struct Grounder<'a> {
    table: &'a FactTable,
    domain: Vec<usize>,
    bit: Vec<Option<u32>>,
}

impl Grounder<'_> {
    /// Brute force over every assignment of the plan's locals; no join
    /// ordering or early pruning.
    fn ground(&self, plan: &Plan, bindings: &mut Vec<usize>, excluded: &[usize]) -> Vec<Conj> {
        let mut out = Vec::new();
        self.assign(plan, 0, bindings, excluded, &mut out);
        out
    }

    fn assign(&self, plan: &Plan, i: usize, bindings: &mut Vec<usize>, excluded: &[usize], out: &mut Vec<Conj>) {
        if i < plan.locals.len() {
            let slot = plan.locals[i];
            for &idx in &self.domain {
                if excluded.contains(&idx) {
                    continue;
                }
                bindings[slot] = idx;
                self.assign(plan, i + 1, bindings, excluded, out);
            }
            bindings[slot] = UNBOUND;
            return;
        }
        let props = self.table.proposals();
        for step in &plan.steps {
            if let Step::Fact { slot, kind, symbol, .. } = step {
                let p = &props[bindings[*slot]];
                if p.kind != *kind || &p.symbol != symbol {
                    return;
                }
            }
        }
        if !plan.guards.iter().all(|g| guard_holds(&g.expr, bindings, self.table)) {
            return;
        }
        let mut mask = 0u32;
        for &slot in &plan.locals {
            mask |= 1 << self.bit[bindings[slot]].expect("domain proposals have bits");
        }
        let inner_excluded = bound_indices(bindings);
        let negs = plan
            .negations
            .iter()
            .map(|n| self.ground(&n.plan, bindings, &inner_excluded))
            .collect();
        out.push(Conj { mask, negs });
    }
}

/// Exact probability of the query (any location) by enumerating all truth
/// assignments of the referenced proposals, each an independent fact.
pub fn exact_probability(query: &CompiledQuery, table: &FactTable) -> Result<f64, InferenceError> {
    let domain: Vec<usize> = if query.plan.uses_universe() {
        (0..table.len()).collect()
    } else {
        let mut d: Vec<usize> = query
            .symbols
            .iter()
            .flat_map(|(k, s)| table.group(*k, s).iter().copied())
            .collect();
        d.sort_unstable();
        d
    };
    if domain.len() > EXACT_LIMIT {
        return Err(InferenceError::TooManyFacts {
            count: domain.len(),
            limit: EXACT_LIMIT,
        });
    }
    let mut bit = vec![None; table.len()];
    for (b, &idx) in domain.iter().enumerate() {
        bit[idx] = Some(b as u32);
    }
    let probs: Vec<f64> = domain.iter().map(|&i| table.proposals()[i].prob).collect();
    let g = Grounder { table, domain, bit };
    let mut bindings = vec![UNBOUND; query.slot_count()];
    let dnf = g.ground(&query.plan, &mut bindings, &[]);

    let n = probs.len();
    let mut total = 0.0;
    for world in 0u32..(1u32 << n) {
        if lineage_holds(&dnf, world) {
            total += probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if world >> i & 1 == 1 { p } else { 1.0 - p })
                .product::<f64>();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{Grid, Proposal};
    use crate::heatmap::SymbolKind;
    use crate::logic::{compile_query, parse_program, shipped};

    fn prop(id: u32, kind: SymbolKind, symbol: &str, x: u32, y: u32, prob: f64) -> Proposal {
        Proposal {
            id,
            kind,
            symbol: symbol.into(),
            cell: Cell::new(x, y),
            prob,
        }
    }

    fn table(props: Vec<Proposal>) -> FactTable {
        FactTable::new(
            Grid {
                sigma: 1,
                rows: 8,
                cols: 8,
            },
            props,
            0.0,
            64,
        )
        .unwrap()
    }

    fn query(src: &str) -> CompiledQuery {
        let p = shipped::with_prelude(src).unwrap();
        let name = p.queries[0].name.clone();
        compile_query(&p, &name).unwrap()
    }

    const OBJ: SymbolKind = SymbolKind::Object;
    const SEG: SymbolKind = SymbolKind::Segment;

    #[test]
    fn builtins() {
        assert!(eval_builtin("above", Cell::new(2, 1), Cell::new(2, 3)).unwrap());
        assert!(eval_builtin("neighbor", Cell::new(2, 2), Cell::new(3, 3)).unwrap());
        assert!(!eval_builtin("neighbor", Cell::new(2, 2), Cell::new(4, 2)).unwrap());
        assert!(!eval_builtin("left", Cell::new(5, 0), Cell::new(5, 0)).unwrap());
        assert!(eval_builtin("below", Cell::new(0, 1), Cell::new(0, 0)).unwrap());
        assert!(eval_builtin("right", Cell::new(1, 0), Cell::new(0, 0)).unwrap());
        assert_eq!(
            eval_builtin("between", Cell::new(0, 0), Cell::new(0, 0)),
            Err(InferenceError::UnknownBuiltin("between".into()))
        );
    }

    #[test]
    fn leaking_pipe_single_proof() {
        let q = query(shipped::LEAKING_PIPE);
        let t = table(vec![
            prop(0, OBJ, "pipe", 3, 3, 0.9),
            prop(1, SEG, "leakage", 3, 4, 0.8),
            prop(2, SEG, "leakage", 0, 0, 0.7),
        ]);
        let en = enumerate_proofs(&q, &t, 100);
        assert_eq!(en.proofs.len(), 1);
        let p = &en.proofs[0];
        assert_eq!(p.facts, vec![0, 1]);
        assert!((p.prob - 0.72).abs() < 1e-12);
        assert!((exact_probability(&q, &t).unwrap() - 0.72).abs() < 1e-12);
    }

    #[test]
    fn empty_and_sorted_enumerations() {
        let q = query("query q := exists O: object(O, \"tool\").");
        assert!(enumerate_proofs(&q, &table(vec![prop(0, OBJ, "cup", 0, 0, 0.5)]), 10)
            .proofs
            .is_empty());
        let t = table(vec![prop(0, OBJ, "tool", 0, 0, 0.5), prop(1, OBJ, "tool", 1, 0, 0.9)]);
        let probs: Vec<f64> = enumerate_proofs(&q, &t, 10).proofs.iter().map(|p| p.prob).collect();
        assert_eq!(probs, vec![0.9, 0.5]);
        let capped = enumerate_proofs(&q, &t, 1);
        assert_eq!((capped.proofs.len(), capped.truncated), (1, true));
        assert_eq!(capped.proofs[0].prob, 0.9);
        assert!(!enumerate_proofs(&q, &t, 2).truncated);
    }

    #[test]
    fn aggregation() {
        assert!((combine(&[0.8, 0.5], Aggregator::TopK(2)).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(combine(&[0.8, 0.5], Aggregator::TopK(1)).unwrap(), 0.8);
        assert_eq!(combine(&[0.8, 0.5], Aggregator::Max).unwrap(), 0.8);
        assert_eq!(combine(&[], Aggregator::TopK(3)).unwrap(), 0.0);
        assert_eq!(combine(&[], Aggregator::Max).unwrap(), 0.0);
        assert_eq!(
            combine(&[0.5], Aggregator::ExactOracle),
            Err(InferenceError::ExactNotAggregator)
        );
    }

    #[test]
    fn negation_factors() {
        let q = query(shipped::TOOL_ON_FLOOR_CORRECTED);
        let neg = &q.plan.negations[0];
        let tool = prop(0, OBJ, "tool", 2, 1, 0.9);
        let floor = prop(1, SEG, "floor", 3, 4, 0.8);
        // O=tool (slot 0), S1=S2=floor
        let bound = |t: &FactTable| {
            let idx = |id: u32| t.proposals().iter().position(|p| p.id == id).unwrap();
            vec![(0, idx(0)), (1, idx(1)), (2, idx(1))]
        };
        let params = InferParams::default();

        let t = table(vec![tool.clone(), floor.clone()]);
        assert_eq!(eval_negated(&q, neg, &t, &bound(&t), &params).unwrap(), 1.0);

        let t = table(vec![tool.clone(), floor.clone(), prop(2, OBJ, "cabinet", 2, 2, 0.6)]);
        let f = eval_negated(&q, neg, &t, &bound(&t), &params).unwrap();
        assert!((f - 0.4).abs() < 1e-12);

        // the literal between_vert clause cannot hold below the tool
        let lit = query(shipped::TOOL_ON_FLOOR_LITERAL);
        let t = table(vec![
            tool,
            floor,
            prop(2, OBJ, "cabinet", 2, 2, 0.6),
            prop(3, OBJ, "cabinet", 2, 0, 0.6),
            prop(4, OBJ, "cabinet", 2, 6, 0.6),
        ]);
        let f = eval_negated(&lit, &lit.plan.negations[0], &t, &bound(&t), &params).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn per_cell_readout() {
        let q = query("query q := exists O: object(O, \"tool\").");
        let t = table(vec![prop(0, OBJ, "tool", 0, 0, 0.9), prop(1, OBJ, "tool", 5, 5, 0.5)]);
        let r = infer_at_scale(&q, &t, &InferParams::default()).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[&Cell::new(0, 0)], 0.9);
        assert_eq!(r.cells[&Cell::new(5, 5)], 0.5);
        assert_eq!(r.prob, 0.9);
        assert_eq!(r.best.unwrap().facts, vec![0]);

        let empty = infer_at_scale(&q, &table(vec![]), &InferParams::default()).unwrap();
        assert_eq!((empty.prob, empty.cells.len(), empty.best), (0.0, 0, None));

        // two proofs for the same tool cell: 1 - 0.4 * 0.4
        let q = query("query q := exists O, S: (object(O, \"tool\") and segment(S, \"floor\") and above(O, S)).");
        let t = table(vec![
            prop(0, OBJ, "tool", 0, 0, 1.0),
            prop(1, SEG, "floor", 0, 1, 0.6),
            prop(2, SEG, "floor", 1, 1, 0.6),
        ]);
        let r = infer_at_scale(&q, &t, &InferParams::default()).unwrap();
        assert!((r.cells[&Cell::new(0, 0)] - 0.84).abs() < 1e-12);
    }

    fn singleton_pyramid(probs: &[(u32, f64)]) -> (CompiledQuery, Pyramid) {
        let q = query("query q := exists O: object(O, \"tool\").");
        let pyr = probs
            .iter()
            .map(|&(s, p)| {
                let grid = Grid {
                    sigma: s,
                    rows: 2,
                    cols: 2,
                };
                let props = if p > 0.0 {
                    vec![prop(0, OBJ, "tool", 1, 1, p)]
                } else {
                    vec![]
                };
                (s, FactTable::new(grid, props, 0.0, 4).unwrap())
            })
            .collect();
        (q, pyr)
    }

    #[test]
    fn scale_selection() {
        let (q, pyr) = singleton_pyramid(&[(1, 0.1), (2, 0.3), (4, 0.7), (8, 0.5), (16, 0.2)]);
        let r = infer_multiscale(&q, &pyr, &InferParams::default()).unwrap();
        assert_eq!((r.prob, r.sigma), (0.7, 4));
        assert_eq!(r.per_scale.len(), 5);

        let (q, pyr) = singleton_pyramid(&[(1, 0.0), (2, 0.0), (4, 0.0)]);
        let r = infer_multiscale(&q, &pyr, &InferParams::default()).unwrap();
        assert_eq!((r.prob, r.sigma), (0.0, 1));

        let (q, pyr) = singleton_pyramid(&[(4, 0.6)]);
        let r = infer_multiscale(&q, &pyr, &InferParams::default()).unwrap();
        assert_eq!((r.prob, r.sigma), (0.6, 4));

        assert_eq!(
            infer_multiscale(&q, &Pyramid::new(), &InferParams::default()),
            Err(InferenceError::EmptyPyramid)
        );
    }

    #[test]
    fn exact_oracle_examples() {
        let p = parse_program("query q := exists X: (object(X, \"a\") or object(X, \"b\")).").unwrap();
        // disjunction over facts does not compile; express it as one symbol
        assert!(compile_query(&p, "q").is_err());

        let q = query("query q := exists X: object(X, \"a\").");
        let t = table(vec![prop(0, OBJ, "a", 0, 0, 0.5), prop(1, OBJ, "a", 1, 0, 0.5)]);
        assert!((exact_probability(&q, &t).unwrap() - 0.75).abs() < 1e-12);

        // (a and b) or (a and c): one `a`, two `b`-like partners
        let q = query("query q := exists A, B: (object(A, \"a\") and object(B, \"b\")).");
        let t = table(vec![
            prop(0, OBJ, "a", 0, 0, 0.5),
            prop(1, OBJ, "b", 1, 0, 0.5),
            prop(2, OBJ, "b", 2, 0, 0.5),
        ]);
        let exact = exact_probability(&q, &t).unwrap();
        assert!((exact - 0.375).abs() < 1e-12);
        let en = enumerate_proofs(&q, &t, 100);
        assert!((aggregate(&en.proofs, Aggregator::Max).unwrap() - 0.25).abs() < 1e-12);
        assert!((aggregate(&en.proofs, Aggregator::TopK(usize::MAX)).unwrap() - 0.4375).abs() < 1e-12);

        let many: Vec<Proposal> = (0..21).map(|i| prop(i, OBJ, "a", i % 8, i / 8, 0.5)).collect();
        let t = FactTable::new(
            Grid {
                sigma: 1,
                rows: 8,
                cols: 8,
            },
            many,
            0.0,
            64,
        )
        .unwrap();
        assert_eq!(
            exact_probability(&q, &t),
            Err(InferenceError::TooManyFacts { count: 21, limit: 20 })
        );
    }

    #[test]
    fn aggregator_parsing() {
        assert_eq!("max".parse::<Aggregator>().unwrap(), Aggregator::Max);
        assert_eq!("topk".parse::<Aggregator>().unwrap(), Aggregator::TopK(3));
        assert_eq!("topk:5".parse::<Aggregator>().unwrap(), Aggregator::TopK(5));
        assert!("topk:0".parse::<Aggregator>().is_err());
        assert!("mean".parse::<Aggregator>().is_err());
    }

    #[test]
    fn result_json_roundtrip() {
        let (q, pyr) = singleton_pyramid(&[(1, 0.1), (2, 0.3)]);
        let r = infer_multiscale(&q, &pyr, &InferParams::default()).unwrap();
        let doc = ResultDoc::from(&r);
        let text = doc.to_json();
        let back = ResultDoc::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"per_scale\": {\n    \"1\": "), "{text}");
    }
}
