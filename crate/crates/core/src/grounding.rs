//! From heatmaps to probabilistic facts.
//!
//! Every heatmap of a bundle is pooled down by each scale factor `σ` (cell =
//! `σ×σ` pixel block, edge blocks pooled over their actual extent) and the
//! strongest cells above a threshold become [`Proposal`]s.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::{Bundle, Heatmap, SymbolHeatmap, SymbolKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Max,
    Mean,
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Pooling::Max),
            "mean" => Ok(Pooling::Mean),
            other => Err(format!("unknown pooling `{other}` (expected max or mean)")),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
        })
    }
}

/// Grid cell; `x` is the column, `y` the row. Cells order row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub sigma: u32,
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn for_pixels(height: usize, width: usize, sigma: u32) -> Self {
        let s = sigma as usize;
        Grid {
            sigma,
            rows: height.div_ceil(s),
            cols: width.div_ceil(s),
        }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (cell.x as usize) < self.cols && (cell.y as usize) < self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub id: u32,
    pub kind: SymbolKind,
    pub symbol: String,
    pub cell: Cell,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingParams {
    pub scales: Vec<u32>,
    pub pooling: Pooling,
    /// Cells must exceed this value to become facts.
    pub epsilon: f64,
    /// Cap on proposals per symbol and scale.
    pub max_facts: usize,
}

impl Default for GroundingParams {
    fn default() -> Self {
        GroundingParams {
            scales: vec![1, 2, 4, 8, 16],
            pooling: Pooling::Max,
            epsilon: 0.05,
            max_facts: 64,
        }
    }
}

impl GroundingParams {
    pub fn check(&self) -> Result<(), GroundingError> {
        if self.scales.is_empty() {
            return Err(GroundingError::Params("no scales".into()));
        }
        if let Some(s) = self.scales.iter().find(|&&s| s == 0) {
            return Err(GroundingError::Params(format!("scale {s} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(GroundingError::Params(format!(
                "epsilon {} outside [0,1)",
                self.epsilon
            )));
        }
        if self.max_facts == 0 {
            return Err(GroundingError::Params("max_facts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GroundingError {
    #[error("invalid grounding parameters: {0}")]
    Params(String),
    #[error("bundle has no heatmaps")]
    EmptyBundle,
    #[error("proposal {id} at ({}, {}) lies outside the {rows}x{cols} grid", cell.x, cell.y)]
    OutsideGrid {
        id: u32,
        cell: Cell,
        rows: usize,
        cols: usize,
    },
    #[error("proposal {id} has probability {prob}, outside ({epsilon}, 1]")]
    Probability { id: u32, prob: f64, epsilon: f64 },
    #[error("duplicate proposal id {0}")]
    DuplicateId(u32),
    #[error("{count} proposals for {kind} {symbol:?}, cap is {max}")]
    TooMany {
        kind: SymbolKind,
        symbol: String,
        count: usize,
        max: usize,
    },
}

/// Pools `σ×σ` pixel blocks into one cell each.
pub fn downsample(map: &Heatmap, sigma: u32, pooling: Pooling) -> Heatmap {
    assert!(sigma >= 1, "scale factor must be at least 1");
    if sigma == 1 {
        return map.clone();
    }
    let s = sigma as usize;
    let grid = Grid::for_pixels(map.height(), map.width(), sigma);
    let mut out = Vec::with_capacity(grid.rows * grid.cols);
    for by in 0..grid.rows {
        let rows = by * s..((by + 1) * s).min(map.height());
        for bx in 0..grid.cols {
            let cols = bx * s..((bx + 1) * s).min(map.width());
            let (mut lo, mut hi, mut sum) = (f32::INFINITY, 0.0f32, 0.0f64);
            for r in rows.clone() {
                for c in cols.clone() {
                    let v = map.get(r, c);
                    lo = lo.min(v);
                    hi = hi.max(v);
                    sum += f64::from(v);
                }
            }
            let v = match pooling {
                Pooling::Max => hi,
                Pooling::Mean => {
                    let n = (rows.len() * cols.len()) as f64;
                    ((sum / n) as f32).clamp(lo, hi)
                }
            };
            out.push(v);
        }
    }
    Heatmap::new(grid.rows, grid.cols, out).expect("pooled values stay in range")
}

/// Cells with value `> epsilon`, strongest first (ties in row-major order),
/// at most `max_facts` of them. Ids count up from zero in output order.
pub fn extract_facts(map: &SymbolHeatmap, epsilon: f64, max_facts: usize) -> Vec<Proposal> {
    let width = map.map.width();
    let mut cells: Vec<(usize, f32)> = map
        .map
        .values()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| f64::from(v) > epsilon)
        .collect();
    let order = |a: &(usize, f32), b: &(usize, f32)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if cells.len() > max_facts {
        cells.select_nth_unstable_by(max_facts - 1, order);
        cells.truncate(max_facts);
    }
    cells.sort_unstable_by(order);
    cells
        .into_iter()
        .enumerate()
        .map(|(id, (i, v))| Proposal {
            id: id as u32,
            kind: map.kind,
            symbol: map.symbol.clone(),
            cell: Cell::new((i % width) as u32, (i / width) as u32),
            prob: f64::from(v),
        })
        .collect()
}

/// Facts of one scale: proposals grouped by `(kind, symbol)`, each group
/// strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FactTable {
    grid: Grid,
    epsilon: f64,
    max_facts: usize,
    proposals: Vec<Proposal>,
    groups: BTreeMap<(SymbolKind, String), Vec<usize>>,
}

impl FactTable {
    /// Validates and canonicalizes; the insertion order of `proposals` does
    /// not matter.
    pub fn new(
        grid: Grid,
        mut proposals: Vec<Proposal>,
        epsilon: f64,
        max_facts: usize,
    ) -> Result<Self, GroundingError> {
        let mut ids = HashSet::new();
        for p in &proposals {
            if !grid.contains(p.cell) {
                return Err(GroundingError::OutsideGrid {
                    id: p.id,
                    cell: p.cell,
                    rows: grid.rows,
                    cols: grid.cols,
                });
            }
            if !(p.prob > epsilon && p.prob <= 1.0) {
                return Err(GroundingError::Probability {
                    id: p.id,
                    prob: p.prob,
                    epsilon,
                });
            }
            if !ids.insert(p.id) {
                return Err(GroundingError::DuplicateId(p.id));
            }
        }
        proposals.sort_by(|a, b| {
            (a.kind, &a.symbol)
                .cmp(&(b.kind, &b.symbol))
                .then(b.prob.total_cmp(&a.prob))
                .then(a.cell.cmp(&b.cell))
                .then(a.id.cmp(&b.id))
        });
        let mut groups: BTreeMap<(SymbolKind, String), Vec<usize>> = BTreeMap::new();
        for (i, p) in proposals.iter().enumerate() {
            groups.entry((p.kind, p.symbol.clone())).or_default().push(i);
        }
        for ((kind, symbol), members) in &groups {
            if members.len() > max_facts {
                return Err(GroundingError::TooMany {
                    kind: *kind,
                    symbol: symbol.clone(),
                    count: members.len(),
                    max: max_facts,
                });
            }
        }
        Ok(FactTable {
            grid,
            epsilon,
            max_facts,
            proposals,
            groups,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn sigma(&self) -> u32 {
        self.grid.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_facts(&self) -> usize {
        self.max_facts
    }

    /// All proposals in canonical order; evaluation refers to them by index.
    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// Indices into [`proposals`](Self::proposals) for one symbol.
    pub fn group(&self, kind: SymbolKind, symbol: &str) -> &[usize] {
        self.groups.get(&(kind, symbol.to_string())).map_or(&[], Vec::as_slice)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &(SymbolKind, String)> {
        self.groups.keys()
    }

    /// Copy without the given proposal ids.
    pub fn without(&self, ids: &[u32]) -> FactTable {
        let kept = self
            .proposals
            .iter()
            .filter(|p| !ids.contains(&p.id))
            .cloned()
            .collect();
        FactTable::new(self.grid, kept, self.epsilon, self.max_facts).expect("subset of a valid table")
    }
}

pub type Pyramid = BTreeMap<u32, FactTable>;

/// Pools and extracts every symbol of `bundle` at every scale. Ids are
/// assigned per scale in `(kind, symbol)` order, so the result does not depend
/// on the order of heatmaps in the bundle.
pub fn build_pyramid(bundle: &Bundle, params: &GroundingParams) -> Result<Pyramid, GroundingError> {
    params.check()?;
    let (height, width) = bundle.dims().ok_or(GroundingError::EmptyBundle)?;
    let mut maps: Vec<&SymbolHeatmap> = bundle.heatmaps().iter().collect();
    maps.sort_by(|a, b| (a.kind, &a.symbol).cmp(&(b.kind, &b.symbol)));
    let mut pyramid = Pyramid::new();
    for &sigma in &params.scales {
        let grid = Grid::for_pixels(height, width, sigma);
        let mut proposals = Vec::new();
        for m in &maps {
            let pooled = SymbolHeatmap::new(m.symbol.clone(), m.kind, downsample(&m.map, sigma, params.pooling));
            let base = proposals.len() as u32;
            proposals.extend(
                extract_facts(&pooled, params.epsilon, params.max_facts)
                    .into_iter()
                    .map(|p| Proposal { id: p.id + base, ..p }),
            );
        }
        pyramid.insert(
            sigma,
            FactTable::new(grid, proposals, params.epsilon, params.max_facts)?,
        );
    }
    Ok(pyramid)
}
