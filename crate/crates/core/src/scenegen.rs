//! Seeded synthetic heatmap bundles with known ground truth.
//!
//! Every scene is a set of heatmaps made of tent-shaped bumps plus uniform
//! noise. Tool scenes carry `tool` and `cabinet` object maps and a `floor`
//! segment map; pipe scenes carry a `pipe` object map and a `leakage`
//! segment map. Positives and hard negatives draw peaks from the same
//! distribution, so only the spatial arrangement separates them.
//!
//! Randomness comes from ChaCha8 seeded with a 64-bit integer; in a dataset
//! the scene at position `i` uses `base_seed + i`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::{write_bundle, Bundle, BundleError, Heatmap, SymbolHeatmap, SymbolKind};

/// Name of the generator recorded in dataset configs.
pub const RNG_NAME: &str = "chacha8";

/// Vertical clearance between the tool and the floor in cabinet scenes.
/// Wide enough to leave a full cell row between them at scale 16.
const CABINET_GAP: u32 = 48;
/// Horizontal clearance between pipe and leakage in far scenes.
const FAR_GAP: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    ToolOnFloorPositive,
    ToolNotOnFloor,
    ToolOnly,
    FloorOnly,
    Neither,
    PipeLeakPositive,
    PipeLeakFar,
}

impl Layout {
    pub const ALL: [Layout; 7] = [
        Layout::ToolOnFloorPositive,
        Layout::ToolNotOnFloor,
        Layout::ToolOnly,
        Layout::FloorOnly,
        Layout::Neither,
        Layout::PipeLeakPositive,
        Layout::PipeLeakFar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::ToolOnFloorPositive => "tool-on-floor-positive",
            Layout::ToolNotOnFloor => "tool-not-on-floor",
            Layout::ToolOnly => "tool-only",
            Layout::FloorOnly => "floor-only",
            Layout::Neither => "neither",
            Layout::PipeLeakPositive => "pipe-leak-positive",
            Layout::PipeLeakFar => "pipe-leak-far",
        }
    }

    pub fn label(self) -> Label {
        match self {
            Layout::ToolOnFloorPositive | Layout::PipeLeakPositive => Label::Positive,
            _ => Label::Negative,
        }
    }

    pub fn is_pipe(self) -> bool {
        matches!(self, Layout::PipeLeakPositive | Layout::PipeLeakFar)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layout::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown layout `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("{what} does not fit a {size}x{size} image")]
    DoesNotFit { what: &'static str, size: u32 },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DatasetError {
    pub fn is_io(&self) -> bool {
        match self {
            DatasetError::Io { .. } => true,
            DatasetError::Bundle(e) => e.is_io(),
            DatasetError::Scene(_) => false,
        }
    }
}

/// Parameters of one scene. Sizes are in pixels; `blob` is the diameter
/// range of the main object bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub layout: Layout,
    pub size: u32,
    pub blob: (u32, u32),
    pub peak: (f64, f64),
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            layout: Layout::ToolOnFloorPositive,
            size: 224,
            blob: (8, 96),
            peak: (0.6, 0.95),
            noise: 0.02,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn check(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Spec(m));
        if self.blob.0 < 2 || self.blob.0 > self.blob.1 {
            return bad(format!("blob range {:?} must satisfy 2 <= min <= max", self.blob));
        }
        let (lo, hi) = self.peak;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("peak range {:?} must satisfy 0 < min <= max <= 1", self.peak));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise amplitude {} must lie in [0, 1)", self.noise));
        }
        if self.size == 0 {
            return bad("image size must be positive".into());
        }
        Ok(())
    }
}

/// Support rectangle of a bump, inclusive pixel bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub symbol: String,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Placement {
    /// Inclusive cell bounds `(x0, y0, x1, y1)` at scale `sigma`.
    pub fn cells(&self, sigma: u32) -> (u32, u32, u32, u32) {
        (self.x0 / sigma, self.y0 / sigma, self.x1 / sigma, self.y1 / sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBundle {
    pub bundle: Bundle,
    pub layout: Layout,
    pub label: Label,
    pub placements: Vec<Placement>,
}

/// Separable tent bump: `peak * (1 - |dx|/rx) * (1 - |dy|/ry)`, zero outside.
#[derive(Debug, Clone, Copy)]
struct Bump {
    cx: u32,
    cy: u32,
    rx: u32,
    ry: u32,
    peak: f64,
}

impl Bump {
    fn value(&self, x: u32, y: u32) -> f64 {
        let fx = 1.0 - f64::from(x.abs_diff(self.cx)) / f64::from(self.rx);
        let fy = 1.0 - f64::from(y.abs_diff(self.cy)) / f64::from(self.ry);
        if fx <= 0.0 || fy <= 0.0 {
            0.0
        } else {
            self.peak * fx * fy
        }
    }

    fn placement(&self, symbol: &str) -> Placement {
        Placement {
            symbol: symbol.into(),
            x0: self.cx + 1 - self.rx,
            y0: self.cy + 1 - self.ry,
            x1: self.cx + self.rx - 1,
            y1: self.cy + self.ry - 1,
        }
    }
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    rng: ChaCha8Rng,
}

impl Scene<'_> {
    fn peak(&mut self) -> f64 {
        let (lo, hi) = self.spec.peak;
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    fn range(&mut self, lo: u32, hi: u32, what: &'static str) -> Result<u32, SceneError> {
        if lo > hi {
            return Err(SceneError::DoesNotFit {
                what,
                size: self.spec.size,
            });
        }
        Ok(self.rng.gen_range(lo..=hi))
    }

    /// Uniform center `c` such that `c - lo + 1 >= 0` and `c + hi <= size`,
    /// i.e. a bump of radius `r` fits when `lo = hi = r`.
    fn center(&mut self, lo: u32, hi: u32, what: &'static str) -> Result<u32, SceneError> {
        let size = self.spec.size;
        match size.checked_sub(hi) {
            Some(top) => self.range(lo.saturating_sub(1), top, what),
            None => Err(SceneError::DoesNotFit { what, size }),
        }
    }

    fn tool_radius(&mut self) -> u32 {
        let (lo, hi) = self.spec.blob;
        self.rng.gen_range(lo..=hi).div_ceil(2).max(2)
    }

    /// Floor half-extents: 32..=96 by 16..=24 at 224 px, proportional
    /// elsewhere.
    fn floor_radii(&mut self) -> (u32, u32) {
        let s = self.spec.size;
        let rx = self.rng.gen_range((s / 7).max(2)..=(s * 3 / 7).max(2));
        let ry = self.rng.gen_range((s / 14).max(2)..=(s * 3 / 28).max(2));
        (rx, ry)
    }

    fn clamp_center(&self, c: i64, r: u32) -> Result<u32, SceneError> {
        let size = self.spec.size;
        let lo = i64::from(r) - 1;
        let hi = i64::from(size) - i64::from(r);
        if lo > hi {
            return Err(SceneError::DoesNotFit { what: "floor", size });
        }
        Ok(c.clamp(lo, hi) as u32)
    }

    fn tool_scene(&mut self, tool: bool, floor: bool) -> Result<Vec<(&'static str, Option<Bump>)>, SceneError> {
        let layout = self.spec.layout;
        let rt = self.tool_radius();
        let (rxf, ryf) = self.floor_radii();
        let (pt, pf, pc) = (self.peak(), self.peak(), self.peak());
        let rxc = self
            .rng
            .gen_range((self.spec.size / 14).max(2)..=(self.spec.size / 7).max(2));
        let ryc = CABINET_GAP / 2 + 8;

        let (tool_bump, floor_bump, cabinet_bump);
        match layout {
            Layout::ToolOnFloorPositive => {
                let lift = self.rng.gen_range(0..=3);
                let yf = self.center(ryf.max(rt + lift), ryf.max(rt.saturating_sub(lift)), "tool on floor")?;
                let xt = self.center(rt, rt, "tool")?;
                let off = self.rng.gen_range(-16i64..=16);
                let xf = self.clamp_center(i64::from(xt) + off, rxf)?;
                let (xc, yc) = (self.center(rxc, rxc, "cabinet")?, self.center(ryc, ryc, "cabinet")?);
                tool_bump = Bump {
                    cx: xt,
                    cy: yf - lift,
                    rx: rt,
                    ry: rt,
                    peak: pt,
                };
                floor_bump = Bump {
                    cx: xf,
                    cy: yf,
                    rx: rxf,
                    ry: ryf,
                    peak: pf,
                };
                cabinet_bump = Bump {
                    cx: xc,
                    cy: yc,
                    rx: rxc,
                    ry: ryc,
                    peak: pc,
                };
            }
            Layout::ToolNotOnFloor if self.rng.gen_bool(0.5) => {
                // tool on a cabinet that stands on the floor
                let yt = self.center(rt, rt + CABINET_GAP + 2 * ryf, "cabinet stack")?;
                let xt = self.center(rt, rt, "tool")?;
                let off = self.rng.gen_range(-16i64..=16);
                let xf = self.clamp_center(i64::from(xt) + off, rxf)?;
                let yc = yt + rt + CABINET_GAP / 2;
                let xc = self.clamp_center(i64::from(xt), rxc)?;
                tool_bump = Bump {
                    cx: xt,
                    cy: yt,
                    rx: rt,
                    ry: rt,
                    peak: pt,
                };
                floor_bump = Bump {
                    cx: xf,
                    cy: yt + rt + CABINET_GAP + ryf,
                    rx: rxf,
                    ry: ryf,
                    peak: pf,
                };
                cabinet_bump = Bump {
                    cx: xc,
                    cy: yc,
                    rx: rxc,
                    ry: ryc,
                    peak: pc,
                };
            }
            _ => {
                // floor entirely above the tool; also used for the partial layouts
                let yf = self.center(ryf, ryf + 2 * rt, "floor above tool")?;
                let yt = yf + ryf + rt;
                let xt = self.center(rt, rt, "tool")?;
                let off = self.rng.gen_range(-16i64..=16);
                let xf = self.clamp_center(i64::from(xt) + off, rxf)?;
                let (xc, yc) = (self.center(rxc, rxc, "cabinet")?, self.center(ryc, ryc, "cabinet")?);
                tool_bump = Bump {
                    cx: xt,
                    cy: yt,
                    rx: rt,
                    ry: rt,
                    peak: pt,
                };
                floor_bump = Bump {
                    cx: xf,
                    cy: yf,
                    rx: rxf,
                    ry: ryf,
                    peak: pf,
                };
                cabinet_bump = Bump {
                    cx: xc,
                    cy: yc,
                    rx: rxc,
                    ry: ryc,
                    peak: pc,
                };
            }
        }
        Ok(vec![
            ("tool", tool.then_some(tool_bump)),
            ("cabinet", tool.then_some(cabinet_bump)),
            ("floor", floor.then_some(floor_bump)),
        ])
    }

    fn pipe_scene(&mut self) -> Result<Vec<(&'static str, Option<Bump>)>, SceneError> {
        // both bumps and the far gap must fit side by side
        let cap = (self.spec.size.saturating_sub(FAR_GAP) / 4).max(2);
        let rp = self.tool_radius().min(cap);
        let rl = self.tool_radius().min(cap);
        let (pp, pl) = (self.peak(), self.peak());
        let pipe;
        let leak;
        if self.spec.layout == Layout::PipeLeakPositive {
            let (dx, dy) = (self.rng.gen_range(-3i64..=3), self.rng.gen_range(0i64..=4));
            let r = rp.max(rl);
            let xp = self.center(r + 3, r + 3, "pipe with leakage")?;
            let yp = self.center(r, r + 4, "pipe with leakage")?;
            pipe = Bump {
                cx: xp,
                cy: yp,
                rx: rp,
                ry: rp,
                peak: pp,
            };
            leak = Bump {
                cx: (i64::from(xp) + dx) as u32,
                cy: (i64::from(yp) + dy) as u32,
                rx: rl,
                ry: rl,
                peak: pl,
            };
        } else {
            let span = rp + FAR_GAP + rl;
            let xp = self.center(rp, span + rl, "pipe and far leakage")?;
            let yp = self.center(rp.max(rl), rp.max(rl), "pipe")?;
            let flip = self.rng.gen_bool(0.5);
            let xl = xp + span;
            let (xp, xl) = if flip {
                (self.spec.size - 1 - xp, self.spec.size - 1 - xl)
            } else {
                (xp, xl)
            };
            pipe = Bump {
                cx: xp,
                cy: yp,
                rx: rp,
                ry: rp,
                peak: pp,
            };
            leak = Bump {
                cx: xl,
                cy: yp,
                rx: rl,
                ry: rl,
                peak: pl,
            };
        }
        Ok(vec![("pipe", Some(pipe)), ("leakage", Some(leak))])
    }

    fn render(&mut self, bump: Option<Bump>) -> Heatmap {
        let n = self.spec.size as usize;
        let amp = self.spec.noise;
        let mut values = Vec::with_capacity(n * n);
        for y in 0..self.spec.size {
            for x in 0..self.spec.size {
                let b = bump.map_or(0.0, |b| b.value(x, y));
                let u: f64 = if amp > 0.0 { self.rng.gen() } else { 0.0 };
                values.push((b * (1.0 - amp) + amp * u) as f32);
            }
        }
        Heatmap::new(n, n, values).expect("scene values are finite and in range")
    }
}

fn kind_of(symbol: &str) -> SymbolKind {
    match symbol {
        "floor" | "leakage" => SymbolKind::Segment,
        _ => SymbolKind::Object,
    }
}

/// Generates one scene. Deterministic in `spec`.
pub fn gen_scene(spec: &SceneSpec) -> Result<LabeledBundle, SceneError> {
    spec.check()?;
    let mut scene = Scene {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let bumps = match spec.layout {
        Layout::ToolOnFloorPositive | Layout::ToolNotOnFloor => scene.tool_scene(true, true)?,
        Layout::ToolOnly => scene.tool_scene(true, false)?,
        Layout::FloorOnly => scene.tool_scene(false, true)?,
        Layout::Neither => scene.tool_scene(false, false)?,
        Layout::PipeLeakPositive | Layout::PipeLeakFar => scene.pipe_scene()?,
    };
    let mut maps = Vec::new();
    let mut placements = Vec::new();
    for (symbol, bump) in bumps {
        if let Some(b) = bump {
            placements.push(b.placement(symbol));
        }
        maps.push(SymbolHeatmap::new(symbol, kind_of(symbol), scene.render(bump)));
    }
    let bundle = Bundle::new(format!("{}-{}", spec.layout, spec.seed), maps).expect("generated maps share one size");
    Ok(LabeledBundle {
        bundle,
        layout: spec.layout,
        label: spec.layout.label(),
        placements,
    })
}

/// Dataset recipe: how many scenes of each layout, and the shared scene
/// parameters. Scenes are emitted in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub rng: String,
    pub base_seed: u64,
    pub counts: BTreeMap<Layout, usize>,
    pub scene: SceneSpec,
}

impl DatasetConfig {
    /// `pos` tool-on-floor positives and `hard_neg` tool-not-on-floor scenes.
    pub fn tool_on_floor(pos: usize, hard_neg: usize, base_seed: u64) -> Self {
        DatasetConfig {
            rng: RNG_NAME.into(),
            base_seed,
            counts: BTreeMap::from([(Layout::ToolOnFloorPositive, pos), (Layout::ToolNotOnFloor, hard_neg)]),
            scene: SceneSpec::default(),
        }
    }

    /// Scene specs in emission order.
    pub fn specs(&self) -> Vec<SceneSpec> {
        let mut out = Vec::new();
        for (&layout, &count) in &self.counts {
            for _ in 0..count {
                let seed = self.base_seed.wrapping_add(out.len() as u64);
                out.push(SceneSpec {
                    layout,
                    seed,
                    ..self.scene
                });
            }
        }
        out
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::tool_on_floor(20, 20, 7)
    }
}

/// One line of `index.jsonl`; `file` is the manifest path relative to the
/// dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub layout: Layout,
    pub label: Label,
    pub seed: u64,
}

pub const INDEX_FILE: &str = "index.jsonl";
pub const CONFIG_FILE: &str = "dataset.json";

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes every scene under `out`, plus `index.jsonl` and `dataset.json`.
pub fn gen_dataset(config: &DatasetConfig, out: impl AsRef<Path>) -> Result<Vec<IndexEntry>, DatasetError> {
    if config.rng != RNG_NAME {
        return Err(SceneError::Spec(format!("unsupported rng `{}`, only `{RNG_NAME}`", config.rng)).into());
    }
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(io_at(out))?;
    let mut entries = Vec::new();
    for (i, spec) in config.specs().iter().enumerate() {
        let scene = gen_scene(spec)?;
        let dir = format!("scene_{i:04}");
        write_bundle(&scene.bundle, out.join(&dir))?;
        entries.push(IndexEntry {
            file: format!("{dir}/manifest.json"),
            layout: spec.layout,
            label: scene.label,
            seed: spec.seed,
        });
    }
    let index_path = out.join(INDEX_FILE);
    let mut index = fs::File::create(&index_path).map_err(io_at(&index_path))?;
    for e in &entries {
        let line = serde_json::to_string(e).expect("index entries serialize");
        writeln!(index, "{line}").map_err(io_at(&index_path))?;
    }
    let config_path = out.join(CONFIG_FILE);
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    fs::write(&config_path, text).map_err(io_at(&config_path))?;
    Ok(entries)
}

/// Reads `index.jsonl` from a dataset directory.
pub fn read_index(root: impl AsRef<Path>) -> Result<Vec<IndexEntry>, DatasetError> {
    let path = root.as_ref().join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            serde_json::from_str(line)
                .map_err(|e| SceneError::Spec(format!("{}:{}: {e}", path.display(), n + 1)).into())
        })
        .collect()
}
