//! Spatial configuration finding over probabilistic symbol heatmaps.
//!
//! A configuration such as "a tool lying on the floor" is written as a
//! first-order query over `object`/`segment` facts and spatial built-ins
//! (`left`, `right`, `above`, `below`, `neighbor`). Each symbol of the query
//! is measured as a per-pixel probability heatmap; the engine down-samples the
//! heatmaps into a pyramid of grids, turns the strongest cells into
//! probabilistic facts, enumerates proofs of the query with guard-first
//! pruning, combines the best `k` proofs per location with noisy-or and picks
//! the scale with the highest configuration probability.
//!
//! Module map:
//!
//! - [`logic`]: the query language (parser, printer, validator, compiler).
//! - [`heatmap`]: the `SYMH` heatmap format and JSON bundle manifests.
//! - [`grounding`]: multi-scale pooling and fact extraction.
//! - [`inference`]: proof enumeration, top-k aggregation, negation, scale
//!   selection and an exact possible-world oracle.
//! - [`scenegen`]: seeded synthetic scenes and datasets.
//! - [`harness`]: ablation scoring, ROC/AUC, rendering and the CLI.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod grounding;
pub mod harness;
pub mod heatmap;
pub mod inference;
pub mod logic;
pub mod scenegen;

pub use grounding::{build_pyramid, FactTable, GroundingParams, Pooling, Proposal};
pub use heatmap::{Bundle, Heatmap, SymbolHeatmap, SymbolKind};
pub use inference::{infer_at_scale, infer_multiscale, Aggregator, ConfigurationResult, InferParams};
pub use logic::{compile_query, parse_program, validate, CompiledQuery, Program};
