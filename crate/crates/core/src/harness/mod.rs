//! Ablation scoring, ROC analysis, rendering and the command line.

pub mod cli;
pub mod render;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grounding::{build_pyramid, GroundingError, GroundingParams, Pyramid};
use crate::heatmap::{Bundle, SymbolKind};
use crate::inference::{infer_at_scale, infer_multiscale, InferParams, InferenceError};
use crate::logic::CompiledQuery;

/// How a bundle is scored in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalMode {
    /// Peak of the query's object heatmaps.
    ObjectOnly,
    /// Peak of the query's segment heatmaps.
    SegmentOnly,
    /// Product of the two peaks.
    Product,
    /// The query without spatial guards or negations, over all scales.
    ConjNoSpatial,
    /// The full query at one scale.
    SpatialFixed(u32),
    /// The full query at the best scale.
    SpatialMultiscale,
}

impl EvalMode {
    /// The six modes with fixed scale `sigma`.
    pub fn all(sigma: u32) -> [EvalMode; 6] {
        [
            EvalMode::ObjectOnly,
            EvalMode::SegmentOnly,
            EvalMode::Product,
            EvalMode::ConjNoSpatial,
            EvalMode::SpatialFixed(sigma),
            EvalMode::SpatialMultiscale,
        ]
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMode::ObjectOnly => f.write_str("object-only"),
            EvalMode::SegmentOnly => f.write_str("segment-only"),
            EvalMode::Product => f.write_str("product"),
            EvalMode::ConjNoSpatial => f.write_str("conj-no-spatial"),
            EvalMode::SpatialFixed(s) => write!(f, "spatial-fixed({s})"),
            EvalMode::SpatialMultiscale => f.write_str("spatial-multiscale"),
        }
    }
}

impl FromStr for EvalMode {
    type Err = String;

    /// Accepts the display names; `spatial-fixed` alone means scale 1 and
    /// `spatial-fixed:S` is accepted as well as `spatial-fixed(S)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mode = match s {
            "object-only" => EvalMode::ObjectOnly,
            "segment-only" => EvalMode::SegmentOnly,
            "product" => EvalMode::Product,
            "conj-no-spatial" => EvalMode::ConjNoSpatial,
            "spatial-multiscale" => EvalMode::SpatialMultiscale,
            "spatial-fixed" => EvalMode::SpatialFixed(1),
            _ => {
                let sigma = s
                    .strip_prefix("spatial-fixed:")
                    .or_else(|| s.strip_prefix("spatial-fixed(").and_then(|r| r.strip_suffix(')')))
                    .and_then(|n| n.parse::<u32>().ok())
                    .ok_or_else(|| format!("unknown mode `{s}`"))?;
                EvalMode::SpatialFixed(sigma)
            }
        };
        Ok(mode)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("scale {sigma} is not among the configured scales {scales:?}")]
    ScaleNotConfigured { sigma: u32, scales: Vec<u32> },
    #[error("ROC needs both classes, got {positives} positives and {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreParams {
    pub grounding: GroundingParams,
    pub infer: InferParams,
}

fn peak_of(bundle: &Bundle, query: &CompiledQuery, kind: SymbolKind) -> f64 {
    query
        .symbols_of(kind)
        .into_iter()
        .filter_map(|s| bundle.get(s))
        .filter(|h| h.kind == kind)
        .map(|h| f64::from(h.map.max_value()))
        .fold(0.0, f64::max)
}

/// Scores one bundle under several modes, sharing the pyramid.
pub fn score_modes(
    bundle: &Bundle,
    query: &CompiledQuery,
    modes: &[EvalMode],
    params: &ScoreParams,
) -> Result<Vec<f64>, HarnessError> {
    for m in modes {
        if let EvalMode::SpatialFixed(sigma) = *m {
            if !params.grounding.scales.contains(&sigma) {
                return Err(HarnessError::ScaleNotConfigured {
                    sigma,
                    scales: params.grounding.scales.clone(),
                });
            }
        }
    }
    let mut pyramid: Option<Pyramid> = None;
    let mut scores = Vec::with_capacity(modes.len());
    for &mode in modes {
        let score = match mode {
            EvalMode::ObjectOnly => peak_of(bundle, query, SymbolKind::Object),
            EvalMode::SegmentOnly => peak_of(bundle, query, SymbolKind::Segment),
            EvalMode::Product => {
                peak_of(bundle, query, SymbolKind::Object) * peak_of(bundle, query, SymbolKind::Segment)
            }
            _ => {
                if pyramid.is_none() {
                    pyramid = Some(build_pyramid(bundle, &params.grounding)?);
                }
                let pyr = pyramid.as_ref().expect("pyramid built above");
                match mode {
                    EvalMode::ConjNoSpatial => infer_multiscale(&query.without_spatial(), pyr, &params.infer)?.prob,
                    EvalMode::SpatialFixed(sigma) => infer_at_scale(query, &pyr[&sigma], &params.infer)?.prob,
                    _ => infer_multiscale(query, pyr, &params.infer)?.prob,
                }
            }
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Scores one bundle under one mode. Symbols missing from the bundle
/// contribute nothing.
pub fn score_bundle(
    bundle: &Bundle,
    query: &CompiledQuery,
    mode: EvalMode,
    params: &ScoreParams,
) -> Result<f64, HarnessError> {
    Ok(score_modes(bundle, query, &[mode], params)?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// `(score, is_positive)` by descending score; ties keep input order.
    pub sorted: Vec<(f64, bool)>,
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve and trapezoidal AUC. Equal scores form one threshold step, so
/// ties earn half credit.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult, HarnessError> {
    if scores.len() != labels.len() {
        return Err(HarnessError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(HarnessError::DegenerateLabels { positives, negatives });
    }
    let mut sorted: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (np, nn) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let (prev_fpr, prev_tpr) = *points.last().expect("starts with the origin");
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (fpr, tpr) = (fp as f64 / nn, tp as f64 / np);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        points.push((fpr, tpr));
    }
    Ok(RocResult { sorted, points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{Heatmap, SymbolHeatmap};
    use crate::logic::{compile_query, shipped};

    fn tool_query() -> CompiledQuery {
        compile_query(
            &shipped::with_prelude(shipped::TOOL_ON_FLOOR_CORRECTED).unwrap(),
            "tool_on_floor",
        )
        .unwrap()
    }

    fn bundle(tool: f32, floor: f32) -> Bundle {
        let mut t = vec![0.0; 64];
        t[9] = tool;
        let mut f = vec![0.0; 64];
        f[18] = floor;
        Bundle::new(
            "b",
            vec![
                SymbolHeatmap::new("tool", SymbolKind::Object, Heatmap::new(8, 8, t).unwrap()),
                SymbolHeatmap::new("floor", SymbolKind::Segment, Heatmap::new(8, 8, f).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in EvalMode::all(4) {
            assert_eq!(m.to_string().parse::<EvalMode>().unwrap(), m);
        }
        assert_eq!(
            "spatial-fixed:8".parse::<EvalMode>().unwrap(),
            EvalMode::SpatialFixed(8)
        );
        assert_eq!("spatial-fixed".parse::<EvalMode>().unwrap(), EvalMode::SpatialFixed(1));
        assert!("spatial".parse::<EvalMode>().is_err());
    }

    #[test]
    fn zero_bundle_scores_zero() {
        let q = tool_query();
        let b = bundle(0.0, 0.0);
        let scores = score_modes(&b, &q, &EvalMode::all(2), &ScoreParams::default()).unwrap();
        assert_eq!(scores, vec![0.0; 6]);
    }

    #[test]
    fn marginal_modes() {
        let q = tool_query();
        let b = bundle(0.9, 0.8);
        let p = ScoreParams::default();
        assert_eq!(
            score_bundle(&b, &q, EvalMode::ObjectOnly, &p).unwrap(),
            0.8999999761581421
        );
        assert_eq!(
            score_bundle(&b, &q, EvalMode::SegmentOnly, &p).unwrap(),
            0.800000011920929
        );
        let prod = score_bundle(&b, &q, EvalMode::Product, &p).unwrap();
        assert!((prod - 0.72).abs() < 1e-6);
        let fixed = score_bundle(&b, &q, EvalMode::SpatialFixed(1), &p).unwrap();
        // one floor cell serves as both S1 and S2 and is counted once
        assert!((fixed - 0.72).abs() < 1e-6);
        assert_eq!(
            score_bundle(&b, &q, EvalMode::SpatialFixed(3), &p),
            Err(HarnessError::ScaleNotConfigured {
                sigma: 3,
                scales: vec![1, 2, 4, 8, 16]
            })
        );
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[true, false]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap().auc, 0.5);
        let r = roc_auc(&[0.9, 0.7, 0.6, 0.2], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(HarnessError::DegenerateLabels {
                positives: 2,
                negatives: 0
            })
        );
        assert!(matches!(
            roc_auc(&[0.1], &[true, false]),
            Err(HarnessError::LengthMismatch { .. })
        ));
    }
}
