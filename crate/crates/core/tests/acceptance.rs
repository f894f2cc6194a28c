//! End-to-end acceptance checks. Each check prints one `PASS`/`FAIL` line;
//! the test fails if any check fails.
//!
//! ```text
//! cargo test -p spatialog --test acceptance -- --nocapture
//! ```

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use spatialog::grounding::build_pyramid;
use spatialog::harness::{roc_auc, score_modes, EvalMode, ScoreParams};
use spatialog::heatmap::{read_bundle, write_bundle, Manifest};
use spatialog::inference::{
    aggregate, enumerate_proofs, eval_negated, exact_probability, infer_at_scale, infer_multiscale, ResultDoc,
};
use spatialog::scenegen::{gen_scene, DatasetConfig, LabeledBundle, Layout, SceneSpec};
use spatialog::{Aggregator, GroundingParams, Heatmap, InferParams, SymbolKind};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn default_dataset() -> Vec<LabeledBundle> {
    DatasetConfig::default()
        .specs()
        .iter()
        .map(|s| gen_scene(s).expect("default scenes fit"))
        .collect()
}

fn oracle_sandwich() -> Outcome {
    let start = Instant::now();
    let instances = 200u64;
    let mut with_proofs = 0;
    for seed in 0..instances {
        let inst = random_instance(seed, 10);
        let en = enumerate_proofs(&inst.query, &inst.table, usize::MAX);
        let proofs = en.proofs;
        let exact = exact_probability(&inst.query, &inst.table).map_err(|e| format!("{}: {e}", inst.source))?;
        let max = aggregate(&proofs, Aggregator::Max).unwrap();
        let all = noisy_or(proofs.iter().map(|p| p.prob));
        ensure(max <= exact + 1e-9 && exact <= all + 1e-9, || {
            format!(
                "seed {seed} ({}): max {max}, exact {exact}, noisy-or {all}",
                inst.source
            )
        })?;
        let mut prev = 0.0;
        for k in 1..=proofs.len() {
            let v = aggregate(&proofs, Aggregator::TopK(k)).unwrap();
            ensure(v >= prev, || format!("seed {seed}: top-{k} {v} < top-{} {prev}", k - 1))?;
            prev = v;
        }
        ensure((prev - all).abs() <= 1e-9, || {
            format!("seed {seed}: top-n {prev} != noisy-or {all}")
        })?;
        with_proofs += usize::from(!proofs.is_empty());
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{instances} instances ({with_proofs} with proofs) in {:?}",
        start.elapsed()
    ))
}

fn multiscale_dominance() -> Outcome {
    let query = tool_query(false);
    let params = InferParams::default();
    let scenes = default_dataset();
    for scene in &scenes {
        let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
        let result = infer_multiscale(&query, &pyramid, &params).unwrap();
        let mut best = f64::NEG_INFINITY;
        for (sigma, table) in &pyramid {
            let p = infer_at_scale(&query, table, &params).unwrap().prob;
            ensure(result.per_scale[sigma] == p, || {
                format!("{}: per-scale mismatch at {sigma}", scene.bundle.image_id())
            })?;
            ensure(result.prob >= p, || {
                format!("{}: {} < {p} at scale {sigma}", scene.bundle.image_id(), result.prob)
            })?;
            best = best.max(p);
        }
        ensure(result.prob == best, || {
            format!("{}: {} != max {best}", scene.bundle.image_id(), result.prob)
        })?;
        ensure(result.per_scale[&result.sigma] == result.prob, || {
            format!("{}: chosen scale disagrees", scene.bundle.image_id())
        })?;
    }
    Ok(format!("{} bundles, exact equality", scenes.len()))
}

fn ablation_ordering() -> Outcome {
    let start = Instant::now();
    let query = tool_query(false);
    let params = ScoreParams::default();
    let modes = EvalMode::all(1);
    let scenes = default_dataset();
    let labels: Vec<bool> = scenes.iter().map(|s| s.label.is_positive()).collect();
    let mut columns = vec![Vec::new(); modes.len()];
    for scene in &scenes {
        for (col, s) in columns
            .iter_mut()
            .zip(score_modes(&scene.bundle, &query, &modes, &params).unwrap())
        {
            col.push(s);
        }
    }
    let auc: Vec<f64> = columns.iter().map(|c| roc_auc(c, &labels).unwrap().auc).collect();
    let of = |m: EvalMode| auc[modes.iter().position(|&x| x == m).unwrap()];
    let (multi, conj, object) = (
        of(EvalMode::SpatialMultiscale),
        of(EvalMode::ConjNoSpatial),
        of(EvalMode::ObjectOnly),
    );
    let summary = modes
        .iter()
        .zip(&auc)
        .map(|(m, a)| format!("{m}={a:.3}"))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(multi >= 0.90 && conj <= 0.80 && object <= 0.70, || summary.clone())?;
    ensure(multi > conj, || summary.clone())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} scenes: {summary} in {:?}", scenes.len(), start.elapsed()))
}

/// Tables on a 6x6 grid with random tool, floor and cabinet proposals.
fn random_tool_table(rng: &mut ChaCha8Rng) -> spatialog::FactTable {
    let n = rng.gen_range(2..=9);
    let props = (0..n)
        .map(|i| {
            let (kind, sym) = match i % 3 {
                0 => (SymbolKind::Object, "tool"),
                1 => (SymbolKind::Segment, "floor"),
                _ => (SymbolKind::Object, "cabinet"),
            };
            let p = f64::from(rng.gen_range(1..=10u32)) / 10.0;
            proposal(i, kind, sym, rng.gen_range(0..6), rng.gen_range(0..6), p)
        })
        .collect();
    table(6, props)
}

fn vacuity_regression() -> Outcome {
    let literal = tool_query(true);
    let neg = &literal.plan.negations[0];
    let slot = |name: &str| literal.slot_names.iter().position(|s| s == name).unwrap();
    let (o, s2) = (slot("O"), slot("S2"));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..300 {
        let t = random_tool_table(&mut rng);
        let props = t.proposals();
        for oi in 0..t.len() {
            for si in 0..t.len() {
                if props[oi].cell.y >= props[si].cell.y {
                    continue;
                }
                let factor = eval_negated(&literal, neg, &t, &[(o, oi), (s2, si)], &InferParams::default()).unwrap();
                ensure(factor == 1.0, || format!("factor {factor} with O={oi} S2={si}"))?;
                checked += 1;
            }
        }
    }

    let corrected = tool_query(false);
    let params = InferParams::default();
    let mut twins = 0;
    for _ in 0..100 {
        let x = rng.gen_range(0..6u32);
        let y = rng.gen_range(0..3u32);
        let floor_y = rng.gen_range(y + 2..6);
        let mut side_x = rng.gen_range(0..5u32);
        if side_x >= x {
            side_x += 1;
        }
        let mut p = || f64::from(rng.gen_range(3..=9u32)) / 10.0;
        let base = vec![
            proposal(0, SymbolKind::Object, "tool", x, y, p()),
            proposal(1, SymbolKind::Segment, "floor", side_x, y, p()),
            proposal(2, SymbolKind::Segment, "floor", x, floor_y, p()),
        ];
        let mut with_cabinet = base.clone();
        with_cabinet.push(proposal(3, SymbolKind::Object, "cabinet", x, y + 1, p()));
        let (twin, blocked) = (table(6, base), table(6, with_cabinet));
        let engine = |t| infer_at_scale(&corrected, t, &params).unwrap().prob;
        let (e_twin, e_blocked) = (engine(&twin), engine(&blocked));
        let (x_twin, x_blocked) = (
            exact_probability(&corrected, &twin).unwrap(),
            exact_probability(&corrected, &blocked).unwrap(),
        );
        ensure(e_blocked < e_twin, || {
            format!("engine: cabinet {e_blocked} >= twin {e_twin}")
        })?;
        ensure(x_blocked < x_twin, || {
            format!("oracle: cabinet {x_blocked} >= twin {x_twin}")
        })?;
        twins += 1;
    }
    Ok(format!(
        "literal factor 1.0 on {checked} bindings; {twins} cabinet twins lower (engine and oracle)"
    ))
}

fn leaking_pipe_separation() -> Outcome {
    let query = pipe_query();
    let params = InferParams::default();
    let score = |layout, seed| {
        let scene = gen_scene(&SceneSpec {
            layout,
            seed,
            noise: 0.0,
            ..SceneSpec::default()
        })
        .unwrap();
        let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
        infer_multiscale(&query, &pyramid, &params).unwrap().prob
    };
    let pos: Vec<f64> = (0..20).map(|s| score(Layout::PipeLeakPositive, s)).collect();
    let far: Vec<f64> = (100..120).map(|s| score(Layout::PipeLeakFar, s)).collect();
    let min_pos = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let max_far = far.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure(min_pos > max_far, || {
        format!("lowest positive {min_pos} <= highest far {max_far}")
    })?;
    Ok(format!(
        "20 vs 20: lowest positive {min_pos:.4} > highest far {max_far:.4}"
    ))
}

fn performance() -> Outcome {
    let query = tool_query(false);
    let params = InferParams::default();
    let mut worst = Duration::ZERO;
    for layout in [Layout::ToolOnFloorPositive, Layout::ToolNotOnFloor] {
        for seed in 0..3 {
            let scene = gen_scene(&SceneSpec {
                layout,
                seed,
                ..SceneSpec::default()
            })
            .unwrap();
            ensure(scene.bundle.heatmaps().len() == 3, || {
                "expected three symbol maps".into()
            })?;
            let start = Instant::now();
            let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
            infer_multiscale(&query, &pyramid, &params).unwrap();
            worst = worst.max(start.elapsed());
        }
    }
    within(worst, Duration::from_secs(1))?;
    Ok(format!("slowest 224x224 bundle {worst:?}"))
}

fn roc_and_roundtrips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..200 {
        let n = rng.gen_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let levels = rng.gen_range(2..20u32);
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.gen_range(0..levels)) / f64::from(levels))
            .collect();
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        let mw = mann_whitney(&scores, &labels);
        ensure((auc - mw).abs() <= 1e-12, || {
            format!("set {set}: roc {auc} vs pairs {mw}")
        })?;
    }

    let values: Vec<f32> = (0..37 * 23).map(|_| rng.gen::<f32>()).collect();
    let map = Heatmap::new(37, 23, values).unwrap();
    let bytes = map.to_bytes();
    let back = Heatmap::from_bytes(&bytes).unwrap();
    ensure(back.to_bytes() == bytes, || {
        "SYMH bytes differ after a roundtrip".into()
    })?;
    ensure(
        back.values()
            .iter()
            .zip(map.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        || "SYMH values differ after a roundtrip".into(),
    )?;

    let scene = gen_scene(&SceneSpec {
        seed: 3,
        ..SceneSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_bundle(&scene.bundle, dir.path()).unwrap();
    let again = read_bundle(&path).unwrap();
    ensure(again == scene.bundle, || {
        "bundle differs after a manifest roundtrip".into()
    })?;
    let text = std::fs::read_to_string(&path).unwrap();
    ensure(Manifest::from_json(&text).unwrap().to_json() == text, || {
        "manifest text differs".into()
    })?;

    let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
    let doc = ResultDoc::from(&infer_multiscale(&tool_query(false), &pyramid, &InferParams::default()).unwrap());
    let json = doc.to_json();
    let parsed = ResultDoc::from_json(&json).unwrap();
    ensure(parsed == doc && parsed.to_json() == json, || {
        "result JSON differs after a roundtrip".into()
    })?;
    ensure(parsed.prob.to_bits() == doc.prob.to_bits(), || {
        "result probability bits differ".into()
    })?;
    Ok(format!(
        "200 ROC sets match pair counting; SYMH, manifest and result JSON ({} cells) bit-exact",
        doc.cells.len()
    ))
}

/// Written to the process stdout directly so the lines survive output
/// capture.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 7] = [
        ("oracle sandwich", oracle_sandwich),
        ("multiscale dominance", multiscale_dominance),
        ("ablation ordering", ablation_ordering),
        ("vacuity regression", vacuity_regression),
        ("leaking pipe separation", leaking_pipe_separation),
        ("performance", performance),
        ("roc and roundtrips", roc_and_roundtrips),
    ];
    report("");
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(detail) => report(&format!("PASS {name}: {detail}")),
            Err(detail) => {
                report(&format!("FAIL {name}: {detail}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
