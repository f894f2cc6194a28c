//! Score the default synthetic dataset under every ablation mode and
//! report ROC AUC.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use spatialog::compile_query;
use spatialog::harness::{roc_auc, score_modes, EvalMode, ScoreParams};
use spatialog::logic::shipped;
use spatialog::scenegen::{gen_scene, DatasetConfig};

fn main() {
    let query = compile_query(
        &shipped::with_prelude(shipped::TOOL_ON_FLOOR_CORRECTED).unwrap(),
        "tool_on_floor",
    )
    .unwrap();
    let modes = EvalMode::all(1);
    let params = ScoreParams::default();

    let mut scores = vec![Vec::new(); modes.len()];
    let mut labels = Vec::new();
    for spec in DatasetConfig::default().specs() {
        let scene = gen_scene(&spec).unwrap();
        labels.push(scene.label.is_positive());
        for (column, s) in scores
            .iter_mut()
            .zip(score_modes(&scene.bundle, &query, &modes, &params).unwrap())
        {
            column.push(s);
        }
    }

    println!("{:<20} {:>6}", "mode", "auc");
    for (mode, column) in modes.iter().zip(&scores) {
        let roc = roc_auc(column, &labels).unwrap();
        println!(
            "{:<20} {:>6.3}  ({} thresholds)",
            mode.to_string(),
            roc.auc,
            roc.points.len() - 1
        );
    }
}
