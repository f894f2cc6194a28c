//! Times multi-scale inference on one synthetic 224x224 scene with three
//! symbol maps, scale by scale.
//!
//! ```text
//! cargo run --release --example performance
//! ```

use std::time::Instant;

use spatialog::grounding::build_pyramid;
use spatialog::inference::infer_at_scale;
use spatialog::logic::shipped;
use spatialog::scenegen::{gen_scene, Layout, SceneSpec};
use spatialog::{compile_query, infer_multiscale, GroundingParams, InferParams};

fn main() {
    let program = shipped::with_prelude(shipped::TOOL_ON_FLOOR_CORRECTED).expect("shipped query parses");
    let query = compile_query(&program, "tool_on_floor").expect("shipped query compiles");
    let params = InferParams::default();

    for layout in [Layout::ToolOnFloorPositive, Layout::ToolNotOnFloor] {
        let scene = gen_scene(&SceneSpec {
            layout,
            seed: 7,
            ..SceneSpec::default()
        })
        .expect("default scene fits");
        let start = Instant::now();
        let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).expect("valid bundle");
        let grounding = start.elapsed();
        for (sigma, table) in &pyramid {
            let t = Instant::now();
            let r = infer_at_scale(&query, table, &params).expect("inference runs");
            println!(
                "{layout:>24} sigma={sigma:<2} facts={:<4} proofs={:<6} truncated={:<5} prob={:.4} {:?}",
                table.len(),
                r.proof_count,
                r.truncated,
                r.prob,
                t.elapsed()
            );
        }
        let t = Instant::now();
        let result = infer_multiscale(&query, &pyramid, &params).expect("inference runs");
        println!(
            "{layout:>24} total: grounding {grounding:?}, inference {:?}, P = {:.4} at sigma {}",
            t.elapsed(),
            result.prob,
            result.sigma
        );
    }
}
