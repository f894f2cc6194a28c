//! Leaking pipe: leakage touching the pipe versus leakage far from it.
//!
//! ```text
//! cargo run --release --example leaking_pipe
//! ```

use spatialog::logic::shipped;
use spatialog::scenegen::{gen_scene, Layout, SceneSpec};
use spatialog::{build_pyramid, compile_query, infer_multiscale, GroundingParams, InferParams};

fn main() {
    let query = compile_query(&shipped::with_prelude(shipped::LEAKING_PIPE).unwrap(), "leaking_pipe").unwrap();
    for layout in [Layout::PipeLeakPositive, Layout::PipeLeakFar] {
        for seed in 0..4 {
            let spec = SceneSpec {
                layout,
                seed,
                noise: 0.0,
                ..SceneSpec::default()
            };
            let scene = gen_scene(&spec).unwrap();
            let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
            let r = infer_multiscale(&query, &pyramid, &InferParams::default()).unwrap();
            println!("{layout:<18} seed {seed}: P = {:.4} (sigma {})", r.prob, r.sigma);
        }
    }
}
