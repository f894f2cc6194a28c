//! Render a scene's heatmaps and its configuration map as PGM images.
//!
//! ```text
//! cargo run --example render -- /tmp/maps
//! ```

use std::path::PathBuf;

use spatialog::harness::render::{cells_pgm, heatmap_pgm};
use spatialog::logic::shipped;
use spatialog::scenegen::{gen_scene, SceneSpec};
use spatialog::{build_pyramid, compile_query, infer_multiscale, GroundingParams, InferParams};

fn main() -> std::io::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("spatialog-maps"), PathBuf::from);
    std::fs::create_dir_all(&out)?;

    let scene = gen_scene(&SceneSpec {
        seed: 5,
        ..SceneSpec::default()
    })
    .unwrap();
    for h in scene.bundle.heatmaps() {
        let path = out.join(format!("{}.pgm", h.symbol));
        std::fs::write(&path, heatmap_pgm(&h.map))?;
        println!("wrote {}", path.display());
    }

    let query = compile_query(
        &shipped::with_prelude(shipped::TOOL_ON_FLOOR_CORRECTED).unwrap(),
        "tool_on_floor",
    )
    .unwrap();
    let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
    let result = infer_multiscale(&query, &pyramid, &InferParams::default()).unwrap();
    let path = out.join("config.pgm");
    std::fs::write(&path, cells_pgm(pyramid[&result.sigma].grid(), &result.cells))?;
    println!(
        "wrote {} (sigma {}, P = {:.4})",
        path.display(),
        result.sigma,
        result.prob
    );
    Ok(())
}
