//! The abandoned-tool query on synthetic scenes: a tool resting on the
//! floor, a tool standing on a cabinet, and the two shipped variants of
//! the query.
//!
//! ```text
//! cargo run --release --example tool_on_floor
//! ```

use spatialog::logic::shipped;
use spatialog::scenegen::{gen_scene, Layout, SceneSpec};
use spatialog::{build_pyramid, compile_query, infer_multiscale, GroundingParams, InferParams};

fn main() {
    let corrected = compile_query(
        &shipped::with_prelude(shipped::TOOL_ON_FLOOR_CORRECTED).unwrap(),
        "tool_on_floor",
    )
    .unwrap();
    let literal = compile_query(
        &shipped::with_prelude(shipped::TOOL_ON_FLOOR_LITERAL).unwrap(),
        "tool_on_floor",
    )
    .unwrap();
    let params = InferParams::default();

    for (layout, seed) in [
        (Layout::ToolOnFloorPositive, 1),
        (Layout::ToolNotOnFloor, 5),
        (Layout::ToolNotOnFloor, 3),
    ] {
        let scene = gen_scene(&SceneSpec {
            layout,
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let pyramid = build_pyramid(&scene.bundle, &GroundingParams::default()).unwrap();
        println!("{layout} (seed {seed})");
        for p in &scene.placements {
            println!(
                "  {:<8} x {:>3}..{:<3} y {:>3}..{:<3}",
                p.symbol, p.x0, p.x1, p.y0, p.y1
            );
        }
        for (name, query) in [("corrected", &corrected), ("literal", &literal)] {
            let r = infer_multiscale(query, &pyramid, &params).unwrap();
            let scales: Vec<String> = r.per_scale.iter().map(|(s, p)| format!("{s}:{p:.3}")).collect();
            println!(
                "  {name:<9} P = {:.4} at sigma {:<2} [{}]",
                r.prob,
                r.sigma,
                scales.join(" ")
            );
            if let Some(best) = &r.best {
                let cells: Vec<String> = best
                    .bindings
                    .iter()
                    .map(|b| format!("{}=({},{})", query.slot_names[b.slot], b.cell.x, b.cell.y))
                    .collect();
                println!("            best proof {} p={:.4}", cells.join(" "), best.prob);
            }
        }
    }
}
