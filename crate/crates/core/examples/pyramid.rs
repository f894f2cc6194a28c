//! Pool a heatmap at several scales and turn the strongest cells into facts.
//!
//! ```text
//! cargo run --example pyramid
//! ```

use spatialog::grounding::{downsample, extract_facts};
use spatialog::scenegen::{gen_scene, Layout, SceneSpec};
use spatialog::{build_pyramid, GroundingParams, Pooling, SymbolHeatmap};

fn main() {
    let scene = gen_scene(&SceneSpec {
        layout: Layout::ToolOnFloorPositive,
        seed: 3,
        ..SceneSpec::default()
    })
    .unwrap();
    let tool = scene.bundle.get("tool").unwrap();

    for sigma in [1, 4, 16] {
        for pooling in [Pooling::Max, Pooling::Mean] {
            let pooled = downsample(&tool.map, sigma, pooling);
            let facts = extract_facts(&SymbolHeatmap::new("tool", tool.kind, pooled.clone()), 0.05, 3);
            let top: Vec<String> = facts
                .iter()
                .map(|f| format!("({},{}) {:.3}", f.cell.x, f.cell.y, f.prob))
                .collect();
            println!(
                "sigma {sigma:>2} {:<4} grid {:>3}x{:<3} top: {}",
                pooling.to_string(),
                pooled.height(),
                pooled.width(),
                top.join(", ")
            );
        }
    }

    // all symbols at the default scales, capped per symbol
    let params = GroundingParams {
        max_facts: 16,
        ..GroundingParams::default()
    };
    for (sigma, table) in build_pyramid(&scene.bundle, &params).unwrap() {
        let counts: Vec<String> = table
            .symbols()
            .map(|(kind, name)| format!("{name}={}", table.group(*kind, name).len()))
            .collect();
        println!("sigma {sigma:>2}: {} facts ({})", table.len(), counts.join(" "));
    }
}
