//! Write a bundle of heatmaps to disk and read it back.
//!
//! A bundle is a `manifest.json` naming one binary `SYMH` file per symbol.
//!
//! ```text
//! cargo run --example heatmap_files
//! ```

use spatialog::heatmap::{read_bundle, read_heatmap, write_bundle, HEADER_LEN};
use spatialog::{Bundle, Heatmap, SymbolHeatmap, SymbolKind};

fn main() {
    let tool = Heatmap::from_rows(&[&[0.0, 0.1, 0.0], &[0.2, 0.9, 0.3], &[0.0, 0.1, 0.0]]).unwrap();
    let floor = Heatmap::filled(3, 3, 0.05).unwrap();
    let bundle = Bundle::new(
        "demo",
        vec![
            SymbolHeatmap::new("tool", SymbolKind::Object, tool.clone()),
            SymbolHeatmap::new("floor", SymbolKind::Segment, floor),
        ],
    )
    .unwrap();

    let bytes = tool.to_bytes();
    println!("tool map: {} bytes ({} header + 9 x f32)", bytes.len(), HEADER_LEN);
    assert_eq!(read_heatmap(&bytes).unwrap(), tool);

    let dir = tempfile::tempdir().unwrap();
    let manifest = write_bundle(&bundle, dir.path()).unwrap();
    print!("{}", std::fs::read_to_string(&manifest).unwrap());
    let back = read_bundle(&manifest).unwrap();
    assert_eq!(back, bundle);
    println!("read back {} symbols, identical", back.heatmaps().len());

    // values outside [0, 1] are refused
    match Heatmap::new(1, 2, vec![0.5, 1.5]) {
        Ok(_) => unreachable!(),
        Err(e) => println!("refused: {e}"),
    }
}
