//! Compare the approximate aggregators with exact possible-world inference
//! on a hand-built fact table.
//!
//! Two floor cells support the same tool, so the proofs share a fact and
//! noisy-or over them overcounts.
//!
//! ```text
//! cargo run --example exact_vs_topk
//! ```

use spatialog::grounding::{Cell, Grid};
use spatialog::inference::{aggregate, enumerate_proofs, exact_probability};
use spatialog::logic::shipped;
use spatialog::{compile_query, Aggregator, FactTable, Proposal, SymbolKind};

fn fact(id: u32, kind: SymbolKind, symbol: &str, x: u32, y: u32, prob: f64) -> Proposal {
    Proposal {
        id,
        kind,
        symbol: symbol.into(),
        cell: Cell::new(x, y),
        prob,
    }
}

fn main() {
    let program = shipped::with_prelude(
        r#"query on_floor := exists O, S: (object(O, "tool") and above(O, S) and neighbor(O, S) and segment(S, "floor"))."#,
    )
    .unwrap();
    let query = compile_query(&program, "on_floor").unwrap();
    let grid = Grid {
        sigma: 1,
        rows: 4,
        cols: 4,
    };
    let table = FactTable::new(
        grid,
        vec![
            fact(0, SymbolKind::Object, "tool", 1, 1, 0.9),
            fact(1, SymbolKind::Segment, "floor", 0, 2, 0.6),
            fact(2, SymbolKind::Segment, "floor", 1, 2, 0.7),
            fact(3, SymbolKind::Segment, "floor", 2, 2, 0.5),
            fact(4, SymbolKind::Segment, "floor", 3, 3, 0.9),
        ],
        0.0,
        64,
    )
    .unwrap();

    let proofs = enumerate_proofs(&query, &table, usize::MAX).proofs;
    for p in &proofs {
        println!("proof {:?} p = {:.3}", p.facts, p.prob);
    }
    println!("max        {:.4}", aggregate(&proofs, Aggregator::Max).unwrap());
    for k in 1..=proofs.len() {
        println!("top-{k}      {:.4}", aggregate(&proofs, Aggregator::TopK(k)).unwrap());
    }
    // 0.9 * (1 - 0.4 * 0.3 * 0.5)
    println!("exact      {:.4}", exact_probability(&query, &table).unwrap());
}
