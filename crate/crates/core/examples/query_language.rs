//! Parse, check, print and compile a query.
//!
//! ```text
//! cargo run --example query_language
//! ```

use spatialog::logic::{compile_query, parse_program, print_program, shipped, validate, Step};

const SOURCE: &str = r#"
# a pipe with a leak in the cell to its right
pred right_of(A, B) := right(A, B) and neighbor(A, B).

query leak_right :=
  exists P, L: (object(P, "pipe") and segment(L, "leakage") and right_of(L, P)).
"#;

fn main() {
    let program = parse_program(SOURCE).expect("example parses");
    print!("canonical form:\n{}", print_program(&program));

    let problems = validate(&program);
    println!("violations: {}", problems.len());

    let query = compile_query(&program, "leak_right").expect("example compiles");
    println!("subject variable: {}", query.subject_name());
    for step in &query.plan.steps {
        match step {
            Step::Fact { slot, kind, symbol, .. } => {
                println!("  bind {} to {} `{symbol}`", query.slot_names[*slot], kind.as_str())
            }
            Step::Universe { slot } => println!("  bind {} to any proposal", query.slot_names[*slot]),
        }
    }
    for guard in &query.plan.guards {
        println!("  guard `{}` after {} step(s)", guard.origin, guard.depth);
    }

    // mistakes are reported with positions
    let broken = "query q := exists O: (object(O, \"tool\") and near(O, X)).";
    let program = parse_program(broken).expect("syntax is fine");
    for v in validate(&program) {
        println!("error: {v}");
    }
    match shipped::with_prelude("query q := exists O: object(O, \"tool\")") {
        Ok(_) => unreachable!("missing period"),
        Err(e) => println!("error: {e}"),
    }
}
