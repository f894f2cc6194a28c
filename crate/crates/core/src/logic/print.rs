use std::fmt::Write;

use super::ast::{Atom, Formula, Program, Term};

/// Canonical text for a program; re-parsing it yields a structurally equal
/// program.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for rule in &program.rules {
        let _ = writeln!(
            out,
            "pred {}({}) := {}.",
            rule.name,
            rule.params.join(", "),
            print_formula(&rule.body)
        );
    }
    for query in &program.queries {
        let _ = writeln!(out, "query {} := {}.", query.name, print_formula(&query.body));
    }
    out
}

pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, Ctx::Top);
    out
}

pub fn print_atom(a: &Atom) -> String {
    let mut out = String::new();
    write_atom(&mut out, a);
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Top,
    OrChild,
    AndChild,
    Unary,
}

fn write_formula(out: &mut String, f: &Formula, ctx: Ctx) {
    match f {
        Formula::Atom(a) => write_atom(out, a),
        Formula::And(parts) | Formula::Or(parts) if parts.len() == 1 => write_formula(out, &parts[0], ctx),
        Formula::And(parts) | Formula::Or(parts) => {
            let is_and = matches!(f, Formula::And(_));
            // A nested operator of the same kind must keep its parentheses,
            // otherwise the parser would flatten it into its parent.
            let parens = match ctx {
                Ctx::Top => false,
                Ctx::OrChild => !is_and,
                Ctx::AndChild | Ctx::Unary => true,
            };
            let (sep, child) = if is_and {
                (" and ", Ctx::AndChild)
            } else {
                (" or ", Ctx::OrChild)
            };
            if parens {
                out.push('(');
            }
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                write_formula(out, p, child);
            }
            if parens {
                out.push(')');
            }
        }
        Formula::Not(inner) => {
            out.push_str("not ");
            write_formula(out, inner, Ctx::Unary);
        }
        Formula::Exists(vars, body) => {
            let _ = write!(out, "exists {}: ", vars.join(", "));
            write_formula(out, body, Ctx::Unary);
        }
    }
}

fn write_atom(out: &mut String, a: &Atom) {
    out.push_str(&a.pred);
    out.push('(');
    for (i, t) in a.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match t {
            Term::Var(v) => out.push_str(v),
            Term::Sym(s) => {
                out.push('"');
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
        }
    }
    out.push(')');
}
