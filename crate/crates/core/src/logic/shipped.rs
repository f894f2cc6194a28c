//! Query files bundled with the crate.

use super::ast::Program;
use super::parser::{parse_program, ParseError};

/// `between_vert` and `side` helpers.
pub const PRELUDE: &str = include_str!("../../queries/prelude.sl");
/// Tool on floor with the literal `between_vert(Z, O, S2)` clause.
pub const TOOL_ON_FLOOR_LITERAL: &str = include_str!("../../queries/tool_on_floor_paper.sl");
/// Tool on floor where nothing may lie between the tool and the floor below.
pub const TOOL_ON_FLOOR_CORRECTED: &str = include_str!("../../queries/tool_on_floor_corrected.sl");
pub const LEAKING_PIPE: &str = include_str!("../../queries/leaking_pipe.sl");

/// Parses `source` after the embedded prelude.
pub fn with_prelude(source: &str) -> Result<Program, ParseError> {
    Ok(parse_program(PRELUDE)?.merged(parse_program(source)?))
}
