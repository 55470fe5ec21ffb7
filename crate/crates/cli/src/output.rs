//! CSV assembly and machine-readable error records.
//!
//! Output is byte-deterministic given the run specification and seed:
//! floats are printed with Rust's shortest round-trip formatting and rows
//! are buffered per run unit and flushed in specification order. Timing is
//! the one non-deterministic column and stays empty unless requested.

use std::fmt::Write as _;

/// One CSV cell; `None` renders as an empty field.
pub enum Cell {
    Text(String),
    Int(u128),
    Float(f64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Text(s) => out.push_str(s),
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Float(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Bool(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Empty => {}
        }
    }
}

pub fn csv_row(cells: &[Cell]) -> String {
    let mut line = String::new();
    for (k, cell) in cells.iter().enumerate() {
        if k > 0 {
            line.push(',');
        }
        cell.render(&mut line);
    }
    line.push('\n');
    line
}

pub fn csv_header(columns: &[&str]) -> String {
    let mut line = columns.join(",");
    line.push('\n');
    line
}

/// Process exit codes: 2 invalid specification, 3 capacity, 4 solver
/// non-convergence, 5 internal invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Failure {
    InvalidSpec = 2,
    Capacity = 3,
    NonConvergence = 4,
    InvariantViolation = 5,
}

impl Failure {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn label(self) -> &'static str {
        match self {
            Failure::InvalidSpec => "invalid-spec",
            Failure::Capacity => "capacity",
            Failure::NonConvergence => "non-convergence",
            Failure::InvariantViolation => "invariant-violation",
        }
    }
}

/// A machine-readable error record, one JSON object per stderr line.
#[derive(Debug, Clone)]
pub struct ErrorRecord {
    pub failure: Failure,
    pub context: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(failure: Failure, context: impl Into<String>, message: impl ToString) -> Self {
        Self {
            failure,
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"error\":\"{}\",\"code\":{},\"context\":\"{}\",\"message\":\"{}\"}}",
            self.failure.label(),
            self.failure.code(),
            escape(&self.context),
            escape(&self.message)
        )
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_render_deterministically() {
        let row = csv_row(&[
            Cell::Int(8),
            Cell::Float(0.125),
            Cell::Empty,
            Cell::Bool(true),
            Cell::Text("RA".into()),
        ]);
        assert_eq!(row, "8,0.125,,true,RA\n");
    }

    #[test]
    fn error_records_are_json_lines() {
        let record = ErrorRecord::new(Failure::Capacity, "m1=160 n2=4", "too many \"states\"");
        assert_eq!(
            record.to_json_line(),
            "{\"error\":\"capacity\",\"code\":3,\"context\":\"m1=160 n2=4\",\
             \"message\":\"too many \\\"states\\\"\"}"
        );
    }
}
