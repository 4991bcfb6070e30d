//! Frontend for the supported Verilog subset: lexing, parsing, validation
//! and canonical pretty-printing.
//!
//! The subset is deliberately small:
//! - all signals are 1-bit; declarations are `input`, `output`, `reg`, `wire`;
//! - exactly one `always @(posedge <clk>)` block containing only nonblocking
//!   assignments to regs;
//! - exactly one `always @(*)` block whose body is either a bare list of
//!   blocking assignments or an if / else-if / else chain of them;
//! - expressions use `&`, `|`, `^`, `~`; guards may additionally compare an
//!   identifier against `1'b0` / `1'b1` with `==` or `!=`.

pub mod ast;
mod lexer;
mod parser;
mod pretty;

pub use ast::{
    AssignKind, AstNode, BinOp, CombArm, CombBlock, Design, Expr, NodeKind, OperandRef, Statement,
    StatementId,
};
pub use parser::parse_design;
pub use pretty::{pretty_print, print_expr, print_expr_annotated, print_statement};

use serde::{Deserialize, Serialize};

/// Machine-readable diagnostic categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagCode {
    Syntax,
    MultiBitSignal,
    UnsupportedOperator,
    UnsupportedConstruct,
    MultipleClockedBlocks,
    MultipleCombBlocks,
    MissingBlock,
    DuplicateDeclaration,
    UndeclaredIdentifier,
    PortMismatch,
    ClockMisuse,
    InvalidAssignTarget,
    ConstInAssignment,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "syntax-error",
            DiagCode::MultiBitSignal => "multi-bit-signal",
            DiagCode::UnsupportedOperator => "unsupported-operator",
            DiagCode::UnsupportedConstruct => "unsupported-construct",
            DiagCode::MultipleClockedBlocks => "multiple-clocked-blocks",
            DiagCode::MultipleCombBlocks => "multiple-comb-blocks",
            DiagCode::MissingBlock => "missing-block",
            DiagCode::DuplicateDeclaration => "duplicate-declaration",
            DiagCode::UndeclaredIdentifier => "undeclared-identifier",
            DiagCode::PortMismatch => "port-mismatch",
            DiagCode::ClockMisuse => "clock-misuse",
            DiagCode::InvalidAssignTarget => "invalid-assign-target",
            DiagCode::ConstInAssignment => "const-in-assignment",
        }
    }
}

/// A positioned parse or validation error.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{line}:{col}: [{}] {message}", code.as_str())]
pub struct Diagnostic {
    pub code: DiagCode,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, line: u32, col: u32, message: String) -> Self {
        Diagnostic { code, line, col, message }
    }
}
