//! Design and statement syntax trees for the supported Verilog subset.
//!
//! A design is a single module with 1-bit signals, one clocked `always`
//! block of nonblocking assignments and one combinational `always` block
//! whose body is an if / else-if / else chain of blocking assignments.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Node kinds appearing in statement syntax trees.
///
/// The set is fixed: downstream feature extraction encodes tree paths over
/// these kinds only, so statement features never mention signal names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    BlockingAssignment,
    NonblockingAssignment,
    Lvalue,
    Rvalue,
    And,
    Or,
    Xor,
    Not,
    Identifier,
}

impl NodeKind {
    pub const ALL: [NodeKind; 9] = [
        NodeKind::BlockingAssignment,
        NodeKind::NonblockingAssignment,
        NodeKind::Lvalue,
        NodeKind::Rvalue,
        NodeKind::And,
        NodeKind::Or,
        NodeKind::Xor,
        NodeKind::Not,
        NodeKind::Identifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::BlockingAssignment => "BlockingAssignment",
            NodeKind::NonblockingAssignment => "NonblockingAssignment",
            NodeKind::Lvalue => "Lvalue",
            NodeKind::Rvalue => "Rvalue",
            NodeKind::And => "And",
            NodeKind::Or => "Or",
            NodeKind::Xor => "Xor",
            NodeKind::Not => "Not",
            NodeKind::Identifier => "Identifier",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A node of a lowered statement syntax tree.
///
/// Only `Identifier` nodes carry a name and have no children; `Not`,
/// `Lvalue` and `Rvalue` have one child; the binary operators have two;
/// the root assignment has children `[Lvalue, Rvalue]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub kind: NodeKind,
    pub children: Vec<AstNode>,
    pub name: Option<String>,
}

impl AstNode {
    pub fn ident(name: &str) -> Self {
        AstNode { kind: NodeKind::Identifier, children: Vec::new(), name: Some(name.to_string()) }
    }

    pub fn inner(kind: NodeKind, children: Vec<AstNode>) -> Self {
        AstNode { kind, children, name: None }
    }

    /// Identifier leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&AstNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a AstNode>) {
        if self.kind == NodeKind::Identifier {
            out.push(self);
        }
        for child in &self.children {
            child.collect_leaves(out);
        }
    }
}

/// Binary Boolean operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    And,
    Or,
    Xor,
}

impl BinOp {
    pub const ALL: [BinOp; 3] = [BinOp::And, BinOp::Or, BinOp::Xor];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
        }
    }

    pub fn node_kind(self) -> NodeKind {
        match self {
            BinOp::And => NodeKind::And,
            BinOp::Or => NodeKind::Or,
            BinOp::Xor => NodeKind::Xor,
        }
    }
}

/// Expression over 1-bit signals.
///
/// `Const` and `Cmp` are only legal inside branch guards; assignment
/// right-hand sides are built from identifiers, `~`, `&`, `|`, `^`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    Const(bool),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Equality test `var == 1'bN` (or `!=` when `eq` is false).
    Cmp { var: String, value: bool, eq: bool },
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Identifier occurrences in left-to-right source order.
    pub fn occurrences(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_occurrences(&mut out);
        out
    }

    fn collect_occurrences<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(name) => out.push(name),
            Expr::Const(_) => {}
            Expr::Not(inner) => inner.collect_occurrences(out),
            Expr::Bin(_, lhs, rhs) => {
                lhs.collect_occurrences(out);
                rhs.collect_occurrences(out);
            }
            Expr::Cmp { var, .. } => out.push(var),
        }
    }

    /// True when the expression contains no `Const` or `Cmp` node, i.e. it
    /// is legal as an assignment right-hand side.
    pub fn is_rhs_legal(&self) -> bool {
        match self {
            Expr::Var(_) => true,
            Expr::Const(_) | Expr::Cmp { .. } => false,
            Expr::Not(inner) => inner.is_rhs_legal(),
            Expr::Bin(_, lhs, rhs) => lhs.is_rhs_legal() && rhs.is_rhs_legal(),
        }
    }

    /// Binary operators in pre-order.
    pub fn operators(&self) -> Vec<BinOp> {
        let mut out = Vec::new();
        self.collect_operators(&mut out);
        out
    }

    fn collect_operators(&self, out: &mut Vec<BinOp>) {
        match self {
            Expr::Bin(op, lhs, rhs) => {
                out.push(*op);
                lhs.collect_operators(out);
                rhs.collect_operators(out);
            }
            Expr::Not(inner) => inner.collect_operators(out),
            _ => {}
        }
    }

    fn lower(&self) -> AstNode {
        match self {
            Expr::Var(name) => AstNode::ident(name),
            Expr::Not(inner) => AstNode::inner(NodeKind::Not, vec![inner.lower()]),
            Expr::Bin(op, lhs, rhs) => {
                AstNode::inner(op.node_kind(), vec![lhs.lower(), rhs.lower()])
            }
            // Guards are never lowered to statement trees.
            Expr::Const(_) | Expr::Cmp { .. } => {
                unreachable!("constants and comparisons cannot appear in assignment trees")
            }
        }
    }
}

/// Whether an assignment is blocking (`=`) or nonblocking (`<=`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignKind {
    Blocking,
    Nonblocking,
}

/// Stable statement identity: source line plus ordinal within the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementId {
    pub line: u32,
    pub ordinal: u32,
}

impl StatementId {
    pub fn new(line: u32, ordinal: u32) -> Self {
        StatementId { line, ordinal }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (line, ordinal) = text.split_once('.')?;
        Some(StatementId { line: line.parse().ok()?, ordinal: ordinal.parse().ok()? })
    }
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.line, self.ordinal)
    }
}

impl Serialize for StatementId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StatementId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        StatementId::parse(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid statement id `{text}`")))
    }
}

/// Reference to one right-hand-side operand occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperandRef {
    /// Index among the statement's RHS occurrences, left to right.
    pub index: usize,
    pub name: String,
}

/// A single assignment statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: StatementId,
    pub kind: AssignKind,
    pub lhs: String,
    pub rhs: Expr,
}

impl Statement {
    /// Lowered syntax tree: assignment root with `[Lvalue, Rvalue]` children.
    pub fn ast(&self) -> AstNode {
        let root_kind = match self.kind {
            AssignKind::Blocking => NodeKind::BlockingAssignment,
            AssignKind::Nonblocking => NodeKind::NonblockingAssignment,
        };
        AstNode::inner(
            root_kind,
            vec![
                AstNode::inner(NodeKind::Lvalue, vec![AstNode::ident(&self.lhs)]),
                AstNode::inner(NodeKind::Rvalue, vec![self.rhs.lower()]),
            ],
        )
    }

    /// RHS operand occurrences in source order.
    pub fn rhs_operands(&self) -> Vec<OperandRef> {
        self.rhs
            .occurrences()
            .into_iter()
            .enumerate()
            .map(|(index, name)| OperandRef { index, name: name.to_string() })
            .collect()
    }

    /// Same statement text save for source position.
    pub fn structurally_eq(&self, other: &Statement) -> bool {
        self.kind == other.kind && self.lhs == other.lhs && self.rhs == other.rhs
    }
}

/// One guarded arm of the combinational branch chain.
#[derive(Debug, Clone)]
pub struct CombArm {
    pub guard: Expr,
    pub body: Vec<Statement>,
}

/// The combinational block body.
///
/// With no arms, `else_body` holds a bare statement list (possibly empty);
/// with arms, it is the optional final `else`.
#[derive(Debug, Clone, Default)]
pub struct CombBlock {
    pub arms: Vec<CombArm>,
    pub else_body: Option<Vec<Statement>>,
}

impl CombBlock {
    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.arms
            .iter()
            .flat_map(|arm| arm.body.iter())
            .chain(self.else_body.iter().flatten())
    }

    pub fn is_empty(&self) -> bool {
        self.statements().next().is_none()
    }
}

/// A parsed design in the supported subset.
#[derive(Debug, Clone)]
pub struct Design {
    pub name: String,
    /// Clock input named in the clocked block's `posedge` event.
    pub clock: String,
    /// Data inputs (the clock is kept separate).
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub regs: Vec<String>,
    pub wires: Vec<String>,
    /// Nonblocking assignments of the clocked block, in source order.
    pub clocked: Vec<Statement>,
    pub comb: CombBlock,
}

impl Design {
    /// All data-carrying variables (the clock is excluded): inputs,
    /// outputs, regs, wires, in declaration order.
    pub fn variables(&self) -> Vec<&str> {
        self.inputs
            .iter()
            .chain(self.outputs.iter())
            .chain(self.regs.iter())
            .chain(self.wires.iter())
            .map(String::as_str)
            .collect()
    }

    /// All statements in source order: clocked block first, then the
    /// combinational block.
    pub fn statements(&self) -> Vec<&Statement> {
        self.clocked.iter().chain(self.comb.statements()).collect()
    }

    pub fn statement(&self, id: StatementId) -> Option<&Statement> {
        self.statements().into_iter().find(|s| s.id == id)
    }

    /// Structural equality: identical up to statement source positions.
    pub fn structurally_eq(&self, other: &Design) -> bool {
        fn stmts_eq(a: &[Statement], b: &[Statement]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.structurally_eq(y))
        }
        self.name == other.name
            && self.clock == other.clock
            && self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.regs == other.regs
            && self.wires == other.wires
            && stmts_eq(&self.clocked, &other.clocked)
            && self.comb.arms.len() == other.comb.arms.len()
            && self
                .comb
                .arms
                .iter()
                .zip(&other.comb.arms)
                .all(|(a, b)| a.guard == b.guard && stmts_eq(&a.body, &b.body))
            && match (&self.comb.else_body, &other.comb.else_body) {
                (None, None) => true,
                (Some(a), Some(b)) => stmts_eq(a, b),
                _ => false,
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_statement() -> Statement {
        // gnt1 = req1 & ~req2;
        Statement {
            id: StatementId::new(1, 0),
            kind: AssignKind::Blocking,
            lhs: "gnt1".into(),
            rhs: Expr::bin(BinOp::And, Expr::var("req1"), Expr::not(Expr::var("req2"))),
        }
    }

    #[test]
    fn lowered_tree_shape() {
        let ast = fig_statement().ast();
        assert_eq!(ast.kind, NodeKind::BlockingAssignment);
        assert_eq!(ast.children.len(), 2);
        assert_eq!(ast.children[0].kind, NodeKind::Lvalue);
        assert_eq!(ast.children[1].kind, NodeKind::Rvalue);
        let lhs_leaf = &ast.children[0].children[0];
        assert_eq!(lhs_leaf.kind, NodeKind::Identifier);
        assert_eq!(lhs_leaf.name.as_deref(), Some("gnt1"));
        let and = &ast.children[1].children[0];
        assert_eq!(and.kind, NodeKind::And);
        assert_eq!(and.children[0].name.as_deref(), Some("req1"));
        assert_eq!(and.children[1].kind, NodeKind::Not);
        assert_eq!(and.children[1].children[0].name.as_deref(), Some("req2"));
    }

    #[test]
    fn operand_occurrences_in_source_order() {
        let stmt = fig_statement();
        let ops = stmt.rhs_operands();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[0].name, "req1");
        assert_eq!(ops[1].name, "req2");
        // Leaf accounting: operands plus the LHS leaf.
        assert_eq!(stmt.ast().leaves().len(), ops.len() + 1);
    }

    #[test]
    fn duplicate_occurrences_are_positional() {
        let stmt = Statement {
            id: StatementId::new(2, 0),
            kind: AssignKind::Blocking,
            lhs: "y".into(),
            rhs: Expr::bin(BinOp::And, Expr::var("x"), Expr::var("x")),
        };
        let ops = stmt.rhs_operands();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[0].index, 0);
        assert_eq!(ops[1].index, 1);
    }

    #[test]
    fn statement_id_round_trips_through_text() {
        let id = StatementId::new(14, 2);
        assert_eq!(StatementId::parse(&id.to_string()), Some(id));
    }
}
