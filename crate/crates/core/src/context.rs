//! Leaf-to-leaf path features over statement syntax trees.
//!
//! For every RHS operand occurrence we collect the tree paths from it to
//! every other leaf (including the LHS leaf). A path lists the node kinds
//! strictly between the two leaves, ordered from the operand's side, with
//! no direction markers: for `gnt1 = req1 & ~req2` the context of `req1`
//! is `[[And, Rvalue, BlockingAssignment, Lvalue], [And, Not]]`. Paths
//! carry node kinds only, so features are identical under renaming.

use crate::frontend::{AstNode, NodeKind, Statement, StatementId};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ContextError {
    #[error("malformed statement tree: {0}")]
    MalformedAst(String),
    #[error("empty path")]
    EmptyPath,
    #[error("unknown token id {0}")]
    UnknownToken(u16),
}

/// Fixed bijection between node kinds and token ids. Id 0 is a padding
/// token; the nine node kinds follow in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
}

pub const PAD_TOKEN: u16 = 0;

impl Default for Vocab {
    fn default() -> Self {
        Vocab::standard()
    }
}

impl Vocab {
    pub fn standard() -> Self {
        let mut names = vec!["<pad>".to_string()];
        names.extend(NodeKind::ALL.iter().map(|k| k.name().to_string()));
        Vocab { names }
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, kind: NodeKind) -> u16 {
        // ALL is ordered; ids are offset by the padding token.
        NodeKind::ALL.iter().position(|k| *k == kind).expect("fixed kind set") as u16 + 1
    }

    pub fn kind_of(&self, id: u16) -> Result<NodeKind, ContextError> {
        if id == PAD_TOKEN || id as usize >= self.names.len() {
            return Err(ContextError::UnknownToken(id));
        }
        Ok(NodeKind::ALL[(id - 1) as usize])
    }

    /// Digest of the token list; checkpoints store it so a loaded model is
    /// guaranteed to agree on the encoding.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.names.join("\n").as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// The paths anchored at one RHS operand occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperandContext {
    /// Index among the statement's RHS occurrences, left to right.
    pub operand_index: usize,
    pub operand_name: String,
    /// One path per other leaf, ordered by that leaf's position in the
    /// tree (the LHS leaf comes first).
    pub paths: Vec<Vec<NodeKind>>,
}

/// Leaf entry: name plus ancestor kinds from the root down to the parent.
struct Leaf {
    name: String,
    ancestry: Vec<NodeKind>,
}

fn collect_leaves(node: &AstNode, ancestry: &mut Vec<NodeKind>, out: &mut Vec<Leaf>) {
    if node.kind == NodeKind::Identifier {
        out.push(Leaf {
            name: node.name.clone().unwrap_or_default(),
            ancestry: ancestry.clone(),
        });
        return;
    }
    ancestry.push(node.kind);
    for child in &node.children {
        collect_leaves(child, ancestry, out);
    }
    ancestry.pop();
}

/// Node kinds strictly between two leaves, ordered from `a`'s side.
fn leaf_path(a: &Leaf, b: &Leaf) -> Vec<NodeKind> {
    let common = a
        .ancestry
        .iter()
        .zip(&b.ancestry)
        .take_while(|(x, y)| x == y)
        .count();
    debug_assert!(common > 0, "leaves of one statement share the root");
    let mut path = Vec::with_capacity(a.ancestry.len() + b.ancestry.len() - 2 * common + 1);
    path.extend(a.ancestry[common..].iter().rev().copied());
    path.push(a.ancestry[common - 1]);
    path.extend(b.ancestry[common..].iter().copied());
    path
}

/// One context per RHS occurrence, in source order.
pub fn extract_contexts(stmt: &Statement) -> Result<Vec<OperandContext>, ContextError> {
    let ast = stmt.ast();
    let mut leaves = Vec::new();
    collect_leaves(&ast, &mut Vec::new(), &mut leaves);
    if leaves.is_empty() {
        return Err(ContextError::MalformedAst("statement tree has no leaves".into()));
    }
    // Leaf 0 is the LHS under Lvalue; the rest are RHS occurrences.
    if leaves[0].ancestry.last() != Some(&NodeKind::Lvalue) {
        return Err(ContextError::MalformedAst("first leaf is not the assignment target".into()));
    }
    let mut contexts = Vec::with_capacity(leaves.len() - 1);
    for i in 1..leaves.len() {
        let paths = (0..leaves.len())
            .filter(|&j| j != i)
            .map(|j| leaf_path(&leaves[i], &leaves[j]))
            .collect();
        contexts.push(OperandContext {
            operand_index: i - 1,
            operand_name: leaves[i].name.clone(),
            paths,
        });
    }
    Ok(contexts)
}

/// Length-preserving, invertible encoding of a path into token ids.
pub fn encode_path(path: &[NodeKind], vocab: &Vocab) -> Result<Vec<u16>, ContextError> {
    if path.is_empty() {
        return Err(ContextError::EmptyPath);
    }
    Ok(path.iter().map(|&k| vocab.id_of(k)).collect())
}

pub fn decode_path(ids: &[u16], vocab: &Vocab) -> Result<Vec<NodeKind>, ContextError> {
    if ids.is_empty() {
        return Err(ContextError::EmptyPath);
    }
    ids.iter().map(|&id| vocab.kind_of(id)).collect()
}

/// Encoded per-operand features for one statement, ready for the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStatement {
    pub id: StatementId,
    pub lhs: String,
    pub operand_names: Vec<String>,
    /// `paths[operand][path]` as token id sequences.
    pub paths: Vec<Vec<Vec<u16>>>,
}

impl EncodedStatement {
    pub fn operand_count(&self) -> usize {
        self.operand_names.len()
    }
}

pub fn encode_statement(stmt: &Statement, vocab: &Vocab) -> Result<EncodedStatement, ContextError> {
    let contexts = extract_contexts(stmt)?;
    let mut operand_names = Vec::with_capacity(contexts.len());
    let mut paths = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        operand_names.push(ctx.operand_name);
        paths.push(
            ctx.paths
                .iter()
                .map(|p| encode_path(p, vocab))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(EncodedStatement { id: stmt.id, lhs: stmt.lhs.clone(), operand_names, paths })
}
