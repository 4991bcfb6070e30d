//! Dependence graphs: the variable dependency graph (VDG), target
//! dependence sets, and the control-data flow graph (CDFG).

use crate::frontend::{CombBlock, Design, Statement, StatementId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GraphError {
    #[error("unknown target variable `{0}`")]
    UnknownTarget(String),
}

/// Edge label in the VDG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepKind {
    Data,
    Control,
}

/// Variable dependency graph. An edge `u -> v` means `v` depends on `u`:
/// either `u` occurs in the right-hand side of an assignment to `v` (data)
/// or `u` occurs in a guard dominating an assignment to `v` (control).
#[derive(Debug, Clone)]
pub struct Vdg {
    vars: Vec<String>,
    index: BTreeMap<String, usize>,
    edges: BTreeSet<(usize, usize, DepKind)>,
}

impl Vdg {
    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn has_edge(&self, from: &str, to: &str, kind: DepKind) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&u), Some(&v)) => self.edges.contains(&(u, v, kind)),
            _ => false,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, DepKind)> {
        self.edges.iter().map(|&(u, v, k)| (self.vars[u].as_str(), self.vars[v].as_str(), k))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph vdg {\n");
        for var in &self.vars {
            let _ = writeln!(out, "  \"{var}\";");
        }
        for (u, v, kind) in self.edges() {
            let style = match kind {
                DepKind::Data => "solid",
                DepKind::Control => "dashed",
            };
            let _ = writeln!(out, "  \"{u}\" -> \"{v}\" [style={style}];");
        }
        out.push_str("}\n");
        out
    }
}

/// All variables that can reach the target along VDG edges, plus the
/// target itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependenceSet {
    pub target: String,
    pub members: BTreeSet<String>,
}

impl DependenceSet {
    pub fn contains(&self, var: &str) -> bool {
        self.members.contains(var)
    }
}

/// Guard variables dominating each comb-block position.
///
/// A statement in arm `k` executes only when guards `0..k` are false and
/// guard `k` is true, so all of their variables control it; the else arm
/// is controlled by every guard.
fn dominating_guards(comb: &CombBlock) -> Vec<BTreeSet<String>> {
    let mut doms = Vec::with_capacity(comb.arms.len() + 1);
    let mut acc: BTreeSet<String> = BTreeSet::new();
    for arm in &comb.arms {
        acc.extend(arm.guard.occurrences().into_iter().map(str::to_string));
        doms.push(acc.clone());
    }
    doms.push(acc);
    doms
}

pub fn build_vdg(design: &Design) -> Vdg {
    let vars: Vec<String> = design.variables().into_iter().map(str::to_string).collect();
    let index: BTreeMap<String, usize> =
        vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let mut edges = BTreeSet::new();

    let add = |from: &str, to: &str, kind: DepKind, edges: &mut BTreeSet<_>| {
        if let (Some(&u), Some(&v)) = (index.get(from), index.get(to)) {
            edges.insert((u, v, kind));
        }
    };

    let doms = dominating_guards(&design.comb);
    let visit = |stmt: &Statement, guards: Option<&BTreeSet<String>>, edges: &mut BTreeSet<_>| {
        for op in stmt.rhs.occurrences() {
            add(op, &stmt.lhs, DepKind::Data, edges);
        }
        if let Some(guards) = guards {
            for g in guards {
                add(g, &stmt.lhs, DepKind::Control, edges);
            }
        }
    };

    for (k, arm) in design.comb.arms.iter().enumerate() {
        for stmt in &arm.body {
            visit(stmt, Some(&doms[k]), &mut edges);
        }
    }
    for stmt in design.comb.else_body.iter().flatten() {
        let guards = doms.last().filter(|_| !design.comb.arms.is_empty());
        visit(stmt, guards, &mut edges);
    }
    for stmt in &design.clocked {
        visit(stmt, None, &mut edges);
    }

    Vdg { vars, index, edges }
}

/// Reverse-reachability closure from the target. The target itself is a
/// member, so statements assigning it stay in scope for localization.
pub fn dependence_set(vdg: &Vdg, target: &str) -> Result<DependenceSet, GraphError> {
    let &start = vdg
        .index
        .get(target)
        .ok_or_else(|| GraphError::UnknownTarget(target.to_string()))?;
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); vdg.vars.len()];
    for &(u, v, _) in &vdg.edges {
        reverse[v].push(u);
    }
    let mut seen = vec![false; vdg.vars.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(node) = stack.pop() {
        for &prev in &reverse[node] {
            if !seen[prev] {
                seen[prev] = true;
                stack.push(prev);
            }
        }
    }
    let members = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| vdg.vars[i].clone())
        .collect();
    Ok(DependenceSet { target: target.to_string(), members })
}

/// CDFG node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CdfgNode {
    Entry,
    /// Guard of comb arm `index`.
    Guard { index: usize },
    Stmt { id: StatementId },
    Merge,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CdfgEdge {
    Flow,
    /// Guard-to-statement dominance with branch polarity.
    Control { taken: bool },
    /// Def-to-use between statements.
    Data,
}

#[derive(Debug, Clone)]
pub struct Cdfg {
    pub nodes: Vec<CdfgNode>,
    pub edges: BTreeSet<(usize, usize, CdfgEdge)>,
    vars: BTreeSet<String>,
    stmt_lhs: BTreeMap<StatementId, String>,
}

impl Cdfg {
    pub fn lhs_of(&self, id: StatementId) -> Option<&str> {
        self.stmt_lhs.get(&id).map(String::as_str)
    }

    pub fn statement_ids(&self) -> impl Iterator<Item = StatementId> + '_ {
        self.stmt_lhs.keys().copied()
    }

    pub fn has_variable(&self, var: &str) -> bool {
        self.vars.contains(var)
    }

    fn node_index(&self, node: &CdfgNode) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    /// Nodes reachable from Entry along flow edges.
    pub fn reachable_from_entry(&self) -> BTreeSet<usize> {
        let entry = self.node_index(&CdfgNode::Entry).expect("entry node");
        let mut seen = BTreeSet::from([entry]);
        let mut stack = vec![entry];
        while let Some(n) = stack.pop() {
            for &(u, v, kind) in &self.edges {
                if u == n && kind == CdfgEdge::Flow && seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cdfg {\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let label = match node {
                CdfgNode::Entry => "entry".to_string(),
                CdfgNode::Guard { index } => format!("guard {index}"),
                CdfgNode::Stmt { id } => format!("stmt {id}"),
                CdfgNode::Merge => "merge".to_string(),
                CdfgNode::Exit => "exit".to_string(),
            };
            let _ = writeln!(out, "  n{i} [label=\"{label}\"];");
        }
        for &(u, v, kind) in &self.edges {
            let attr = match kind {
                CdfgEdge::Flow => "",
                CdfgEdge::Control { taken: true } => " [style=dashed,label=\"T\"]",
                CdfgEdge::Control { taken: false } => " [style=dashed,label=\"F\"]",
                CdfgEdge::Data => " [style=dotted]",
            };
            let _ = writeln!(out, "  n{u} -> n{v}{attr};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_cdfg(design: &Design) -> Cdfg {
    let mut nodes = vec![CdfgNode::Entry];
    let mut edges = BTreeSet::new();
    let mut stmt_node: BTreeMap<StatementId, usize> = BTreeMap::new();
    let mut stmt_lhs: BTreeMap<StatementId, String> = BTreeMap::new();

    let push = |nodes: &mut Vec<CdfgNode>, node: CdfgNode| -> usize {
        nodes.push(node);
        nodes.len() - 1
    };

    // Comb block first: it is evaluated before the clocked commits each cycle.
    let entry = 0usize;
    let merge = {
        let chain_stmts = |body: &[Statement],
                               from: usize,
                               nodes: &mut Vec<CdfgNode>,
                               edges: &mut BTreeSet<(usize, usize, CdfgEdge)>,
                               stmt_node: &mut BTreeMap<StatementId, usize>,
                               stmt_lhs: &mut BTreeMap<StatementId, String>|
         -> usize {
            let mut prev = from;
            for stmt in body {
                let n = push(nodes, CdfgNode::Stmt { id: stmt.id });
                stmt_node.insert(stmt.id, n);
                stmt_lhs.insert(stmt.id, stmt.lhs.clone());
                edges.insert((prev, n, CdfgEdge::Flow));
                prev = n;
            }
            prev
        };

        if design.comb.arms.is_empty() {
            let body: &[Statement] = design.comb.else_body.as_deref().unwrap_or(&[]);
            let last =
                chain_stmts(body, entry, &mut nodes, &mut edges, &mut stmt_node, &mut stmt_lhs);
            let merge = push(&mut nodes, CdfgNode::Merge);
            edges.insert((last, merge, CdfgEdge::Flow));
            merge
        } else {
            let guard_nodes: Vec<usize> = (0..design.comb.arms.len())
                .map(|index| push(&mut nodes, CdfgNode::Guard { index }))
                .collect();
            let merge = push(&mut nodes, CdfgNode::Merge);
            edges.insert((entry, guard_nodes[0], CdfgEdge::Flow));
            for (k, arm) in design.comb.arms.iter().enumerate() {
                let last = chain_stmts(
                    &arm.body,
                    guard_nodes[k],
                    &mut nodes,
                    &mut edges,
                    &mut stmt_node,
                    &mut stmt_lhs,
                );
                edges.insert((last, merge, CdfgEdge::Flow));
                // Dominance: this arm's guard (taken) and all earlier guards
                // (not taken) control every statement of the arm.
                for stmt in &arm.body {
                    let n = stmt_node[&stmt.id];
                    edges.insert((guard_nodes[k], n, CdfgEdge::Control { taken: true }));
                    for &g in &guard_nodes[..k] {
                        edges.insert((g, n, CdfgEdge::Control { taken: false }));
                    }
                }
                let next = guard_nodes.get(k + 1).copied();
                if let Some(next) = next {
                    edges.insert((guard_nodes[k], next, CdfgEdge::Flow));
                }
            }
            let last_guard = *guard_nodes.last().expect("nonempty arms");
            if let Some(body) = &design.comb.else_body {
                let last = chain_stmts(
                    body,
                    last_guard,
                    &mut nodes,
                    &mut edges,
                    &mut stmt_node,
                    &mut stmt_lhs,
                );
                edges.insert((last, merge, CdfgEdge::Flow));
                for stmt in body {
                    let n = stmt_node[&stmt.id];
                    for &g in &guard_nodes {
                        edges.insert((g, n, CdfgEdge::Control { taken: false }));
                    }
                }
            } else {
                edges.insert((last_guard, merge, CdfgEdge::Flow));
            }
            merge
        }
    };

    // Clocked chain after the merge.
    let mut prev = merge;
    for stmt in &design.clocked {
        let n = nodes.len();
        nodes.push(CdfgNode::Stmt { id: stmt.id });
        stmt_node.insert(stmt.id, n);
        stmt_lhs.insert(stmt.id, stmt.lhs.clone());
        edges.insert((prev, n, CdfgEdge::Flow));
        prev = n;
    }
    let exit = nodes.len();
    nodes.push(CdfgNode::Exit);
    edges.insert((prev, exit, CdfgEdge::Flow));

    // Data edges: last definition within the arm, otherwise cross-cycle
    // definitions from the clocked block.
    let clocked_def: BTreeMap<&str, StatementId> =
        design.clocked.iter().map(|s| (s.lhs.as_str(), s.id)).collect();
    let mut arm_bodies: Vec<&[Statement]> =
        design.comb.arms.iter().map(|arm| arm.body.as_slice()).collect();
    if let Some(body) = &design.comb.else_body {
        arm_bodies.push(body.as_slice());
    }
    for body in &arm_bodies {
        for (pos, stmt) in body.iter().enumerate() {
            let use_node = stmt_node[&stmt.id];
            for op in stmt.rhs.occurrences() {
                let local_def = body[..pos].iter().rev().find(|d| d.lhs == op);
                if let Some(def) = local_def {
                    edges.insert((stmt_node[&def.id], use_node, CdfgEdge::Data));
                } else if let Some(&def_id) = clocked_def.get(op) {
                    edges.insert((stmt_node[&def_id], use_node, CdfgEdge::Data));
                }
            }
        }
    }
    for stmt in &design.clocked {
        let use_node = stmt_node[&stmt.id];
        for op in stmt.rhs.occurrences() {
            // The clocked block samples post-comb values: take each arm's
            // last definition, or the cross-cycle clocked definition.
            let mut found_comb = false;
            for body in &arm_bodies {
                if let Some(def) = body.iter().rev().find(|d| d.lhs == op) {
                    edges.insert((stmt_node[&def.id], use_node, CdfgEdge::Data));
                    found_comb = true;
                }
            }
            if !found_comb {
                if let Some(&def_id) = clocked_def.get(op) {
                    edges.insert((stmt_node[&def_id], use_node, CdfgEdge::Data));
                }
            }
        }
    }

    let vars = design.variables().into_iter().map(str::to_string).collect();
    Cdfg { nodes, edges, vars, stmt_lhs }
}
