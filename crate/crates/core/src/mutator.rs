//! Single-site data-centric bug injection.
//!
//! Three mutation kinds over statements whose LHS lies in the target's
//! dependence set: toggling a negation on an operand occurrence, swapping
//! a binary operator, and replacing an operand with another in-scope
//! variable. Exactly one site changes per mutant.

use crate::frontend::{BinOp, Design, Expr, Statement, StatementId};
use crate::graphs::DependenceSet;
use crate::sim::{classify_trace, simulate, InputVectorSequence, SimError, TraceLabel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum MutationError {
    #[error("statement {0} not found in design")]
    UnknownStatement(StatementId),
    #[error("mutation site {site} is stale for statement {statement}")]
    StaleSite { statement: StatementId, site: String },
    #[error("replacement `{0}` is not declared in the design")]
    UnknownReplacement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Negation,
    OperationSubstitution,
    VariableMisuse,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [
        MutationKind::Negation,
        MutationKind::OperationSubstitution,
        MutationKind::VariableMisuse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::Negation => "negation",
            MutationKind::OperationSubstitution => "operation_substitution",
            MutationKind::VariableMisuse => "variable_misuse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationSite {
    /// RHS occurrence index, left to right.
    Operand(usize),
    /// Binary operator index in pre-order.
    Operator(usize),
}

impl std::fmt::Display for MutationSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MutationSite::Operand(i) => write!(f, "operand {i}"),
            MutationSite::Operator(i) => write!(f, "operator {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub statement: StatementId,
    pub site: MutationSite,
    /// New operator symbol or identifier; absent for negation toggles.
    pub replacement: Option<String>,
}

impl Mutation {
    pub fn describe(&self) -> String {
        match (&self.kind, &self.replacement) {
            (MutationKind::Negation, _) => {
                format!("negation toggle at {} of {}", self.site, self.statement)
            }
            (kind, Some(replacement)) => {
                format!("{} -> `{replacement}` at {} of {}", kind.as_str(), self.site, self.statement)
            }
            (kind, None) => format!("{} at {} of {}", kind.as_str(), self.site, self.statement),
        }
    }
}

/// Variables a mutated operand may legally be replaced with, per statement:
/// inputs, clock-driven regs, and variables assigned earlier on the same
/// comb path (for clocked statements: variables assigned in every arm).
fn misuse_pool(design: &Design, stmt_id: StatementId) -> Vec<String> {
    let mut pool: Vec<String> = design.inputs.clone();
    pool.extend(design.clocked.iter().map(|s| s.lhs.clone()));

    let mut arm_bodies: Vec<&[Statement]> =
        design.comb.arms.iter().map(|a| a.body.as_slice()).collect();
    if let Some(body) = &design.comb.else_body {
        arm_bodies.push(body.as_slice());
    }

    if design.clocked.iter().any(|s| s.id == stmt_id) {
        // Assigned in every arm means well-defined at cycle end.
        if let Some(first) = arm_bodies.first() {
            for stmt in *first {
                if arm_bodies.iter().all(|body| body.iter().any(|s| s.lhs == stmt.lhs)) {
                    pool.push(stmt.lhs.clone());
                }
            }
        }
    } else {
        for body in &arm_bodies {
            if let Some(pos) = body.iter().position(|s| s.id == stmt_id) {
                pool.extend(body[..pos].iter().map(|s| s.lhs.clone()));
                break;
            }
        }
    }
    pool.sort();
    pool.dedup();
    pool
}

/// All single-site mutations of the three kinds over statements assigning
/// a variable in the dependence set. Deterministic order: statements by
/// id, sites left to right, replacements in fixed order.
pub fn enumerate_mutations(
    design: &Design,
    deps: &DependenceSet,
) -> Vec<Mutation> {
    let mut statements: Vec<&Statement> = design
        .statements()
        .into_iter()
        .filter(|s| deps.contains(&s.lhs))
        .collect();
    statements.sort_by_key(|s| s.id);

    let mut out = Vec::new();
    for stmt in statements {
        let occurrences = stmt.rhs.occurrences();
        for (idx, _) in occurrences.iter().enumerate() {
            out.push(Mutation {
                kind: MutationKind::Negation,
                statement: stmt.id,
                site: MutationSite::Operand(idx),
                replacement: None,
            });
        }
        for (idx, op) in stmt.rhs.operators().iter().enumerate() {
            for candidate in BinOp::ALL {
                if candidate != *op {
                    out.push(Mutation {
                        kind: MutationKind::OperationSubstitution,
                        statement: stmt.id,
                        site: MutationSite::Operator(idx),
                        replacement: Some(candidate.symbol().to_string()),
                    });
                }
            }
        }
        let pool = misuse_pool(design, stmt.id);
        for (idx, name) in occurrences.iter().enumerate() {
            for candidate in &pool {
                if candidate != name {
                    out.push(Mutation {
                        kind: MutationKind::VariableMisuse,
                        statement: stmt.id,
                        site: MutationSite::Operand(idx),
                        replacement: Some(candidate.clone()),
                    });
                }
            }
        }
    }
    out
}

enum Edit<'a> {
    ToggleNegation,
    ReplaceVar(&'a str),
}

/// Rewrite the occurrence at `target`; `counter` tracks occurrences seen.
fn edit_occurrence(expr: &Expr, target: usize, counter: &mut usize, edit: &Edit) -> Expr {
    match expr {
        // Treat `~var` atomically so a negation toggle can strip it.
        Expr::Not(inner) if matches!(**inner, Expr::Var(_)) => {
            let hit = *counter == target;
            *counter += 1;
            if hit {
                match edit {
                    Edit::ToggleNegation => (**inner).clone(),
                    Edit::ReplaceVar(name) => Expr::not(Expr::var(name)),
                }
            } else {
                expr.clone()
            }
        }
        Expr::Var(_) => {
            let hit = *counter == target;
            *counter += 1;
            if hit {
                match edit {
                    Edit::ToggleNegation => Expr::not(expr.clone()),
                    Edit::ReplaceVar(name) => Expr::var(name),
                }
            } else {
                expr.clone()
            }
        }
        Expr::Const(_) => expr.clone(),
        Expr::Not(inner) => Expr::not(edit_occurrence(inner, target, counter, edit)),
        Expr::Bin(op, lhs, rhs) => {
            let l = edit_occurrence(lhs, target, counter, edit);
            let r = edit_occurrence(rhs, target, counter, edit);
            Expr::bin(*op, l, r)
        }
        Expr::Cmp { .. } => expr.clone(),
    }
}

fn replace_operator(expr: &Expr, target: usize, counter: &mut usize, new_op: BinOp) -> Expr {
    match expr {
        Expr::Bin(op, lhs, rhs) => {
            let hit = *counter == target;
            *counter += 1;
            let op = if hit { new_op } else { *op };
            let l = replace_operator(lhs, target, counter, new_op);
            let r = replace_operator(rhs, target, counter, new_op);
            Expr::Bin(op, Box::new(l), Box::new(r))
        }
        Expr::Not(inner) => Expr::not(replace_operator(inner, target, counter, new_op)),
        _ => expr.clone(),
    }
}

/// Apply one mutation, returning a design that differs at exactly one
/// syntax-tree site.
pub fn apply_mutation(design: &Design, mutation: &Mutation) -> Result<Design, MutationError> {
    let mut mutant = design.clone();
    let stmt = find_statement_mut(&mut mutant, mutation.statement)
        .ok_or(MutationError::UnknownStatement(mutation.statement))?;

    match (mutation.kind, mutation.site) {
        (MutationKind::Negation, MutationSite::Operand(idx)) => {
            if idx >= stmt.rhs.occurrences().len() {
                return Err(stale(mutation));
            }
            let mut counter = 0;
            stmt.rhs = edit_occurrence(&stmt.rhs, idx, &mut counter, &Edit::ToggleNegation);
        }
        (MutationKind::VariableMisuse, MutationSite::Operand(idx)) => {
            let replacement = mutation.replacement.as_deref().ok_or_else(|| stale(mutation))?;
            if idx >= stmt.rhs.occurrences().len() {
                return Err(stale(mutation));
            }
            if stmt.rhs.occurrences()[idx] == replacement {
                return Err(stale(mutation));
            }
            let mut counter = 0;
            stmt.rhs =
                edit_occurrence(&stmt.rhs, idx, &mut counter, &Edit::ReplaceVar(replacement));
        }
        (MutationKind::OperationSubstitution, MutationSite::Operator(idx)) => {
            let symbol = mutation.replacement.as_deref().ok_or_else(|| stale(mutation))?;
            let new_op = BinOp::ALL
                .into_iter()
                .find(|op| op.symbol() == symbol)
                .ok_or_else(|| stale(mutation))?;
            let operators = stmt.rhs.operators();
            if idx >= operators.len() || operators[idx] == new_op {
                return Err(stale(mutation));
            }
            let mut counter = 0;
            stmt.rhs = replace_operator(&stmt.rhs, idx, &mut counter, new_op);
        }
        _ => return Err(stale(mutation)),
    }

    if let Some(replacement) = &mutation.replacement {
        if mutation.kind == MutationKind::VariableMisuse
            && !design.variables().contains(&replacement.as_str())
        {
            return Err(MutationError::UnknownReplacement(replacement.clone()));
        }
    }
    Ok(mutant)
}

fn stale(mutation: &Mutation) -> MutationError {
    MutationError::StaleSite {
        statement: mutation.statement,
        site: mutation.site.to_string(),
    }
}

fn find_statement_mut(design: &mut Design, id: StatementId) -> Option<&mut Statement> {
    for stmt in &mut design.clocked {
        if stmt.id == id {
            return Some(stmt);
        }
    }
    for arm in &mut design.comb.arms {
        for stmt in &mut arm.body {
            if stmt.id == id {
                return Some(stmt);
            }
        }
    }
    for stmt in design.comb.else_body.iter_mut().flatten() {
        if stmt.id == id {
            return Some(stmt);
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct ObservabilityResult {
    pub observable: bool,
    /// One label per stimulus, in input order.
    pub labels: Vec<TraceLabel>,
}

/// A mutation is observable when at least one stimulus makes the target
/// differ from the golden design.
pub fn check_observability(
    golden: &Design,
    mutant: &Design,
    target: &str,
    stimuli: &[InputVectorSequence],
) -> Result<ObservabilityResult, SimError> {
    let mut labels = Vec::with_capacity(stimuli.len());
    for stimulus in stimuli {
        let golden_trace = simulate(golden, stimulus)?;
        let mutant_trace = simulate(mutant, stimulus)?;
        labels.push(classify_trace(&mutant_trace, &golden_trace, target)?);
    }
    Ok(ObservabilityResult {
        observable: labels.contains(&TraceLabel::Failure),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_design, pretty_print};
    use crate::graphs::{build_vdg, dependence_set};
    use crate::sim::generate_testbench;

    fn tiny(body: &str, decls: &str) -> Design {
        let src = format!(
            "module t(clk, a, b, y);\n  input clk;\n  input a;\n  input b;\n  output y;\n  reg s;\n{decls}\
             \n  always @(posedge clk) begin\n    s <= a;\n  end\n  always @(*) begin\n    {body}\n  end\nendmodule\n"
        );
        parse_design(&src).unwrap()
    }

    fn deps_for(design: &Design, target: &str) -> DependenceSet {
        dependence_set(&build_vdg(design), target).unwrap()
    }

    #[test]
    fn operator_substitution_count_for_single_and() {
        let design = tiny("y = a & b;", "");
        let deps = deps_for(&design, "y");
        let subs: Vec<_> = enumerate_mutations(&design, &deps)
            .into_iter()
            .filter(|m| m.kind == MutationKind::OperationSubstitution)
            .collect();
        assert_eq!(subs.len(), 2);
        let symbols: Vec<&str> =
            subs.iter().map(|m| m.replacement.as_deref().unwrap()).collect();
        assert_eq!(symbols, vec!["|", "^"]);
    }

    #[test]
    fn negation_removal_and_misuse_counts() {
        // y = ~a with pool {a, b, s}: one negation toggle, two misuses.
        let design = tiny("y = ~a;", "");
        let deps = deps_for(&design, "y");
        let y_id = design.comb.else_body.as_ref().unwrap()[0].id;
        let all = enumerate_mutations(&design, &deps);
        let on_y: Vec<_> = all.iter().filter(|m| m.statement == y_id).collect();
        let negations = on_y.iter().filter(|m| m.kind == MutationKind::Negation).count();
        let misuses = on_y.iter().filter(|m| m.kind == MutationKind::VariableMisuse).count();
        assert_eq!(negations, 1);
        assert_eq!(misuses, 2, "replacements are b and s");
    }

    #[test]
    fn negation_sites_cover_insertion_and_removal() {
        let design = tiny("y = a & ~b;", "");
        let deps = deps_for(&design, "y");
        let y_id = design.comb.else_body.as_ref().unwrap()[0].id;
        let mutations = enumerate_mutations(&design, &deps);
        let negs: Vec<_> = mutations
            .iter()
            .filter(|m| m.kind == MutationKind::Negation && m.statement == y_id)
            .collect();
        assert_eq!(negs.len(), 2);
        let stmt = design.comb.else_body.as_ref().unwrap()[0].clone();
        // Insertion on the first operand.
        let inserted = apply_mutation(&design, negs[0]).unwrap();
        let mutated = inserted.comb.else_body.as_ref().unwrap()[0].clone();
        assert_eq!(crate::frontend::print_expr(&mutated.rhs), "~a & ~b");
        // Removal on the negated operand.
        let removed = apply_mutation(&design, negs[1]).unwrap();
        let mutated = removed.comb.else_body.as_ref().unwrap()[0].clone();
        assert_eq!(crate::frontend::print_expr(&mutated.rhs), "a & b");
        assert_eq!(crate::frontend::print_expr(&stmt.rhs), "a & ~b", "golden untouched");
    }

    #[test]
    fn negation_toggle_is_an_involution() {
        let design = tiny("y = a & ~b;", "");
        let deps = deps_for(&design, "y");
        for mutation in enumerate_mutations(&design, &deps)
            .iter()
            .filter(|m| m.kind == MutationKind::Negation)
        {
            let once = apply_mutation(&design, mutation).unwrap();
            let twice = apply_mutation(&once, mutation).unwrap();
            assert!(twice.structurally_eq(&design));
        }
    }

    #[test]
    fn misuse_can_duplicate_an_operand() {
        let design = tiny("y = a & ~b;", "");
        let deps = deps_for(&design, "y");
        let misuse = Mutation {
            kind: MutationKind::VariableMisuse,
            statement: design.comb.else_body.as_ref().unwrap()[0].id,
            site: MutationSite::Operand(1),
            replacement: Some("a".into()),
        };
        let mutant = apply_mutation(&design, &misuse).unwrap();
        let stmt = &mutant.comb.else_body.as_ref().unwrap()[0];
        assert_eq!(crate::frontend::print_expr(&stmt.rhs), "a & ~a");
    }

    #[test]
    fn mutants_differ_at_exactly_one_site() {
        let design = tiny("y = (a & ~b) ^ s;", "");
        let deps = deps_for(&design, "y");
        for mutation in enumerate_mutations(&design, &deps) {
            let mutant = apply_mutation(&design, &mutation).unwrap();
            let golden_stmts = design.statements();
            let mutant_stmts = mutant.statements();
            assert_eq!(golden_stmts.len(), mutant_stmts.len());
            let differing = golden_stmts
                .iter()
                .zip(&mutant_stmts)
                .filter(|(g, m)| !g.structurally_eq(m))
                .count();
            assert_eq!(differing, 1, "{}", mutation.describe());
            // The mutant parses back from printed source.
            parse_design(&pretty_print(&mutant)).unwrap();
        }
    }

    #[test]
    fn stale_mutations_are_rejected() {
        let design = tiny("y = a & b;", "");
        let bad_site = Mutation {
            kind: MutationKind::Negation,
            statement: design.comb.else_body.as_ref().unwrap()[0].id,
            site: MutationSite::Operand(9),
            replacement: None,
        };
        assert!(matches!(
            apply_mutation(&design, &bad_site),
            Err(MutationError::StaleSite { .. })
        ));
        let unknown_stmt = Mutation {
            kind: MutationKind::Negation,
            statement: StatementId::new(99, 0),
            site: MutationSite::Operand(0),
            replacement: None,
        };
        assert!(matches!(
            apply_mutation(&design, &unknown_stmt),
            Err(MutationError::UnknownStatement(_))
        ));
    }

    #[test]
    fn semantically_equivalent_mutant_is_never_observable() {
        // y = a & a misused to y = a & a (idempotent AND): replace b with a
        // in y = a & b, then compare against a golden that also computes a.
        let golden = tiny("y = a & a;", "");
        let also_a = tiny("y = a & a;", "");
        let stimuli: Vec<_> = (0..10).map(|s| generate_testbench(&golden, 32, s)).collect();
        let result = check_observability(&golden, &also_a, "y", &stimuli).unwrap();
        assert!(!result.observable);
        assert!(result.labels.iter().all(|l| *l == TraceLabel::Correct));
    }

    #[test]
    fn unconditional_flip_is_observable_with_one_stimulus() {
        let golden = tiny("y = a & b;", "");
        let deps = deps_for(&golden, "y");
        let toggle = enumerate_mutations(&golden, &deps)
            .into_iter()
            .find(|m| m.kind == MutationKind::Negation)
            .unwrap();
        let mutant = apply_mutation(&golden, &toggle).unwrap();
        let stimuli = vec![generate_testbench(&golden, 16, 0)];
        let result = check_observability(&golden, &mutant, "y", &stimuli).unwrap();
        assert!(result.observable);
    }

    #[test]
    fn observability_is_monotone_in_the_stimulus_set() {
        let golden = tiny("y = a & b;", "");
        let deps = deps_for(&golden, "y");
        let mutation = enumerate_mutations(&golden, &deps)
            .into_iter()
            .find(|m| m.kind == MutationKind::OperationSubstitution)
            .unwrap();
        let mutant = apply_mutation(&golden, &mutation).unwrap();
        let stimuli: Vec<_> = (0..8).map(|s| generate_testbench(&golden, 16, s)).collect();
        let mut seen_observable = false;
        for k in 1..=stimuli.len() {
            let result = check_observability(&golden, &mutant, "y", &stimuli[..k]).unwrap();
            assert!(result.observable >= seen_observable, "flipped back at k={k}");
            seen_observable = result.observable;
        }
    }

    #[test]
    fn enumeration_respects_the_dependence_set() {
        // gnt2's statement must not be mutated when the target is gnt1.
        let src = "\
module arbiter(clk, req1, req2, gnt1, gnt2);
  input clk;
  input req1;
  input req2;
  output gnt1;
  output gnt2;
  reg state;
  always @(posedge clk) begin
    state <= gnt1;
  end
  always @(*) begin
    if (state == 1'b0) begin
      gnt1 = req1 & ~req2;
      gnt2 = ~req1 & req2;
    end else begin
      gnt1 = req1;
      gnt2 = ~req1;
    end
  end
endmodule
";
        let design = parse_design(src).unwrap();
        let deps = deps_for(&design, "gnt1");
        let mutations = enumerate_mutations(&design, &deps);
        assert!(!mutations.is_empty());
        for m in &mutations {
            let stmt = design.statement(m.statement).unwrap();
            assert_ne!(stmt.lhs, "gnt2");
        }
        // The first arm's gnt1 statement admits negation toggles on both
        // operand occurrences (insert on req1, remove on req2).
        let gnt1_stmt = design.comb.arms[0].body[0].id;
        let negs = mutations
            .iter()
            .filter(|m| m.kind == MutationKind::Negation && m.statement == gnt1_stmt)
            .count();
        assert_eq!(negs, 2);
    }

    #[test]
    fn mutation_closure_over_random_designs() {
        use crate::rvdg::{generate_design, RvdgConfig};
        for seed in 0..50 {
            let src = generate_design(&RvdgConfig::default().with_seed(seed)).unwrap();
            let design = parse_design(&src).unwrap();
            let deps = deps_for(&design, &design.outputs[0].clone());
            let stim = generate_testbench(&design, 8, seed);
            for mutation in enumerate_mutations(&design, &deps) {
                let mutant = apply_mutation(&design, &mutation).unwrap();
                let printed = pretty_print(&mutant);
                let reparsed = parse_design(&printed)
                    .unwrap_or_else(|e| panic!("seed {seed} {}: {e}", mutation.describe()));
                crate::sim::simulate(&reparsed, &stim).unwrap();
            }
        }
    }
}
