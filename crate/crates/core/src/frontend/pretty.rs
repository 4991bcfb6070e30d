//! Canonical source printer.
//!
//! The output is deterministic, each statement occupies one line, and
//! re-parsing the printed text reproduces the design structurally. Sub-terms
//! are parenthesized whenever they are binary operations or comparisons, so
//! the printed form pins the tree shape exactly.

use super::ast::*;

pub fn pretty_print(design: &Design) -> String {
    let mut out = String::new();
    let mut ports: Vec<&str> = vec![design.clock.as_str()];
    ports.extend(design.inputs.iter().map(String::as_str));
    ports.extend(design.outputs.iter().map(String::as_str));
    out.push_str(&format!("module {}({});\n", design.name, ports.join(", ")));
    out.push_str(&format!("  input {};\n", design.clock));
    for sig in &design.inputs {
        out.push_str(&format!("  input {sig};\n"));
    }
    for sig in &design.outputs {
        out.push_str(&format!("  output {sig};\n"));
    }
    for sig in &design.regs {
        out.push_str(&format!("  reg {sig};\n"));
    }
    for sig in &design.wires {
        out.push_str(&format!("  wire {sig};\n"));
    }
    out.push('\n');

    out.push_str(&format!("  always @(posedge {}) begin\n", design.clock));
    for stmt in &design.clocked {
        out.push_str(&format!("    {}\n", print_statement(stmt)));
    }
    out.push_str("  end\n\n");

    out.push_str("  always @(*) begin\n");
    if design.comb.arms.is_empty() {
        for stmt in design.comb.else_body.iter().flatten() {
            out.push_str(&format!("    {}\n", print_statement(stmt)));
        }
    } else {
        for (i, arm) in design.comb.arms.iter().enumerate() {
            let head = if i == 0 { "    if" } else { "    end else if" };
            out.push_str(&format!("{head} ({}) begin\n", print_expr(&arm.guard)));
            for stmt in &arm.body {
                out.push_str(&format!("      {}\n", print_statement(stmt)));
            }
        }
        if let Some(body) = &design.comb.else_body {
            out.push_str("    end else begin\n");
            for stmt in body {
                out.push_str(&format!("      {}\n", print_statement(stmt)));
            }
        }
        out.push_str("    end\n");
    }
    out.push_str("  end\nendmodule\n");
    out
}

pub fn print_statement(stmt: &Statement) -> String {
    let op = match stmt.kind {
        AssignKind::Blocking => "=",
        AssignKind::Nonblocking => "<=",
    };
    format!("{} {op} {};", stmt.lhs, print_expr(&stmt.rhs))
}

pub fn print_expr(expr: &Expr) -> String {
    print_expr_annotated(expr, &mut |_, name| name.to_string())
}

/// Print an expression, mapping each identifier occurrence through
/// `annotate(occurrence_index, name)`. Used by report renderers to wrap
/// operands in color markup without re-deriving source layout.
pub fn print_expr_annotated(
    expr: &Expr,
    annotate: &mut impl FnMut(usize, &str) -> String,
) -> String {
    let mut next = 0usize;
    render(expr, annotate, &mut next)
}

fn render(
    expr: &Expr,
    annotate: &mut impl FnMut(usize, &str) -> String,
    next: &mut usize,
) -> String {
    match expr {
        Expr::Var(name) => {
            let idx = *next;
            *next += 1;
            annotate(idx, name)
        }
        Expr::Const(value) => bit(*value).to_string(),
        Expr::Not(inner) => {
            let body = render(inner, annotate, next);
            if needs_parens(inner) {
                format!("~({body})")
            } else {
                format!("~{body}")
            }
        }
        Expr::Bin(op, lhs, rhs) => {
            let l = wrap(lhs, annotate, next);
            let r = wrap(rhs, annotate, next);
            format!("{l} {} {r}", op.symbol())
        }
        Expr::Cmp { var, value, eq } => {
            let idx = *next;
            *next += 1;
            let name = annotate(idx, var);
            format!("{name} {} {}", if *eq { "==" } else { "!=" }, bit(*value))
        }
    }
}

fn wrap(
    expr: &Expr,
    annotate: &mut impl FnMut(usize, &str) -> String,
    next: &mut usize,
) -> String {
    let body = render(expr, annotate, next);
    if needs_parens(expr) {
        format!("({body})")
    } else {
        body
    }
}

fn needs_parens(expr: &Expr) -> bool {
    matches!(expr, Expr::Bin(..) | Expr::Cmp { .. })
}

fn bit(value: bool) -> &'static str {
    if value {
        "1'b1"
    } else {
        "1'b0"
    }
}
