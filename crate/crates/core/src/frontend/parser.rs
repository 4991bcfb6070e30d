//! Recursive-descent parser and design validator.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{DiagCode, Diagnostic};
use std::collections::{BTreeMap, BTreeSet};

/// Parse and validate a design. Statement ids are derived from source
/// positions, so identical source text always yields identical ids.
pub fn parse_design(source: &str) -> Result<Design, Diagnostic> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0, line_counts: BTreeMap::new() };
    let design = parser.design()?;
    validate(&design)?;
    Ok(design)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Statements started per source line, for ordinal assignment.
    line_counts: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExprMode {
    /// Assignment right-hand side: identifiers and `~ & | ^` only.
    Rhs,
    /// Branch guard: additionally allows `1'bN` literals and `==` / `!=`.
    Guard,
}

enum AlwaysBlock {
    Clocked { clock: String, body: Vec<Statement> },
    Comb(CombBlock),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn check(&mut self, want: &Tok) -> bool {
        if &self.peek().tok == want {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Token, Diagnostic> {
        if self.peek().tok == want {
            Ok(self.advance())
        } else {
            Err(self.syntax_error(&format!("expected {}", want.describe())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, u32, u32), Diagnostic> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Ident(name) => {
                self.advance();
                Ok((name, tok.line, tok.col))
            }
            _ => Err(self.syntax_error("expected identifier")),
        }
    }

    fn syntax_error(&self, expected: &str) -> Diagnostic {
        let tok = self.peek();
        Diagnostic::new(
            DiagCode::Syntax,
            tok.line,
            tok.col,
            format!("{expected}, found {}", tok.tok.describe()),
        )
    }

    fn error_at(&self, code: DiagCode, line: u32, col: u32, message: String) -> Diagnostic {
        Diagnostic::new(code, line, col, message)
    }

    fn design(&mut self) -> Result<Design, Diagnostic> {
        self.expect(Tok::Module)?;
        let (name, _, _) = self.expect_ident()?;
        self.expect(Tok::LParen)?;
        let mut ports = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                let (port, _, _) = self.expect_ident()?;
                ports.push(port);
                if !self.check(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Semi)?;

        let mut inputs: Vec<String> = Vec::new();
        let mut outputs: Vec<String> = Vec::new();
        let mut regs: Vec<String> = Vec::new();
        let mut wires: Vec<String> = Vec::new();
        let mut decl_pos: BTreeMap<String, (u32, u32)> = BTreeMap::new();

        loop {
            let tok = self.peek().clone();
            let list = match tok.tok {
                Tok::Input => &mut inputs,
                Tok::Output => &mut outputs,
                Tok::Reg => &mut regs,
                Tok::Wire => &mut wires,
                _ => break,
            };
            self.advance();
            if self.peek().tok == Tok::LBracket {
                let at = self.peek().clone();
                return Err(self.error_at(
                    DiagCode::MultiBitSignal,
                    at.line,
                    at.col,
                    "multi-bit signal declaration; only 1-bit signals are supported".to_string(),
                ));
            }
            loop {
                let (sig, line, col) = self.expect_ident()?;
                if let Some(&(pl, pc)) = decl_pos.get(&sig) {
                    return Err(self.error_at(
                        DiagCode::DuplicateDeclaration,
                        line,
                        col,
                        format!("`{sig}` already declared at {pl}:{pc}"),
                    ));
                }
                decl_pos.insert(sig.clone(), (line, col));
                list.push(sig);
                if !self.check(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
        }

        let mut clocked: Option<(String, Vec<Statement>)> = None;
        let mut comb: Option<CombBlock> = None;
        while self.peek().tok == Tok::Always {
            let at = self.peek().clone();
            match self.always_block()? {
                AlwaysBlock::Clocked { clock, body } => {
                    if clocked.is_some() {
                        return Err(self.error_at(
                            DiagCode::MultipleClockedBlocks,
                            at.line,
                            at.col,
                            "a design may contain only one clocked always block".to_string(),
                        ));
                    }
                    clocked = Some((clock, body));
                }
                AlwaysBlock::Comb(block) => {
                    if comb.is_some() {
                        return Err(self.error_at(
                            DiagCode::MultipleCombBlocks,
                            at.line,
                            at.col,
                            "a design may contain only one combinational always block".to_string(),
                        ));
                    }
                    comb = Some(block);
                }
            }
        }
        let end = self.peek().clone();
        self.expect(Tok::Endmodule)?;
        if self.peek().tok != Tok::Eof {
            return Err(self.error_at(
                DiagCode::UnsupportedConstruct,
                self.peek().line,
                self.peek().col,
                "only one module per source file is supported".to_string(),
            ));
        }

        let (clock, clocked_body) = clocked.ok_or_else(|| {
            self.error_at(
                DiagCode::MissingBlock,
                end.line,
                end.col,
                "design must contain one clocked always block".to_string(),
            )
        })?;
        let comb = comb.ok_or_else(|| {
            self.error_at(
                DiagCode::MissingBlock,
                end.line,
                end.col,
                "design must contain one combinational always block".to_string(),
            )
        })?;

        // The clock is a port like any other; separate it from data inputs.
        let data_inputs: Vec<String> = inputs.iter().filter(|i| **i != clock).cloned().collect();
        if data_inputs.len() == inputs.len() {
            return Err(self.error_at(
                DiagCode::ClockMisuse,
                end.line,
                end.col,
                format!("clock `{clock}` must be declared as an input"),
            ));
        }

        let design = Design {
            name,
            clock,
            inputs: data_inputs,
            outputs,
            regs,
            wires,
            clocked: clocked_body,
            comb,
        };

        // Port list must name exactly the declared inputs and outputs.
        let declared: BTreeSet<&str> = std::iter::once(design.clock.as_str())
            .chain(design.inputs.iter().map(String::as_str))
            .chain(design.outputs.iter().map(String::as_str))
            .collect();
        let listed: BTreeSet<&str> = ports.iter().map(String::as_str).collect();
        if declared != listed {
            return Err(self.error_at(
                DiagCode::PortMismatch,
                end.line,
                end.col,
                "port list must name exactly the declared inputs and outputs".to_string(),
            ));
        }

        Ok(design)
    }

    fn always_block(&mut self) -> Result<AlwaysBlock, Diagnostic> {
        self.expect(Tok::Always)?;
        self.expect(Tok::At)?;
        self.expect(Tok::LParen)?;
        if self.check(&Tok::Star) {
            self.expect(Tok::RParen)?;
            let block = self.comb_body()?;
            Ok(AlwaysBlock::Comb(block))
        } else if self.check(&Tok::Posedge) {
            let (clock, _, _) = self.expect_ident()?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::Begin)?;
            let mut body = Vec::new();
            while self.peek().tok != Tok::End {
                body.push(self.statement(AssignKind::Nonblocking)?);
            }
            self.expect(Tok::End)?;
            Ok(AlwaysBlock::Clocked { clock, body })
        } else {
            Err(self.syntax_error("expected `*` or `posedge` in event list"))
        }
    }

    fn comb_body(&mut self) -> Result<CombBlock, Diagnostic> {
        self.expect(Tok::Begin)?;
        if self.check(&Tok::End) {
            return Ok(CombBlock { arms: Vec::new(), else_body: None });
        }
        if self.peek().tok == Tok::If {
            let mut arms = Vec::new();
            let mut else_body = None;
            loop {
                self.expect(Tok::If)?;
                self.expect(Tok::LParen)?;
                let guard = self.expr(ExprMode::Guard)?;
                self.expect(Tok::RParen)?;
                let body = self.stmt_block()?;
                arms.push(CombArm { guard, body });
                if self.check(&Tok::Else) {
                    if self.peek().tok == Tok::If {
                        continue;
                    }
                    else_body = Some(self.stmt_block()?);
                }
                break;
            }
            self.expect(Tok::End)?;
            Ok(CombBlock { arms, else_body })
        } else {
            let mut body = Vec::new();
            while self.peek().tok != Tok::End {
                body.push(self.statement(AssignKind::Blocking)?);
            }
            self.expect(Tok::End)?;
            Ok(CombBlock { arms: Vec::new(), else_body: Some(body) })
        }
    }

    fn stmt_block(&mut self) -> Result<Vec<Statement>, Diagnostic> {
        self.expect(Tok::Begin)?;
        let mut body = Vec::new();
        while self.peek().tok != Tok::End {
            body.push(self.statement(AssignKind::Blocking)?);
        }
        self.expect(Tok::End)?;
        Ok(body)
    }

    fn statement(&mut self, kind: AssignKind) -> Result<Statement, Diagnostic> {
        let (lhs, line, col) = self.expect_ident()?;
        match (kind, &self.peek().tok) {
            (AssignKind::Blocking, Tok::Assign) | (AssignKind::Nonblocking, Tok::NbAssign) => {
                self.advance();
            }
            (AssignKind::Blocking, Tok::NbAssign) => {
                return Err(self.error_at(
                    DiagCode::UnsupportedConstruct,
                    line,
                    col,
                    "nonblocking assignment is only allowed in the clocked block".to_string(),
                ));
            }
            (AssignKind::Nonblocking, Tok::Assign) => {
                return Err(self.error_at(
                    DiagCode::UnsupportedConstruct,
                    line,
                    col,
                    "blocking assignment is only allowed in the combinational block".to_string(),
                ));
            }
            _ => return Err(self.syntax_error("expected `=` or `<=`")),
        }
        let rhs = self.expr(ExprMode::Rhs)?;
        self.expect(Tok::Semi)?;
        let ordinal = self.line_counts.entry(line).or_insert(0);
        let id = StatementId::new(line, *ordinal);
        *ordinal += 1;
        Ok(Statement { id, kind, lhs, rhs })
    }

    // Precedence, loosest first: `|`, `^`, `&`, `==`/`!=`, `~`, primary.
    fn expr(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        let mut lhs = self.xor_expr(mode)?;
        while self.check(&Tok::Pipe) {
            let rhs = self.xor_expr(mode)?;
            lhs = Expr::bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn xor_expr(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        let mut lhs = self.and_expr(mode)?;
        while self.check(&Tok::Caret) {
            let rhs = self.and_expr(mode)?;
            lhs = Expr::bin(BinOp::Xor, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        let mut lhs = self.eq_expr(mode)?;
        while self.check(&Tok::Amp) {
            let rhs = self.eq_expr(mode)?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn eq_expr(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        let lhs = self.unary_expr(mode)?;
        let eq = match self.peek().tok {
            Tok::EqEq => true,
            Tok::NotEq => false,
            _ => return Ok(lhs),
        };
        let at = self.peek().clone();
        if mode != ExprMode::Guard {
            return Err(self.error_at(
                DiagCode::UnsupportedConstruct,
                at.line,
                at.col,
                "equality tests are only allowed in branch guards".to_string(),
            ));
        }
        let var = match lhs {
            Expr::Var(name) => name,
            _ => {
                return Err(self.error_at(
                    DiagCode::UnsupportedConstruct,
                    at.line,
                    at.col,
                    "equality tests must compare an identifier against a constant".to_string(),
                ));
            }
        };
        self.advance();
        let value = self.bit_literal()?;
        Ok(Expr::Cmp { var, value, eq })
    }

    fn unary_expr(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        if self.check(&Tok::Tilde) {
            let inner = self.unary_expr(mode)?;
            return Ok(Expr::not(inner));
        }
        self.primary(mode)
    }

    fn primary(&mut self, mode: ExprMode) -> Result<Expr, Diagnostic> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Ident(name) => {
                self.advance();
                Ok(Expr::Var(name))
            }
            Tok::Number(_) => {
                if mode == ExprMode::Guard {
                    let value = self.bit_literal()?;
                    Ok(Expr::Const(value))
                } else {
                    Err(self.error_at(
                        DiagCode::ConstInAssignment,
                        tok.line,
                        tok.col,
                        "constant operands are not supported in assignments".to_string(),
                    ))
                }
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr(mode)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.syntax_error("expected identifier, literal, `~` or `(`")),
        }
    }

    fn bit_literal(&mut self) -> Result<bool, Diagnostic> {
        let tok = self.peek().clone();
        match &tok.tok {
            Tok::Number(text) => {
                self.advance();
                match text.as_str() {
                    "1'b0" => Ok(false),
                    "1'b1" => Ok(true),
                    other => Err(self.error_at(
                        DiagCode::MultiBitSignal,
                        tok.line,
                        tok.col,
                        format!("literal `{other}` is not a 1-bit constant (`1'b0` or `1'b1`)"),
                    )),
                }
            }
            _ => Err(self.syntax_error("expected `1'b0` or `1'b1`")),
        }
    }
}

/// Semantic validation over a syntactically well-formed design.
fn validate(design: &Design) -> Result<(), Diagnostic> {
    let vars: BTreeSet<&str> = design.variables().into_iter().collect();
    let regs: BTreeSet<&str> = design.regs.iter().map(String::as_str).collect();
    let inputs: BTreeSet<&str> = design.inputs.iter().map(String::as_str).collect();
    let clocked_lhs: BTreeSet<&str> = design.clocked.iter().map(|s| s.lhs.as_str()).collect();

    let check_expr = |expr: &Expr, at: StatementId| -> Result<(), Diagnostic> {
        for name in expr.occurrences() {
            if name == design.clock {
                return Err(Diagnostic::new(
                    DiagCode::ClockMisuse,
                    at.line,
                    0,
                    format!("clock `{name}` cannot be used as data"),
                ));
            }
            if !vars.contains(name) {
                return Err(Diagnostic::new(
                    DiagCode::UndeclaredIdentifier,
                    at.line,
                    0,
                    format!("`{name}` is not declared"),
                ));
            }
        }
        Ok(())
    };

    for stmt in &design.clocked {
        if !regs.contains(stmt.lhs.as_str()) {
            return Err(Diagnostic::new(
                DiagCode::InvalidAssignTarget,
                stmt.id.line,
                0,
                format!("`{}` must be declared `reg` to be assigned in the clocked block", stmt.lhs),
            ));
        }
        check_expr(&stmt.rhs, stmt.id)?;
    }

    let comb_check = |stmt: &Statement| -> Result<(), Diagnostic> {
        if !vars.contains(stmt.lhs.as_str()) {
            return Err(Diagnostic::new(
                DiagCode::UndeclaredIdentifier,
                stmt.id.line,
                0,
                format!("`{}` is not declared", stmt.lhs),
            ));
        }
        if inputs.contains(stmt.lhs.as_str()) || stmt.lhs == design.clock {
            return Err(Diagnostic::new(
                DiagCode::InvalidAssignTarget,
                stmt.id.line,
                0,
                format!("input `{}` cannot be assigned", stmt.lhs),
            ));
        }
        if clocked_lhs.contains(stmt.lhs.as_str()) {
            return Err(Diagnostic::new(
                DiagCode::InvalidAssignTarget,
                stmt.id.line,
                0,
                format!("`{}` is already driven by the clocked block", stmt.lhs),
            ));
        }
        if !stmt.rhs.is_rhs_legal() {
            return Err(Diagnostic::new(
                DiagCode::ConstInAssignment,
                stmt.id.line,
                0,
                "assignment right-hand sides cannot contain constants or comparisons".to_string(),
            ));
        }
        check_expr(&stmt.rhs, stmt.id)
    };

    for arm in &design.comb.arms {
        for name in arm.guard.occurrences() {
            if name == design.clock {
                return Err(Diagnostic::new(
                    DiagCode::ClockMisuse,
                    0,
                    0,
                    format!("clock `{name}` cannot be used in a guard"),
                ));
            }
            if !vars.contains(name) {
                return Err(Diagnostic::new(
                    DiagCode::UndeclaredIdentifier,
                    0,
                    0,
                    format!("`{name}` is not declared"),
                ));
            }
        }
        for stmt in &arm.body {
            comb_check(stmt)?;
        }
    }
    for stmt in design.comb.else_body.iter().flatten() {
        comb_check(stmt)?;
    }

    for stmt in &design.clocked {
        if !stmt.rhs.is_rhs_legal() {
            return Err(Diagnostic::new(
                DiagCode::ConstInAssignment,
                stmt.id.line,
                0,
                "assignment right-hand sides cannot contain constants or comparisons".to_string(),
            ));
        }
    }

    Ok(())
}
