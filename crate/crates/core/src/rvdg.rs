//! Random design generator over a fixed two-process template.
//!
//! Generated designs have a clocked block that updates `state_bits` state
//! registers from inputs and current state, and a combinational block with
//! `branches` guarded arms plus a final `else`. Guards test every state
//! bit against a distinct constant pattern, optionally conjoined with one
//! (possibly negated) input. Each arm assigns the same temporaries first
//! and then every output, so no arm infers a latch. Statements after the
//! first in an arm reuse an earlier-defined variable with probability 0.5
//! (the second statement of the first arm always does, so every design
//! carries a def-use chain); when arms have a single statement the first
//! clocked assignment reads a comb-assigned variable instead.

use crate::frontend::{
    pretty_print, AssignKind, BinOp, CombArm, CombBlock, Design, Expr, Statement, StatementId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum RvdgError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RvdgConfig {
    pub inputs: usize,
    pub state_bits: usize,
    pub outputs: usize,
    /// Guarded arms; a final `else` arm is always added.
    pub branches: usize,
    /// Maximum operand occurrences per statement RHS.
    pub max_operands: usize,
    /// Maximum Boolean operators (binary plus negations) per statement RHS.
    pub max_operators: usize,
    /// Assignments per arm, outputs included.
    pub stmts_per_branch: usize,
    pub seed: u64,
}

impl Default for RvdgConfig {
    fn default() -> Self {
        RvdgConfig {
            inputs: 3,
            state_bits: 2,
            outputs: 2,
            branches: 4,
            max_operands: 3,
            max_operators: 4,
            stmts_per_branch: 2,
            seed: 0,
        }
    }
}

impl RvdgConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), RvdgError> {
        let counts = [
            ("inputs", self.inputs),
            ("state_bits", self.state_bits),
            ("outputs", self.outputs),
            ("branches", self.branches),
            ("max_operators", self.max_operators),
            ("stmts_per_branch", self.stmts_per_branch),
        ];
        for (name, value) in counts {
            if value < 1 {
                return Err(RvdgError::Infeasible(format!("{name} must be at least 1")));
            }
        }
        if self.max_operands < 2 {
            return Err(RvdgError::Infeasible("max_operands must be at least 2".into()));
        }
        if self.state_bits >= usize::BITS as usize
            || self.branches > 1usize << self.state_bits
        {
            return Err(RvdgError::Infeasible(format!(
                "{} branches need distinct patterns over {} state bits",
                self.branches, self.state_bits
            )));
        }
        if self.stmts_per_branch < self.outputs {
            return Err(RvdgError::Infeasible(format!(
                "{} statements per branch cannot assign {} outputs",
                self.stmts_per_branch, self.outputs
            )));
        }
        Ok(())
    }
}

/// Generate design source text. The output always parses under the
/// frontend and is byte-identical for equal configs.
pub fn generate_design(cfg: &RvdgConfig) -> Result<String, RvdgError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let inputs: Vec<String> = (0..cfg.inputs).map(|i| format!("in{i}")).collect();
    let outputs: Vec<String> = (0..cfg.outputs).map(|i| format!("out{i}")).collect();
    let states: Vec<String> = (0..cfg.state_bits).map(|i| format!("s{i}")).collect();
    let n_temps = cfg.stmts_per_branch - cfg.outputs;
    let temps: Vec<String> = (0..n_temps).map(|i| format!("t{i}")).collect();

    let dummy = StatementId::new(0, 0);
    let stmt = |lhs: &str, rhs: Expr, kind: AssignKind| Statement {
        id: dummy,
        kind,
        lhs: lhs.to_string(),
        rhs,
    };

    // Distinct state patterns, one per guarded arm.
    let mut patterns: Vec<usize> = (0..1usize << cfg.state_bits).collect();
    patterns.shuffle(&mut rng);
    patterns.truncate(cfg.branches);

    let mut arms = Vec::with_capacity(cfg.branches);
    let mut else_body = None;
    for arm_idx in 0..=cfg.branches {
        let guard = if arm_idx < cfg.branches {
            let pattern = patterns[arm_idx];
            let mut guard: Option<Expr> = None;
            for (bit, state) in states.iter().enumerate() {
                let test = Expr::Cmp {
                    var: state.clone(),
                    value: (pattern >> bit) & 1 == 1,
                    eq: true,
                };
                guard = Some(match guard {
                    Some(acc) => Expr::bin(BinOp::And, acc, test),
                    None => test,
                });
            }
            let mut guard = guard.expect("at least one state bit");
            if rng.gen_bool(0.5) {
                let input = Expr::var(&inputs[rng.gen_range(0..inputs.len())]);
                let conjunct = if rng.gen_bool(0.5) { Expr::not(input) } else { input };
                guard = Expr::bin(BinOp::And, guard, conjunct);
            }
            Some(guard)
        } else {
            None
        };

        let mut body = Vec::with_capacity(cfg.stmts_per_branch);
        let mut defined: Vec<String> = Vec::new();
        let targets = temps.iter().chain(outputs.iter());
        for (pos, lhs) in targets.enumerate() {
            let mut pool: Vec<&str> =
                inputs.iter().chain(states.iter()).map(String::as_str).collect();
            pool.extend(defined.iter().map(String::as_str));
            let guarantee_chain = arm_idx == 0 && pos == 1;
            let force_reuse =
                pos > 0 && !defined.is_empty() && (guarantee_chain || rng.gen_bool(0.5));
            let forced = force_reuse
                .then(|| defined[rng.gen_range(0..defined.len())].clone());
            // Three operands whenever the budgets allow: wider statements
            // carry more structure for the model to attend over.
            let min_ops = cfg.max_operands.min(cfg.max_operators + 1).min(3);
            let rhs = random_expr(&mut rng, &pool, forced.as_deref(), min_ops, cfg);
            body.push(stmt(lhs, rhs, AssignKind::Blocking));
            defined.push(lhs.clone());
        }

        match guard {
            Some(guard) => arms.push(CombArm { guard, body }),
            None => else_body = Some(body),
        }
    }

    // Clocked block: each state register samples one input or state bit,
    // possibly negated.
    let comb_vars: Vec<&str> = temps.iter().chain(outputs.iter()).map(String::as_str).collect();
    let clocked_cfg = RvdgConfig { max_operands: 2, ..cfg.clone() };
    let mut clocked = Vec::with_capacity(cfg.state_bits);
    for (i, state) in states.iter().enumerate() {
        let mut pool: Vec<&str> =
            inputs.iter().chain(states.iter()).map(String::as_str).collect();
        // Single-statement arms cannot host an intra-arm def-use chain, so
        // feed one comb variable back through the state instead.
        let forced = if i == 0 && cfg.stmts_per_branch < 2 {
            pool.extend(comb_vars.iter().copied());
            Some(comb_vars[rng.gen_range(0..comb_vars.len())].to_string())
        } else {
            None
        };
        let min_ops = if forced.is_some() { 1 } else { 0 };
        let rhs = if min_ops == 0 {
            // Single-operand register update.
            let source = Expr::var(pool[rng.gen_range(0..pool.len())]);
            if rng.gen_bool(0.3) {
                Expr::not(source)
            } else {
                source
            }
        } else {
            random_expr(&mut rng, &pool, forced.as_deref(), 1, &clocked_cfg)
        };
        clocked.push(stmt(state, rhs, AssignKind::Nonblocking));
    }

    let design = Design {
        name: format!("rvdg_{}", cfg.seed),
        clock: "clk".to_string(),
        inputs,
        outputs,
        regs: states.into_iter().chain(temps).collect(),
        wires: Vec::new(),
        clocked,
        comb: CombBlock { arms, else_body },
    };
    Ok(pretty_print(&design))
}

/// Random Boolean expression over `pool`, with `min_operands` to
/// `max_operands` occurrences and at most `max_operators` operators;
/// `forced` (if any) is guaranteed to appear as an operand.
fn random_expr(
    rng: &mut ChaCha8Rng,
    pool: &[&str],
    forced: Option<&str>,
    min_operands: usize,
    cfg: &RvdgConfig,
) -> Expr {
    let cap = cfg.max_operands.min(cfg.max_operators + 1).max(1);
    let n = rng.gen_range(min_operands.min(cap)..=cap);

    let mut operands: Vec<String> = if pool.len() >= n {
        let mut shuffled: Vec<&str> = pool.to_vec();
        shuffled.shuffle(rng);
        shuffled[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect()
    };
    if let Some(forced) = forced {
        if !operands.iter().any(|o| o == forced) {
            let slot = rng.gen_range(0..operands.len());
            operands[slot] = forced.to_string();
        }
    }

    let mut op_budget = cfg.max_operators - (n - 1);
    build_tree(rng, &operands, &mut op_budget)
}

fn build_tree(rng: &mut ChaCha8Rng, operands: &[String], neg_budget: &mut usize) -> Expr {
    if operands.len() == 1 {
        let leaf = Expr::var(&operands[0]);
        if *neg_budget > 0 && rng.gen_bool(0.3) {
            *neg_budget -= 1;
            return Expr::not(leaf);
        }
        return leaf;
    }
    let split = rng.gen_range(1..operands.len());
    let op = BinOp::ALL[rng.gen_range(0..BinOp::ALL.len())];
    let lhs = build_tree(rng, &operands[..split], neg_budget);
    let rhs = build_tree(rng, &operands[split..], neg_budget);
    Expr::bin(op, lhs, rhs)
}
