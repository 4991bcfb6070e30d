//! Cycle-accurate two-process simulator with per-statement execution
//! recording.
//!
//! Per cycle: apply the stimulus inputs, evaluate the combinational block
//! top-down taking the first true guard (blocking writes become visible
//! immediately), then evaluate every clocked right-hand side and commit all
//! nonblocking assignments simultaneously at cycle end. All signals start
//! at 0.

use crate::frontend::{Design, Expr, Statement, StatementId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("stimulus inputs {stimulus:?} do not match design inputs {design:?}")]
    InputMismatch { stimulus: Vec<String>, design: Vec<String> },
    #[error("traces were produced from different stimuli")]
    StimulusMismatch,
    #[error("use of undeclared signal `{0}`")]
    UndeclaredSignal(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
}

/// Reproducible per-cycle input assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputVectorSequence {
    pub seed: u64,
    pub cycles: u32,
    pub inputs: Vec<String>,
    /// `vectors[cycle][input_index]`, bits stored as 0/1.
    pub vectors: Vec<Vec<u8>>,
}

/// Uniform i.i.d. stimulus bits, deterministic in the seed.
pub fn generate_testbench(design: &Design, cycles: u32, seed: u64) -> InputVectorSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = design.inputs.clone();
    let vectors = (0..cycles)
        .map(|_| inputs.iter().map(|_| rng.gen_range(0..2u8)).collect())
        .collect();
    InputVectorSequence { seed, cycles, inputs, vectors }
}

/// One recorded statement execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutedStatementInstance {
    pub statement_id: StatementId,
    pub cycle: u32,
    /// Value of each RHS occurrence at execution time.
    pub operand_values: Vec<u8>,
    pub lhs_value: u8,
    /// Guard outcomes that enabled this execution (empty for clocked
    /// statements and bare comb bodies).
    pub branch_path: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceLabel {
    Correct,
    Failure,
}

/// Full simulation record: end-of-cycle signal values and every executed
/// statement instance.
#[derive(Debug, Clone)]
pub struct Trace {
    pub design: String,
    pub stimulus: InputVectorSequence,
    /// Signal order used by `values`.
    pub signals: Vec<String>,
    /// `values[cycle][signal_index]` after the cycle completed (comb values
    /// as computed that cycle, regs as committed at cycle end).
    pub values: Vec<Vec<u8>>,
    pub executions: Vec<ExecutedStatementInstance>,
    pub label: Option<TraceLabel>,
}

impl Trace {
    pub fn signal_index(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s == name)
    }

    pub fn value(&self, cycle: u32, name: &str) -> Option<u8> {
        let idx = self.signal_index(name)?;
        self.values.get(cycle as usize).map(|row| row[idx])
    }

    pub fn executions_in_cycle(&self, cycle: u32) -> impl Iterator<Item = &ExecutedStatementInstance> {
        self.executions.iter().filter(move |e| e.cycle == cycle)
    }
}

struct Env<'d> {
    index: BTreeMap<&'d str, usize>,
    values: Vec<u8>,
}

impl<'d> Env<'d> {
    fn new(design: &'d Design) -> Self {
        let signals = design.variables();
        let index = signals.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Env { index, values: vec![0; signals.len()] }
    }

    fn get(&self, name: &str) -> Result<u8, SimError> {
        self.index
            .get(name)
            .map(|&i| self.values[i])
            .ok_or_else(|| SimError::UndeclaredSignal(name.to_string()))
    }

    fn set(&mut self, name: &str, value: u8) -> Result<(), SimError> {
        match self.index.get(name) {
            Some(&i) => {
                self.values[i] = value;
                Ok(())
            }
            None => Err(SimError::UndeclaredSignal(name.to_string())),
        }
    }

    fn eval(&self, expr: &Expr) -> Result<u8, SimError> {
        Ok(match expr {
            Expr::Var(name) => self.get(name)?,
            Expr::Const(value) => *value as u8,
            Expr::Not(inner) => 1 - self.eval(inner)?,
            Expr::Bin(op, lhs, rhs) => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                match op {
                    crate::frontend::BinOp::And => l & r,
                    crate::frontend::BinOp::Or => l | r,
                    crate::frontend::BinOp::Xor => l ^ r,
                }
            }
            Expr::Cmp { var, value, eq } => {
                let v = self.get(var)? == *value as u8;
                (v == *eq) as u8
            }
        })
    }
}

pub fn simulate(design: &Design, stimulus: &InputVectorSequence) -> Result<Trace, SimError> {
    if stimulus.inputs != design.inputs {
        return Err(SimError::InputMismatch {
            stimulus: stimulus.inputs.clone(),
            design: design.inputs.clone(),
        });
    }
    let mut env = Env::new(design);
    let signals: Vec<String> = design.variables().into_iter().map(str::to_string).collect();
    let mut values = Vec::with_capacity(stimulus.cycles as usize);
    let mut executions = Vec::new();

    for cycle in 0..stimulus.cycles {
        for (i, input) in design.inputs.iter().enumerate() {
            env.set(input, stimulus.vectors[cycle as usize][i])?;
        }

        // Combinational block: first true guard wins.
        let mut taken: Option<(&[Statement], Vec<bool>)> = None;
        let mut outcomes = Vec::with_capacity(design.comb.arms.len());
        for arm in &design.comb.arms {
            let hit = env.eval(&arm.guard)? == 1;
            outcomes.push(hit);
            if hit {
                taken = Some((&arm.body, outcomes.clone()));
                break;
            }
        }
        if taken.is_none() {
            if let Some(body) = &design.comb.else_body {
                taken = Some((body, outcomes.clone()));
            }
        }
        if let Some((body, branch_path)) = taken {
            for stmt in body {
                let operand_values = stmt
                    .rhs
                    .occurrences()
                    .iter()
                    .map(|name| env.get(name))
                    .collect::<Result<Vec<u8>, _>>()?;
                let lhs_value = env.eval(&stmt.rhs)?;
                env.set(&stmt.lhs, lhs_value)?;
                executions.push(ExecutedStatementInstance {
                    statement_id: stmt.id,
                    cycle,
                    operand_values,
                    lhs_value,
                    branch_path: branch_path.clone(),
                });
            }
        }

        // Clocked block: evaluate every RHS, then commit simultaneously.
        let mut pending = Vec::with_capacity(design.clocked.len());
        for stmt in &design.clocked {
            let operand_values = stmt
                .rhs
                .occurrences()
                .iter()
                .map(|name| env.get(name))
                .collect::<Result<Vec<u8>, _>>()?;
            let lhs_value = env.eval(&stmt.rhs)?;
            pending.push((stmt.lhs.as_str(), lhs_value));
            executions.push(ExecutedStatementInstance {
                statement_id: stmt.id,
                cycle,
                operand_values,
                lhs_value,
                branch_path: Vec::new(),
            });
        }
        for (lhs, value) in pending {
            env.set(lhs, value)?;
        }

        values.push(env.values.clone());
    }

    Ok(Trace {
        design: design.name.clone(),
        stimulus: stimulus.clone(),
        signals,
        values,
        executions,
        label: None,
    })
}

/// A trace fails when the target differs from the golden trace in at least
/// one cycle.
pub fn classify_trace(
    trace: &Trace,
    golden: &Trace,
    target: &str,
) -> Result<TraceLabel, SimError> {
    if trace.stimulus != golden.stimulus {
        return Err(SimError::StimulusMismatch);
    }
    let ti = trace.signal_index(target).ok_or_else(|| SimError::UnknownTarget(target.into()))?;
    let gi = golden.signal_index(target).ok_or_else(|| SimError::UnknownTarget(target.into()))?;
    let differs = trace
        .values
        .iter()
        .zip(&golden.values)
        .any(|(row, grow)| row[ti] != grow[gi]);
    Ok(if differs { TraceLabel::Failure } else { TraceLabel::Correct })
}

/// One JSON Lines record per cycle. Field order is fixed; bits are 0/1.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u32,
    pub inputs: BTreeMap<String, u8>,
    pub state: BTreeMap<String, u8>,
    pub outputs: BTreeMap<String, u8>,
    pub exec: Vec<ExecRecord>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ExecRecord {
    pub stmt: StatementId,
    pub operands: Vec<u8>,
    pub lhs: u8,
}

pub fn trace_records(trace: &Trace, design: &Design) -> Vec<TraceRecord> {
    let select = |names: &[String], row: &[u8], trace: &Trace| -> BTreeMap<String, u8> {
        names
            .iter()
            .map(|n| (n.clone(), row[trace.signal_index(n).expect("declared signal")]))
            .collect()
    };
    (0..trace.values.len() as u32)
        .map(|cycle| {
            let row = &trace.values[cycle as usize];
            let inputs = design
                .inputs
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), trace.stimulus.vectors[cycle as usize][i]))
                .collect();
            TraceRecord {
                cycle,
                inputs,
                state: select(&design.regs, row, trace),
                outputs: select(&design.outputs, row, trace),
                exec: trace
                    .executions_in_cycle(cycle)
                    .map(|e| ExecRecord {
                        stmt: e.statement_id,
                        operands: e.operand_values.clone(),
                        lhs: e.lhs_value,
                    })
                    .collect(),
            }
        })
        .collect()
}

pub fn write_trace_jsonl<W: Write>(
    trace: &Trace,
    design: &Design,
    mut writer: W,
) -> std::io::Result<()> {
    for record in trace_records(trace, design) {
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
