//! Dynamic slicing: the statements that can affect the target under a
//! specific stimulus.
//!
//! A statement joins the slice exactly when its LHS variable is in the
//! target's dependence set and the trace records at least one execution of
//! it. Guards are not slice members.

use crate::graphs::{Cdfg, DependenceSet};
use crate::frontend::StatementId;
use crate::sim::Trace;
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SliceError {
    #[error("dependence-set target `{0}` is not a design variable")]
    TargetNotInDesign(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicSlice {
    pub target: String,
    /// Slice members in statement-id order.
    pub statements: Vec<StatementId>,
    /// Cycles in which each member executed.
    pub executed_cycles: BTreeMap<StatementId, Vec<u32>>,
}

impl DynamicSlice {
    pub fn contains(&self, id: StatementId) -> bool {
        self.executed_cycles.contains_key(&id)
    }
}

pub fn dynamic_slice(
    cdfg: &Cdfg,
    deps: &DependenceSet,
    trace: &Trace,
) -> Result<DynamicSlice, SliceError> {
    if !cdfg.has_variable(&deps.target) {
        return Err(SliceError::TargetNotInDesign(deps.target.clone()));
    }
    let mut executed_cycles: BTreeMap<StatementId, Vec<u32>> = BTreeMap::new();
    for exec in &trace.executions {
        let lhs = match cdfg.lhs_of(exec.statement_id) {
            Some(lhs) => lhs,
            None => continue,
        };
        if deps.contains(lhs) {
            executed_cycles.entry(exec.statement_id).or_default().push(exec.cycle);
        }
    }
    Ok(DynamicSlice {
        target: deps.target.clone(),
        statements: executed_cycles.keys().copied().collect(),
        executed_cycles,
    })
}
