//! Statement-execution datasets harvested from simulation traces.
//!
//! Every executed statement instance becomes one sample; operand values
//! come from the trace itself, so interdependent statements are trained
//! with ground-truth intermediate values.

use crate::context::{encode_statement, EncodedStatement, Vocab};
use crate::frontend::Design;
use crate::sim::{generate_testbench, simulate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("feature extraction: {0}")]
    Context(#[from] crate::context::ContextError),
    #[error("simulation: {0}")]
    Sim(#[from] crate::sim::SimError),
}

/// One executed-statement sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Index into [`Dataset::features`].
    pub feature: usize,
    pub design: usize,
    pub cycle: u32,
    /// Execution order within the cycle.
    pub order: u32,
    pub values: Vec<u8>,
    pub label: u8,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub design_names: Vec<String>,
    pub features: Vec<EncodedStatement>,
    pub samples: Vec<Sample>,
    pub label_counts: [usize; 2],
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Inverse label frequencies, normalized to mean 1.
    pub fn class_weights(&self) -> [f64; 2] {
        class_weights(self.label_counts)
    }
}

pub fn class_weights(counts: [usize; 2]) -> [f64; 2] {
    let c0 = counts[0].max(1) as f64;
    let c1 = counts[1].max(1) as f64;
    let total = c0 + c1;
    let raw = [total / c0, total / c1];
    let mean = (raw[0] + raw[1]) / 2.0;
    [raw[0] / mean, raw[1] / mean]
}

/// Simulate each design for `cycles` cycles (stimulus seeds derived from
/// `seed`) and collect one sample per executed statement instance.
/// Statements with no operands carry no trainable signal and are skipped.
pub fn build_dataset(designs: &[Design], cycles: u32, seed: u64) -> Result<Dataset, DatasetError> {
    let vocab = Vocab::standard();
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = Dataset::default();
    for (design_idx, design) in designs.iter().enumerate() {
        dataset.design_names.push(design.name.clone());
        let mut feature_of = std::collections::BTreeMap::new();
        for stmt in design.statements() {
            if stmt.rhs_operands().is_empty() {
                log::debug!("skipping operand-free statement {} in {}", stmt.id, design.name);
                continue;
            }
            let enc = encode_statement(stmt, &vocab)?;
            feature_of.insert(stmt.id, dataset.features.len());
            dataset.features.push(enc);
        }
        let stimulus = generate_testbench(design, cycles, seed_rng.gen());
        let trace = simulate(design, &stimulus)?;
        let mut cycle = u32::MAX;
        let mut order = 0;
        for exec in &trace.executions {
            if exec.cycle != cycle {
                cycle = exec.cycle;
                order = 0;
            }
            let Some(&feature) = feature_of.get(&exec.statement_id) else { continue };
            dataset.label_counts[exec.lhs_value as usize] += 1;
            dataset.samples.push(Sample {
                feature,
                design: design_idx,
                cycle: exec.cycle,
                order,
                values: exec.operand_values.clone(),
                label: exec.lhs_value,
            });
            order += 1;
        }
    }
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(dataset)
}

/// Deterministic design-level split: shuffle by seed, then cut at
/// `holdout_fraction` from the end.
pub fn split_designs(
    designs: Vec<Design>,
    holdout_fraction: f64,
    seed: u64,
) -> (Vec<Design>, Vec<Design>) {
    use rand::seq::SliceRandom;
    let mut designs = designs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    designs.shuffle(&mut rng);
    let n_holdout = ((designs.len() as f64) * holdout_fraction).round() as usize;
    let n_holdout = n_holdout.min(designs.len().saturating_sub(1));
    let holdout = designs.split_off(designs.len() - n_holdout);
    (designs, holdout)
}
