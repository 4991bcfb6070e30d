//! Statement-level bug localization for RTL designs in a restricted
//! Verilog subset.
//!
//! The pipeline: parse a design ([`frontend`]), build its dependence graphs
//! ([`graphs`]), simulate it ([`sim`]), slice the trace against a target
//! output ([`slicer`]), extract tree-path features per statement operand
//! ([`context`]), train an attention model to predict statement outputs
//! ([`model`], [`trainer`]), and compare attention behavior between failing
//! and passing traces to rank suspicious statements ([`explainer`]).
//! Synthetic training designs come from [`rvdg`]; bugs are injected by
//! [`mutator`]; [`campaign`] and [`report`] evaluate localization quality.

pub mod campaign;
pub mod context;
pub mod explainer;
pub mod frontend;
pub mod graphs;
pub mod model;
pub mod mutator;
pub mod report;
pub mod rvdg;
pub mod sim;
pub mod slicer;
pub mod trainer;
