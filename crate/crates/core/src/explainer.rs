//! Attention-based localization: compare per-statement attention between
//! failing and passing traces, score the differences, and rank candidate
//! buggy statements.

use crate::context::{encode_statement, EncodedStatement, Vocab};
use crate::frontend::{Design, StatementId};
use crate::graphs::{build_cdfg, build_vdg, dependence_set};
use crate::model::{predict, ModelParams, PathCache};
use crate::sim::{classify_trace, generate_testbench, simulate, Trace, TraceLabel};
use crate::slicer::{dynamic_slice, DynamicSlice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("weight vectors have different lengths ({0} vs {1}); statement join is broken")]
    LengthMismatch(usize, usize),
    #[error("bug not observable: no failing trace in {runs} runs")]
    NotObservable { runs: usize },
    #[error("target `{0}` is not a design output")]
    NotAnOutput(String),
    #[error("graph: {0}")]
    Graph(#[from] crate::graphs::GraphError),
    #[error("slice: {0}")]
    Slice(#[from] crate::slicer::SliceError),
    #[error("model: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("context: {0}")]
    Context(#[from] crate::context::ContextError),
    #[error("simulation: {0}")]
    Sim(#[from] crate::sim::SimError),
}

/// Per-trace attention record: one weight vector per execution instance of
/// each slice statement.
#[derive(Debug, Clone, Default)]
pub struct AttentionMap {
    pub entries: BTreeMap<StatementId, Vec<Vec<f64>>>,
}

/// Statement-wise mean attention over one side's traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregatedMap {
    pub entries: BTreeMap<StatementId, AggregatedEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedEntry {
    pub mean: Vec<f64>,
    pub count: usize,
}

/// Predict every slice-statement execution in the trace and record the
/// attention weights.
pub fn attention_map(
    design: &Design,
    trace: &Trace,
    slice: &DynamicSlice,
    params: &ModelParams,
    cache: &mut PathCache,
) -> Result<AttentionMap, ExplainError> {
    let vocab = Vocab::standard();
    let mut features: BTreeMap<StatementId, EncodedStatement> = BTreeMap::new();
    for &id in &slice.statements {
        let stmt = design.statement(id).expect("slice statements come from this design");
        if stmt.rhs_operands().is_empty() {
            log::warn!("skipping operand-free statement {id} in attention map");
            continue;
        }
        features.insert(id, encode_statement(stmt, &vocab)?);
    }
    let mut map = AttentionMap::default();
    for exec in &trace.executions {
        let Some(enc) = features.get(&exec.statement_id) else { continue };
        let pred = predict(params, enc, &exec.operand_values, cache)?;
        map.entries.entry(exec.statement_id).or_default().push(pred.weights);
    }
    Ok(map)
}

/// Arithmetic mean per statement over all execution instances across all
/// maps. Empty input yields an empty map.
pub fn aggregate_maps(maps: &[&AttentionMap]) -> Result<AggregatedMap, ExplainError> {
    let mut sums: BTreeMap<StatementId, (Vec<f64>, usize)> = BTreeMap::new();
    for map in maps {
        for (&id, vectors) in &map.entries {
            for v in vectors {
                let entry = sums.entry(id).or_insert_with(|| (vec![0.0; v.len()], 0));
                if entry.0.len() != v.len() {
                    return Err(ExplainError::LengthMismatch(entry.0.len(), v.len()));
                }
                for (acc, &w) in entry.0.iter_mut().zip(v) {
                    *acc += w;
                }
                entry.1 += 1;
            }
        }
    }
    let entries = sums
        .into_iter()
        .map(|(id, (sum, count))| {
            let mean = sum.iter().map(|s| s / count as f64).collect();
            (id, AggregatedEntry { mean, count })
        })
        .collect();
    Ok(AggregatedMap { entries })
}

/// Normalized L1 distance between two attention vectors: the raw distance
/// lies in [0, 2] on the simplex, so halving maps it to [0, 1].
pub fn suspiciousness(f: &[f64], c: &[f64]) -> Result<f64, ExplainError> {
    if f.len() != c.len() {
        return Err(ExplainError::LengthMismatch(f.len(), c.len()));
    }
    Ok(f.iter().zip(c).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Executed only in failing traces.
    FailingOnly,
    /// Executed on both sides with a distance at or above the threshold.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub statement: StatementId,
    pub scenario: Scenario,
    pub score: f64,
    /// Mean attention weights from the failing side, copied verbatim.
    pub f_weights: Vec<f64>,
    /// Passing-side mean, present only for [`Scenario::Both`].
    pub c_weights: Option<Vec<f64>>,
    pub executions: usize,
}

/// Thresholded comparison of the failing and passing aggregated maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub target: String,
    pub threshold: f64,
    /// Sorted by descending score, ties by ascending statement id.
    pub entries: Vec<HeatmapEntry>,
}

impl Heatmap {
    pub fn rank_of(&self, id: StatementId) -> Option<usize> {
        self.entries.iter().position(|e| e.statement == id).map(|p| p + 1)
    }
}

/// Scenario rules: statements only in the passing map are dropped;
/// statements only in the failing map are suspicious with score 1;
/// statements in both keep the failing weights when the normalized
/// distance reaches the threshold.
pub fn build_heatmap(
    target: &str,
    failing: &AggregatedMap,
    passing: &AggregatedMap,
    threshold: f64,
) -> Result<Heatmap, ExplainError> {
    let mut entries = Vec::new();
    for (&id, f_entry) in &failing.entries {
        match passing.entries.get(&id) {
            None => entries.push(HeatmapEntry {
                statement: id,
                scenario: Scenario::FailingOnly,
                score: 1.0,
                f_weights: f_entry.mean.clone(),
                c_weights: None,
                executions: f_entry.count,
            }),
            Some(c_entry) => {
                let score = suspiciousness(&f_entry.mean, &c_entry.mean)?;
                if score >= threshold {
                    entries.push(HeatmapEntry {
                        statement: id,
                        scenario: Scenario::Both,
                        score,
                        f_weights: f_entry.mean.clone(),
                        c_weights: Some(c_entry.mean.clone()),
                        executions: f_entry.count,
                    });
                }
            }
        }
    }
    sort_entries(&mut entries);
    Ok(Heatmap { target: target.to_string(), threshold, entries })
}

fn sort_entries(entries: &mut [HeatmapEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.statement.cmp(&b.statement))
    });
}

/// How per-run results combine into the final heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunAggregation {
    /// Heatmap per failing run against the pooled passing map; final score
    /// per statement is the maximum across runs (default).
    PerRunMax,
    /// One heatmap from all failing traces pooled against all passing.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub runs: usize,
    pub cycles: u32,
    pub threshold: f64,
    pub seed: u64,
    pub aggregation: RunAggregation,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            runs: 5,
            cycles: 64,
            threshold: 0.10,
            seed: 0,
            aggregation: RunAggregation::PerRunMax,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub target: String,
    pub threshold: f64,
    pub runs: usize,
    pub cycles: u32,
    pub seed: u64,
    pub aggregation: RunAggregation,
    pub run_labels: Vec<TraceLabel>,
    pub heatmap: Heatmap,
    /// Pooled passing-side means, for report rendering.
    pub passing_means: BTreeMap<StatementId, Vec<f64>>,
}

impl LocalizationResult {
    /// Statements ranked by score; rank of a statement is its 1-based
    /// position.
    pub fn ranking(&self) -> Vec<(StatementId, f64)> {
        self.heatmap.entries.iter().map(|e| (e.statement, e.score)).collect()
    }
}

/// Full localization: simulate the buggy design and a golden reference
/// over `runs` stimuli, split traces by failure at the target, build
/// attention maps over dynamic slices of the buggy design, and combine
/// them into a ranked heatmap.
pub fn localize(
    golden: &Design,
    buggy: &Design,
    target: &str,
    params: &ModelParams,
    cfg: &LocalizeConfig,
) -> Result<LocalizationResult, ExplainError> {
    if !buggy.outputs.iter().any(|o| o == target) {
        return Err(ExplainError::NotAnOutput(target.to_string()));
    }
    let vdg = build_vdg(buggy);
    let deps = dependence_set(&vdg, target)?;
    let cdfg = build_cdfg(buggy);

    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = PathCache::new();
    let mut run_labels = Vec::with_capacity(cfg.runs);
    let mut failing_maps = Vec::new();
    let mut passing_maps = Vec::new();
    for _ in 0..cfg.runs {
        let stimulus = generate_testbench(buggy, cfg.cycles, seed_rng.gen());
        let golden_trace = simulate(golden, &stimulus)?;
        let buggy_trace = simulate(buggy, &stimulus)?;
        let label = classify_trace(&buggy_trace, &golden_trace, target)?;
        run_labels.push(label);
        let slice = dynamic_slice(&cdfg, &deps, &buggy_trace)?;
        let map = attention_map(buggy, &buggy_trace, &slice, params, &mut cache)?;
        match label {
            TraceLabel::Failure => failing_maps.push(map),
            TraceLabel::Correct => passing_maps.push(map),
        }
    }
    if failing_maps.is_empty() {
        return Err(ExplainError::NotObservable { runs: cfg.runs });
    }

    let passing_refs: Vec<&AttentionMap> = passing_maps.iter().collect();
    let passing = aggregate_maps(&passing_refs)?;

    let heatmap = match cfg.aggregation {
        RunAggregation::Pooled => {
            let failing_refs: Vec<&AttentionMap> = failing_maps.iter().collect();
            let failing = aggregate_maps(&failing_refs)?;
            build_heatmap(target, &failing, &passing, cfg.threshold)?
        }
        RunAggregation::PerRunMax => {
            // Each failing run is scored on its own against the pooled
            // passing behavior; a statement keeps its best-scoring entry.
            let mut best: BTreeMap<StatementId, HeatmapEntry> = BTreeMap::new();
            for map in &failing_maps {
                let failing = aggregate_maps(&[map])?;
                let run_heatmap = build_heatmap(target, &failing, &passing, cfg.threshold)?;
                for entry in run_heatmap.entries {
                    match best.get(&entry.statement) {
                        Some(seen) if seen.score >= entry.score => {}
                        _ => {
                            best.insert(entry.statement, entry);
                        }
                    }
                }
            }
            let mut entries: Vec<HeatmapEntry> = best.into_values().collect();
            sort_entries(&mut entries);
            Heatmap { target: target.to_string(), threshold: cfg.threshold, entries }
        }
    };

    let passing_means =
        passing.entries.iter().map(|(&id, e)| (id, e.mean.clone())).collect();
    Ok(LocalizationResult {
        target: target.to_string(),
        threshold: cfg.threshold,
        runs: cfg.runs,
        cycles: cfg.cycles,
        seed: cfg.seed,
        aggregation: cfg.aggregation,
        run_labels,
        heatmap,
        passing_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_design;
    use crate::model::Dims;

    fn map_of(entries: &[(StatementId, Vec<Vec<f64>>)]) -> AttentionMap {
        AttentionMap { entries: entries.iter().cloned().collect() }
    }

    fn agg_of(entries: &[(StatementId, Vec<f64>, usize)]) -> AggregatedMap {
        AggregatedMap {
            entries: entries
                .iter()
                .map(|(id, mean, count)| {
                    (*id, AggregatedEntry { mean: mean.clone(), count: *count })
                })
                .collect(),
        }
    }

    #[test]
    fn suspiciousness_identity_and_extremes() {
        assert_eq!(suspiciousness(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(suspiciousness(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let score = suspiciousness(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((score - 0.4).abs() < 1e-12);
        assert!(matches!(
            suspiciousness(&[0.5, 0.5], &[1.0]),
            Err(ExplainError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn aggregation_identity_and_mean() {
        let id = StatementId::new(3, 0);
        let single = map_of(&[(id, vec![vec![0.25, 0.75]])]);
        let agg = aggregate_maps(&[&single]).unwrap();
        assert_eq!(agg.entries[&id].mean, vec![0.25, 0.75]);
        assert_eq!(agg.entries[&id].count, 1);

        let two = map_of(&[(id, vec![vec![1.0, 0.0], vec![0.0, 1.0]])]);
        let agg = aggregate_maps(&[&two]).unwrap();
        assert_eq!(agg.entries[&id].mean, vec![0.5, 0.5]);
    }

    #[test]
    fn aggregation_matches_arithmetic_oracle_on_random_simplex_vectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let id = StatementId::new(1, 0);
        let vectors: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|v| v / sum).collect()
            })
            .collect();
        let map = map_of(&[(id, vectors.clone())]);
        let agg = aggregate_maps(&[&map]).unwrap();
        for k in 0..3 {
            let want: f64 = vectors.iter().map(|v| v[k]).sum::<f64>() / vectors.len() as f64;
            assert!((agg.entries[&id].mean[k] - want).abs() < 1e-12);
        }
        // Mean of simplex points stays on the simplex.
        let total: f64 = agg.entries[&id].mean.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicating_traces_leaves_aggregates_unchanged() {
        let id = StatementId::new(2, 0);
        let map = map_of(&[(id, vec![vec![0.7, 0.3], vec![0.1, 0.9]])]);
        let once = aggregate_maps(&[&map]).unwrap();
        let twice = aggregate_maps(&[&map, &map]).unwrap();
        for (a, b) in once.entries[&id].mean.iter().zip(&twice.entries[&id].mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_aggregation_is_empty() {
        let agg = aggregate_maps(&[]).unwrap();
        assert!(agg.entries.is_empty());
    }

    #[test]
    fn heatmap_scenarios_cover_the_presence_matrix() {
        let only_c = StatementId::new(1, 0);
        let only_f = StatementId::new(2, 0);
        let both_high = StatementId::new(3, 0);
        let both_low = StatementId::new(4, 0);
        let failing = agg_of(&[
            (only_f, vec![0.8, 0.2], 3),
            (both_high, vec![0.9, 0.1], 2),
            (both_low, vec![0.52, 0.48], 2),
        ]);
        let passing = agg_of(&[
            (only_c, vec![0.5, 0.5], 4),
            (both_high, vec![0.5, 0.5], 5),
            (both_low, vec![0.5, 0.5], 5),
        ]);
        let heatmap = build_heatmap("y", &failing, &passing, 0.10).unwrap();

        let ids: Vec<StatementId> = heatmap.entries.iter().map(|e| e.statement).collect();
        assert!(!ids.contains(&only_c), "passing-only statements are excluded");
        assert!(!ids.contains(&both_low), "distance 0.02 is under the threshold");
        assert!(ids.contains(&only_f));
        assert!(ids.contains(&both_high));

        let f_entry = heatmap.entries.iter().find(|e| e.statement == only_f).unwrap();
        assert_eq!(f_entry.scenario, Scenario::FailingOnly);
        assert_eq!(f_entry.score, 1.0);
        assert_eq!(f_entry.f_weights, vec![0.8, 0.2], "failing weights copied verbatim");
        assert!(f_entry.c_weights.is_none());

        let b_entry = heatmap.entries.iter().find(|e| e.statement == both_high).unwrap();
        assert_eq!(b_entry.scenario, Scenario::Both);
        assert!((b_entry.score - 0.4).abs() < 1e-12);
        assert_eq!(b_entry.f_weights, vec![0.9, 0.1]);

        // Ranking: failing-only outranks the threshold-passing entry.
        assert_eq!(heatmap.rank_of(only_f), Some(1));
        assert_eq!(heatmap.rank_of(both_high), Some(2));
        assert_eq!(heatmap.rank_of(both_low), None);
    }

    #[test]
    fn empty_failing_map_gives_empty_heatmap() {
        let heatmap =
            build_heatmap("y", &AggregatedMap::default(), &AggregatedMap::default(), 0.1).unwrap();
        assert!(heatmap.entries.is_empty());
    }

    #[test]
    fn ties_break_by_statement_id() {
        let a = StatementId::new(9, 0);
        let b = StatementId::new(4, 1);
        let failing = agg_of(&[(a, vec![1.0, 0.0], 1), (b, vec![0.0, 1.0], 1)]);
        let heatmap = build_heatmap("y", &failing, &AggregatedMap::default(), 0.1).unwrap();
        assert_eq!(heatmap.entries[0].statement, b);
        assert_eq!(heatmap.entries[1].statement, a);
    }

    const DISJOINT: &str = "\
module disjoint(clk, sel, a, y);
  input clk;
  input sel;
  input a;
  output y;
  reg s;
  always @(posedge clk) begin
    s <= sel;
  end
  always @(*) begin
    if (sel == 1'b1) begin
      y = a & s;
    end else begin
      y = a;
    end
  end
endmodule
";

    #[test]
    fn attention_maps_match_direct_predictions() {
        let design = parse_design(DISJOINT).unwrap();
        let params = ModelParams::init(Dims::default(), 3);
        let stim = generate_testbench(&design, 16, 2);
        let trace = simulate(&design, &stim).unwrap();
        let deps = dependence_set(&build_vdg(&design), "y").unwrap();
        let slice = dynamic_slice(&build_cdfg(&design), &deps, &trace).unwrap();
        let mut cache = PathCache::new();
        let map = attention_map(&design, &trace, &slice, &params, &mut cache).unwrap();

        let vocab = Vocab::standard();
        for (&id, vectors) in &map.entries {
            let enc = encode_statement(design.statement(id).unwrap(), &vocab).unwrap();
            let execs: Vec<_> =
                trace.executions.iter().filter(|e| e.statement_id == id).collect();
            assert_eq!(execs.len(), vectors.len());
            for (exec, got) in execs.iter().zip(vectors) {
                let pred =
                    predict(&params, &enc, &exec.operand_values, &mut cache).unwrap();
                assert_eq!(&pred.weights, got);
            }
        }
    }

    #[test]
    fn empty_slice_gives_empty_attention_map() {
        let design = parse_design(DISJOINT).unwrap();
        let params = ModelParams::init(Dims::default(), 3);
        let trace = simulate(&design, &generate_testbench(&design, 4, 0)).unwrap();
        let slice = DynamicSlice {
            target: "y".into(),
            statements: Vec::new(),
            executed_cycles: BTreeMap::new(),
        };
        let mut cache = PathCache::new();
        let map = attention_map(&design, &trace, &slice, &params, &mut cache).unwrap();
        assert!(map.entries.is_empty());
    }

    #[test]
    fn localizing_golden_against_itself_reports_not_observable() {
        let design = parse_design(DISJOINT).unwrap();
        let params = ModelParams::init(Dims::default(), 0);
        let cfg = LocalizeConfig { runs: 3, cycles: 16, ..Default::default() };
        let err = localize(&design, &design, "y", &params, &cfg).unwrap_err();
        assert!(matches!(err, ExplainError::NotObservable { runs: 3 }));
    }

    #[test]
    fn unknown_target_is_rejected() {
        let design = parse_design(DISJOINT).unwrap();
        let params = ModelParams::init(Dims::default(), 0);
        let err = localize(&design, &design, "s", &params, &LocalizeConfig::default()).unwrap_err();
        assert!(matches!(err, ExplainError::NotAnOutput(_)));
    }
}
