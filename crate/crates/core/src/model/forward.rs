//! Forward pass: path encoding, operand embeddings, aggregation,
//! attention, and output prediction.

use super::linalg::{add_assign, axpy, dot, sigmoid, softmax_inplace};
use super::{ModelError, ModelParams};
use crate::context::EncodedStatement;
use std::collections::BTreeMap;

/// Cached per-step LSTM activations; kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    pub token: u16,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct PathEntry {
    pub embedding: Vec<f64>,
    pub steps: Vec<LstmStep>,
}

/// Deduplicating store of path embeddings, valid while parameters are
/// fixed (one batch during training, or a whole inference session).
/// Identical paths recur constantly across statements, so this removes
/// most of the sequence-encoder work.
#[derive(Debug, Default)]
pub struct PathCache {
    index: BTreeMap<Vec<u16>, usize>,
    pub(crate) entries: Vec<PathEntry>,
}

impl PathCache {
    pub fn new() -> Self {
        PathCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn intern(
        &mut self,
        params: &ModelParams,
        ids: &[u16],
    ) -> Result<usize, ModelError> {
        if let Some(&idx) = self.index.get(ids) {
            return Ok(idx);
        }
        let (embedding, steps) = lstm_forward(params, ids)?;
        let idx = self.entries.len();
        self.entries.push(PathEntry { embedding, steps });
        self.index.insert(ids.to_vec(), idx);
        Ok(idx)
    }
}

fn lstm_forward(
    params: &ModelParams,
    ids: &[u16],
) -> Result<(Vec<f64>, Vec<LstmStep>), ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptyPath);
    }
    let ctx = params.dims.ctx;
    let mut h = vec![0.0; ctx];
    let mut c = vec![0.0; ctx];
    let mut steps = Vec::with_capacity(ids.len());
    let mut pre = vec![0.0; 4 * ctx];
    for &token in ids {
        if token as usize >= params.dims.vocab {
            return Err(ModelError::TokenOutOfRange(token));
        }
        let x = params.token_table.row(token as usize);
        pre.copy_from_slice(&params.encoder.b);
        params.encoder.wx.matvec_add(x, &mut pre);
        params.encoder.wh.matvec_add(&h, &mut pre);
        let mut step = LstmStep {
            token,
            i: vec![0.0; ctx],
            f: vec![0.0; ctx],
            g: vec![0.0; ctx],
            o: vec![0.0; ctx],
            c: vec![0.0; ctx],
            h: vec![0.0; ctx],
        };
        for k in 0..ctx {
            step.i[k] = sigmoid(pre[k]);
            step.f[k] = sigmoid(pre[ctx + k]);
            step.g[k] = pre[2 * ctx + k].tanh();
            step.o[k] = sigmoid(pre[3 * ctx + k]);
            step.c[k] = step.f[k] * c[k] + step.i[k] * step.g[k];
            step.h[k] = step.o[k] * step.c[k].tanh();
        }
        h.copy_from_slice(&step.h);
        c.copy_from_slice(&step.c);
        steps.push(step);
    }
    Ok((h, steps))
}

/// Final hidden state of the sequence encoder over the path's token
/// embeddings.
pub fn embed_path(params: &ModelParams, ids: &[u16]) -> Result<Vec<f64>, ModelError> {
    lstm_forward(params, ids).map(|(h, _)| h)
}

/// Operand embedding: summed path embeddings concatenated with the value
/// one-hot ((1,0) for 0, (0,1) for 1).
pub fn operand_embedding(
    params: &ModelParams,
    paths: &[Vec<u16>],
    value: u8,
) -> Result<Vec<f64>, ModelError> {
    if value > 1 {
        return Err(ModelError::NotABit(value));
    }
    let mut x = vec![0.0; params.dims.operand()];
    for ids in paths {
        let p = embed_path(params, ids)?;
        add_assign(&p, &mut x[..params.dims.ctx]);
    }
    x[params.dims.ctx + value as usize] = 1.0;
    Ok(x)
}

/// Updated operand embeddings: row i is tanh(W·(Σ_j x_j + skip·x_i) + b).
pub fn aggregate(params: &ModelParams, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = params.dims;
    let mut sum = vec![0.0; d.operand()];
    for xi in x {
        add_assign(xi, &mut sum);
    }
    let mut out = Vec::with_capacity(x.len());
    let mut u = vec![0.0; d.operand()];
    let mut z = vec![0.0; d.attn];
    for xi in x {
        u.copy_from_slice(&sum);
        axpy(params.skip_weight, xi, &mut u);
        z.copy_from_slice(&params.agg.b);
        params.agg.w.matvec_add(&u, &mut z);
        out.push(z.iter().map(|v| v.tanh()).collect());
    }
    out
}

/// Softmax over dot products of the attention vector with each updated
/// embedding.
pub fn attention_weights(params: &ModelParams, xstar: &[Vec<f64>]) -> Vec<f64> {
    let mut scores: Vec<f64> = xstar.iter().map(|row| dot(&params.attn, row)).collect();
    softmax_inplace(&mut scores);
    scores
}

/// All forward intermediates for one statement execution; everything the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Path-cache entry per operand per path.
    pub(crate) path_refs: Vec<Vec<usize>>,
    /// Operand embeddings (ctx + value wide).
    pub x: Vec<Vec<f64>>,
    /// Aggregation inputs Σx + skip·x_i.
    pub(crate) u: Vec<Vec<f64>>,
    /// Updated operand embeddings (attn wide).
    pub xstar: Vec<Vec<f64>>,
    /// Frobenius norm of the xstar matrix.
    pub xstar_norm: f64,
    pub weights: Vec<f64>,
    /// Attention-weighted operand sum.
    pub s: Vec<f64>,
    pub(crate) hidden_pre: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

pub fn forward_statement(
    params: &ModelParams,
    enc: &EncodedStatement,
    values: &[u8],
    cache: &mut PathCache,
) -> Result<Forward, ModelError> {
    let d = params.dims;
    let n = enc.operand_count();
    if n == 0 {
        return Err(ModelError::NoOperands(enc.id.to_string()));
    }
    if values.len() != n {
        return Err(ModelError::ValueCountMismatch { values: values.len(), operands: n });
    }

    let mut path_refs = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for (op, &value) in enc.paths.iter().zip(values) {
        if value > 1 {
            return Err(ModelError::NotABit(value));
        }
        let mut refs = Vec::with_capacity(op.len());
        let mut xi = vec![0.0; d.operand()];
        for ids in op {
            let idx = cache.intern(params, ids)?;
            refs.push(idx);
            add_assign(&cache.entries[idx].embedding, &mut xi[..d.ctx]);
        }
        xi[d.ctx + value as usize] = 1.0;
        path_refs.push(refs);
        x.push(xi);
    }

    let mut sum = vec![0.0; d.operand()];
    for xi in &x {
        add_assign(xi, &mut sum);
    }
    let mut u = Vec::with_capacity(n);
    let mut xstar = Vec::with_capacity(n);
    let mut sq_norm = 0.0;
    for xi in &x {
        let mut ui = sum.clone();
        axpy(params.skip_weight, xi, &mut ui);
        let mut z = params.agg.b.clone();
        params.agg.w.matvec_add(&ui, &mut z);
        let row: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        sq_norm += dot(&row, &row);
        u.push(ui);
        xstar.push(row);
    }
    let xstar_norm = sq_norm.sqrt();

    let weights = attention_weights(params, &xstar);
    let mut s = vec![0.0; d.operand()];
    for (w, xi) in weights.iter().zip(&x) {
        axpy(*w, xi, &mut s);
    }

    let mut hidden_pre = params.head_hidden.b.clone();
    params.head_hidden.w.matvec_add(&s, &mut hidden_pre);
    let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let mut logits_v = params.head_out.b.clone();
    params.head_out.w.matvec_add(&hidden, &mut logits_v);
    let logits = [logits_v[0], logits_v[1]];
    let mut probs_v = logits_v;
    softmax_inplace(&mut probs_v);
    let probs = [probs_v[0], probs_v[1]];
    if !probs.iter().all(|p| p.is_finite()) {
        return Err(ModelError::NonFinite("prediction head"));
    }

    Ok(Forward {
        path_refs,
        x,
        u,
        xstar,
        xstar_norm,
        weights,
        s,
        hidden_pre,
        hidden,
        logits,
        probs,
    })
}

/// Class probabilities plus the attention weights over operands.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: [f64; 2],
    pub weights: Vec<f64>,
}

impl Prediction {
    pub fn predicted_bit(&self) -> u8 {
        (self.probs[1] > self.probs[0]) as u8
    }
}

pub fn predict(
    params: &ModelParams,
    enc: &EncodedStatement,
    values: &[u8],
    cache: &mut PathCache,
) -> Result<Prediction, ModelError> {
    let fwd = forward_statement(params, enc, values, cache)?;
    Ok(Prediction { probs: fwd.probs, weights: fwd.weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{encode_statement, Vocab};
    use crate::frontend::{AssignKind, BinOp, Expr, Statement, StatementId};
    use crate::model::Dims;

    fn params() -> ModelParams {
        ModelParams::init(Dims::default(), 42)
    }

    fn encode(lhs: &str, rhs: Expr) -> EncodedStatement {
        let stmt = Statement {
            id: StatementId::new(1, 0),
            kind: AssignKind::Blocking,
            lhs: lhs.into(),
            rhs,
        };
        encode_statement(&stmt, &Vocab::standard()).unwrap()
    }

    #[test]
    fn path_embedding_has_context_width_and_is_pure() {
        let p = params();
        let ids = vec![5u16, 8];
        let a = embed_path(&p, &ids).unwrap();
        let b = embed_path(&p, &ids).unwrap();
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
    }

    #[test]
    fn path_embedding_rejects_bad_input() {
        let p = params();
        assert!(matches!(embed_path(&p, &[]), Err(ModelError::EmptyPath)));
        assert!(matches!(embed_path(&p, &[99]), Err(ModelError::TokenOutOfRange(99))));
    }

    #[test]
    fn single_token_path_matches_one_lstm_step_oracle() {
        let p = params();
        let token = 5usize;
        let got = embed_path(&p, &[token as u16]).unwrap();
        // Plain-loop re-derivation of one step from zero state.
        let ctx = p.dims.ctx;
        let x = p.token_table.row(token);
        for k in 0..ctx {
            let pre = |gate: usize| -> f64 {
                let row = p.encoder.wx.row(gate * ctx + k);
                let mut acc = p.encoder.b[gate * ctx + k];
                for (w, xv) in row.iter().zip(x) {
                    acc += w * xv;
                }
                // h_prev = 0, so wh contributes nothing.
                acc
            };
            let i = sigmoid(pre(0));
            let g = pre(2).tanh();
            let o = sigmoid(pre(3));
            let c = i * g;
            let h = o * c.tanh();
            assert!((got[k] - h).abs() < 1e-12, "component {k}");
        }
    }

    #[test]
    fn value_one_hot_convention() {
        let p = params();
        let paths = vec![vec![5u16, 8]];
        let x0 = operand_embedding(&p, &paths, 0).unwrap();
        let x1 = operand_embedding(&p, &paths, 1).unwrap();
        assert_eq!(&x0[16..], &[1.0, 0.0]);
        assert_eq!(&x1[16..], &[0.0, 1.0]);
        assert_eq!(x0[..16], x1[..16]);
        assert!(matches!(operand_embedding(&p, &paths, 2), Err(ModelError::NotABit(2))));
    }

    #[test]
    fn context_embedding_is_order_free() {
        let p = params();
        let a = vec![vec![5u16, 8], vec![5u16, 4, 1, 3]];
        let b = vec![a[1].clone(), a[0].clone()];
        let xa = operand_embedding(&p, &a, 1).unwrap();
        let xb = operand_embedding(&p, &b, 1).unwrap();
        for (u, v) in xa.iter().zip(&xb) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn context_embedding_sums_paths() {
        let p = params();
        let paths = vec![vec![5u16, 8], vec![5u16, 4, 1, 3]];
        let x = operand_embedding(&p, &paths, 0).unwrap();
        let p0 = embed_path(&p, &paths[0]).unwrap();
        let p1 = embed_path(&p, &paths[1]).unwrap();
        for k in 0..16 {
            assert!((x[k] - (p0[k] + p1[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn single_operand_aggregation_collapses_to_scaled_input() {
        let p = params();
        let x = operand_embedding(&p, &[vec![8u16, 4, 1, 3]], 1).unwrap();
        let xstar = aggregate(&p, &[x.clone()]);
        // One operand: sum + skip·x = (1 + skip)·x.
        let mut u = vec![0.0; p.dims.operand()];
        axpy(1.0 + p.skip_weight, &x, &mut u);
        let mut z = p.agg.b.clone();
        p.agg.w.matvec_add(&u, &mut z);
        for (got, want) in xstar[0].iter().zip(z.iter().map(|v| v.tanh())) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_operands_get_identical_updated_rows_and_equal_weights() {
        let p = params();
        let x = operand_embedding(&p, &[vec![5u16, 8]], 1).unwrap();
        let xstar = aggregate(&p, &[x.clone(), x.clone()]);
        assert_eq!(xstar[0], xstar[1]);
        let w = attention_weights(&p, &xstar);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_operand_aggregation_matches_plain_loop_oracle() {
        let p = params();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|v| {
                operand_embedding(&p, &[vec![5u16, 8], vec![5u16, 4, 1, 3]], (v % 2) as u8).unwrap()
            })
            .collect();
        let got = aggregate(&p, &xs);
        for i in 0..3 {
            for r in 0..p.dims.attn {
                let mut acc = p.agg.b[r];
                for c in 0..p.dims.operand() {
                    let sum: f64 = xs.iter().map(|x| x[c]).sum();
                    acc += p.agg.w.row(r)[c] * (sum + p.skip_weight * xs[i][c]);
                }
                assert!((got[i][r] - acc.tanh()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_on_single_operand_is_one() {
        let p = params();
        let x = operand_embedding(&p, &[vec![5u16]], 0).unwrap();
        let xstar = aggregate(&p, &[x]);
        assert_eq!(attention_weights(&p, &xstar), vec![1.0]);
    }

    #[test]
    fn prediction_probabilities_are_normalized() {
        let p = params();
        let enc = encode("y", Expr::bin(BinOp::And, Expr::var("a"), Expr::not(Expr::var("b"))));
        let mut cache = PathCache::new();
        for values in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let pred = predict(&p, &enc, &values, &mut cache).unwrap();
            assert!((pred.probs[0] + pred.probs[1] - 1.0).abs() < 1e-9);
            assert_eq!(pred.weights.len(), 2);
        }
    }

    #[test]
    fn duplicate_operands_share_attention_evenly() {
        let p = params();
        let enc = encode("y", Expr::bin(BinOp::And, Expr::var("x"), Expr::var("x")));
        let mut cache = PathCache::new();
        let pred = predict(&p, &enc, &[1, 1], &mut cache).unwrap();
        assert!((pred.weights[0] - 0.5).abs() < 1e-12);
        assert!((pred.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_operand_statements_are_rejected() {
        let p = params();
        let enc = EncodedStatement {
            id: StatementId::new(1, 0),
            lhs: "y".into(),
            operand_names: Vec::new(),
            paths: Vec::new(),
        };
        let mut cache = PathCache::new();
        assert!(matches!(
            forward_statement(&p, &enc, &[], &mut cache),
            Err(ModelError::NoOperands(_))
        ));
    }

    #[test]
    fn permuting_operands_permutes_weights_and_keeps_probs() {
        let p = params();
        let enc = encode(
            "y",
            Expr::bin(
                BinOp::Or,
                Expr::bin(BinOp::And, Expr::var("a"), Expr::var("b")),
                Expr::not(Expr::var("c")),
            ),
        );
        let mut cache = PathCache::new();
        let base = forward_statement(&p, &enc, &[1, 0, 0], &mut cache).unwrap();

        // Swap operands 0 and 2 wholesale (paths and values together).
        let mut swapped = enc.clone();
        swapped.paths.swap(0, 2);
        swapped.operand_names.swap(0, 2);
        let perm = forward_statement(&p, &swapped, &[0, 0, 1], &mut cache).unwrap();
        assert!((base.weights[0] - perm.weights[2]).abs() < 1e-12);
        assert!((base.weights[2] - perm.weights[0]).abs() < 1e-12);
        assert!((base.weights[1] - perm.weights[1]).abs() < 1e-12);
        assert!((base.probs[0] - perm.probs[0]).abs() < 1e-12);
        assert!((base.probs[1] - perm.probs[1]).abs() < 1e-12);
    }

    #[test]
    fn cache_dedups_identical_paths() {
        let p = params();
        let enc = encode("y", Expr::bin(BinOp::And, Expr::var("x"), Expr::var("x")));
        let mut cache = PathCache::new();
        forward_statement(&p, &enc, &[0, 1], &mut cache).unwrap();
        // Two operands, two paths each, but only two distinct shapes.
        assert_eq!(cache.len(), 2);
    }
}
