//! Hand-derived reverse-mode gradients through the full model.
//!
//! `backward_statement` walks one sample's forward cache from the logits
//! back to the operand embeddings and accumulates parameter gradients; the
//! gradient reaching each path embedding is summed per unique path so the
//! sequence encoder is back-propagated once per distinct path in the batch
//! (`backprop_paths`), which is exact because backpropagation is linear in
//! the upstream gradient.

use super::forward::{Forward, PathCache};
use super::linalg::{axpy, dot};
use super::{ModelError, ModelParams};

/// Accumulates dL/dp for each cached path entry.
pub(crate) struct PathGradients {
    pub upstream: Vec<Vec<f64>>,
}

impl PathGradients {
    pub fn new(cache: &PathCache, ctx: usize) -> Self {
        PathGradients { upstream: vec![vec![0.0; ctx]; cache.len()] }
    }

    fn ensure_len(&mut self, cache: &PathCache, ctx: usize) {
        while self.upstream.len() < cache.len() {
            self.upstream.push(vec![0.0; ctx]);
        }
    }
}

/// Backward for one statement execution.
///
/// `ce_coef` scales the cross-entropy term (the sample's class weight over
/// the batch normalizer); `reg_coef` scales the 1/‖X*‖ regularizer term
/// (alpha over the batch size), already including the sign of d(1/n)/dn.
pub(crate) fn backward_statement(
    params: &ModelParams,
    fwd: &Forward,
    label: u8,
    ce_coef: f64,
    reg_coef: f64,
    grads: &mut ModelParams,
    cache: &PathCache,
    path_grads: &mut PathGradients,
) -> Result<(), ModelError> {
    let d = params.dims;
    let n = fwd.x.len();
    path_grads.ensure_len(cache, d.ctx);

    // Cross-entropy through the output softmax: d/dlogit = p - onehot.
    let mut dlogits = [fwd.probs[0] * ce_coef, fwd.probs[1] * ce_coef];
    dlogits[label as usize] -= ce_coef;

    // head_out: logits = W·hidden + b
    grads.head_out.b[0] += dlogits[0];
    grads.head_out.b[1] += dlogits[1];
    grads.head_out.w.outer_add(&dlogits, &fwd.hidden);
    let mut dhidden = vec![0.0; d.head_hidden];
    params.head_out.w.matvec_t_add(&dlogits, &mut dhidden);

    // ReLU
    for (dh, &pre) in dhidden.iter_mut().zip(&fwd.hidden_pre) {
        if pre <= 0.0 {
            *dh = 0.0;
        }
    }

    // head_hidden: hidden_pre = W·s + b
    for (gb, &dh) in grads.head_hidden.b.iter_mut().zip(&dhidden) {
        *gb += dh;
    }
    grads.head_hidden.w.outer_add(&dhidden, &fwd.s);
    let mut ds = vec![0.0; d.operand()];
    params.head_hidden.w.matvec_t_add(&dhidden, &mut ds);

    // s = Σ_i w_i·x_i
    let mut dweights = vec![0.0; n];
    let mut dx = vec![vec![0.0; d.operand()]; n];
    for i in 0..n {
        dweights[i] = dot(&ds, &fwd.x[i]);
        axpy(fwd.weights[i], &ds, &mut dx[i]);
    }

    // Attention softmax: dscore_i = w_i·(dw_i − Σ_j dw_j·w_j)
    let mix: f64 = dweights.iter().zip(&fwd.weights).map(|(dw, w)| dw * w).sum();
    let dscores: Vec<f64> =
        dweights.iter().zip(&fwd.weights).map(|(dw, w)| w * (dw - mix)).collect();

    // score_i = <attn, xstar_i>; plus the regularizer's direct
    // contribution to xstar: d(reg_coef/‖X*‖)/dxstar = −reg_coef·xstar/‖X*‖³.
    let mut dxstar = vec![vec![0.0; d.attn]; n];
    let norm3 = fwd.xstar_norm.powi(3);
    for i in 0..n {
        axpy(dscores[i], &params.attn, &mut dxstar[i]);
        axpy(dscores[i], &fwd.xstar[i], &mut grads.attn);
        if reg_coef != 0.0 && norm3 > 0.0 {
            axpy(-reg_coef / norm3, &fwd.xstar[i], &mut dxstar[i]);
        }
    }

    // Aggregation: xstar_i = tanh(W·u_i + b), u_i = Σ_j x_j + skip·x_i.
    let mut dsum = vec![0.0; d.operand()];
    let mut du = vec![0.0; d.operand()];
    for i in 0..n {
        let mut dz = dxstar[i].clone();
        for (dzk, &row) in dz.iter_mut().zip(&fwd.xstar[i]) {
            *dzk *= 1.0 - row * row;
        }
        for (gb, &dzk) in grads.agg.b.iter_mut().zip(&dz) {
            *gb += dzk;
        }
        grads.agg.w.outer_add(&dz, &fwd.u[i]);
        du.iter_mut().for_each(|v| *v = 0.0);
        params.agg.w.matvec_t_add(&dz, &mut du);
        grads.skip_weight += dot(&du, &fwd.x[i]);
        axpy(params.skip_weight, &du, &mut dx[i]);
        for k in 0..d.operand() {
            dsum[k] += du[k];
        }
    }
    for dxi in dx.iter_mut() {
        for k in 0..d.operand() {
            dxi[k] += dsum[k];
        }
    }

    // x_i = (c_i || v_i): the context slice flows into every path of the
    // operand's context; the value one-hot is an input.
    for (i, refs) in fwd.path_refs.iter().enumerate() {
        for &entry in refs {
            let up = &mut path_grads.upstream[entry];
            for k in 0..d.ctx {
                up[k] += dx[i][k];
            }
        }
    }

    if !grads.skip_weight.is_finite() {
        return Err(ModelError::NonFinite("aggregation"));
    }
    Ok(())
}

/// Back-propagate every cached path once with its accumulated upstream
/// gradient.
pub(crate) fn backprop_paths(
    params: &ModelParams,
    cache: &PathCache,
    path_grads: &PathGradients,
    grads: &mut ModelParams,
) -> Result<(), ModelError> {
    let ctx = params.dims.ctx;
    let mut dh = vec![0.0; ctx];
    let mut dc = vec![0.0; ctx];
    let mut dpre = vec![0.0; 4 * ctx];
    for (entry, upstream) in cache.entries.iter().zip(&path_grads.upstream) {
        if upstream.iter().all(|&v| v == 0.0) {
            continue;
        }
        dh.copy_from_slice(upstream);
        dc.iter_mut().for_each(|v| *v = 0.0);
        for (t, step) in entry.steps.iter().enumerate().rev() {
            let (h_prev, c_prev): (Option<&[f64]>, Option<&[f64]>) = if t == 0 {
                (None, None)
            } else {
                (Some(&entry.steps[t - 1].h), Some(&entry.steps[t - 1].c))
            };
            for k in 0..ctx {
                let tanh_c = step.c[k].tanh();
                let do_ = dh[k] * tanh_c;
                let dck = dc[k] + dh[k] * step.o[k] * (1.0 - tanh_c * tanh_c);
                let di = dck * step.g[k];
                let dg = dck * step.i[k];
                let df = dck * c_prev.map_or(0.0, |c| c[k]);
                dc[k] = dck * step.f[k];
                dpre[k] = di * step.i[k] * (1.0 - step.i[k]);
                dpre[ctx + k] = df * step.f[k] * (1.0 - step.f[k]);
                dpre[2 * ctx + k] = dg * (1.0 - step.g[k] * step.g[k]);
                dpre[3 * ctx + k] = do_ * step.o[k] * (1.0 - step.o[k]);
            }
            let x = params.token_table.row(step.token as usize);
            grads.encoder.wx.outer_add(&dpre, x);
            if let Some(h_prev) = h_prev {
                grads.encoder.wh.outer_add(&dpre, h_prev);
            }
            for (gb, &dp) in grads.encoder.b.iter_mut().zip(&dpre) {
                *gb += dp;
            }
            // dx flows into the token embedding row.
            let token_row = grads.token_table.row_mut(step.token as usize);
            params.encoder.wx.matvec_t_add(&dpre, token_row);
            dh.iter_mut().for_each(|v| *v = 0.0);
            params.encoder.wh.matvec_t_add(&dpre, &mut dh);
        }
        if dh.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("path encoder"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::context::{encode_statement, Vocab};
    use crate::frontend::{AssignKind, BinOp, Expr, Statement, StatementId};
    use crate::model::{batch_loss, batch_loss_and_grads, BatchItem, Dims, LossConfig, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_statements() -> Vec<crate::context::EncodedStatement> {
        let vocab = Vocab::standard();
        let exprs = vec![
            Expr::bin(BinOp::And, Expr::var("a"), Expr::not(Expr::var("b"))),
            Expr::bin(
                BinOp::Or,
                Expr::bin(BinOp::Xor, Expr::var("a"), Expr::var("c")),
                Expr::not(Expr::var("d")),
            ),
            Expr::not(Expr::var("x")),
            Expr::bin(BinOp::Xor, Expr::var("p"), Expr::bin(BinOp::And, Expr::var("q"), Expr::var("p"))),
        ];
        exprs
            .into_iter()
            .enumerate()
            .map(|(i, rhs)| {
                let kind = if i % 2 == 0 { AssignKind::Blocking } else { AssignKind::Nonblocking };
                let stmt = Statement {
                    id: StatementId::new(i as u32 + 1, 0),
                    kind,
                    lhs: "y".into(),
                    rhs,
                };
                encode_statement(&stmt, &vocab).unwrap()
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let mut params = ModelParams::init(Dims::default(), 17);
        let cfg = LossConfig {
            alpha: 0.1,
            class_weights: [1.3, 0.7],
            form: crate::model::LossForm::Weighted,
        };
        let encs = sample_statements();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<Vec<u8>> = encs
            .iter()
            .map(|e| (0..e.operand_count()).map(|_| rng.gen_range(0..2u8)).collect())
            .collect();
        let items: Vec<BatchItem> = encs
            .iter()
            .zip(&values)
            .map(|(enc, vals)| BatchItem { enc, values: vals, label: rng.gen_range(0..2u8) })
            .collect();

        let (_, grads) = batch_loss_and_grads(&params, &items, &cfg).unwrap();
        let analytic = grads.flatten();
        let mut flat = params.flatten();
        let h = 1e-4;

        // A spread of indices from every parameter group.
        let layout = params.group_layout();
        let mut offset = 0;
        let mut checked = 0;
        for (group, len) in layout {
            let picks: Vec<usize> = if len <= 4 {
                (0..len).collect()
            } else {
                (0..8).map(|_| rng.gen_range(0..len)).collect()
            };
            for pick in picks {
                let idx = offset + pick;
                let orig = flat[idx];
                flat[idx] = orig + h;
                params.assign_from_flat(&flat);
                let lp = batch_loss(&params, &items, &cfg).unwrap();
                flat[idx] = orig - h;
                params.assign_from_flat(&flat);
                let lm = batch_loss(&params, &items, &cfg).unwrap();
                flat[idx] = orig;
                params.assign_from_flat(&flat);
                let fd = (lp - lm) / (2.0 * h);
                let err = rel_err(analytic[idx], fd);
                assert!(
                    err <= 1e-4,
                    "group {group} index {pick}: analytic {} vs fd {fd} (rel {err:.2e})",
                    analytic[idx]
                );
                checked += 1;
            }
            offset += len;
        }
        assert!(checked >= 60, "checked {checked} parameters");
    }

    #[test]
    fn printed_loss_form_gradients_also_match() {
        let mut params = ModelParams::init(Dims::default(), 23);
        let cfg = LossConfig {
            alpha: 0.05,
            class_weights: [2.0, 0.5],
            form: crate::model::LossForm::UnweightedNumerator,
        };
        let encs = sample_statements();
        let items: Vec<BatchItem> = encs
            .iter()
            .map(|enc| BatchItem { enc, values: &[1, 0, 1, 1][..enc.operand_count()], label: 0 })
            .collect();
        let (_, grads) = batch_loss_and_grads(&params, &items, &cfg).unwrap();
        let analytic = grads.flatten();
        let mut flat = params.flatten();
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let idx = rng.gen_range(0..flat.len());
            let orig = flat[idx];
            flat[idx] = orig + h;
            params.assign_from_flat(&flat);
            let lp = batch_loss(&params, &items, &cfg).unwrap();
            flat[idx] = orig - h;
            params.assign_from_flat(&flat);
            let lm = batch_loss(&params, &items, &cfg).unwrap();
            flat[idx] = orig;
            params.assign_from_flat(&flat);
            let fd = (lp - lm) / (2.0 * h);
            assert!(rel_err(analytic[idx], fd) <= 1e-4, "index {idx}");
        }
    }
}
