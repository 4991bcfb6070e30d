//! Batch loss: class-weighted cross-entropy plus an attention
//! regularizer that rewards large updated-embedding norms.

use super::backward::{backprop_paths, backward_statement, PathGradients};
use super::forward::{forward_statement, PathCache};
use super::{ModelError, ModelParams};
use crate::context::EncodedStatement;
use serde::{Deserialize, Serialize};

const NORM_FLOOR: f64 = 1e-8;

/// How the cross-entropy term is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// Class-weighted numerator over the summed class weights (default).
    Weighted,
    /// Unweighted numerator over the summed class weights.
    UnweightedNumerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Regularizer weight.
    pub alpha: f64,
    /// Class weights for labels 0 and 1 (inverse train-set frequencies).
    pub class_weights: [f64; 2],
    pub form: LossForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.10, class_weights: [1.0, 1.0], form: LossForm::Weighted }
    }
}

/// One training sample: encoded statement, operand values, observed output.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub enc: &'a EncodedStatement,
    pub values: &'a [u8],
    pub label: u8,
}

fn ce_terms(cfg: &LossConfig, items: &[BatchItem]) -> (f64, Vec<f64>) {
    let weight_sum: f64 = items.iter().map(|it| cfg.class_weights[it.label as usize]).sum();
    let coefs = items
        .iter()
        .map(|it| match cfg.form {
            LossForm::Weighted => cfg.class_weights[it.label as usize] / weight_sum,
            LossForm::UnweightedNumerator => 1.0 / weight_sum,
        })
        .collect();
    (weight_sum, coefs)
}

fn sample_norm(norm: f64, id: &crate::frontend::StatementId) -> f64 {
    if norm < NORM_FLOOR {
        log::warn!("updated-embedding norm {norm:.3e} for statement {id} clamped to {NORM_FLOOR}");
        NORM_FLOOR
    } else {
        norm
    }
}

/// Loss over a batch, forward only.
pub fn batch_loss(
    params: &ModelParams,
    items: &[BatchItem],
    cfg: &LossConfig,
) -> Result<f64, ModelError> {
    assert!(!items.is_empty(), "empty batch");
    let mut cache = PathCache::new();
    let (_, coefs) = ce_terms(cfg, items);
    let reg_coef = cfg.alpha / items.len() as f64;
    let mut loss = 0.0;
    for (item, coef) in items.iter().zip(&coefs) {
        let fwd = forward_statement(params, item.enc, item.values, &mut cache)?;
        let ce = -fwd.probs[item.label as usize].max(f64::MIN_POSITIVE).ln();
        loss += coef * ce + reg_coef / sample_norm(fwd.xstar_norm, &item.enc.id);
    }
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    Ok(loss)
}

/// Loss plus exact gradients for every parameter.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    items: &[BatchItem],
    cfg: &LossConfig,
) -> Result<(f64, ModelParams), ModelError> {
    assert!(!items.is_empty(), "empty batch");
    let mut cache = PathCache::new();
    let mut grads = params.zeros_like();
    let mut path_grads = PathGradients::new(&cache, params.dims.ctx);
    let (_, coefs) = ce_terms(cfg, items);
    let reg_coef = cfg.alpha / items.len() as f64;

    let mut loss = 0.0;
    for (item, &coef) in items.iter().zip(&coefs) {
        let fwd = forward_statement(params, item.enc, item.values, &mut cache)?;
        let ce = -fwd.probs[item.label as usize].max(f64::MIN_POSITIVE).ln();
        let norm = sample_norm(fwd.xstar_norm, &item.enc.id);
        loss += coef * ce + reg_coef / norm;
        // When the norm is clamped the regularizer is locally constant.
        let sample_reg = if fwd.xstar_norm < NORM_FLOOR { 0.0 } else { reg_coef };
        backward_statement(
            params,
            &fwd,
            item.label,
            coef,
            sample_reg,
            &mut grads,
            &cache,
            &mut path_grads,
        )?;
    }
    backprop_paths(params, &cache, &path_grads, &mut grads)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{encode_statement, Vocab};
    use crate::frontend::{AssignKind, BinOp, Expr, Statement, StatementId};
    use crate::model::Dims;

    fn encode(rhs: Expr) -> EncodedStatement {
        let stmt = Statement {
            id: StatementId::new(1, 0),
            kind: AssignKind::Blocking,
            lhs: "y".into(),
            rhs,
        };
        encode_statement(&stmt, &Vocab::standard()).unwrap()
    }

    fn and_stmt() -> EncodedStatement {
        encode(Expr::bin(BinOp::And, Expr::var("a"), Expr::var("b")))
    }

    #[test]
    fn uniform_prediction_costs_ln_two() {
        // Zero out the prediction head so logits are always (0, 0).
        let mut params = ModelParams::init(Dims::default(), 1);
        params.head_out.w = crate::model::Mat::zeros(2, params.dims.head_hidden);
        params.head_out.b = vec![0.0; 2];
        let enc = and_stmt();
        let cfg = LossConfig { alpha: 0.0, class_weights: [1.0, 1.0], form: LossForm::Weighted };
        let items = [BatchItem { enc: &enc, values: &[1, 0], label: 1 }];
        let loss = batch_loss(&params, &items, &cfg).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_predictions_drive_loss_to_zero() {
        // Saturate the output head toward class 1 and present label 1.
        let mut params = ModelParams::init(Dims::default(), 1);
        params.head_out.w = crate::model::Mat::zeros(2, params.dims.head_hidden);
        params.head_out.b = vec![-40.0, 40.0];
        let enc = and_stmt();
        let cfg = LossConfig { alpha: 0.0, class_weights: [1.0, 1.0], form: LossForm::Weighted };
        let items = [BatchItem { enc: &enc, values: &[1, 1], label: 1 }];
        let loss = batch_loss(&params, &items, &cfg).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn regularizer_adds_alpha_over_norm() {
        let params = ModelParams::init(Dims::default(), 5);
        let enc = and_stmt();
        let items = [BatchItem { enc: &enc, values: &[0, 1], label: 0 }];
        let base = LossConfig { alpha: 0.0, class_weights: [1.0, 1.0], form: LossForm::Weighted };
        let reg = LossConfig { alpha: 0.1, ..base };
        let l0 = batch_loss(&params, &items, &base).unwrap();
        let l1 = batch_loss(&params, &items, &reg).unwrap();
        let mut cache = PathCache::new();
        let fwd = forward_statement(&params, &enc, &[0, 1], &mut cache).unwrap();
        assert!((l1 - l0 - 0.1 / fwd.xstar_norm).abs() < 1e-12);
        // Alpha 0.1 over a norm of exactly 2 would add 0.05.
        assert!((0.1_f64 / 2.0 - 0.05).abs() < f64::EPSILON);
    }

    #[test]
    fn class_weights_rebalance_the_ce_term() {
        let params = ModelParams::init(Dims::default(), 2);
        let enc = and_stmt();
        let cfg = LossConfig { alpha: 0.0, class_weights: [3.0, 1.0], form: LossForm::Weighted };
        let items = [
            BatchItem { enc: &enc, values: &[0, 0], label: 0 },
            BatchItem { enc: &enc, values: &[1, 1], label: 1 },
        ];
        let mut cache = PathCache::new();
        let ce: Vec<f64> = items
            .iter()
            .map(|it| {
                let fwd = forward_statement(&params, it.enc, it.values, &mut cache).unwrap();
                -fwd.probs[it.label as usize].ln()
            })
            .collect();
        let want = (3.0 * ce[0] + 1.0 * ce[1]) / 4.0;
        let got = batch_loss(&params, &items, &cfg).unwrap();
        assert!((got - want).abs() < 1e-12);
        // The printed form keeps the numerator unweighted.
        let printed = LossConfig { form: LossForm::UnweightedNumerator, ..cfg };
        let got = batch_loss(&params, &items, &printed).unwrap();
        assert!((got - (ce[0] + ce[1]) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn output_bias_gradient_matches_closed_form_with_zero_output_weights() {
        // With the last layer's weights zeroed, only its bias shapes the
        // prediction, and its gradient is the weighted mean of p - onehot.
        let mut params = ModelParams::init(Dims::default(), 3);
        params.head_out.w = crate::model::Mat::zeros(2, params.dims.head_hidden);
        params.head_out.b = vec![0.3, -0.2];
        let enc = and_stmt();
        let cfg = LossConfig { alpha: 0.0, class_weights: [2.0, 1.0], form: LossForm::Weighted };
        let items = [
            BatchItem { enc: &enc, values: &[0, 1], label: 0 },
            BatchItem { enc: &enc, values: &[1, 1], label: 1 },
        ];
        let (_, grads) = batch_loss_and_grads(&params, &items, &cfg).unwrap();
        let mut probs = [params.head_out.b[0], params.head_out.b[1]];
        crate::model::linalg::softmax_inplace(&mut probs);
        let w_sum = 3.0;
        let want0 = (2.0 * (probs[0] - 1.0) + 1.0 * probs[0]) / w_sum;
        let want1 = (2.0 * probs[1] + 1.0 * (probs[1] - 1.0)) / w_sum;
        assert!((grads.head_out.b[0] - want0).abs() < 1e-12);
        assert!((grads.head_out.b[1] - want1).abs() < 1e-12);
    }

    #[test]
    fn unused_token_rows_have_zero_gradient() {
        let params = ModelParams::init(Dims::default(), 4);
        let enc = and_stmt();
        let cfg = LossConfig::default();
        let items = [BatchItem { enc: &enc, values: &[1, 0], label: 1 }];
        let (_, grads) = batch_loss_and_grads(&params, &items, &cfg).unwrap();
        // The pad token and the Identifier kind never appear in any path.
        let vocab = Vocab::standard();
        let used: std::collections::BTreeSet<u16> =
            enc.paths.iter().flatten().flatten().copied().collect();
        for row in 0..params.dims.vocab {
            let grad_row = grads.token_table.row(row);
            if used.contains(&(row as u16)) {
                assert!(grad_row.iter().any(|&v| v != 0.0), "used row {row} has zero grad");
            } else {
                assert!(grad_row.iter().all(|&v| v == 0.0), "unused row {row} has nonzero grad");
            }
        }
        let ident_id = vocab.id_of(crate::frontend::NodeKind::Identifier);
        assert!(!used.contains(&ident_id), "identifier kind never appears inside paths");
    }

    #[test]
    fn regularizer_updates_aggregation_even_when_ce_is_saturated() {
        // Saturate CE so its gradient vanishes; alpha must still move the
        // aggregation transform.
        let mut params = ModelParams::init(Dims::default(), 6);
        params.head_out.w = crate::model::Mat::zeros(2, params.dims.head_hidden);
        params.head_out.b = vec![-60.0, 60.0];
        let enc = and_stmt();
        let items = [BatchItem { enc: &enc, values: &[1, 1], label: 1 }];
        let no_reg = LossConfig { alpha: 0.0, class_weights: [1.0, 1.0], form: LossForm::Weighted };
        let (_, g0) = batch_loss_and_grads(&params, &items, &no_reg).unwrap();
        assert!(g0.agg.w.data.iter().all(|&v| v.abs() < 1e-15));
        let with_reg = LossConfig { alpha: 0.1, ..no_reg };
        let (_, g1) = batch_loss_and_grads(&params, &items, &with_reg).unwrap();
        assert!(g1.agg.w.data.iter().any(|&v| v.abs() > 1e-12));
    }
}
