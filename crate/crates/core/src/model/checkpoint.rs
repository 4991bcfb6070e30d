//! Versioned JSON checkpoints.
//!
//! Parameter groups are stored as `{shape, data}` pairs in a fixed order;
//! loading validates the format version, dimensions, shapes, and the
//! vocabulary hash. f64 values survive the JSON round trip exactly.

use super::{Affine, Dims, LossConfig, LstmParams, Mat, ModelParams};
use crate::context::Vocab;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("vocabulary hash mismatch: checkpoint {found}, expected {expected}")]
    VocabMismatch { found: String, expected: String },
    #[error("bad shape for {group}: {found:?}, expected {expected:?}")]
    Shape { group: &'static str, found: Vec<usize>, expected: Vec<usize> },
}

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn of_mat(m: &Mat) -> Self {
        Tensor { shape: vec![m.rows, m.cols], data: m.data.clone() }
    }

    fn of_vec(v: &[f64]) -> Self {
        Tensor { shape: vec![v.len()], data: v.to_vec() }
    }

    fn into_mat(self, group: &'static str, rows: usize, cols: usize) -> Result<Mat, CheckpointError> {
        if self.shape != [rows, cols] || self.data.len() != rows * cols {
            return Err(CheckpointError::Shape {
                group,
                found: self.shape,
                expected: vec![rows, cols],
            });
        }
        Ok(Mat { rows, cols, data: self.data })
    }

    fn into_vec(self, group: &'static str, len: usize) -> Result<Vec<f64>, CheckpointError> {
        if self.shape != [len] || self.data.len() != len {
            return Err(CheckpointError::Shape { group, found: self.shape, expected: vec![len] });
        }
        Ok(self.data)
    }
}

/// On-disk checkpoint. `arch` records the layer shapes that the dims alone
/// do not pin down.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: Dims,
    pub vocab: Vec<String>,
    pub vocab_hash: String,
    pub arch: Arch,
    pub loss: LossConfig,
    params: ParamGroups,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arch {
    pub aggregation: String,
    pub head: String,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            aggregation: "affine+tanh".to_string(),
            head: "affine-relu-affine".to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamGroups {
    token_table: Tensor,
    encoder_wx: Tensor,
    encoder_wh: Tensor,
    encoder_b: Tensor,
    agg_w: Tensor,
    agg_b: Tensor,
    skip_weight: f64,
    attn: Tensor,
    head_hidden_w: Tensor,
    head_hidden_b: Tensor,
    head_out_w: Tensor,
    head_out_b: Tensor,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, loss: LossConfig, vocab: &Vocab) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            dims: params.dims,
            vocab: vocab.names().to_vec(),
            vocab_hash: vocab.hash(),
            arch: Arch::default(),
            loss,
            params: ParamGroups {
                token_table: Tensor::of_mat(&params.token_table),
                encoder_wx: Tensor::of_mat(&params.encoder.wx),
                encoder_wh: Tensor::of_mat(&params.encoder.wh),
                encoder_b: Tensor::of_vec(&params.encoder.b),
                agg_w: Tensor::of_mat(&params.agg.w),
                agg_b: Tensor::of_vec(&params.agg.b),
                skip_weight: params.skip_weight,
                attn: Tensor::of_vec(&params.attn),
                head_hidden_w: Tensor::of_mat(&params.head_hidden.w),
                head_hidden_b: Tensor::of_vec(&params.head_hidden.b),
                head_out_w: Tensor::of_mat(&params.head_out.w),
                head_out_b: Tensor::of_vec(&params.head_out.b),
            },
        }
    }

    pub fn into_params(self, vocab: &Vocab) -> Result<(ModelParams, LossConfig), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let expected = vocab.hash();
        if self.vocab_hash != expected {
            return Err(CheckpointError::VocabMismatch { found: self.vocab_hash, expected });
        }
        let d = self.dims;
        let g = self.params;
        let params = ModelParams {
            dims: d,
            token_table: g.token_table.into_mat("token_table", d.vocab, d.token)?,
            encoder: LstmParams {
                wx: g.encoder_wx.into_mat("encoder.wx", 4 * d.ctx, d.token)?,
                wh: g.encoder_wh.into_mat("encoder.wh", 4 * d.ctx, d.ctx)?,
                b: g.encoder_b.into_vec("encoder.b", 4 * d.ctx)?,
            },
            agg: Affine {
                w: g.agg_w.into_mat("agg.w", d.attn, d.operand())?,
                b: g.agg_b.into_vec("agg.b", d.attn)?,
            },
            skip_weight: g.skip_weight,
            attn: g.attn.into_vec("attn", d.attn)?,
            head_hidden: Affine {
                w: g.head_hidden_w.into_mat("head_hidden.w", d.head_hidden, d.operand())?,
                b: g.head_hidden_b.into_vec("head_hidden.b", d.head_hidden)?,
            },
            head_out: Affine {
                w: g.head_out_w.into_mat("head_out.w", 2, d.head_hidden)?,
                b: g.head_out_b.into_vec("head_out.b", 2)?,
            },
        };
        Ok((params, self.loss))
    }
}

pub fn save_checkpoint<W: Write>(
    writer: W,
    params: &ModelParams,
    loss: LossConfig,
    vocab: &Vocab,
) -> Result<(), CheckpointError> {
    let checkpoint = Checkpoint::new(params, loss, vocab);
    serde_json::to_writer(writer, &checkpoint)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(
    reader: R,
    vocab: &Vocab,
) -> Result<(ModelParams, LossConfig), CheckpointError> {
    let checkpoint: Checkpoint = serde_json::from_reader(reader)?;
    checkpoint.into_params(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_is_exact() {
        let params = ModelParams::init(Dims::default(), 9);
        let loss = LossConfig { alpha: 0.1, class_weights: [1.25, 0.75], ..Default::default() };
        let vocab = Vocab::standard();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, loss, &vocab).unwrap();
        let (loaded, loaded_loss) = load_checkpoint(buf.as_slice(), &vocab).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded_loss, loss);
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let params = ModelParams::init(Dims::default(), 9);
        let vocab = Vocab::standard();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, LossConfig::default(), &vocab).unwrap();
        let tampered = String::from_utf8(buf).unwrap().replace(&vocab.hash(), "deadbeef");
        let err = load_checkpoint(tampered.as_bytes(), &vocab).unwrap_err();
        assert!(matches!(err, CheckpointError::VocabMismatch { .. }));
    }

    #[test]
    fn serialization_is_byte_deterministic() {
        let params = ModelParams::init(Dims::default(), 11);
        let vocab = Vocab::standard();
        let mut a = Vec::new();
        let mut b = Vec::new();
        save_checkpoint(&mut a, &params, LossConfig::default(), &vocab).unwrap();
        save_checkpoint(&mut b, &params, LossConfig::default(), &vocab).unwrap();
        assert_eq!(a, b);
    }
}
