//! Score construction and head outputs for every encoding scheme.
//!
//! Token scores are divided by `scale` (default `√d`) while they are built;
//! positional and segment biases are added unscaled, and the softmax that
//! follows always uses scale 1.

use std::borrow::Cow;

pub use crate::config::AttentionConfig;
use crate::encodings::{
    positional_bias, segment_bias, shaw_index, PositionCache, PositionParams, PositionScheme,
    SegmentMap,
};
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{matmul, matmul_nt, randn_with, softmax_in_place, Matrix};

/// Query, key and value projections of one head, each `d × d_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl HeadWeights {
    pub fn random(d: usize, d_h: usize, std: f64, rng: &mut SeedRng) -> Result<Self> {
        Ok(Self {
            w_q: randn_with(d, d_h, std, rng)?,
            w_k: randn_with(d, d_h, std, rng)?,
            w_v: randn_with(d, d_h, std, rng)?,
        })
    }

    pub fn zeros(d: usize, d_h: usize) -> Self {
        Self {
            w_q: Matrix::zeros(d, d_h),
            w_k: Matrix::zeros(d, d_h),
            w_v: Matrix::zeros(d, d_h),
        }
    }
}

/// Attention weights of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub heads: Vec<HeadWeights>,
    /// `(h·d_h) × d` output projection.
    pub w_o: Matrix,
    /// `k × n` key/value projection for the Linformer path.
    pub proj: Option<Matrix>,
}

fn check_input(x: &Matrix, w: &HeadWeights) -> Result<()> {
    if x.cols() != w.w_q.rows() || w.w_q.shape() != w.w_k.shape() {
        return Err(Error::Dimension {
            op: "scores",
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: w.w_q.rows(),
            right_cols: w.w_q.cols(),
        });
    }
    Ok(())
}

/// `S_ij = q_i·k_j / scale + bias_ij`, fused into one pass.
pub(crate) fn fused_scores(
    q: &Matrix,
    k: &Matrix,
    scale: f64,
    bias: Option<&Matrix>,
) -> Result<Matrix> {
    let mut s = matmul_nt(q, k)?;
    match bias {
        Some(b) => {
            if b.shape() != s.shape() {
                return Err(Error::Dimension {
                    op: "score bias",
                    left_rows: s.rows(),
                    left_cols: s.cols(),
                    right_rows: b.rows(),
                    right_cols: b.cols(),
                });
            }
            for (v, &bv) in s.data_mut().iter_mut().zip(b.data()) {
                *v = *v / scale + bv;
            }
        }
        None => s.data_mut().iter_mut().for_each(|v| *v /= scale),
    }
    Ok(s)
}

/// `(X W_Q)(X W_K)ᵀ / scale`.
pub fn scores_vanilla(x: &Matrix, w: &HeadWeights, scale: f64) -> Result<Matrix> {
    check_input(x, w)?;
    fused_scores(&matmul(x, &w.w_q)?, &matmul(x, &w.w_k)?, scale, None)
}

/// Vanilla scores of `X + P`.
pub fn scores_input_additive(
    x: &Matrix,
    p: &Matrix,
    w: &HeadWeights,
    scale: f64,
) -> Result<Matrix> {
    scores_vanilla(&x.add(p)?, w, scale)
}

/// Vanilla scores plus a precomputed additive bias.
pub fn scores_with_bias(x: &Matrix, w: &HeadWeights, bias: &Matrix, scale: f64) -> Result<Matrix> {
    check_input(x, w)?;
    fused_scores(&matmul(x, &w.w_q)?, &matmul(x, &w.w_k)?, scale, Some(bias))
}

fn require_scheme(params: &PositionParams, ok: bool, want: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Scheme {
            scheme: params.scheme().to_string(),
            reason: format!("expected {want}"),
        })
    }
}

/// Token scores plus `P_Q P_Kᵀ` and optional segment scores.
pub fn scores_diet_abs(
    x: &Matrix,
    w: &HeadWeights,
    params: &PositionParams,
    layer: usize,
    head: usize,
    segmap: Option<&SegmentMap>,
    scale: f64,
) -> Result<Matrix> {
    require_scheme(
        params,
        matches!(params.scheme(), PositionScheme::DietAbs { .. }),
        "diet-abs",
    )?;
    let bias = positional_bias(params, layer, head, x.rows(), segmap)?;
    scores_with_bias(x, w, &bias, scale)
}

/// Token scores plus the Toeplitz relative bias and optional segment scores.
pub fn scores_diet_rel(
    x: &Matrix,
    w: &HeadWeights,
    params: &PositionParams,
    layer: usize,
    head: usize,
    segmap: Option<&SegmentMap>,
    scale: f64,
) -> Result<Matrix> {
    require_scheme(
        params,
        params.scheme() == PositionScheme::DietRel,
        "diet-rel",
    )?;
    let bias = positional_bias(params, layer, head, x.rows(), segmap)?;
    scores_with_bias(x, w, &bias, scale)
}

/// Token scores plus the bucketed relative bias.
pub fn scores_t5(
    x: &Matrix,
    w: &HeadWeights,
    params: &PositionParams,
    layer: usize,
    head: usize,
    segmap: Option<&SegmentMap>,
    scale: f64,
) -> Result<Matrix> {
    require_scheme(
        params,
        matches!(params.scheme(), PositionScheme::T5Bucketed { .. }),
        "t5",
    )?;
    let bias = positional_bias(params, layer, head, x.rows(), segmap)?;
    scores_with_bias(x, w, &bias, scale)
}

/// Key-relative scores: `A_ij = (X_i W_Q)·(X_j W_K + a_K[clamp(j − i)]) / scale`.
pub fn scores_shaw(
    x: &Matrix,
    w: &HeadWeights,
    a_k: &Matrix,
    clip: usize,
    scale: f64,
) -> Result<Matrix> {
    check_input(x, w)?;
    let q = matmul(x, &w.w_q)?;
    let k = matmul(x, &w.w_k)?;
    shaw_scores_from(&q, &k, a_k, clip, scale, None)
}

pub(crate) fn shaw_scores_from(
    q: &Matrix,
    k: &Matrix,
    a_k: &Matrix,
    clip: usize,
    scale: f64,
    bias: Option<&Matrix>,
) -> Result<Matrix> {
    if a_k.shape() != (2 * clip + 1, q.cols()) {
        return Err(Error::Dimension {
            op: "shaw scores",
            left_rows: a_k.rows(),
            left_cols: a_k.cols(),
            right_rows: 2 * clip + 1,
            right_cols: q.cols(),
        });
    }
    let n = q.rows();
    // q_i·a_c for every query and every clipped offset, shared across keys.
    let qa = matmul_nt(q, a_k)?;
    let mut s = matmul_nt(q, k)?;
    for i in 0..n {
        for j in 0..k.rows() {
            let v = s[(i, j)] + qa[(i, shaw_index(i, j, clip))];
            s[(i, j)] = v / scale + bias.map_or(0.0, |b| b[(i, j)]);
        }
    }
    Ok(s)
}

/// Linformer scores against projected keys plus `P_Q P_Kᵀ`: an `n × k` matrix.
pub fn scores_linformer_diet_abs(
    x: &Matrix,
    w: &HeadWeights,
    proj: &Matrix,
    params: &PositionParams,
    layer: usize,
    head: usize,
    scale: f64,
) -> Result<Matrix> {
    check_input(x, w)?;
    if proj.cols() != x.rows() {
        return Err(Error::Dimension {
            op: "linformer projection",
            left_rows: proj.rows(),
            left_cols: proj.cols(),
            right_rows: x.rows(),
            right_cols: x.cols(),
        });
    }
    if proj.rows() >= x.rows() {
        return Err(Error::Config(format!(
            "projected length k={} must be below n={}",
            proj.rows(),
            x.rows()
        )));
    }
    require_scheme(
        params,
        matches!(params.scheme(), PositionScheme::DietAbs { .. }),
        "diet-abs",
    )?;
    if params.key_len() != proj.rows() {
        return Err(Error::Config(format!(
            "positional keys cover {} projected positions, projection has {}",
            params.key_len(),
            proj.rows()
        )));
    }
    let q = matmul(x, &w.w_q)?;
    let keys = matmul(proj, &matmul(x, &w.w_k)?)?;
    let bias = positional_bias(params, layer, head, x.rows(), None)?;
    fused_scores(&q, &keys, scale, Some(&bias))
}

/// `softmax_rows(scores, 1) × (values W_V)`.
pub fn attention_head(scores: &Matrix, values: &Matrix, w_v: &Matrix) -> Result<Matrix> {
    if scores.cols() != values.rows() {
        return Err(Error::Dimension {
            op: "attention_head",
            left_rows: scores.rows(),
            left_cols: scores.cols(),
            right_rows: values.rows(),
            right_cols: values.cols(),
        });
    }
    let probs = crate::tensor::softmax_rows(scores, 1.0)?;
    matmul(&probs, &matmul(values, w_v)?)
}

/// Positional inputs to a single head.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct HeadPosition<'a> {
    pub bias: Option<&'a Matrix>,
    pub shaw: Option<ShawTables<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ShawTables<'a> {
    pub a_k: &'a Matrix,
    pub a_v: Option<&'a Matrix>,
    pub clip: usize,
}

/// Intermediates of one head's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct HeadTrace {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Keys after the optional Linformer projection.
    pub keys: Matrix,
    /// Values after the optional Linformer projection.
    pub vals: Matrix,
    pub probs: Matrix,
    pub out: Matrix,
}

fn scores_from(q: &Matrix, keys: &Matrix, pos: HeadPosition<'_>, scale: f64) -> Result<Matrix> {
    match pos.shaw {
        Some(t) => shaw_scores_from(q, keys, t.a_k, t.clip, scale, pos.bias),
        None => fused_scores(q, keys, scale, pos.bias),
    }
}

/// Pre-softmax scores of one head.
pub(crate) fn head_scores(
    x: &Matrix,
    w: &HeadWeights,
    proj: Option<&Matrix>,
    pos: HeadPosition<'_>,
    scale: f64,
) -> Result<Matrix> {
    check_input(x, w)?;
    let q = matmul(x, &w.w_q)?;
    let mut keys = matmul(x, &w.w_k)?;
    if let Some(e) = proj {
        keys = matmul(e, &keys)?;
    }
    scores_from(&q, &keys, pos, scale)
}

pub(crate) fn head_forward(
    x: &Matrix,
    w: &HeadWeights,
    proj: Option<&Matrix>,
    pos: HeadPosition<'_>,
    scale: f64,
) -> Result<HeadTrace> {
    check_input(x, w)?;
    let q = matmul(x, &w.w_q)?;
    let k = matmul(x, &w.w_k)?;
    let v = matmul(x, &w.w_v)?;
    let (keys, vals) = match proj {
        Some(e) => (matmul(e, &k)?, matmul(e, &v)?),
        None => (k.clone(), v.clone()),
    };
    let mut probs = scores_from(&q, &keys, pos, scale)?;
    for r in 0..probs.rows() {
        softmax_in_place(probs.row_mut(r), 1.0);
    }
    let mut out = matmul(&probs, &vals)?;
    if let Some(ShawTables {
        a_v: Some(a_v),
        clip,
        ..
    }) = pos.shaw
    {
        for i in 0..out.rows() {
            for j in 0..probs.cols() {
                let p = probs[(i, j)];
                let a = a_v.row(shaw_index(i, j, clip));
                for (o, &av) in out.row_mut(i).iter_mut().zip(a) {
                    *o += p * av;
                }
            }
        }
    }
    Ok(HeadTrace {
        q,
        k,
        v,
        keys,
        vals,
        probs,
        out,
    })
}

/// The score bias a head receives, drawn from the cache when one is supplied.
pub(crate) fn head_bias<'a>(
    params: &'a PositionParams,
    cache: Option<&'a PositionCache>,
    layer: usize,
    head: usize,
    n: usize,
    segmap: Option<&SegmentMap>,
) -> Result<Option<Cow<'a, Matrix>>> {
    if params.scheme().is_additive_bias() {
        if let Some(c) = cache {
            if c.n() != n || c.segmap() != segmap {
                return Err(Error::Input(
                    "cache was built for a different length or segment map".into(),
                ));
            }
            return Ok(Some(Cow::Borrowed(c.bias(params, layer, head)?)));
        }
        return Ok(Some(Cow::Owned(positional_bias(
            params, layer, head, n, segmap,
        )?)));
    }
    match (
        params.slot_for(layer, head)?.and_then(|s| s.seg.as_ref()),
        segmap,
    ) {
        (Some(s), Some(map)) => Ok(Some(Cow::Owned(segment_bias(s, map, n)?))),
        _ => Ok(None),
    }
}

pub(crate) fn head_position<'a>(
    params: &'a PositionParams,
    layer: usize,
    head: usize,
    bias: Option<&'a Matrix>,
) -> Result<HeadPosition<'a>> {
    let shaw = match params.scheme() {
        PositionScheme::ShawRel { clip, .. } => {
            let slot = params.slot_for(layer, head)?.expect("shaw slots");
            Some(ShawTables {
                a_k: slot.a_k.as_ref().expect("shaw a_k"),
                a_v: slot.a_v.as_ref(),
                clip,
            })
        }
        _ => None,
    };
    Ok(HeadPosition { bias, shaw })
}

/// Multi-head attention for one layer: per-head outputs concatenated, then `W_O`.
///
/// Input-additive schemes are expected to have been applied to `x` already.
pub fn multi_head(
    x: &Matrix,
    weights: &LayerWeights,
    params: &PositionParams,
    layer: usize,
    segmap: Option<&SegmentMap>,
    config: &AttentionConfig,
    cache: Option<&PositionCache>,
) -> Result<Matrix> {
    let n = x.rows();
    let mut outs = Vec::with_capacity(weights.heads.len());
    for (head, w) in weights.heads.iter().enumerate() {
        let bias = head_bias(params, cache, layer, head, n, segmap)?;
        let pos = head_position(params, layer, head, bias.as_deref())?;
        outs.push(head_forward(x, w, weights.proj.as_ref(), pos, config.scale)?.out);
    }
    matmul(&Matrix::hcat(&outs)?, &weights.w_o)
}
