//! Reverse-mode gradients of the model loss.

use serde::{Deserialize, Serialize};

use super::layers::{gelu_grad, layer_norm_backward};
use super::task::Example;
use super::{BlockParams, BlockTrace, Model, ModelParams, Trace};
use crate::attention::{HeadTrace, HeadWeights};
use crate::config::PositionScheme;
use crate::encodings::{rel_index, relative_offset, shaw_index, t5_bucket, SegmentMap, SlotParams};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean token-level cross-entropy.
    CrossEntropy,
    /// Mean squared error against one-hot targets.
    Mse,
}

/// Gradients for one batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as the model's parameters.
    pub params: ModelParams,
    /// `∂L/∂X` for each example, where `X` is the embedded input fed to block 0.
    pub input: Vec<Matrix>,
}

impl Model {
    /// Mean loss over every position of every example.
    pub fn loss(&self, batch: &[Example], kind: LossKind) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let count = self.position_count(batch);
        let mut total = 0.0;
        for ex in batch {
            let x = self.embed(&ex.tokens, ex.segments.as_ref())?;
            let logits = self.trace(&x, ex.segments.as_ref(), None)?.logits;
            total += loss_terms(&logits, &ex.labels, kind, count)?.0;
        }
        finite_loss(total)
    }

    /// Loss of a single example evaluated from an explicit input matrix.
    pub fn loss_from_input(&self, x: &Matrix, ex: &Example, kind: LossKind) -> Result<f64> {
        let logits = self.trace(x, ex.segments.as_ref(), None)?.logits;
        finite_loss(loss_terms(&logits, &ex.labels, kind, ex.labels.len())?.0)
    }

    fn position_count(&self, batch: &[Example]) -> usize {
        batch.iter().map(|e| e.labels.len()).sum()
    }

    /// Loss and analytic gradients of every trainable parameter.
    pub fn loss_and_grads(&self, batch: &[Example], kind: LossKind) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let count = self.position_count(batch);
        let mut grads = self.params.zeros_like();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut total = 0.0;
        for ex in batch {
            let segmap = ex.segments.as_ref();
            let x = self.embed(&ex.tokens, segmap)?;
            let trace = self.trace(&x, segmap, None)?;
            let (loss, dlogits) = loss_terms(&trace.logits, &ex.labels, kind, count)?;
            total += loss;
            let dx = self.backward(&trace, dlogits, segmap, &mut grads)?;
            self.accumulate_embedding_grads(&ex.tokens, segmap, &dx, &mut grads);
            inputs.push(dx);
        }
        // The input-additive table sees exactly the sum of per-example input gradients.
        if let Some(dp) = grads.pos.input_mut() {
            let mut acc = inputs[0].clone();
            for dx in &inputs[1..] {
                acc.add_assign(dx)?;
            }
            *dp = acc;
        }
        Ok((
            finite_loss(total)?,
            Gradients {
                params: grads,
                input: inputs,
            },
        ))
    }

    fn accumulate_embedding_grads(
        &self,
        tokens: &[usize],
        segmap: Option<&SegmentMap>,
        dx: &Matrix,
        grads: &mut ModelParams,
    ) {
        for (i, &t) in tokens.iter().enumerate() {
            for (g, v) in grads.tok_emb.row_mut(t).iter_mut().zip(dx.row(i)) {
                *g += v;
            }
        }
        if let (Some(dseg), Some(map)) = (grads.seg_emb.as_mut(), segmap) {
            for i in 0..dx.rows() {
                for (g, v) in dseg.row_mut(map.segment_of(i)).iter_mut().zip(dx.row(i)) {
                    *g += v;
                }
            }
        }
    }

    /// Backpropagates `dlogits` through the trace, accumulating into `grads`; returns `∂L/∂X`.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        dlogits: Matrix,
        segmap: Option<&SegmentMap>,
        grads: &mut ModelParams,
    ) -> Result<Matrix> {
        let p = &self.params;
        grads
            .head_w
            .add_assign(&matmul_tn(&trace.final_h, &dlogits)?)?;
        add_col_sums(&mut grads.head_b, &dlogits);
        let dfinal = matmul_nt(&dlogits, &p.head_w)?;
        let mut dx = layer_norm_backward(
            &dfinal,
            &trace.lnf,
            &p.lnf_g,
            &mut grads.lnf_g,
            &mut grads.lnf_b,
        );

        let head_seg = if self.config.attention.per_head_segments() {
            segmap
        } else {
            None
        };
        for l in (0..p.blocks.len()).rev() {
            dx = self.block_backward(l, &p.blocks[l], &trace.blocks[l], dx, head_seg, grads)?;
        }
        Ok(dx)
    }

    fn block_backward(
        &self,
        layer: usize,
        bp: &BlockParams,
        bt: &BlockTrace,
        dx: Matrix,
        segmap: Option<&SegmentMap>,
        grads: &mut ModelParams,
    ) -> Result<Matrix> {
        let a = &self.config.attention;
        let g = &mut grads.blocks[layer];

        // feed-forward residual branch
        g.w2.add_assign(&matmul_tn(&bt.hact, &dx)?)?;
        add_col_sums(&mut g.b2, &dx);
        let mut dh = matmul_nt(&dx, &bp.w2)?;
        for (v, &pre) in dh.data_mut().iter_mut().zip(bt.hpre.data()) {
            *v *= gelu_grad(pre);
        }
        g.w1.add_assign(&matmul_tn(&bt.b, &dh)?)?;
        add_col_sums(&mut g.b1, &dh);
        let db = matmul_nt(&dh, &bp.w1)?;
        let mut dx1 = layer_norm_backward(&db, &bt.ln2, &bp.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        dx1.add_assign(&dx)?;

        // attention residual branch
        g.attn.w_o.add_assign(&matmul_tn(&bt.concat, &dx1)?)?;
        let dconcat = matmul_nt(&dx1, &bp.attn.w_o)?;
        let mut dact = Matrix::zeros(a.n, a.d);
        for h in 0..a.h {
            let dout = dconcat.slice_cols(h * a.d_h, a.d_h);
            let slot = match self.params.pos.num_slots() {
                0 => None,
                _ => Some(self.params.pos.slot_index(layer, h)?),
            };
            let hg = self.head_backward(
                &bt.a,
                &bp.attn.heads[h],
                bp.attn.proj.as_ref(),
                &bt.heads[h],
                &dout,
                slot,
                segmap,
                grads,
                layer,
                h,
            )?;
            dact.add_assign(&hg)?;
        }
        let g = &mut grads.blocks[layer];
        let mut dx0 = layer_norm_backward(&dact, &bt.ln1, &bp.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        dx0.add_assign(&dx1)?;
        Ok(dx0)
    }

    #[allow(clippy::too_many_arguments)]
    fn head_backward(
        &self,
        act: &Matrix,
        w: &HeadWeights,
        proj: Option<&Matrix>,
        t: &HeadTrace,
        dout: &Matrix,
        slot: Option<usize>,
        segmap: Option<&SegmentMap>,
        grads: &mut ModelParams,
        layer: usize,
        head: usize,
    ) -> Result<Matrix> {
        let a = &self.config.attention;
        let scale = a.scale;
        let scheme = a.scheme;
        let slot_params = slot.map(|s| &self.params.pos.slots()[s]);
        let (n, keys_len) = t.probs.shape();

        // out = probs · vals (+ Σ_j p_ij a_V[c(i,j)])
        let mut dprobs = matmul_nt(dout, &t.vals)?;
        let dvals = matmul_tn(&t.probs, dout)?;
        if let (PositionScheme::ShawRel { clip, .. }, Some(sp)) = (scheme, slot_params) {
            if let Some(a_v) = &sp.a_v {
                let da_v = grads
                    .pos
                    .slot_mut(slot.expect("shaw slot"))
                    .a_v
                    .as_mut()
                    .expect("a_v grad");
                for i in 0..n {
                    for j in 0..keys_len {
                        let c = shaw_index(i, j, clip);
                        dprobs[(i, j)] += crate::tensor::dot(dout.row(i), a_v.row(c));
                        let p = t.probs[(i, j)];
                        for (g, &d) in da_v.row_mut(c).iter_mut().zip(dout.row(i)) {
                            *g += p * d;
                        }
                    }
                }
            }
        }

        // softmax
        let mut ds = Matrix::zeros(n, keys_len);
        for i in 0..n {
            let pr = t.probs.row(i);
            let dp = dprobs.row(i);
            let inner: f64 = pr.iter().zip(dp).map(|(p, d)| p * d).sum();
            for (o, (p, d)) in ds.row_mut(i).iter_mut().zip(pr.iter().zip(dp)) {
                *o = p * (d - inner);
            }
        }

        // additive biases see ds directly
        if let Some(s) = slot {
            self.bias_backward(&ds, s, segmap, grads)?;
        }

        // token scores: q·keys / scale (+ q·a_K[c] / scale)
        let ds_scaled = ds.scale(1.0 / scale);
        let mut dq = matmul(&ds_scaled, &t.keys)?;
        let dkeys = matmul_tn(&ds_scaled, &t.q)?;
        if let (PositionScheme::ShawRel { clip, .. }, Some(sp)) = (scheme, slot_params) {
            let a_k = sp.a_k.as_ref().expect("a_k");
            let da_k = grads
                .pos
                .slot_mut(slot.expect("shaw slot"))
                .a_k
                .as_mut()
                .expect("a_k grad");
            for i in 0..n {
                for j in 0..keys_len {
                    let c = shaw_index(i, j, clip);
                    let g = ds_scaled[(i, j)];
                    for ((dqv, &av), (dav, &qv)) in dq
                        .row_mut(i)
                        .iter_mut()
                        .zip(a_k.row(c))
                        .zip(da_k.row_mut(c).iter_mut().zip(t.q.row(i)))
                    {
                        *dqv += g * av;
                        *dav += g * qv;
                    }
                }
            }
        }

        let (dk, dv) = match proj {
            Some(e) => {
                let de = grads.blocks[layer].attn.proj.as_mut().expect("proj grad");
                de.add_assign(&matmul_nt(&dkeys, &t.k)?)?;
                de.add_assign(&matmul_nt(&dvals, &t.v)?)?;
                (matmul_tn(e, &dkeys)?, matmul_tn(e, &dvals)?)
            }
            None => (dkeys, dvals),
        };

        let hg = &mut grads.blocks[layer].attn.heads[head];
        hg.w_q.add_assign(&matmul_tn(act, &dq)?)?;
        hg.w_k.add_assign(&matmul_tn(act, &dk)?)?;
        hg.w_v.add_assign(&matmul_tn(act, &dv)?)?;
        let mut dact = matmul_nt(&dq, &w.w_q)?;
        dact.add_assign(&matmul_nt(&dk, &w.w_k)?)?;
        dact.add_assign(&matmul_nt(&dv, &w.w_v)?)?;
        Ok(dact)
    }

    /// Routes the score gradient into whichever bias tables the slot owns.
    fn bias_backward(
        &self,
        ds: &Matrix,
        slot: usize,
        segmap: Option<&SegmentMap>,
        grads: &mut ModelParams,
    ) -> Result<()> {
        let pos = &self.params.pos;
        let sp: &SlotParams = &pos.slots()[slot];
        let table_n = pos.n();
        let (n, keys_len) = ds.shape();
        let gs = grads.pos.slot_mut(slot);
        match pos.scheme() {
            PositionScheme::DietAbs { .. } => {
                let p_q = sp.p_q.as_ref().expect("p_q");
                let p_k = sp.p_k.as_ref().expect("p_k");
                gs.p_q
                    .as_mut()
                    .expect("p_q grad")
                    .add_assign(&matmul(ds, p_k)?)?;
                gs.p_k
                    .as_mut()
                    .expect("p_k grad")
                    .add_assign(&matmul_tn(ds, p_q)?)?;
            }
            PositionScheme::DietRel => {
                let g = gs.rel.as_mut().expect("rel grad").data_mut();
                for i in 0..n {
                    for j in 0..keys_len {
                        g[rel_index(i, j, table_n)] += ds[(i, j)];
                    }
                }
            }
            PositionScheme::T5Bucketed {
                num_buckets,
                max_distance,
            } => {
                let g = gs.buckets.as_mut().expect("bucket grad").data_mut();
                for i in 0..n {
                    for j in 0..keys_len {
                        g[t5_bucket(relative_offset(i, j), num_buckets, max_distance)] +=
                            ds[(i, j)];
                    }
                }
            }
            _ => {}
        }
        if let (Some(gseg), Some(map)) = (gs.seg.as_mut(), segmap) {
            for i in 0..n {
                for j in 0..keys_len {
                    gseg[(map.segment_of(i), map.segment_of(j))] += ds[(i, j)];
                }
            }
        }
        Ok(())
    }
}

fn add_col_sums(acc: &mut Matrix, m: &Matrix) {
    for r in 0..m.rows() {
        for (a, v) in acc.data_mut().iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
}

fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss {
            layer: "loss".into(),
        })
    }
}

/// Loss contribution of one example (already divided by `count`) and `∂/∂logits`.
pub(crate) fn loss_terms(
    logits: &Matrix,
    labels: &[usize],
    kind: LossKind,
    count: usize,
) -> Result<(f64, Matrix)> {
    let (n, classes) = logits.shape();
    if labels.len() != n {
        return Err(Error::Input(format!(
            "{} labels for {n} positions",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let norm = 1.0 / count as f64;
    let mut grad = Matrix::zeros(n, classes);
    let mut loss = 0.0;
    match kind {
        LossKind::CrossEntropy => {
            for (i, &y) in labels.iter().enumerate() {
                let row = logits.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                loss += (lse - row[y]) * norm;
                for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
                    let p = (row[c] - lse).exp();
                    *g = (p - if c == y { 1.0 } else { 0.0 }) * norm;
                }
            }
        }
        LossKind::Mse => {
            let norm = norm / classes as f64;
            for (i, &y) in labels.iter().enumerate() {
                for c in 0..classes {
                    let diff = logits[(i, c)] - if c == y { 1.0 } else { 0.0 };
                    loss += diff * diff * norm;
                    grad[(i, c)] = 2.0 * diff * norm;
                }
            }
        }
    }
    Ok((loss, grad))
}
