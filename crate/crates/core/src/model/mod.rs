//! A tiny pre-layer-norm transformer with analytic gradients.
//!
//! ```text
//! tokens ─► embed (+ input-additive P, + input segment table)
//!        ─► B × [ x + MHA(LN₁ x) ; x + W₂ GELU(W₁ LN₂ x + b₁) + b₂ ]
//!        ─► LN_f ─► W_cls ─► logits (n × classes)
//! ```
//!
//! Per-head schemes inject their bias or relative tables inside each head.

mod backward;
mod layers;
pub mod stress;
pub mod task;
pub mod train;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backward::{Gradients, LossKind};
pub use stress::{rank_stress_fit, StressFit, StressOptions};
pub use task::{Example, Task, TaskKind};
pub use train::{train, History, Optimizer, StepRecord, TrainOptions};

use crate::archive::TensorArchive;
use crate::attention::{
    head_bias, head_forward, head_position, HeadTrace, HeadWeights, LayerWeights,
};
use crate::config::{AttentionConfig, PositionScheme, SegmentLocation};
use crate::encodings::{
    init_params, sinusoidal_table, PositionCache, PositionParams, SegmentMap, EMBED_INIT_STD,
};
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{matmul, randn_with, Matrix};
use layers::{gelu, layer_norm, LnCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub attention: AttentionConfig,
    pub vocab: usize,
    pub num_classes: usize,
    pub d_ff: usize,
}

impl ModelConfig {
    /// `d_ff` defaults to `4d`.
    pub fn new(attention: AttentionConfig, vocab: usize, num_classes: usize) -> Self {
        let d_ff = 4 * attention.d;
        Self {
            attention,
            vocab,
            num_classes,
            d_ff,
        }
    }

    /// n=32, d=32, h=4, d_h=8, two blocks, vocabulary 64, one class per position.
    pub fn desk(scheme: PositionScheme) -> Self {
        Self::new(AttentionConfig::desk(scheme), 64, 32)
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        if self.vocab == 0 || self.num_classes == 0 || self.d_ff == 0 {
            return Err(Error::Config(
                "vocab, num_classes and d_ff must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub attn: LayerWeights,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Every trainable tensor of a [`Model`]. Gradients reuse the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tok_emb: Matrix,
    pub seg_emb: Option<Matrix>,
    pub blocks: Vec<BlockParams>,
    pub lnf_g: Matrix,
    pub lnf_b: Matrix,
    pub head_w: Matrix,
    pub head_b: Matrix,
    pub pos: PositionParams,
}

fn push<'a>(out: &mut Vec<(String, &'a Matrix)>, name: String, m: &'a Matrix) {
    out.push((name, m));
}

impl ModelParams {
    /// Every tensor in a fixed order with a stable name.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        push(&mut out, "tok_emb".into(), &self.tok_emb);
        if let Some(s) = &self.seg_emb {
            push(&mut out, "seg_emb".into(), s);
        }
        for (l, b) in self.blocks.iter().enumerate() {
            push(&mut out, format!("block{l}.ln1_g"), &b.ln1_g);
            push(&mut out, format!("block{l}.ln1_b"), &b.ln1_b);
            for (h, w) in b.attn.heads.iter().enumerate() {
                push(&mut out, format!("block{l}.head{h}.w_q"), &w.w_q);
                push(&mut out, format!("block{l}.head{h}.w_k"), &w.w_k);
                push(&mut out, format!("block{l}.head{h}.w_v"), &w.w_v);
            }
            push(&mut out, format!("block{l}.w_o"), &b.attn.w_o);
            if let Some(p) = &b.attn.proj {
                push(&mut out, format!("block{l}.proj"), p);
            }
            push(&mut out, format!("block{l}.ln2_g"), &b.ln2_g);
            push(&mut out, format!("block{l}.ln2_b"), &b.ln2_b);
            push(&mut out, format!("block{l}.w1"), &b.w1);
            push(&mut out, format!("block{l}.b1"), &b.b1);
            push(&mut out, format!("block{l}.w2"), &b.w2);
            push(&mut out, format!("block{l}.b2"), &b.b2);
        }
        push(&mut out, "lnf_g".into(), &self.lnf_g);
        push(&mut out, "lnf_b".into(), &self.lnf_b);
        push(&mut out, "head_w".into(), &self.head_w);
        push(&mut out, "head_b".into(), &self.head_b);
        for (key, m) in self.pos.named_tensors() {
            out.push((format!("pos/{key}"), m));
        }
        out
    }

    /// Mutable view in the same order as [`ModelParams::named`].
    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = Vec::new();
        out.push(("tok_emb".into(), &mut self.tok_emb));
        if let Some(s) = self.seg_emb.as_mut() {
            out.push(("seg_emb".into(), s));
        }
        for (l, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{l}.ln1_g"), &mut b.ln1_g));
            out.push((format!("block{l}.ln1_b"), &mut b.ln1_b));
            for (h, w) in b.attn.heads.iter_mut().enumerate() {
                out.push((format!("block{l}.head{h}.w_q"), &mut w.w_q));
                out.push((format!("block{l}.head{h}.w_k"), &mut w.w_k));
                out.push((format!("block{l}.head{h}.w_v"), &mut w.w_v));
            }
            out.push((format!("block{l}.w_o"), &mut b.attn.w_o));
            if let Some(p) = b.attn.proj.as_mut() {
                out.push((format!("block{l}.proj"), p));
            }
            out.push((format!("block{l}.ln2_g"), &mut b.ln2_g));
            out.push((format!("block{l}.ln2_b"), &mut b.ln2_b));
            out.push((format!("block{l}.w1"), &mut b.w1));
            out.push((format!("block{l}.b1"), &mut b.b1));
            out.push((format!("block{l}.w2"), &mut b.w2));
            out.push((format!("block{l}.b2"), &mut b.b2));
        }
        out.push(("lnf_g".into(), &mut self.lnf_g));
        out.push(("lnf_b".into(), &mut self.lnf_b));
        out.push(("head_w".into(), &mut self.head_w));
        out.push(("head_b".into(), &mut self.head_b));
        for (key, m) in self.pos.named_tensors_mut() {
            out.push((format!("pos/{key}"), m));
        }
        out
    }

    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        z.pos = self.pos.zeros_like();
        for (_, m) in z.named_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    pub params: ModelParams,
    sinusoid: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockTrace {
    pub ln1: LnCache,
    pub a: Matrix,
    pub heads: Vec<HeadTrace>,
    pub concat: Matrix,
    pub ln2: LnCache,
    pub b: Matrix,
    pub hpre: Matrix,
    pub hact: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub blocks: Vec<BlockTrace>,
    pub lnf: LnCache,
    pub final_h: Matrix,
    pub logits: Matrix,
}

impl Model {
    /// Fresh model; all randomness derives from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let a = &config.attention;
        let root = SeedRng::new(seed);
        let mut rng = root.split("model-weights");
        let d = a.d;
        let dense = |rows: usize, cols: usize, rng: &mut SeedRng| {
            randn_with(rows, cols, 1.0 / (rows as f64).sqrt(), rng)
        };

        let tok_emb = randn_with(config.vocab, d, EMBED_INIT_STD, &mut rng)?;
        let seg_emb = match a.segment_location {
            SegmentLocation::Input => {
                Some(randn_with(a.num_segments, d, EMBED_INIT_STD, &mut rng)?)
            }
            _ => None,
        };
        let mut blocks = Vec::with_capacity(a.layers);
        for _ in 0..a.layers {
            let heads = (0..a.h)
                .map(|_| HeadWeights::random(d, a.d_h, 1.0 / (d as f64).sqrt(), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let w_o = dense(a.h * a.d_h, d, &mut rng)?;
            let proj = match a.linformer_k {
                Some(k) => Some(randn_with(k, a.n, 1.0 / (a.n as f64).sqrt(), &mut rng)?),
                None => None,
            };
            blocks.push(BlockParams {
                ln1_g: Matrix::filled(1, d, 1.0),
                ln1_b: Matrix::zeros(1, d),
                attn: LayerWeights { heads, w_o, proj },
                ln2_g: Matrix::filled(1, d, 1.0),
                ln2_b: Matrix::zeros(1, d),
                w1: dense(d, config.d_ff, &mut rng)?,
                b1: Matrix::zeros(1, config.d_ff),
                w2: dense(config.d_ff, d, &mut rng)?,
                b2: Matrix::zeros(1, d),
            });
        }
        let params = ModelParams {
            tok_emb,
            seg_emb,
            blocks,
            lnf_g: Matrix::filled(1, d, 1.0),
            lnf_b: Matrix::zeros(1, d),
            head_w: dense(d, config.num_classes, &mut rng)?,
            head_b: Matrix::zeros(1, config.num_classes),
            pos: init_params(a, root.split("position").seed())?,
        };
        let sinusoid =
            (a.scheme == PositionScheme::InputAdditiveSinusoidal).then(|| sinusoidal_table(a.n, d));
        Ok(Self {
            config,
            params,
            sinusoid,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn attention_config(&self) -> &AttentionConfig {
        &self.config.attention
    }

    /// Adds `N(0, std²)` noise to every trainable tensor, including the zero-initialized ones.
    pub fn perturb(&mut self, std: f64, seed: u64) -> Result<()> {
        let mut rng = SeedRng::new(seed).split("perturb");
        for (_, m) in self.params.named_mut() {
            let noise = randn_with(m.rows(), m.cols(), std, &mut rng)?;
            m.add_assign(&noise)?;
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize], segmap: Option<&SegmentMap>) -> Result<()> {
        let a = &self.config.attention;
        if tokens.len() != a.n {
            return Err(Error::Input(format!(
                "expected {} tokens, got {}",
                a.n,
                tokens.len()
            )));
        }
        if let Some((i, &t)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t >= self.config.vocab)
        {
            return Err(Error::Input(format!(
                "token {t} at position {i} is out of range for vocabulary {}",
                self.config.vocab
            )));
        }
        if let Some(map) = segmap {
            if map.len() != a.n || map.num_segments() != a.num_segments {
                return Err(Error::Input(format!(
                    "segment map covers {} positions and {} segments; model expects {} and {}",
                    map.len(),
                    map.num_segments(),
                    a.n,
                    a.num_segments
                )));
            }
        }
        Ok(())
    }

    /// Input matrix `X` (plus input-additive position and segment tables).
    pub fn embed(&self, tokens: &[usize], segmap: Option<&SegmentMap>) -> Result<Matrix> {
        self.check_tokens(tokens, segmap)?;
        let d = self.config.attention.d;
        let mut x = Matrix::zeros(tokens.len(), d);
        for (i, &t) in tokens.iter().enumerate() {
            x.row_mut(i).copy_from_slice(self.params.tok_emb.row(t));
        }
        self.add_input_position(&mut x, segmap)?;
        Ok(x)
    }

    /// Token embeddings only, without any position or segment table.
    pub fn token_embeddings(&self, tokens: &[usize]) -> Result<Matrix> {
        self.check_tokens(tokens, None)?;
        let d = self.config.attention.d;
        Ok(Matrix::from_fn(tokens.len(), d, |i, c| {
            self.params.tok_emb[(tokens[i], c)]
        }))
    }

    fn add_input_position(&self, x: &mut Matrix, segmap: Option<&SegmentMap>) -> Result<()> {
        if let Some(p) = self.params.pos.input() {
            x.add_assign(p)?;
        }
        if let Some(s) = &self.sinusoid {
            x.add_assign(s)?;
        }
        if let (Some(seg), Some(map)) = (&self.params.seg_emb, segmap) {
            for i in 0..x.rows() {
                let src = seg.row(map.segment_of(i));
                for (v, s) in x.row_mut(i).iter_mut().zip(src) {
                    *v += s;
                }
            }
        }
        Ok(())
    }

    /// Logits for one sequence.
    pub fn forward(&self, tokens: &[usize], segmap: Option<&SegmentMap>) -> Result<Matrix> {
        let x = self.embed(tokens, segmap)?;
        Ok(self.trace(&x, segmap, None)?.logits)
    }

    /// Logits using precomputed positional biases.
    pub fn forward_cached(
        &self,
        tokens: &[usize],
        segmap: Option<&SegmentMap>,
        cache: &PositionCache,
    ) -> Result<Matrix> {
        let x = self.embed(tokens, segmap)?;
        Ok(self.trace(&x, segmap, Some(cache))?.logits)
    }

    /// Logits from an explicit input matrix (after embedding lookup and any input tables).
    pub fn forward_from_input(&self, x: &Matrix, segmap: Option<&SegmentMap>) -> Result<Matrix> {
        Ok(self.trace(x, segmap, None)?.logits)
    }

    /// Builds the positional cache for inference, if the scheme supports one.
    pub fn build_cache(&self, segmap: Option<&SegmentMap>) -> Result<Option<PositionCache>> {
        if !self.config.attention.scheme.is_additive_bias() {
            return Ok(None);
        }
        let seg = if self.config.attention.per_head_segments() {
            segmap
        } else {
            None
        };
        PositionCache::build(&self.params.pos, self.config.attention.n, seg).map(Some)
    }

    /// Per-head score matrices (pre-softmax) and the positional part of each, by layer.
    pub fn head_scores(
        &self,
        tokens: &[usize],
        segmap: Option<&SegmentMap>,
    ) -> Result<Vec<Vec<(Matrix, Option<Matrix>)>>> {
        let x = self.embed(tokens, segmap)?;
        let a = &self.config.attention;
        let trace = self.trace(&x, segmap, None)?;
        let mut out = Vec::new();
        for (l, (block, bt)) in self.params.blocks.iter().zip(&trace.blocks).enumerate() {
            let mut heads = Vec::new();
            for (h, w) in block.attn.heads.iter().enumerate() {
                let bias = head_bias(&self.params.pos, None, l, h, a.n, self.head_segmap(segmap))?;
                let pos = head_position(&self.params.pos, l, h, bias.as_deref())?;
                let scores = crate::attention::head_scores(
                    &bt.a,
                    w,
                    block.attn.proj.as_ref(),
                    pos,
                    a.scale,
                )?;
                heads.push((scores, bias.map(|b| b.into_owned())));
            }
            out.push(heads);
        }
        Ok(out)
    }

    fn head_segmap<'a>(&self, segmap: Option<&'a SegmentMap>) -> Option<&'a SegmentMap> {
        if self.config.attention.per_head_segments() {
            segmap
        } else {
            None
        }
    }

    pub(crate) fn trace(
        &self,
        x0: &Matrix,
        segmap: Option<&SegmentMap>,
        cache: Option<&PositionCache>,
    ) -> Result<Trace> {
        let a = &self.config.attention;
        if x0.shape() != (a.n, a.d) {
            return Err(Error::Shape(format!(
                "input must be {}x{}, got {}x{}",
                a.n,
                a.d,
                x0.rows(),
                x0.cols()
            )));
        }
        let head_seg = self.head_segmap(segmap);
        let mut x = x0.clone();
        let mut blocks = Vec::with_capacity(self.params.blocks.len());
        for (l, bp) in self.params.blocks.iter().enumerate() {
            let (act, ln1) = layer_norm(&x, &bp.ln1_g, &bp.ln1_b);
            let mut heads = Vec::with_capacity(a.h);
            for (h, w) in bp.attn.heads.iter().enumerate() {
                let bias = head_bias(&self.params.pos, cache, l, h, a.n, head_seg)?;
                let pos = head_position(&self.params.pos, l, h, bias.as_deref())?;
                heads.push(head_forward(&act, w, bp.attn.proj.as_ref(), pos, a.scale)?);
            }
            let outs: Vec<Matrix> = heads.iter().map(|t| t.out.clone()).collect();
            let concat = Matrix::hcat(&outs)?;
            x.add_assign(&matmul(&concat, &bp.attn.w_o)?)?;

            let (b, ln2) = layer_norm(&x, &bp.ln2_g, &bp.ln2_b);
            let mut hpre = matmul(&b, &bp.w1)?;
            add_row_bias(&mut hpre, &bp.b1);
            let hact = hpre.map(gelu);
            let mut ff = matmul(&hact, &bp.w2)?;
            add_row_bias(&mut ff, &bp.b2);
            x.add_assign(&ff)?;
            if !x.is_finite() {
                return Err(Error::NonFiniteLoss {
                    layer: format!("block{l}"),
                });
            }
            blocks.push(BlockTrace {
                ln1,
                a: act,
                heads,
                concat,
                ln2,
                b,
                hpre,
                hact,
            });
        }
        let (final_h, lnf) = layer_norm(&x, &self.params.lnf_g, &self.params.lnf_b);
        let mut logits = matmul(&final_h, &self.params.head_w)?;
        add_row_bias(&mut logits, &self.params.head_b);
        Ok(Trace {
            blocks,
            lnf,
            final_h,
            logits,
        })
    }

    /// Checkpoint archive: model tensors under `model/…`, positional ones under
    /// their `scheme/layer/head/name` keys, config in the manifest.
    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut archive = TensorArchive::new(json!({
            "kind": "model-checkpoint",
            "config": self.config,
        }));
        for (name, m) in self.params.named() {
            if let Some(key) = name.strip_prefix("pos/") {
                archive.insert(key, m.clone())?;
            } else {
                archive.insert(format!("model/{name}"), m.clone())?;
            }
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(
            archive
                .meta
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Archive("checkpoint has no config".into()))?,
        )?;
        let mut model = Model::new(config, 0)?;
        for (name, m) in model.params.named_mut() {
            let key = match name.strip_prefix("pos/") {
                Some(k) => k.to_string(),
                None => format!("model/{name}"),
            };
            let src = archive.require(&key)?;
            if src.shape() != m.shape() {
                return Err(Error::Archive(format!(
                    "tensor '{key}' has the wrong shape"
                )));
            }
            *m = src.clone();
        }
        Ok(model)
    }
}

pub(crate) fn add_row_bias(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

#[cfg(test)]
mod tests;
