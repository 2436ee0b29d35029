//! Positional and segment encoding schemes.
//!
//! Every per-head scheme is stored as a list of parameter *slots*; the
//! [`Sharing`] strategy decides how (layer, head) pairs map onto slots.
//! DIET-ABS, DIET-REL and T5 reduce to an additive `n × n` score bias that can
//! be precomputed with [`PositionCache`].

mod cache;
mod relative;
mod segment;

use serde_json::json;

pub use crate::config::{PositionScheme, SegmentLocation, Sharing};
pub use cache::PositionCache;
pub use relative::{rel_index, relative_offset, shaw_index, t5_bucket};
pub use segment::{segment_bias, SegmentMap};

use crate::archive::TensorArchive;
use crate::config::AttentionConfig;
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{matmul_nt, randn_with, Matrix};

/// Standard deviation for embedding-like parameters.
pub const EMBED_INIT_STD: f64 = 0.02;

/// Parameters owned by one sharing slot. Which fields are present depends on the scheme.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotParams {
    /// `n × d_p` query-side absolute embeddings (DIET-ABS).
    pub p_q: Option<Matrix>,
    /// `n × d_p` (or `k × d_p` on the Linformer path) key-side embeddings.
    pub p_k: Option<Matrix>,
    /// `1 × (2n − 1)` scalar per offset, index `i − j + n − 1` (DIET-REL).
    pub rel: Option<Matrix>,
    /// `1 × num_buckets` scalar per bucket (T5).
    pub buckets: Option<Matrix>,
    /// `(2·clip + 1) × d_h` key-side relative embeddings (Shaw).
    pub a_k: Option<Matrix>,
    /// Value-side counterpart of `a_k`.
    pub a_v: Option<Matrix>,
    /// `num_segments × num_segments` segment scores.
    pub seg: Option<Matrix>,
}

impl SlotParams {
    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = Vec::new();
        for (name, m) in [
            ("p_q", &self.p_q),
            ("p_k", &self.p_k),
            ("rel", &self.rel),
            ("buckets", &self.buckets),
            ("a_k", &self.a_k),
            ("a_v", &self.a_v),
            ("seg", &self.seg),
        ] {
            if let Some(m) = m {
                out.push((name, m));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = Vec::new();
        for (name, m) in [
            ("p_q", &mut self.p_q),
            ("p_k", &mut self.p_k),
            ("rel", &mut self.rel),
            ("buckets", &mut self.buckets),
            ("a_k", &mut self.a_k),
            ("a_v", &mut self.a_v),
            ("seg", &mut self.seg),
        ] {
            if let Some(m) = m.as_mut() {
                out.push((name, m));
            }
        }
        out
    }

    fn is_empty(&self) -> bool {
        self.named().is_empty()
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Option<Matrix>| m.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols()));
        Self {
            p_q: z(&self.p_q),
            p_k: z(&self.p_k),
            rel: z(&self.rel),
            buckets: z(&self.buckets),
            a_k: z(&self.a_k),
            a_v: z(&self.a_v),
            seg: z(&self.seg),
        }
    }
}

/// Learned parameters of one positional scheme under one sharing strategy.
///
/// Mutable access goes through methods that bump an internal version so that
/// a [`PositionCache`] built earlier can detect it is stale.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionParams {
    scheme: PositionScheme,
    sharing: Sharing,
    layers: usize,
    heads: usize,
    n: usize,
    key_len: usize,
    input: Option<Matrix>,
    slots: Vec<SlotParams>,
    version: u64,
}

/// Allocates and initializes positional parameters for `config`.
///
/// Embedding tables are drawn from `N(0, 0.02²)`; scalar tables (relative
/// offsets, buckets, segment scores) start at zero.
pub fn init_params(config: &AttentionConfig, seed: u64) -> Result<PositionParams> {
    config.validate()?;
    let root = SeedRng::new(seed).split("position-params");
    let n = config.n;
    let key_len = config.key_len();
    let per_head_seg = config.per_head_segments();

    let input = match config.scheme {
        PositionScheme::InputAdditiveLearned => Some(randn_with(
            n,
            config.d,
            EMBED_INIT_STD,
            &mut root.split("input"),
        )?),
        _ => None,
    };

    let num_slots = config.sharing.num_slots(config.layers, config.h);
    let mut slots = Vec::with_capacity(num_slots);
    for s in 0..num_slots {
        let mut rng = root.split_index(s as u64);
        let mut slot = SlotParams::default();
        match config.scheme {
            PositionScheme::DietAbs { d_p } => {
                slot.p_q = Some(randn_with(n, d_p, EMBED_INIT_STD, &mut rng)?);
                slot.p_k = Some(randn_with(key_len, d_p, EMBED_INIT_STD, &mut rng)?);
            }
            PositionScheme::DietRel => slot.rel = Some(Matrix::zeros(1, 2 * n - 1)),
            PositionScheme::T5Bucketed { num_buckets, .. } => {
                slot.buckets = Some(Matrix::zeros(1, num_buckets))
            }
            PositionScheme::ShawRel { clip, with_value } => {
                slot.a_k = Some(randn_with(
                    2 * clip + 1,
                    config.d_h,
                    EMBED_INIT_STD,
                    &mut rng,
                )?);
                if with_value {
                    slot.a_v = Some(randn_with(
                        2 * clip + 1,
                        config.d_h,
                        EMBED_INIT_STD,
                        &mut rng,
                    )?);
                }
            }
            _ => {}
        }
        if per_head_seg {
            slot.seg = Some(Matrix::zeros(config.num_segments, config.num_segments));
        }
        slots.push(slot);
    }
    if slots.iter().all(SlotParams::is_empty) {
        slots.clear();
    }

    Ok(PositionParams {
        scheme: config.scheme,
        sharing: config.sharing,
        layers: config.layers,
        heads: config.h,
        n,
        key_len,
        input,
        slots,
        version: 0,
    })
}

impl PositionParams {
    pub fn scheme(&self) -> PositionScheme {
        self.scheme
    }

    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of independent per-head parameter slots.
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty() && self.input.is_none()
    }

    /// Learned input-additive table, if the scheme has one.
    pub fn input(&self) -> Option<&Matrix> {
        self.input.as_ref()
    }

    pub fn input_mut(&mut self) -> Option<&mut Matrix> {
        self.version += 1;
        self.input.as_mut()
    }

    pub fn slot_index(&self, layer: usize, head: usize) -> Result<usize> {
        if layer >= self.layers || head >= self.heads {
            return Err(Error::Input(format!(
                "(layer {layer}, head {head}) outside a {}x{} model",
                self.layers, self.heads
            )));
        }
        Ok(self.sharing.slot(layer, head, self.heads))
    }

    /// Parameters for a (layer, head), or `None` when the scheme has no per-head state.
    pub fn slot_for(&self, layer: usize, head: usize) -> Result<Option<&SlotParams>> {
        if self.slots.is_empty() {
            return Ok(None);
        }
        Ok(Some(&self.slots[self.slot_index(layer, head)?]))
    }

    pub fn slots(&self) -> &[SlotParams] {
        &self.slots
    }

    pub fn slot_mut(&mut self, slot: usize) -> &mut SlotParams {
        self.version += 1;
        &mut self.slots[slot]
    }

    /// Every trainable tensor with a stable `scheme/layer/head/name` key.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(p) = &self.input {
            out.push((format!("{}/*/*/p", self.scheme.tag()), p));
        }
        for (s, slot) in self.slots.iter().enumerate() {
            let prefix = self.slot_prefix(s);
            for (name, m) in slot.named() {
                out.push((format!("{prefix}/{name}"), m));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.version += 1;
        let tag = self.scheme.tag();
        let prefixes: Vec<String> = (0..self.slots.len()).map(|s| self.slot_prefix(s)).collect();
        let mut out = Vec::new();
        if let Some(p) = self.input.as_mut() {
            out.push((format!("{tag}/*/*/p"), p));
        }
        for (slot, prefix) in self.slots.iter_mut().zip(prefixes) {
            for (name, m) in slot.named_mut() {
                out.push((format!("{prefix}/{name}"), m));
            }
        }
        out
    }

    fn slot_prefix(&self, slot: usize) -> String {
        let (layer, head) = self.sharing.slot_coords(slot, self.heads);
        let fmt = |x: Option<usize>| x.map_or_else(|| "*".to_string(), |v| v.to_string());
        format!("{}/{}/{}", self.scheme.tag(), fmt(layer), fmt(head))
    }

    /// Same structure with every tensor zeroed; used as a gradient accumulator.
    pub fn zeros_like(&self) -> PositionParams {
        PositionParams {
            input: self
                .input
                .as_ref()
                .map(|m| Matrix::zeros(m.rows(), m.cols())),
            slots: self.slots.iter().map(SlotParams::zeros_like).collect(),
            version: 0,
            ..self.clone()
        }
    }

    /// Zeroes every positional and segment parameter.
    pub fn zero_all(&mut self) {
        for (_, m) in self.named_tensors_mut() {
            m.fill(0.0);
        }
    }

    /// Writes every tensor into `archive` under its key.
    pub fn export_into(&self, archive: &mut TensorArchive) -> Result<()> {
        for (key, m) in self.named_tensors() {
            archive.insert(key, m.clone())?;
        }
        Ok(())
    }

    /// Stand-alone archive; the manifest meta records scheme and sharing.
    pub fn export(&self) -> Result<TensorArchive> {
        let mut archive = TensorArchive::new(json!({
            "kind": "position-params",
            "scheme": self.scheme,
            "sharing": self.sharing,
            "layers": self.layers,
            "heads": self.heads,
            "n": self.n,
            "key_len": self.key_len,
        }));
        self.export_into(&mut archive)?;
        Ok(archive)
    }

    /// Overwrites every tensor from `archive`; shapes must match.
    pub fn import_from(&mut self, archive: &TensorArchive) -> Result<()> {
        for (key, m) in self.named_tensors_mut() {
            let src = archive.require(&key)?;
            if src.shape() != m.shape() {
                return Err(Error::Archive(format!(
                    "tensor '{key}' is {}x{}, expected {}x{}",
                    src.rows(),
                    src.cols(),
                    m.rows(),
                    m.cols()
                )));
            }
            *m = src.clone();
        }
        Ok(())
    }
}

/// The additive score bias of a (layer, head): `n × key_len`.
///
/// Defined for DIET-ABS, DIET-REL and T5; segment scores are added when a map
/// is given and the parameters carry a segment matrix.
pub fn positional_bias(
    params: &PositionParams,
    layer: usize,
    head: usize,
    n: usize,
    segmap: Option<&SegmentMap>,
) -> Result<Matrix> {
    if !params.scheme.is_additive_bias() {
        return Err(Error::Scheme {
            scheme: params.scheme.to_string(),
            reason: "positional effect is not an additive score bias".into(),
        });
    }
    if n > params.n {
        return Err(Error::Shape(format!(
            "sequence length {n} exceeds the {} positions the parameters cover",
            params.n
        )));
    }
    let slot = params
        .slot_for(layer, head)?
        .expect("bias schemes always allocate slots");
    let mut bias = match params.scheme {
        PositionScheme::DietAbs { .. } => {
            let p_q = slot.p_q.as_ref().expect("diet-abs slot");
            let p_k = slot.p_k.as_ref().expect("diet-abs slot");
            let keys = if params.key_len == params.n {
                n
            } else {
                params.key_len
            };
            matmul_nt(&p_q.slice_rows(0, n), &p_k.slice_rows(0, keys))?
        }
        PositionScheme::DietRel => {
            let rel = slot.rel.as_ref().expect("diet-rel slot").data();
            Matrix::from_fn(n, n, |i, j| rel[rel_index(i, j, params.n)])
        }
        PositionScheme::T5Bucketed {
            num_buckets,
            max_distance,
        } => {
            let table = slot.buckets.as_ref().expect("t5 slot").data();
            Matrix::from_fn(n, n, |i, j| {
                table[t5_bucket(relative_offset(i, j), num_buckets, max_distance)]
            })
        }
        _ => unreachable!(),
    };
    if let (Some(map), Some(s)) = (segmap, slot.seg.as_ref()) {
        if bias.cols() != n {
            return Err(Error::Shape("segment bias needs unprojected keys".into()));
        }
        bias.add_assign(&segment_bias(s, map, n)?)?;
    }
    Ok(bias)
}

/// Standard fixed table: even columns `sin(pos / 10000^(2k/d))`, odd columns `cos`.
pub fn sinusoidal_table(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |pos, c| {
        let k = (c / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * k / d as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
