//! Model shape and encoding-scheme configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How position information enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PositionScheme {
    None,
    /// Learned `n × d` table summed with token embeddings.
    InputAdditiveLearned,
    /// Fixed sin/cos table summed with token embeddings.
    InputAdditiveSinusoidal,
    /// Per-head low-rank absolute bias `P_Q P_Kᵀ` of width `d_p`.
    DietAbs {
        d_p: usize,
    },
    /// Per-head scalar per relative offset (Toeplitz bias).
    DietRel,
    /// Key-side (and optionally value-side) relative embeddings, clipped at `clip`.
    ShawRel {
        clip: usize,
        with_value: bool,
    },
    /// Log-binned scalar relative bias.
    T5Bucketed {
        num_buckets: usize,
        max_distance: usize,
    },
}

impl PositionScheme {
    /// Short tag used in archive keys and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            PositionScheme::None => "none",
            PositionScheme::InputAdditiveLearned => "input-add",
            PositionScheme::InputAdditiveSinusoidal => "sinusoidal",
            PositionScheme::DietAbs { .. } => "diet-abs",
            PositionScheme::DietRel => "diet-rel",
            PositionScheme::ShawRel { .. } => "shaw",
            PositionScheme::T5Bucketed { .. } => "t5",
        }
    }

    /// True for schemes whose whole positional effect is an additive score bias.
    pub fn is_additive_bias(&self) -> bool {
        matches!(
            self,
            PositionScheme::DietAbs { .. }
                | PositionScheme::DietRel
                | PositionScheme::T5Bucketed { .. }
        )
    }

    pub fn is_input_additive(&self) -> bool {
        matches!(
            self,
            PositionScheme::InputAdditiveLearned | PositionScheme::InputAdditiveSinusoidal
        )
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            PositionScheme::DietAbs { d_p } if d_p == 0 || d_p > n => Err(Error::Config(format!(
                "DIET-ABS width d_p must satisfy 1 <= d_p <= n ({n}), got {d_p}"
            ))),
            PositionScheme::ShawRel { clip, .. } if clip == 0 => Err(Error::Config(
                "Shaw clip distance must be at least 1".into(),
            )),
            PositionScheme::T5Bucketed {
                num_buckets,
                max_distance,
            } => {
                if num_buckets < 4 || num_buckets % 2 != 0 {
                    return Err(Error::Config(format!(
                        "T5 bucket count must be even and at least 4, got {num_buckets}"
                    )));
                }
                if max_distance <= num_buckets / 2 {
                    return Err(Error::Config(format!(
                        "T5 max_distance ({max_distance}) must exceed num_buckets/2 ({})",
                        num_buckets / 2
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PositionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PositionScheme::DietAbs { d_p } => write!(f, "diet-abs(d_p={d_p})"),
            PositionScheme::ShawRel { clip, with_value } => {
                write!(f, "shaw(clip={clip}, value={with_value})")
            }
            PositionScheme::T5Bucketed {
                num_buckets,
                max_distance,
            } => write!(f, "t5(buckets={num_buckets}, max={max_distance})"),
            other => f.write_str(other.tag()),
        }
    }
}

/// Which (layer, head) slots share positional parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sharing {
    /// One parameter set per (layer, head).
    #[default]
    NoSharing,
    /// One set per head, shared by every layer.
    LayerWise,
    /// One set per layer, shared by every head.
    HeadWise,
}

impl Sharing {
    pub fn num_slots(self, layers: usize, heads: usize) -> usize {
        match self {
            Sharing::NoSharing => layers * heads,
            Sharing::LayerWise => heads,
            Sharing::HeadWise => layers,
        }
    }

    pub fn slot(self, layer: usize, head: usize, heads: usize) -> usize {
        match self {
            Sharing::NoSharing => layer * heads + head,
            Sharing::LayerWise => head,
            Sharing::HeadWise => layer,
        }
    }

    /// The (layer, head) labels of a slot; `None` marks a shared axis.
    pub fn slot_coords(self, slot: usize, heads: usize) -> (Option<usize>, Option<usize>) {
        match self {
            Sharing::NoSharing => (Some(slot / heads), Some(slot % heads)),
            Sharing::LayerWise => (None, Some(slot)),
            Sharing::HeadWise => (Some(slot), None),
        }
    }
}

impl FromStr for Sharing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "no-sharing" => Ok(Sharing::NoSharing),
            "layer" | "layer-wise" => Ok(Sharing::LayerWise),
            "head" | "head-wise" => Ok(Sharing::HeadWise),
            other => Err(Error::Config(format!("unknown sharing strategy '{other}'"))),
        }
    }
}

/// Where segment information enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentLocation {
    /// Segment embedding table summed with token embeddings.
    Input,
    /// Scalar per (query segment, key segment) added to every head's scores.
    PerHead,
    #[default]
    None,
}

impl FromStr for SegmentLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(SegmentLocation::Input),
            "per-head" | "per_head" => Ok(SegmentLocation::PerHead),
            "none" => Ok(SegmentLocation::None),
            other => Err(Error::Config(format!("unknown segment location '{other}'"))),
        }
    }
}

/// Shape, scheme and sharing hyperparameters for one attention stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    /// Sequence length.
    pub n: usize,
    /// Hidden size.
    pub d: usize,
    /// Heads per layer.
    pub h: usize,
    /// Per-head projection width.
    pub d_h: usize,
    /// Number of attention layers.
    pub layers: usize,
    pub scheme: PositionScheme,
    pub sharing: Sharing,
    pub num_segments: usize,
    pub segment_location: SegmentLocation,
    /// Projected key/value length for the Linformer path.
    pub linformer_k: Option<usize>,
    /// Token-score divisor; defaults to `√d`.
    pub scale: f64,
}

impl AttentionConfig {
    /// Config with `d_h = d / h` and `scale = √d`.
    pub fn new(n: usize, d: usize, h: usize, layers: usize, scheme: PositionScheme) -> Self {
        Self {
            n,
            d,
            h,
            d_h: if h == 0 { 0 } else { d / h },
            layers,
            scheme,
            sharing: Sharing::NoSharing,
            num_segments: 1,
            segment_location: SegmentLocation::None,
            linformer_k: None,
            scale: (d as f64).sqrt(),
        }
    }

    /// Small model used by examples and the desk-scale experiments.
    pub fn desk(scheme: PositionScheme) -> Self {
        Self::new(32, 32, 4, 2, scheme)
    }

    pub fn with_sharing(mut self, sharing: Sharing) -> Self {
        self.sharing = sharing;
        self
    }

    pub fn with_segments(mut self, num_segments: usize, location: SegmentLocation) -> Self {
        self.num_segments = num_segments;
        self.segment_location = location;
        self
    }

    pub fn with_linformer(mut self, k: usize) -> Self {
        self.linformer_k = Some(k);
        self
    }

    pub fn with_d_h(mut self, d_h: usize) -> Self {
        self.d_h = d_h;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Number of key positions each query attends over.
    pub fn key_len(&self) -> usize {
        self.linformer_k.unwrap_or(self.n)
    }

    pub fn per_head_segments(&self) -> bool {
        self.segment_location == SegmentLocation::PerHead
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.h == 0 || self.d_h == 0 || self.layers == 0 {
            return Err(Error::Config(format!(
                "n, d, h, d_h and layers must be positive (n={}, d={}, h={}, d_h={}, layers={})",
                self.n, self.d, self.h, self.d_h, self.layers
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.num_segments == 0 {
            return Err(Error::Config("num_segments must be at least 1".into()));
        }
        self.scheme.validate(self.n)?;
        if let Some(k) = self.linformer_k {
            if k == 0 || k >= self.n {
                return Err(Error::Config(format!(
                    "linformer_k must satisfy 0 < k < n ({}), got {k}",
                    self.n
                )));
            }
            if !matches!(
                self.scheme,
                PositionScheme::DietAbs { .. } | PositionScheme::None
            ) {
                return Err(Error::Config(format!(
                    "the Linformer path supports only diet-abs or none, got {}",
                    self.scheme
                )));
            }
            if self.per_head_segments() {
                return Err(Error::Config(
                    "per-head segment attention is undefined on projected keys".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Scheme names accepted on the command line, including the Linformer variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    None,
    InputAdd,
    Sinusoidal,
    DietAbs,
    DietRel,
    Shaw,
    T5,
    LinformerDietAbs,
}

/// Shaw clip distance used by [`SchemeName::configure`] (capped at `n − 1`).
pub const DEFAULT_SHAW_CLIP: usize = 16;
pub const DEFAULT_T5_BUCKETS: usize = 32;
pub const DEFAULT_T5_MAX_DISTANCE: usize = 128;

impl SchemeName {
    pub const ALL: [SchemeName; 8] = [
        SchemeName::None,
        SchemeName::InputAdd,
        SchemeName::Sinusoidal,
        SchemeName::DietAbs,
        SchemeName::DietRel,
        SchemeName::Shaw,
        SchemeName::T5,
        SchemeName::LinformerDietAbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::None => "none",
            SchemeName::InputAdd => "input-add",
            SchemeName::Sinusoidal => "sinusoidal",
            SchemeName::DietAbs => "diet-abs",
            SchemeName::DietRel => "diet-rel",
            SchemeName::Shaw => "shaw",
            SchemeName::T5 => "t5",
            SchemeName::LinformerDietAbs => "linformer-diet-abs",
        }
    }

    /// `base` with this scheme installed. Linformer projects to `max(1, n/4)` keys.
    pub fn configure(self, base: &AttentionConfig, d_p: usize) -> AttentionConfig {
        let mut c = base.clone();
        c.linformer_k = None;
        c.scheme = match self {
            SchemeName::None => PositionScheme::None,
            SchemeName::InputAdd => PositionScheme::InputAdditiveLearned,
            SchemeName::Sinusoidal => PositionScheme::InputAdditiveSinusoidal,
            SchemeName::DietAbs => PositionScheme::DietAbs { d_p },
            SchemeName::DietRel => PositionScheme::DietRel,
            SchemeName::Shaw => PositionScheme::ShawRel {
                clip: DEFAULT_SHAW_CLIP.min(base.n.saturating_sub(1)).max(1),
                with_value: true,
            },
            SchemeName::T5 => PositionScheme::T5Bucketed {
                num_buckets: DEFAULT_T5_BUCKETS,
                max_distance: DEFAULT_T5_MAX_DISTANCE,
            },
            SchemeName::LinformerDietAbs => {
                c.linformer_k = Some((base.n / 4).max(1));
                PositionScheme::DietAbs { d_p }
            }
        };
        c
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}
