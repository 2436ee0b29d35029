use super::{positional_bias, PositionParams, SegmentMap};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Precomputed score biases, one per sharing slot.
///
/// Positional biases do not depend on the input, so inference can build them
/// once. The cache remembers the parameter version it was built from and
/// refuses to serve biases after the parameters change.
#[derive(Debug, Clone)]
pub struct PositionCache {
    version: u64,
    n: usize,
    heads: usize,
    sharing: super::Sharing,
    segmap: Option<SegmentMap>,
    biases: Vec<Matrix>,
}

impl PositionCache {
    pub fn build(params: &PositionParams, n: usize, segmap: Option<&SegmentMap>) -> Result<Self> {
        if !params.scheme().is_additive_bias() {
            return Err(Error::Scheme {
                scheme: params.scheme().to_string(),
                reason: "only additive-bias schemes can be cached".into(),
            });
        }
        let heads = params.heads();
        let sharing = params.sharing();
        let mut biases = Vec::with_capacity(params.num_slots());
        for slot in 0..params.num_slots() {
            let (layer, head) = sharing.slot_coords(slot, heads);
            biases.push(positional_bias(
                params,
                layer.unwrap_or(0),
                head.unwrap_or(0),
                n,
                segmap,
            )?);
        }
        Ok(Self {
            version: params.version(),
            n,
            heads,
            sharing,
            segmap: segmap.cloned(),
            biases,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn segmap(&self) -> Option<&SegmentMap> {
        self.segmap.as_ref()
    }

    /// Number of distinct cached matrices.
    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn check_fresh(&self, params: &PositionParams) -> Result<()> {
        if params.version() != self.version {
            return Err(Error::StaleCache {
                cached: self.version,
                current: params.version(),
            });
        }
        Ok(())
    }

    pub fn bias(&self, params: &PositionParams, layer: usize, head: usize) -> Result<&Matrix> {
        self.check_fresh(params)?;
        Ok(&self.biases[self.sharing.slot(layer, head, self.heads)])
    }
}
