use std::collections::BTreeSet;

use serde::Serialize;

use crate::attention::{
    scores_diet_abs, scores_diet_rel, scores_shaw, scores_t5, scores_vanilla, HeadWeights,
};
use crate::config::{AttentionConfig, PositionScheme, Sharing};
use crate::encodings::{init_params, positional_bias, PositionParams, SegmentMap};
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{randn_with, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub scheme: String,
    pub trials: usize,
    /// Score matrices compared (trials × layers × heads).
    pub comparisons: usize,
    /// Comparisons where some entry differed from vanilla in any bit.
    pub mismatches: usize,
}

fn randomize(params: &mut PositionParams, rng: &mut SeedRng) -> Result<()> {
    for (_, m) in params.named_tensors_mut() {
        *m = randn_with(m.rows(), m.cols(), 1.0, rng)?;
    }
    Ok(())
}

fn halves(n: usize) -> Result<SegmentMap> {
    SegmentMap::from_lengths(&[n / 2, n - n / 2])
}

/// Scores with every positional and segment parameter set to zero, compared
/// bit for bit with vanilla scores on `trials` random inputs.
pub fn zero_param_equivalence(
    config: &AttentionConfig,
    trials: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let root = SeedRng::new(seed);
    let mut params = init_params(config, root.split("params").seed())?;
    randomize(&mut params, &mut root.split("fill"))?;
    params.zero_all();
    let segmap = if config.per_head_segments() {
        Some(halves(config.n)?)
    } else {
        None
    };
    let mut rng = root.split("inputs");
    let mut comparisons = 0;
    let mut mismatches = 0;
    for _ in 0..trials {
        let x = randn_with(config.n, config.d, 1.0, &mut rng)?;
        for layer in 0..config.layers {
            for head in 0..config.h {
                let w = HeadWeights::random(
                    config.d,
                    config.d_h,
                    1.0 / (config.d as f64).sqrt(),
                    &mut rng,
                )?;
                let seg = segmap.as_ref();
                let scores = match config.scheme {
                    PositionScheme::DietAbs { .. } => {
                        scores_diet_abs(&x, &w, &params, layer, head, seg, config.scale)?
                    }
                    PositionScheme::DietRel => {
                        scores_diet_rel(&x, &w, &params, layer, head, seg, config.scale)?
                    }
                    PositionScheme::T5Bucketed { .. } => {
                        scores_t5(&x, &w, &params, layer, head, seg, config.scale)?
                    }
                    PositionScheme::ShawRel { clip, .. } => {
                        let slot = params.slot_for(layer, head)?.expect("shaw slot");
                        scores_shaw(
                            &x,
                            &w,
                            slot.a_k.as_ref().expect("shaw keys"),
                            clip,
                            config.scale,
                        )?
                    }
                    other => {
                        return Err(Error::Scheme {
                            scheme: other.to_string(),
                            reason: "no per-head positional parameters to zero".into(),
                        })
                    }
                };
                let vanilla = scores_vanilla(&x, &w, config.scale)?;
                comparisons += 1;
                if !bitwise_equal(&scores, &vanilla) {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(EquivalenceReport {
        scheme: config.scheme.to_string(),
        trials,
        comparisons,
        mismatches,
    })
}

fn bitwise_equal(a: &Matrix, b: &Matrix) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToeplitzReport {
    pub sharing: Sharing,
    pub heads_checked: usize,
    /// `(layer, head, i, j)` where `B[i][j] != B[i+1][j+1]`.
    pub violations: Vec<(usize, usize, usize, usize)>,
}

/// Checks `B[i][j] == B[i+1][j+1]` for every head of a randomly filled DIET-REL model.
pub fn toeplitz_check(config: &AttentionConfig, seed: u64) -> Result<ToeplitzReport> {
    if config.scheme != PositionScheme::DietRel {
        return Err(Error::Scheme {
            scheme: config.scheme.to_string(),
            reason: "the Toeplitz check applies to diet-rel".into(),
        });
    }
    let root = SeedRng::new(seed);
    let mut params = init_params(config, root.split("params").seed())?;
    randomize(&mut params, &mut root.split("fill"))?;
    let n = config.n;
    let mut violations = Vec::new();
    for layer in 0..config.layers {
        for head in 0..config.h {
            let b = positional_bias(&params, layer, head, n, None)?;
            for i in 0..n.saturating_sub(1) {
                for j in 0..n - 1 {
                    if b[(i, j)].to_bits() != b[(i + 1, j + 1)].to_bits() {
                        violations.push((layer, head, i, j));
                    }
                }
            }
        }
    }
    Ok(ToeplitzReport {
        sharing: config.sharing,
        heads_checked: config.layers * config.h,
        violations,
    })
}

/// Distinct positional parameter slots reached by the (layer, head) pairs, per sharing strategy.
pub fn sharing_census(
    scheme: PositionScheme,
    layers: usize,
    heads: usize,
) -> Result<Vec<(Sharing, usize)>> {
    [Sharing::NoSharing, Sharing::LayerWise, Sharing::HeadWise]
        .into_iter()
        .map(|sharing| {
            let config =
                AttentionConfig::new(8, 8 * heads, heads, layers, scheme).with_sharing(sharing);
            let params = init_params(&config, 0)?;
            let mut seen = BTreeSet::new();
            for l in 0..layers {
                for h in 0..heads {
                    seen.insert(params.slot_index(l, h)?);
                }
            }
            if seen.len() != params.num_slots() {
                return Err(Error::Value(format!(
                    "{sharing:?}: {} slots allocated but {} reachable",
                    params.num_slots(),
                    seen.len()
                )));
            }
            Ok((sharing, seen.len()))
        })
        .collect()
}
