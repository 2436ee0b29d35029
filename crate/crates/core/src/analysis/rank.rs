use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Example, Model};
use crate::tensor::{numerical_rank, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeadRank {
    pub layer: usize,
    pub head: usize,
    /// Rank of the full pre-softmax scores.
    pub score_rank: usize,
    /// Rank of the scores with any additive positional bias removed.
    pub token_rank: usize,
    /// Rank of the additive positional bias, when the scheme has one.
    pub positional_rank: Option<usize>,
}

/// Per-head numerical ranks, each the maximum over the scanned examples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub rel_tol: f64,
    pub examples: usize,
    pub config: serde_json::Value,
    pub heads: Vec<HeadRank>,
}

impl RankReport {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "layer,head,score_rank,token_rank,positional_rank,rel_tol"
        )?;
        for h in &self.heads {
            let pos = h.positional_rank.map_or(String::new(), |r| r.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{:e}",
                h.layer, h.head, h.score_rank, h.token_rank, pos, self.rel_tol
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Numerical ranks of every head's scores on `batch`.
pub fn rank_scan(model: &Model, batch: &[Example]) -> Result<RankReport> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut heads: Vec<HeadRank> = Vec::new();
    for ex in batch {
        let per_layer = model.head_scores(&ex.tokens, ex.segments.as_ref())?;
        let mut idx = 0;
        for (layer, per_head) in per_layer.iter().enumerate() {
            for (head, (scores, bias)) in per_head.iter().enumerate() {
                let score_rank = numerical_rank(scores, DEFAULT_RANK_TOL)?;
                let (token_rank, positional_rank) = match bias {
                    Some(b) => (
                        numerical_rank(&scores.sub(b)?, DEFAULT_RANK_TOL)?,
                        Some(numerical_rank(b, DEFAULT_RANK_TOL)?),
                    ),
                    None => (score_rank, None),
                };
                let entry = HeadRank {
                    layer,
                    head,
                    score_rank,
                    token_rank,
                    positional_rank,
                };
                match heads.get_mut(idx) {
                    Some(h) => {
                        h.score_rank = h.score_rank.max(entry.score_rank);
                        h.token_rank = h.token_rank.max(entry.token_rank);
                        h.positional_rank = h.positional_rank.max(entry.positional_rank);
                    }
                    None => heads.push(entry),
                }
                idx += 1;
            }
        }
    }
    Ok(RankReport {
        rel_tol: DEFAULT_RANK_TOL,
        examples: batch.len(),
        config: serde_json::to_value(model.config())?,
        heads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AttentionConfig, PositionScheme};
    use crate::model::{ModelConfig, Task};
    use crate::rng::SeedRng;

    #[test]
    fn input_additive_heads_are_rank_limited() {
        let a = AttentionConfig::new(16, 16, 4, 2, PositionScheme::InputAdditiveLearned);
        let m = Model::new(ModelConfig::new(a, 8, 4), 3).unwrap();
        let batch = Task::selective_copy(16, 8, 2)
            .unwrap()
            .sample(3, &mut SeedRng::new(1))
            .unwrap();
        let r = rank_scan(&m, &batch).unwrap();
        assert_eq!(r.heads.len(), 8);
        assert!(r
            .heads
            .iter()
            .all(|h| h.score_rank <= 4 && h.positional_rank.is_none()));
        assert_eq!(r.to_csv().lines().count(), 9);
    }

    #[test]
    fn diet_abs_bias_rank_is_bounded_by_width() {
        let a = AttentionConfig::new(16, 16, 2, 1, PositionScheme::DietAbs { d_p: 3 });
        let m = Model::new(ModelConfig::new(a, 8, 4), 3).unwrap();
        let batch = Task::selective_copy(16, 8, 2)
            .unwrap()
            .sample(1, &mut SeedRng::new(1))
            .unwrap();
        let r = rank_scan(&m, &batch).unwrap();
        assert!(r
            .heads
            .iter()
            .all(|h| h.positional_rank == Some(3) && h.token_rank <= 8));
    }
}
