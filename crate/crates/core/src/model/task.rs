//! Synthetic position-sensitive tasks.

use serde::{Deserialize, Serialize};

use crate::encodings::SegmentMap;
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{numerical_rank, Matrix, DEFAULT_RANK_TOL};

/// Token used for every position after the first in the position probe.
pub const PROBE_FILLER: usize = 0;
/// Token at position 0 of the position probe.
pub const PROBE_MARKER: usize = 1;

/// One training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub segments: Option<SegmentMap>,
    /// Class label per position.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// A marker token followed by identical filler tokens; label at `i` is `i mod classes`.
    PositionProbe,
    /// Random tokens; label at `i` is the token at `(i + shift) mod n`.
    SelectiveCopy { shift: usize },
    /// Fit a fixed score matrix of known rank.
    RankStressFit { target: Matrix, target_rank: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub kind: TaskKind,
    pub n: usize,
    pub vocab: usize,
    pub num_classes: usize,
    pub segments: Option<SegmentMap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    PositionProbe,
    SelectiveCopy,
}

impl Task {
    pub fn position_probe(n: usize, vocab: usize, num_classes: usize) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::Config(
                "position probe needs a vocabulary of at least 2".into(),
            ));
        }
        Ok(Self {
            kind: TaskKind::PositionProbe,
            n,
            vocab,
            num_classes,
            segments: None,
        })
    }

    pub fn selective_copy(n: usize, vocab: usize, shift: usize) -> Result<Self> {
        if shift == 0 || shift >= n {
            return Err(Error::Config(format!(
                "copy shift must lie in [1, n), got {shift}"
            )));
        }
        Ok(Self {
            kind: TaskKind::SelectiveCopy { shift },
            n,
            vocab,
            num_classes: vocab,
            segments: None,
        })
    }

    /// Rank-stress target; its numerical rank must equal `target_rank`.
    pub fn rank_stress(target: Matrix, target_rank: usize) -> Result<Self> {
        if target.rows() != target.cols() {
            return Err(Error::Shape("rank-stress target must be square".into()));
        }
        let r = numerical_rank(&target, DEFAULT_RANK_TOL)?;
        if r != target_rank {
            return Err(Error::Value(format!(
                "target has numerical rank {r}, expected {target_rank}"
            )));
        }
        let n = target.rows();
        Ok(Self {
            kind: TaskKind::RankStressFit {
                target,
                target_rank,
            },
            n,
            vocab: 1,
            num_classes: 1,
            segments: None,
        })
    }

    pub fn with_segments(mut self, segments: SegmentMap) -> Self {
        self.segments = Some(segments);
        self
    }

    /// Draws `size` sequences.
    pub fn sample(&self, size: usize, rng: &mut SeedRng) -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            let (tokens, labels) = match &self.kind {
                TaskKind::PositionProbe => {
                    let mut tokens = vec![PROBE_FILLER; self.n];
                    tokens[0] = PROBE_MARKER;
                    (tokens, (0..self.n).map(|i| i % self.num_classes).collect())
                }
                TaskKind::SelectiveCopy { shift } => {
                    let tokens: Vec<usize> = (0..self.n).map(|_| rng.below(self.vocab)).collect();
                    let labels = (0..self.n).map(|i| tokens[(i + shift) % self.n]).collect();
                    (tokens, labels)
                }
                TaskKind::RankStressFit { .. } => {
                    return Err(Error::Config(
                        "rank-stress fitting has no token batches; use rank_stress_fit".into(),
                    ))
                }
            };
            out.push(Example {
                tokens,
                segments: self.segments.clone(),
                labels,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{matmul_nt, randn_matrix};

    #[test]
    fn probe_is_fixed() {
        let t = Task::position_probe(8, 4, 8).unwrap();
        let mut rng = SeedRng::new(0);
        let b = t.sample(2, &mut rng).unwrap();
        assert_eq!(b[0], b[1]);
        assert_eq!(b[0].tokens, vec![1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(b[0].labels, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn copy_labels_are_shifted_tokens() {
        let t = Task::selective_copy(6, 5, 2).unwrap();
        let ex = &t.sample(1, &mut SeedRng::new(3)).unwrap()[0];
        for i in 0..6 {
            assert_eq!(ex.labels[i], ex.tokens[(i + 2) % 6]);
        }
        assert!(Task::selective_copy(6, 5, 6).is_err());
    }

    #[test]
    fn rank_stress_checks_rank() {
        let u = randn_matrix(8, 3, 1.0, 1).unwrap();
        let target = matmul_nt(&u, &u).unwrap();
        assert!(Task::rank_stress(target.clone(), 3).is_ok());
        assert!(Task::rank_stress(target, 4).is_err());
    }
}
