use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Assignment of each sequence index to a segment id.
///
/// Segments must form contiguous runs: once a segment ends it cannot reappear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMap {
    assignment: Vec<usize>,
    num_segments: usize,
}

impl SegmentMap {
    pub fn new(assignment: Vec<usize>, num_segments: usize) -> Result<Self> {
        if let Some((i, &s)) = assignment
            .iter()
            .enumerate()
            .find(|(_, &s)| s >= num_segments)
        {
            return Err(Error::Input(format!(
                "segment id {s} at index {i} is out of range for {num_segments} segments"
            )));
        }
        let mut seen = vec![false; num_segments];
        let mut prev = None;
        for (i, &s) in assignment.iter().enumerate() {
            if prev != Some(s) {
                if seen[s] {
                    return Err(Error::Input(format!(
                        "segment {s} reappears at index {i}; segments must be contiguous runs"
                    )));
                }
                seen[s] = true;
                prev = Some(s);
            }
        }
        Ok(Self {
            assignment,
            num_segments,
        })
    }

    /// Consecutive runs of the given lengths, numbered 0, 1, 2, ...
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let assignment = lengths
            .iter()
            .enumerate()
            .flat_map(|(s, &len)| std::iter::repeat_n(s, len))
            .collect();
        Self::new(assignment, lengths.len())
    }

    /// Everything in segment 0.
    pub fn single(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            num_segments: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    #[inline]
    pub fn segment_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
}

/// `out[i][j] = s[seg(i)][seg(j)]`.
pub fn segment_bias(s: &Matrix, segmap: &SegmentMap, n: usize) -> Result<Matrix> {
    if segmap.len() != n {
        return Err(Error::Shape(format!(
            "segment map has length {} but sequence length is {n}",
            segmap.len()
        )));
    }
    let k = segmap.num_segments();
    if s.shape() != (k, k) {
        return Err(Error::Shape(format!(
            "segment matrix must be {k}x{k}, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        s[(segmap.segment_of(i), segmap.segment_of(j))]
    }))
}
