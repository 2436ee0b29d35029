use serde::Serialize;

use crate::attention::{scores_diet_abs, scores_input_additive, scores_vanilla, HeadWeights};
use crate::config::{AttentionConfig, PositionScheme};
use crate::encodings::init_params;
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{numerical_rank, randn_with, Matrix, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankViolation {
    pub trial: usize,
    /// Seed that regenerates the offending draw.
    pub seed: u64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankBoundReport {
    pub n: usize,
    pub d: usize,
    pub d_h: usize,
    pub d_p: usize,
    pub trials: usize,
    pub seed: u64,
    pub rel_tol: f64,
    /// Largest rank of input-additive scores seen over all draws.
    pub max_random_rank: usize,
    pub violations: Vec<RankViolation>,
    pub witness_rank: usize,
    pub expected_witness_rank: usize,
}

impl RankBoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.witness_rank == self.expected_witness_rank
    }
}

/// Rank of the witness scores `X = [I_d; 0]`, `W_Q = W_K = [I_{d_h}; 0]`,
/// `P_Q = P_K = [0; I_{d_p}]` under DIET-ABS (plain scores when `d_p = 0`).
pub fn rank_witness(n: usize, d: usize, d_h: usize, d_p: usize) -> Result<usize> {
    if n < d {
        return Err(Error::Config(format!(
            "witness needs n >= d, got n={n}, d={d}"
        )));
    }
    if d_h == 0 || d_h > d {
        return Err(Error::Config(format!(
            "witness needs 1 <= d_h <= d, got d_h={d_h}"
        )));
    }
    let x = Matrix::from_fn(n, d, |i, c| if i == c { 1.0 } else { 0.0 });
    let proj = Matrix::from_fn(d, d_h, |r, c| if r == c { 1.0 } else { 0.0 });
    let w = HeadWeights {
        w_q: proj.clone(),
        w_k: proj,
        w_v: Matrix::zeros(d, d_h),
    };
    let scale = (d as f64).sqrt();
    let scores = if d_p == 0 {
        scores_vanilla(&x, &w, scale)?
    } else {
        let config =
            AttentionConfig::new(n, d, 1, 1, PositionScheme::DietAbs { d_p }).with_d_h(d_h);
        let mut params = init_params(&config, 0)?;
        let tail = Matrix::from_fn(n, d_p, |i, c| if i + d_p == n + c { 1.0 } else { 0.0 });
        let slot = params.slot_mut(0);
        slot.p_q = Some(tail.clone());
        slot.p_k = Some(tail);
        scores_diet_abs(&x, &w, &params, 0, 0, None, scale)?
    };
    numerical_rank(&scores, DEFAULT_RANK_TOL)
}

/// Checks the input-additive rank bound on random draws and the DIET-ABS witness rank.
pub fn verify_rank_bound(
    n: usize,
    d: usize,
    d_h: usize,
    d_p: usize,
    trials: usize,
    seed: u64,
) -> Result<RankBoundReport> {
    let root = SeedRng::new(seed);
    let scale = (d as f64).sqrt();
    let mut violations = Vec::new();
    let mut max_random_rank = 0;
    for trial in 0..trials {
        let trial_seed = root.split_index(trial as u64).seed();
        let mut rng = SeedRng::new(trial_seed);
        let x = randn_with(n, d, 1.0, &mut rng)?;
        let p = randn_with(n, d, 1.0, &mut rng)?;
        let w = HeadWeights::random(d, d_h, 1.0 / scale, &mut rng)?;
        let rank = numerical_rank(&scores_input_additive(&x, &p, &w, scale)?, DEFAULT_RANK_TOL)?;
        max_random_rank = max_random_rank.max(rank);
        if rank > d_h {
            violations.push(RankViolation {
                trial,
                seed: trial_seed,
                rank,
            });
        }
    }
    Ok(RankBoundReport {
        n,
        d,
        d_h,
        d_p,
        trials,
        seed,
        rel_tol: DEFAULT_RANK_TOL,
        max_random_rank,
        violations,
        witness_rank: rank_witness(n, d, d_h, d_p)?,
        expected_witness_rank: (d_h + d_p).min(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_ranks() {
        assert_eq!(rank_witness(16, 8, 2, 4).unwrap(), 6);
        assert_eq!(rank_witness(16, 8, 2, 0).unwrap(), 2);
        assert_eq!(rank_witness(8, 8, 4, 6).unwrap(), 8);
        assert!(rank_witness(4, 8, 2, 2).is_err());
    }

    #[test]
    fn small_verification_passes() {
        let r = verify_rank_bound(12, 6, 2, 3, 20, 1).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_random_rank, 2);
    }
}
