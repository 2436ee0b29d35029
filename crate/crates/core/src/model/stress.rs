//! Fitting a single head's score matrix to a fixed target.
//!
//! Only the score path is trained: `W_Q`, `W_K` and the positional tables.
//! Token embeddings `X` are drawn once and frozen.

use serde::{Deserialize, Serialize};

use super::train::{Optimizer, OptimizerState};
use crate::config::{AttentionConfig, PositionScheme};
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{matmul, matmul_nt, matmul_tn, randn_with, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressOptions {
    pub steps: usize,
    /// Initial Adam learning rate.
    pub lr: f64,
    /// The learning rate decays geometrically to `lr · final_lr_ratio`.
    pub final_lr_ratio: f64,
    /// Standard deviation of every initial parameter.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            steps: 5000,
            lr: 0.02,
            final_lr_ratio: 0.05,
            init_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressFit {
    /// Final `‖A − target‖_F`.
    pub residual: f64,
    /// Lowest residual seen at any step.
    pub best_residual: f64,
    /// Residual before each step.
    pub history: Vec<f64>,
    /// Score matrix at the end of training.
    #[serde(skip)]
    pub scores: Matrix,
}

enum Form {
    Plain,
    InputAdditive { fixed: Option<Matrix> },
    DietAbs,
}

struct Problem {
    x: Matrix,
    scale: f64,
    form: Form,
}

impl Problem {
    /// Layout: `[w_q, w_k]` then `[p]` or `[p_q, p_k]`.
    fn scores(&self, params: &[Matrix]) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
        let u = match &self.form {
            Form::InputAdditive { fixed: Some(table) } => self.x.add(table)?,
            Form::InputAdditive { fixed: None } => self.x.add(&params[2])?,
            _ => self.x.clone(),
        };
        let q = matmul(&u, &params[0])?;
        let k = matmul(&u, &params[1])?;
        let mut s = matmul_nt(&q, &k)?.scale(1.0 / self.scale);
        if let Form::DietAbs = self.form {
            s.add_assign(&matmul_nt(&params[2], &params[3])?)?;
        }
        Ok((s, u, q, k))
    }

    fn grads(&self, params: &[Matrix], target: &Matrix) -> Result<(f64, Vec<Matrix>)> {
        let (s, u, q, k) = self.scores(params)?;
        let diff = s.sub(target)?;
        let loss = diff.data().iter().map(|v| v * v).sum::<f64>();
        let ds = diff.scale(2.0);
        let dq = matmul(&ds, &k)?.scale(1.0 / self.scale);
        let dk = matmul_tn(&ds, &q)?.scale(1.0 / self.scale);
        let mut out = vec![matmul_tn(&u, &dq)?, matmul_tn(&u, &dk)?];
        match self.form {
            Form::InputAdditive { fixed: None } => {
                let mut du = matmul_nt(&dq, &params[0])?;
                du.add_assign(&matmul_nt(&dk, &params[1])?)?;
                out.push(du);
            }
            Form::DietAbs => {
                out.push(matmul(&ds, &params[3])?);
                out.push(matmul_tn(&ds, &params[2])?);
            }
            _ => {}
        }
        Ok((loss, out))
    }
}

/// Trains one head's scores toward `target` and reports the Frobenius residual.
///
/// Supports `None`, the input-additive schemes and DIET-ABS.
pub fn rank_stress_fit(
    config: &AttentionConfig,
    target: &Matrix,
    opts: &StressOptions,
) -> Result<StressFit> {
    let (n, d, d_h) = (config.n, config.d, config.d_h);
    if target.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "target must be {n}x{n}, got {}x{}",
            target.rows(),
            target.cols()
        )));
    }
    if opts.steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    let root = SeedRng::new(opts.seed);
    let mut rng = root.split("stress-params");
    let x = randn_with(n, d, 1.0, &mut root.split("stress-input"))?;
    let std = opts.init_std;
    let mut params = vec![
        randn_with(d, d_h, std, &mut rng)?,
        randn_with(d, d_h, std, &mut rng)?,
    ];
    let form = match config.scheme {
        PositionScheme::None => Form::Plain,
        PositionScheme::InputAdditiveLearned => {
            params.push(randn_with(n, d, std, &mut rng)?);
            Form::InputAdditive { fixed: None }
        }
        PositionScheme::InputAdditiveSinusoidal => Form::InputAdditive {
            fixed: Some(crate::encodings::sinusoidal_table(n, d)),
        },
        PositionScheme::DietAbs { d_p } => {
            params.push(randn_with(n, d_p, std, &mut rng)?);
            params.push(randn_with(n, d_p, std, &mut rng)?);
            Form::DietAbs
        }
        other => {
            return Err(Error::Scheme {
                scheme: other.to_string(),
                reason: "rank-stress fitting supports none, input-additive and diet-abs".into(),
            })
        }
    };
    let problem = Problem {
        x,
        scale: config.scale,
        form,
    };

    let mut state = OptimizerState::new(Optimizer::adam(opts.lr));
    let mut history = Vec::with_capacity(opts.steps);
    let decay = opts.final_lr_ratio.ln() / opts.steps as f64;
    for step in 0..opts.steps {
        let (loss, grads) = problem.grads(&params, target)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        history.push(loss.sqrt());
        let g: Vec<&Matrix> = grads.iter().collect();
        state.apply(params.iter_mut().collect(), &g, (decay * step as f64).exp());
    }
    let scores = problem.scores(&params)?.0;
    let residual = scores.sub(target)?.frobenius_norm();
    let best_residual = history.iter().copied().fold(residual, f64::min);
    Ok(StressFit {
        residual,
        best_residual,
        history,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{numerical_rank, randn_matrix, truncation_error, DEFAULT_RANK_TOL};

    fn rank_target(n: usize, r: usize, seed: u64) -> Matrix {
        let u = randn_matrix(n, r, 1.0, seed).unwrap();
        let v = randn_matrix(n, r, 1.0, seed + 1).unwrap();
        matmul_nt(&u, &v).unwrap().scale(1.0 / (r as f64).sqrt())
    }

    #[test]
    fn gradients_match_central_difference() {
        for scheme in [
            PositionScheme::InputAdditiveLearned,
            PositionScheme::DietAbs { d_p: 3 },
        ] {
            let config = AttentionConfig::new(6, 4, 1, 1, scheme).with_d_h(2);
            let target = rank_target(6, 3, 5);
            let mut rng = SeedRng::new(1);
            let x = randn_with(6, 4, 1.0, &mut rng).unwrap();
            let mut params = vec![
                randn_with(4, 2, 0.5, &mut rng).unwrap(),
                randn_with(4, 2, 0.5, &mut rng).unwrap(),
            ];
            let form = match scheme {
                PositionScheme::DietAbs { d_p } => {
                    params.push(randn_with(6, d_p, 0.5, &mut rng).unwrap());
                    params.push(randn_with(6, d_p, 0.5, &mut rng).unwrap());
                    Form::DietAbs
                }
                _ => {
                    params.push(randn_with(6, 4, 0.5, &mut rng).unwrap());
                    Form::InputAdditive { fixed: None }
                }
            };
            let problem = Problem {
                x,
                scale: config.scale,
                form,
            };
            let (_, grads) = problem.grads(&params, &target).unwrap();
            let loss = |p: &[Matrix]| {
                let s = problem.scores(p).unwrap().0;
                s.sub(&target)
                    .unwrap()
                    .data()
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
            };
            for t in 0..params.len() {
                for i in 0..params[t].data().len() {
                    let mut plus = params.clone();
                    plus[t].data_mut()[i] += 1e-6;
                    let mut minus = params.clone();
                    minus[t].data_mut()[i] -= 1e-6;
                    let fd = (loss(&plus) - loss(&minus)) / 2e-6;
                    let an = grads[t].data()[i];
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                        "tensor {t} entry {i}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn input_additive_respects_floor() {
        let target = rank_target(12, 6, 9);
        assert_eq!(numerical_rank(&target, DEFAULT_RANK_TOL).unwrap(), 6);
        let config =
            AttentionConfig::new(12, 8, 1, 1, PositionScheme::InputAdditiveLearned).with_d_h(2);
        let opts = StressOptions {
            steps: 500,
            ..StressOptions::default()
        };
        let fit = rank_stress_fit(&config, &target, &opts).unwrap();
        let floor = truncation_error(&target, 2).unwrap();
        assert!(fit.best_residual >= floor - 1e-6);
        assert!(numerical_rank(&fit.scores, DEFAULT_RANK_TOL).unwrap() <= 2);
    }

    #[test]
    fn rejects_unsupported_scheme() {
        let config = AttentionConfig::new(8, 8, 1, 1, PositionScheme::DietRel);
        let target = Matrix::zeros(8, 8);
        assert!(rank_stress_fit(&config, &target, &StressOptions::default()).is_err());
    }
}
