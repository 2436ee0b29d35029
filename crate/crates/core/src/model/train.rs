//! Optimizers and the training loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::backward::LossKind;
use super::task::{Example, Task};
use super::Model;
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::Matrix;

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(1e-3)
    }
}

/// Optimizer state for a flat list of tensors.
#[derive(Debug, Clone)]
pub(crate) struct OptimizerState {
    opt: Optimizer,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(opt: Optimizer) -> Self {
        Self {
            opt,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update with learning-rate multiplier `lr_mult`.
    pub fn apply(&mut self, params: Vec<&mut Matrix>, grads: &[&Matrix], lr_mult: f64) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        match self.opt {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * lr_mult * gv;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if self.m.is_empty() {
                    self.m = grads
                        .iter()
                        .map(|g| Matrix::zeros(g.rows(), g.cols()))
                        .collect();
                    self.v = self.m.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let step = lr * lr_mult;
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        *pv -= step * (*mv / c1) / ((*vv / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Sequences drawn for the final evaluation.
    pub eval_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            optimizer: Optimizer::default(),
            batch_size: 1,
            loss: LossKind::CrossEntropy,
            seed: 0,
            eval_size: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    /// Token accuracy on the step's batch.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<StepRecord>,
    /// Token accuracy on a held-out sample after training.
    pub final_metric: f64,
}

impl History {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "step,loss,metric")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.step, r.loss, r.metric)?;
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

/// Fraction of positions whose arg-max logit equals the label.
pub fn accuracy(model: &Model, batch: &[Example]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in batch {
        let logits = model.forward(&ex.tokens, ex.segments.as_ref())?;
        for (i, &y) in ex.labels.iter().enumerate() {
            let row = logits.row(i);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .expect("non-empty row");
            hits += usize::from(best == y);
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Trains `model` in place on batches drawn from `task`.
pub fn train(model: &mut Model, task: &Task, opts: &TrainOptions) -> Result<History> {
    if opts.steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let root = SeedRng::new(opts.seed);
    let mut data_rng = root.split("train-data");
    let mut state = OptimizerState::new(opts.optimizer);
    let mut records = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let batch = task.sample(opts.batch_size, &mut data_rng)?;
        let metric = accuracy(model, &batch)?;
        let (loss, grads) = match model.loss_and_grads(&batch, opts.loss) {
            Ok(v) => v,
            Err(Error::NonFiniteLoss { .. }) => {
                return Err(Error::Divergence {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence { step, loss });
        }
        records.push(StepRecord { step, loss, metric });
        let g: Vec<&Matrix> = grads.params.named().into_iter().map(|(_, m)| m).collect();
        let p: Vec<&mut Matrix> = model
            .params
            .named_mut()
            .into_iter()
            .map(|(_, m)| m)
            .collect();
        state.apply(p, &g, 1.0);
    }
    let eval = task.sample(opts.eval_size.max(1), &mut root.split("eval-data"))?;
    Ok(History {
        records,
        final_metric: accuracy(model, &eval)?,
    })
}
