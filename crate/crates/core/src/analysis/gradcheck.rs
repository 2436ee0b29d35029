use serde::{Deserialize, Serialize};

use crate::config::PositionScheme;
use crate::error::{Error, Result};
use crate::model::{Example, LossKind, Model};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Relative errors divide by `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// Added to every analytic gradient before comparison; used to prove the check can fail.
    pub corrupt: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-5,
            corrupt: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub scheme: String,
    pub loss: LossKind,
    pub options: GradCheckOptions,
    pub params: Vec<ParamCheck>,
    /// `max |∂L/∂X − ∂L/∂P|`; only present for input-additive checks.
    pub x_vs_p_max_abs: Option<f64>,
    /// Whether every `∂L/∂P` entry equals `∂L/∂X` bit for bit.
    pub x_vs_p_bitwise: Option<bool>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

fn compare(name: String, analytic: &[f64], numeric: &[f64], opts: &GradCheckOptions) -> ParamCheck {
    let mut check = ParamCheck {
        name,
        count: analytic.len(),
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    for (&a, &f) in analytic.iter().zip(numeric) {
        let a = a + opts.corrupt;
        let abs = (a - f).abs();
        let rel = abs / a.abs().max(f.abs()).max(opts.floor);
        check.max_abs_err = check.max_abs_err.max(abs);
        check.max_rel_err = check.max_rel_err.max(rel);
    }
    check
}

/// Compares analytic gradients of every trainable tensor with central differences.
pub fn grad_check(
    model: &Model,
    batch: &[Example],
    kind: LossKind,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(batch, kind)?;
    let mut probe = model.clone();
    let mut params = Vec::new();
    for (t, (name, g)) in grads.params.named().into_iter().enumerate() {
        let mut numeric = Vec::with_capacity(g.data().len());
        for i in 0..g.data().len() {
            let orig = probe.params.named()[t].1.data()[i];
            probe.params.named_mut()[t].1.data_mut()[i] = orig + opts.eps;
            let up = probe.loss(batch, kind)?;
            probe.params.named_mut()[t].1.data_mut()[i] = orig - opts.eps;
            let down = probe.loss(batch, kind)?;
            probe.params.named_mut()[t].1.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * opts.eps));
        }
        params.push(compare(name, g.data(), &numeric, opts));
    }
    Ok(GradCheckReport {
        scheme: model.attention_config().scheme.to_string(),
        loss: kind,
        options: *opts,
        params,
        x_vs_p_max_abs: None,
        x_vs_p_bitwise: None,
    })
}

/// For a learned input-additive table, checks `∂L/∂P` against `∂L/∂X`.
///
/// Each example is differentiated on its own so that `X` and `P` play
/// symmetric roles; the first example is also checked against central
/// differences taken with respect to `X`.
pub fn verify_input_gradient_equality(
    model: &Model,
    batch: &[Example],
    kind: LossKind,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let scheme = model.attention_config().scheme;
    if scheme != PositionScheme::InputAdditiveLearned {
        return Err(Error::Scheme {
            scheme: scheme.to_string(),
            reason: "gradient equality needs a learned input-additive table".into(),
        });
    }
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut max_abs = 0.0f64;
    let mut bitwise = true;
    let mut fd = None;
    for (b, ex) in batch.iter().enumerate() {
        let (_, grads) = model.loss_and_grads(std::slice::from_ref(ex), kind)?;
        let dp = grads.params.pos.input().expect("input-additive table");
        let dx = &grads.input[0];
        for (&p, &x) in dp.data().iter().zip(dx.data()) {
            max_abs = max_abs.max((p - x).abs());
            bitwise &= p.to_bits() == x.to_bits();
        }
        if b == 0 {
            fd = Some(compare(
                "d/dX (numeric) vs d/dP".into(),
                dp.data(),
                &input_fd(model, ex, kind, opts.eps)?,
                opts,
            ));
        }
    }
    Ok(GradCheckReport {
        scheme: scheme.to_string(),
        loss: kind,
        options: *opts,
        params: fd.into_iter().collect(),
        x_vs_p_max_abs: Some(max_abs),
        x_vs_p_bitwise: Some(bitwise),
    })
}

fn input_fd(model: &Model, ex: &Example, kind: LossKind, eps: f64) -> Result<Vec<f64>> {
    let x: Matrix = model.embed(&ex.tokens, ex.segments.as_ref())?;
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.data().len());
    for i in 0..x.data().len() {
        probe.data_mut()[i] = x.data()[i] + eps;
        let up = model.loss_from_input(&probe, ex, kind)?;
        probe.data_mut()[i] = x.data()[i] - eps;
        let down = model.loss_from_input(&probe, ex, kind)?;
        probe.data_mut()[i] = x.data()[i];
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}
