use super::model::{ActivationStyle, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Intermediate values of a single forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `h₁ … h_{L+1}`: the input of every block followed by the last output.
    pub h: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    /// Per block, `relu′` of the interior pre-activation `a·h + b_a`.
    pub inner_masks: Vec<Vec<f64>>,
    /// Per block, `relu′` of the outer pre-activation. All ones for
    /// pre-activation blocks, whose outer nonlinearity is the identity.
    pub outer_masks: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn prediction(&self) -> usize {
        argmax(&self.logits)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Evaluation-mode forward pass of one input.
pub fn forward(params: &ModelParams, cfg: &ModelConfig, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != cfg.input_dim {
        return Err(Error::invalid(format!(
            "input has length {}, model expects {}",
            x.len(),
            cfg.input_dim
        )));
    }
    if !params.matches(cfg) {
        return Err(Error::invalid("parameters do not match the model configuration"));
    }
    let scale = cfg.eval_branch_scale();
    let mut h = vec![params.input.apply(x).into_iter().map(relu).collect::<Vec<_>>()];
    let mut inner_masks = Vec::with_capacity(cfg.blocks);
    let mut outer_masks = Vec::with_capacity(cfg.blocks);

    for blk in &params.blocks {
        let cur = h.last().expect("non-empty");
        let pre_inner = blk.a.apply(cur);
        inner_masks.push(pre_inner.iter().map(|v| f64::from(*v > 0.0)).collect());
        let inner: Vec<f64> = pre_inner.into_iter().map(relu).collect();
        let branch = blk.b.apply(&inner);
        let summed: Vec<f64> = if cfg.skip {
            cur.iter().zip(&branch).map(|(h, f)| h + scale * f).collect()
        } else {
            branch.iter().map(|f| scale * f).collect()
        };
        let next = match cfg.activation {
            ActivationStyle::Post => {
                outer_masks.push(summed.iter().map(|v| f64::from(*v > 0.0)).collect());
                summed.into_iter().map(relu).collect()
            }
            ActivationStyle::Pre => {
                outer_masks.push(vec![1.0; summed.len()]);
                summed
            }
        };
        h.push(next);
    }
    let logits = params.classifier.apply(h.last().expect("non-empty"));
    Ok(ForwardTrace {
        h,
        logits,
        inner_masks,
        outer_masks,
    })
}
