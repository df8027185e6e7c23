use super::forward::{forward, ForwardTrace};
use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Residual Jacobian of block `block` (0-based) at input `x`.
///
/// This is the derivative of the block output with respect to its input with
/// the identity path removed: `diag(σ′(h + F(h))) · ∂F/∂h` for post-activation
/// blocks and `∂F/∂h` for pre-activation blocks, where
/// `∂F/∂h = s · W_b · diag(relu′(W_a h + b_a)) · W_a` and `s` is the
/// evaluation-time branch scale.
pub fn residual_jacobian(params: &ModelParams, cfg: &ModelConfig, x: &[f64], block: usize) -> Result<DenseMatrix> {
    if block >= cfg.blocks {
        return Err(Error::invalid(format!(
            "block index {block} outside 0..{}",
            cfg.blocks
        )));
    }
    let trace = forward(params, cfg, x)?;
    Ok(jacobian_from_trace(params, cfg, &trace, block))
}

/// Residual Jacobians of every block from one forward pass.
pub fn residual_jacobians(params: &ModelParams, cfg: &ModelConfig, x: &[f64]) -> Result<Vec<DenseMatrix>> {
    let trace = forward(params, cfg, x)?;
    Ok((0..cfg.blocks)
        .map(|i| jacobian_from_trace(params, cfg, &trace, i))
        .collect())
}

pub(crate) fn jacobian_from_trace(params: &ModelParams, cfg: &ModelConfig, trace: &ForwardTrace, block: usize) -> DenseMatrix {
    let blk = &params.blocks[block];
    let inner = &trace.inner_masks[block];
    let outer = &trace.outer_masks[block];
    let scale = cfg.eval_branch_scale();
    let d = cfg.width;
    // rows of (W_b · diag(inner)) scaled by outer·scale
    let mut left = DenseMatrix::zeros(d, d);
    for i in 0..d {
        let row_scale = outer[i] * scale;
        if row_scale == 0.0 {
            continue;
        }
        let src = blk.b.weight.row(i);
        for (k, dst) in left.row_mut(i).iter_mut().enumerate() {
            *dst = row_scale * src[k] * inner[k];
        }
    }
    left.matmul(&blk.a.weight)
}
