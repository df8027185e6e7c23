use super::forward::relu;
use super::model::{ActivationStyle, Linear, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{gemm_into, DenseMatrix, MatView};

/// A mini-batch: `inputs` holds one sample per row.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    /// Position of the batch inside its epoch; reported on numerical failure.
    pub index: usize,
    pub inputs: &'a DenseMatrix,
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a DenseMatrix, labels: &'a [usize]) -> Self {
        Self {
            index: 0,
            inputs,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean softmax cross-entropy plus `(λ/2)‖θ‖²`, and its gradient, with every
/// residual branch scaled by the evaluation factor `1 - p`.
pub fn loss_and_grads(params: &ModelParams, cfg: &ModelConfig, batch: Batch<'_>) -> Result<(f64, ModelParams)> {
    let gates = vec![cfg.eval_branch_scale(); cfg.blocks];
    loss_and_grads_gated(params, cfg, batch, &gates)
}

/// Same as [`loss_and_grads`] with an explicit multiplier per residual branch
/// (0 or 1 during stochastic-depth training).
pub(crate) fn loss_and_grads_gated(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: Batch<'_>,
    gates: &[f64],
) -> Result<(f64, ModelParams)> {
    check_batch(params, cfg, &batch)?;
    let rows = batch.len();
    let d = cfg.width;
    let pass = BatchPass::run(params, cfg, batch.inputs, gates);

    let (data_loss, mut d_h) = softmax_xent(&pass.logits, batch.labels, cfg.classes);
    let penalty = 0.5 * cfg.weight_decay * params.squared_norm();
    let loss = data_loss + penalty;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { batch: batch.index });
    }

    let mut grads = params.zeros_like();
    let last = pass.h.last().expect("non-empty");
    linear_grads(&d_h, last, rows, &mut grads.classifier);
    d_h = backprop_through(&d_h, rows, &params.classifier.weight);

    for (i, blk) in params.blocks.iter().enumerate().rev() {
        let cache = &pass.blocks[i];
        let gate = gates[i];
        if let ActivationStyle::Post = cfg.activation {
            for (g, s) in d_h.iter_mut().zip(&cache.summed) {
                if *s <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let d_branch: Vec<f64> = d_h.iter().map(|g| gate * g).collect();
        let mut d_input = if cfg.skip { d_h } else { vec![0.0; rows * d] };

        let gb = &mut grads.blocks[i];
        linear_grads(&d_branch, &cache.inner, rows, &mut gb.b);
        let mut d_inner = backprop_through(&d_branch, rows, &blk.b.weight);
        for (g, a) in d_inner.iter_mut().zip(&cache.pre_inner) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        linear_grads(&d_inner, &pass.h[i], rows, &mut gb.a);
        accumulate_backprop(&d_inner, rows, &blk.a.weight, &mut d_input);
        d_h = d_input;
    }

    for (g, z) in d_h.iter_mut().zip(&pass.input_pre) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    linear_grads(&d_h, batch.inputs.as_slice(), rows, &mut grads.input);

    if cfg.weight_decay > 0.0 {
        grads.axpy(cfg.weight_decay, params);
    }
    Ok((loss, grads))
}

/// Logits for every row of `inputs`, evaluation mode.
pub fn predict_logits(params: &ModelParams, cfg: &ModelConfig, inputs: &DenseMatrix) -> Result<DenseMatrix> {
    if inputs.cols() != cfg.input_dim || !params.matches(cfg) {
        return Err(Error::invalid("input width or parameters do not match the model configuration"));
    }
    let gates = vec![cfg.eval_branch_scale(); cfg.blocks];
    let pass = BatchPass::run(params, cfg, inputs, &gates);
    Ok(DenseMatrix::from_vec_unchecked(inputs.rows(), cfg.classes, pass.logits))
}

/// Final representations `h_{L+1}`, one row per input, evaluation mode.
pub fn final_features(params: &ModelParams, cfg: &ModelConfig, inputs: &DenseMatrix) -> Result<DenseMatrix> {
    if inputs.cols() != cfg.input_dim || !params.matches(cfg) {
        return Err(Error::invalid("input width or parameters do not match the model configuration"));
    }
    let gates = vec![cfg.eval_branch_scale(); cfg.blocks];
    let mut pass = BatchPass::run(params, cfg, inputs, &gates);
    let h = pass.h.pop().expect("non-empty");
    Ok(DenseMatrix::from_vec_unchecked(inputs.rows(), cfg.width, h))
}

fn check_batch(params: &ModelParams, cfg: &ModelConfig, batch: &Batch<'_>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.inputs.rows() != batch.len() || batch.inputs.cols() != cfg.input_dim {
        return Err(Error::invalid(format!(
            "batch inputs are {}x{}, expected {}x{}",
            batch.inputs.rows(),
            batch.inputs.cols(),
            batch.len(),
            cfg.input_dim
        )));
    }
    if let Some(bad) = batch.labels.iter().find(|l| **l >= cfg.classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{}", cfg.classes)));
    }
    if !params.matches(cfg) {
        return Err(Error::invalid("parameters do not match the model configuration"));
    }
    Ok(())
}

struct BlockCache {
    pre_inner: Vec<f64>,
    inner: Vec<f64>,
    summed: Vec<f64>,
}

/// Row-major activations of a whole batch.
struct BatchPass {
    input_pre: Vec<f64>,
    h: Vec<Vec<f64>>,
    blocks: Vec<BlockCache>,
    logits: Vec<f64>,
}

impl BatchPass {
    fn run(params: &ModelParams, cfg: &ModelConfig, inputs: &DenseMatrix, gates: &[f64]) -> Self {
        let rows = inputs.rows();
        let input_pre = affine(inputs.as_slice(), rows, &params.input);
        let mut h = vec![input_pre.iter().map(|v| relu(*v)).collect::<Vec<_>>()];
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for (blk, gate) in params.blocks.iter().zip(gates) {
            let cur = h.last().expect("non-empty");
            let pre_inner = affine(cur, rows, &blk.a);
            let inner: Vec<f64> = pre_inner.iter().map(|v| relu(*v)).collect();
            let branch = affine(&inner, rows, &blk.b);
            let summed: Vec<f64> = if cfg.skip {
                cur.iter().zip(&branch).map(|(h, f)| h + gate * f).collect()
            } else {
                branch.iter().map(|f| gate * f).collect()
            };
            let next = match cfg.activation {
                ActivationStyle::Post => summed.iter().map(|v| relu(*v)).collect(),
                ActivationStyle::Pre => summed.clone(),
            };
            h.push(next);
            blocks.push(BlockCache {
                pre_inner,
                inner,
                summed,
            });
        }
        let logits = affine(h.last().expect("non-empty"), rows, &params.classifier);
        Self {
            input_pre,
            h,
            blocks,
            logits,
        }
    }
}

/// `x · Wᵀ + b` for a row-major batch `x`.
fn affine(x: &[f64], rows: usize, lin: &Linear) -> Vec<f64> {
    let (out_dim, in_dim) = lin.weight.shape();
    let mut out = vec![0.0; rows * out_dim];
    for r in 0..rows {
        out[r * out_dim..(r + 1) * out_dim].copy_from_slice(&lin.bias);
    }
    gemm_into(
        1.0,
        MatView::from_slice(x, rows, in_dim),
        MatView::from_slice(lin.weight.as_slice(), out_dim, in_dim).t(),
        1.0,
        &mut out,
        rows,
        out_dim,
    );
    out
}

/// Accumulates `∂/∂W = d_outᵀ · x` and `∂/∂b = Σ_rows d_out`.
fn linear_grads(d_out: &[f64], x: &[f64], rows: usize, grad: &mut Linear) {
    let (out_dim, in_dim) = grad.weight.shape();
    gemm_into(
        1.0,
        MatView::from_slice(d_out, rows, out_dim).t(),
        MatView::from_slice(x, rows, in_dim),
        1.0,
        grad.weight.as_mut_slice(),
        out_dim,
        in_dim,
    );
    for r in 0..rows {
        for (g, d) in grad.bias.iter_mut().zip(&d_out[r * out_dim..(r + 1) * out_dim]) {
            *g += d;
        }
    }
}

fn backprop_through(d_out: &[f64], rows: usize, weight: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; rows * weight.cols()];
    accumulate_backprop(d_out, rows, weight, &mut out);
    out
}

/// `acc += d_out · W`
fn accumulate_backprop(d_out: &[f64], rows: usize, weight: &DenseMatrix, acc: &mut [f64]) {
    let (out_dim, in_dim) = weight.shape();
    gemm_into(
        1.0,
        MatView::from_slice(d_out, rows, out_dim),
        MatView::from_slice(weight.as_slice(), out_dim, in_dim),
        1.0,
        acc,
        rows,
        in_dim,
    );
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn softmax_xent(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let rows = labels.len();
    let inv = 1.0 / rows as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let z = &logits[r * classes..(r + 1) * classes];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        total += log_norm - z[label];
        let g = &mut grad[r * classes..(r + 1) * classes];
        for (c, gv) in g.iter_mut().enumerate() {
            *gv = (z[c] - log_norm).exp() * inv;
        }
        g[label] -= inv;
    }
    (total * inv, grad)
}
