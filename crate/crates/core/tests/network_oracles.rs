//! The network checked against independent recomputations: a straight-line
//! forward pass and central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use resalign::linalg::DenseMatrix;
use resalign::resnet::{
    forward, init_model, loss_and_grads, predict_logits, residual_jacobian, residual_jacobians, ActivationStyle, Batch,
    ModelConfig, ModelParams,
};

fn config(skip: bool, activation: ActivationStyle, p: f64) -> ModelConfig {
    ModelConfig {
        input_dim: 5,
        width: 16,
        blocks: 3,
        classes: 3,
        skip,
        activation,
        stochastic_depth_p: p,
        weight_decay: 0.1,
        branch_init_gain: 1.0,
        seed: 11,
    }
}

fn variants() -> Vec<ModelConfig> {
    vec![
        config(true, ActivationStyle::Post, 0.0),
        config(false, ActivationStyle::Post, 0.0),
        config(true, ActivationStyle::Pre, 0.0),
        config(true, ActivationStyle::Post, 0.3),
    ]
}

/// Random model with non-zero biases so every parameter matters.
fn random_model(cfg: &ModelConfig) -> ModelParams {
    let mut params = init_model(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
    let n = Normal::new(0.0, 0.2).unwrap();
    params.input.bias.iter_mut().for_each(|b| *b = n.sample(&mut rng));
    for blk in &mut params.blocks {
        blk.a.bias.iter_mut().for_each(|b| *b = n.sample(&mut rng));
        blk.b.bias.iter_mut().for_each(|b| *b = n.sample(&mut rng));
    }
    params.classifier.bias.iter_mut().for_each(|b| *b = n.sample(&mut rng));
    params
}

fn inputs(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    DenseMatrix::from_fn(rows, cols, |_, _| n.sample(&mut rng))
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn affine(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| {
            let mut acc = b[i];
            for (j, xj) in x.iter().enumerate() {
                acc += w[(i, j)] * xj;
            }
            acc
        })
        .collect()
}

fn block_output(params: &ModelParams, cfg: &ModelConfig, i: usize, h: &[f64]) -> Vec<f64> {
    let blk = &params.blocks[i];
    let s = 1.0 - cfg.stochastic_depth_p;
    let t: Vec<f64> = affine(&blk.a.weight, &blk.a.bias, h).into_iter().map(relu).collect();
    let f: Vec<f64> = affine(&blk.b.weight, &blk.b.bias, &t).into_iter().map(|v| s * v).collect();
    let sum: Vec<f64> = if cfg.skip {
        h.iter().zip(&f).map(|(a, b)| a + b).collect()
    } else {
        f
    };
    match cfg.activation {
        ActivationStyle::Post => sum.into_iter().map(relu).collect(),
        ActivationStyle::Pre => sum,
    }
}

fn straight_line_logits(params: &ModelParams, cfg: &ModelConfig, x: &[f64]) -> Vec<f64> {
    let mut h: Vec<f64> = affine(&params.input.weight, &params.input.bias, x).into_iter().map(relu).collect();
    for i in 0..cfg.blocks {
        h = block_output(params, cfg, i, &h);
    }
    affine(&params.classifier.weight, &params.classifier.bias, &h)
}

#[test]
fn forward_matches_straight_line_recomputation() {
    for cfg in variants() {
        let params = random_model(&cfg);
        let xs = inputs(6, cfg.input_dim, 5);
        let batched = predict_logits(&params, &cfg, &xs).unwrap();
        for r in 0..xs.rows() {
            let expect = straight_line_logits(&params, &cfg, xs.row(r));
            let single = forward(&params, &cfg, xs.row(r)).unwrap().logits;
            for c in 0..cfg.classes {
                assert!((single[c] - expect[c]).abs() <= 1e-12 * (1.0 + expect[c].abs()), "{cfg:?}");
                assert!((batched[(r, c)] - expect[c]).abs() <= 1e-12 * (1.0 + expect[c].abs()), "{cfg:?}");
            }
        }
    }
}

fn flat(params: &ModelParams) -> Vec<f64> {
    params.tensors().concat()
}

fn set_flat(params: &mut ModelParams, values: &[f64]) {
    let mut at = 0;
    params.for_each_tensor_mut(|t| {
        t.copy_from_slice(&values[at..at + t.len()]);
        at += t.len();
    });
}

#[test]
fn every_parameter_gradient_matches_central_differences() {
    let step = 1e-5;
    for cfg in variants() {
        let params = random_model(&cfg);
        let xs = inputs(4, cfg.input_dim, 9);
        let labels = [0, 2, 1, 2];
        let (_, grads) = loss_and_grads(&params, &cfg, Batch::new(&xs, &labels)).unwrap();
        let analytic = flat(&grads);
        let theta = flat(&params);
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] = theta[k] + step;
            set_flat(&mut probe, &t);
            let up = loss_and_grads(&probe, &cfg, Batch::new(&xs, &labels)).unwrap().0;
            t[k] = theta[k] - step;
            set_flat(&mut probe, &t);
            let down = loss_and_grads(&probe, &cfg, Batch::new(&xs, &labels)).unwrap().0;
            let fd = (up - down) / (2.0 * step);
            let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1.0);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "worst relative error {worst:e} for {cfg:?}");
    }
}

#[test]
fn residual_jacobian_matches_central_differences() {
    let step = 1e-6;
    for cfg in variants() {
        let params = random_model(&cfg);
        let x = inputs(1, cfg.input_dim, 21);
        let trace = forward(&params, &cfg, x.row(0)).unwrap();
        let all = residual_jacobians(&params, &cfg, x.row(0)).unwrap();
        for i in 0..cfg.blocks {
            let jac = residual_jacobian(&params, &cfg, x.row(0), i).unwrap();
            assert_eq!(jac, all[i]);
            let h = &trace.h[i];
            let d = h.len();
            let mut fd = DenseMatrix::zeros(d, d);
            for col in 0..d {
                let mut hp = h.clone();
                hp[col] += step;
                let mut hm = h.clone();
                hm[col] -= step;
                let up = block_output(&params, &cfg, i, &hp);
                let down = block_output(&params, &cfg, i, &hm);
                for row in 0..d {
                    fd[(row, col)] = (up[row] - down[row]) / (2.0 * step);
                }
            }
            // Remove the identity path, which passes through the outer mask.
            if cfg.skip {
                for k in 0..d {
                    fd[(k, k)] -= trace.outer_masks[i][k];
                }
            }
            let err = fd.sub(&jac).max_abs();
            assert!(err < 1e-6, "block {i}: {err:e} for {cfg:?}");
        }
    }
}

#[test]
fn post_activation_jacobian_has_the_factored_form() {
    let cfg = config(true, ActivationStyle::Post, 0.25);
    let params = random_model(&cfg);
    let x = inputs(1, cfg.input_dim, 4);
    let trace = forward(&params, &cfg, x.row(0)).unwrap();
    let blk = &params.blocks[1];
    let d = cfg.width;
    let outer = DenseMatrix::diag(&trace.outer_masks[1]);
    let inner = DenseMatrix::diag(&trace.inner_masks[1]);
    let expect = outer
        .matmul(&blk.b.weight)
        .matmul(&inner)
        .matmul(&blk.a.weight)
        .scaled(0.75);
    let got = residual_jacobian(&params, &cfg, x.row(0), 1).unwrap();
    assert!(got.sub(&expect).max_abs() < 1e-13);
    assert_eq!(got.shape(), (d, d));
}

#[test]
fn out_of_range_block_is_rejected() {
    let cfg = config(true, ActivationStyle::Post, 0.0);
    let params = random_model(&cfg);
    assert!(residual_jacobian(&params, &cfg, &[0.0; 5], 3).is_err());
    assert!(residual_jacobian(&params, &cfg, &[0.0; 4], 0).is_err());
}
