use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Where the outer nonlinearity of a block sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationStyle {
    /// `h' = relu(h + F(h))`
    Post,
    /// `h' = h + F(h)`
    Pre,
}

impl ActivationStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationStyle::Post => "post",
            ActivationStyle::Pre => "pre",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            ActivationStyle::Post => 0,
            ActivationStyle::Pre => 1,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(ActivationStyle::Post),
            1 => Some(ActivationStyle::Pre),
            _ => None,
        }
    }
}

impl std::str::FromStr for ActivationStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post" => Ok(ActivationStyle::Post),
            "pre" => Ok(ActivationStyle::Pre),
            other => Err(Error::invalid(format!("unknown activation style {other:?} (post | pre)"))),
        }
    }
}

/// Architecture of a fully-connected residual network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub classes: usize,
    pub skip: bool,
    pub activation: ActivationStyle,
    /// Probability of dropping a residual branch during training. At
    /// evaluation every branch is scaled by `1 - p`.
    pub stochastic_depth_p: f64,
    pub weight_decay: f64,
    /// Scales the initial weights of each residual branch's second layer
    /// when skip connections are on; 1 gives plain He initialization. Plain
    /// He makes the residual stream variance grow about threefold per block,
    /// which diverges at the usual learning rates for 8 or more blocks.
    pub branch_init_gain: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Scaled-down fully-connected model: 8 blocks of width 128.
    pub fn desk(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            width: 128,
            blocks: 8,
            classes,
            skip: true,
            activation: ActivationStyle::Post,
            stochastic_depth_p: 0.0,
            weight_decay: 5e-2,
            branch_init_gain: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.blocks == 0 {
            return Err(Error::invalid("at least one residual block is required"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        if self.width < self.classes {
            return Err(Error::invalid(format!(
                "width {} must be at least the class count {}",
                self.width, self.classes
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be finite and non-negative"));
        }
        if !(self.branch_init_gain >= 0.0 && self.branch_init_gain.is_finite()) {
            return Err(Error::invalid("branch_init_gain must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.stochastic_depth_p) {
            return Err(Error::invalid("stochastic_depth_p must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Multiplier applied to every residual branch at evaluation time.
    pub fn eval_branch_scale(&self) -> f64 {
        1.0 - self.stochastic_depth_p
    }
}

/// Affine map `x ↦ weight · x + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        y
    }

    fn he(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).expect("valid std");
        Self {
            weight: DenseMatrix::from_fn(out_dim, in_dim, |_, _| normal.sample(rng)),
            bias: vec![0.0; out_dim],
        }
    }
}

/// The two layers of a residual branch: `F(h) = b · relu(a · h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub a: Linear,
    pub b: Linear,
}

/// All trainable parameters. Also used as the shape of gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub input: Linear,
    pub blocks: Vec<Block>,
    pub classifier: Linear,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.width;
        Self {
            input: Linear::zeros(d, cfg.input_dim),
            blocks: (0..cfg.blocks)
                .map(|_| Block {
                    a: Linear::zeros(d, d),
                    b: Linear::zeros(d, d),
                })
                .collect(),
            classifier: Linear::zeros(cfg.classes, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_tensor_mut(|t| t.iter_mut().for_each(|v| *v = 0.0));
        out
    }

    /// Tensors in checkpoint order: input weight and bias, then per block
    /// `a.weight, a.bias, b.weight, b.bias`, then classifier weight and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.input.weight.as_slice(), &self.input.bias];
        for blk in &self.blocks {
            out.push(blk.a.weight.as_slice());
            out.push(&blk.a.bias);
            out.push(blk.b.weight.as_slice());
            out.push(&blk.b.bias);
        }
        out.push(self.classifier.weight.as_slice());
        out.push(&self.classifier.bias);
        out
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(self.input.weight.as_mut_slice());
        f(&mut self.input.bias);
        for blk in &mut self.blocks {
            f(blk.a.weight.as_mut_slice());
            f(&mut blk.a.bias);
            f(blk.b.weight.as_mut_slice());
            f(&mut blk.b.bias);
        }
        f(self.classifier.weight.as_mut_slice());
        f(&mut self.classifier.bias);
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        let src: Vec<Vec<f64>> = other.tensors().iter().map(|t| t.to_vec()).collect();
        let mut idx = 0;
        self.for_each_tensor_mut(|t| {
            for (a, b) in t.iter_mut().zip(&src[idx]) {
                *a += alpha * b;
            }
            idx += 1;
        });
    }

    pub fn matches(&self, cfg: &ModelConfig) -> bool {
        let d = cfg.width;
        let lin = |l: &Linear, o: usize, i: usize| l.weight.shape() == (o, i) && l.bias.len() == o;
        lin(&self.input, d, cfg.input_dim)
            && self.blocks.len() == cfg.blocks
            && self.blocks.iter().all(|b| lin(&b.a, d, d) && lin(&b.b, d, d))
            && lin(&self.classifier, cfg.classes, d)
    }
}

/// He-initialized parameters: every weight is drawn from
/// `N(0, 2 / fan_in)`, every bias is zero. With skip connections the second
/// layer of each branch is then multiplied by `branch_init_gain`.
pub fn init_model(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.width;
    let input = Linear::he(d, cfg.input_dim, &mut rng);
    let blocks = (0..cfg.blocks)
        .map(|_| {
            let a = Linear::he(d, d, &mut rng);
            let mut b = Linear::he(d, d, &mut rng);
            if cfg.skip && cfg.branch_init_gain != 1.0 {
                b.weight = b.weight.scaled(cfg.branch_init_gain);
            }
            Block { a, b }
        })
        .collect();
    let classifier = Linear::he(cfg.classes, d, &mut rng);
    Ok(ModelParams {
        input,
        blocks,
        classifier,
    })
}
