use std::collections::HashMap;

use super::{alignment_map, ra1_scores, ra2_score, ra3_gap, ra4_fit, trajectory, AlignmentMap, AlignmentVariant, Ra1Scores};
use crate::error::{Error, Result};
use crate::linalg::{randomized_svd, LineFit, SvdTriplet, DEFAULT_ITERATIONS};
use crate::resnet::{residual_jacobians, ModelConfig, ModelParams};

/// First depth of the RA4 fit when none is given: `⌈L/3⌉`.
pub fn default_start_depth(blocks: usize) -> usize {
    blocks.div_ceil(3).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaOptions {
    /// Subspace size for singular vectors and alignment maps.
    pub k: usize,
    /// First depth (1-based) of the RA4 fit; `None` means `⌈L/3⌉`.
    pub start_depth: Option<usize>,
    pub svd_iterations: usize,
    pub seed: u64,
}

impl Default for RaOptions {
    fn default() -> Self {
        Self {
            k: 10,
            start_depth: None,
            svd_iterations: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }
}

/// RA2 score of one (probed, basis) block pair, averaged over inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub probed: usize,
    pub basis: usize,
    pub variant: AlignmentVariant,
    pub score: f64,
}

/// RA1–RA4 summary of a model over a set of inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RaReport {
    pub blocks: usize,
    pub k: usize,
    pub classes: usize,
    pub inputs: usize,
    /// Top-`k` singular values per block, averaged over inputs.
    pub singular_values: Vec<Vec<f64>>,
    /// Every ordered block pair for both variants.
    pub pairs: Vec<PairScore>,
    pub ra1: Ra1Scores,
    /// `σ_C / σ_{C+1}` per block; `None` when `k <= C`.
    pub ra3: Vec<Option<f64>>,
    pub start_depth: usize,
    pub ra4: LineFit,
    /// Alignment maps of the first input, kept for plotting.
    pub maps: Vec<AlignmentMap>,
}

impl RaReport {
    pub fn pair_score(&self, probed: usize, basis: usize, variant: AlignmentVariant) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.probed == probed && p.basis == basis && p.variant == variant)
            .map(|p| p.score)
    }

    /// Mean score over off-diagonal pairs whose blocks both lie in
    /// `first_block..blocks` (0-based).
    pub fn mean_pair_score(&self, variant: AlignmentVariant, first_block: usize) -> f64 {
        let sel: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.variant == variant && p.probed != p.basis && p.probed >= first_block && p.basis >= first_block)
            .map(|p| p.score)
            .collect();
        if sel.is_empty() {
            return f64::NAN;
        }
        sel.iter().sum::<f64>() / sel.len() as f64
    }

    /// [`RaReport::mean_pair_score`] over the later half of the blocks.
    pub fn later_half_pair_score(&self, variant: AlignmentVariant) -> f64 {
        self.mean_pair_score(variant, self.blocks / 2)
    }

    pub fn top_singular_values(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s[0]).collect()
    }
}

/// Computes residual Jacobians at each input, their top-`k` randomized SVDs,
/// all block-pair alignment maps and the RA1–RA4 scores.
pub fn analyze(params: &ModelParams, cfg: &ModelConfig, inputs: &[Vec<f64>], opts: &RaOptions) -> Result<RaReport> {
    if inputs.is_empty() {
        return Err(Error::invalid("analyze needs at least one input"));
    }
    let l = cfg.blocks;
    if l < 2 {
        return Err(Error::invalid("analyze needs at least two blocks"));
    }
    let k = opts.k;
    if k == 0 || k > cfg.width {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", cfg.width)));
    }
    let start_depth = opts.start_depth.unwrap_or_else(|| default_start_depth(l));
    let variants = [AlignmentVariant::Ujv, AlignmentVariant::Vju];

    let mut sv_sum = vec![vec![0.0; k]; l];
    let mut pair_sum: HashMap<(usize, usize, AlignmentVariant), f64> = HashMap::new();
    let mut ra1_sum = (0.0, 0.0);
    let mut ra1_degenerate = false;
    let mut maps = Vec::new();

    for (n, x) in inputs.iter().enumerate() {
        let jacobians = residual_jacobians(params, cfg, x)?;
        let svds: Vec<SvdTriplet> = jacobians
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let seed = opts.seed.wrapping_add((n * l + i) as u64);
                randomized_svd(j, k, opts.svd_iterations, seed)
                    .map_err(|e| Error::Numerical(format!("SVD of block {i} Jacobian: {e}")))
            })
            .collect::<Result<_>>()?;
        for (acc, svd) in sv_sum.iter_mut().zip(&svds) {
            for (a, s) in acc.iter_mut().zip(&svd.s) {
                *a += s;
            }
        }
        for (i, jac) in jacobians.iter().enumerate() {
            for (j, svd) in svds.iter().enumerate() {
                for variant in variants {
                    let map = alignment_map(i, jac, j, svd, k, variant)?;
                    *pair_sum.entry((i, j, variant)).or_insert(0.0) += ra2_score(&map).value;
                    if n == 0 {
                        maps.push(map);
                    }
                }
            }
        }
        let ra1 = ra1_scores(&trajectory(params, cfg, x)?)?;
        ra1_sum.0 += ra1.collinearity;
        ra1_sum.1 += ra1.equispacing_cv;
        ra1_degenerate |= ra1.degenerate;
    }

    let count = inputs.len() as f64;
    let singular_values: Vec<Vec<f64>> = sv_sum
        .into_iter()
        .map(|row| row.into_iter().map(|s| s / count).collect())
        .collect();
    let mut pairs = Vec::with_capacity(2 * l * l);
    for variant in variants {
        for i in 0..l {
            for j in 0..l {
                pairs.push(PairScore {
                    probed: i,
                    basis: j,
                    variant,
                    score: pair_sum[&(i, j, variant)] / count,
                });
            }
        }
    }
    let ra3 = singular_values
        .iter()
        .map(|s| {
            if k > cfg.classes {
                ra3_gap(s, cfg.classes).ok().map(|m| m.value)
            } else {
                None
            }
        })
        .collect();
    let tops: Vec<f64> = singular_values.iter().map(|s| s[0]).collect();
    let ra4 = ra4_fit(&tops, start_depth)?;

    Ok(RaReport {
        blocks: l,
        k,
        classes: cfg.classes,
        inputs: inputs.len(),
        singular_values,
        pairs,
        ra1: Ra1Scores {
            collinearity: ra1_sum.0 / count,
            equispacing_cv: ra1_sum.1 / count,
            degenerate: ra1_degenerate,
        },
        ra3,
        start_depth,
        ra4,
        maps,
    })
}
