use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, pinv, DenseMatrix};
use crate::resnet::Linear;

/// Neural Collapse statistics of a feature matrix and its classifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NcReport {
    /// `tr(Σ_W Σ_B⁺) / C`: within-class variability relative to the spread of
    /// the class means.
    pub nc1: f64,
    /// Coefficient of variation of the centered class-mean norms.
    pub equinorm_cv: f64,
    /// Mean over class pairs of `|cos(μ_a, μ_b) + 1/(C-1)|`.
    pub equiangularity: f64,
    /// Coefficient of variation of the classifier row norms.
    pub classifier_equinorm_cv: f64,
    /// Same as `equiangularity`, for classifier rows.
    pub classifier_equiangularity: f64,
    /// Mean cosine between classifier row `c` and centered class mean `c`.
    pub self_duality: f64,
    /// Fraction of samples whose nearest class mean agrees with the
    /// classifier's prediction.
    pub ncc_agreement: f64,
}

pub fn nc_metrics(features: &DenseMatrix, labels: &[usize], classifier: &Linear) -> Result<NcReport> {
    let (n, d) = features.shape();
    let c = classifier.out_dim();
    if labels.len() != n {
        return Err(Error::invalid("nc_metrics: label count does not match feature rows"));
    }
    if classifier.in_dim() != d {
        return Err(Error::invalid("nc_metrics: classifier width does not match features"));
    }
    if c < 2 {
        return Err(Error::invalid("nc_metrics needs at least two classes"));
    }
    let mut counts = vec![0usize; c];
    for &l in labels {
        if l >= c {
            return Err(Error::invalid(format!("label {l} outside 0..{c}")));
        }
        counts[l] += 1;
    }
    if let Some(k) = counts.iter().position(|&m| m < 2) {
        return Err(Error::invalid(format!(
            "nc_metrics needs at least two samples per class; class {k} has {}",
            counts[k]
        )));
    }

    let mut means = DenseMatrix::zeros(c, d);
    let mut global = vec![0.0; d];
    for (r, &l) in labels.iter().enumerate() {
        for ((m, g), x) in means.row_mut(l).iter_mut().zip(global.iter_mut()).zip(features.row(r)) {
            *m += x;
            *g += x;
        }
    }
    for k in 0..c {
        let inv = 1.0 / counts[k] as f64;
        means.row_mut(k).iter_mut().for_each(|m| *m *= inv);
    }
    global.iter_mut().for_each(|g| *g /= n as f64);
    let centered = DenseMatrix::from_fn(c, d, |k, j| means[(k, j)] - global[j]);

    let mut within_dev = DenseMatrix::zeros(n, d);
    for (r, &l) in labels.iter().enumerate() {
        for ((o, x), m) in within_dev.row_mut(r).iter_mut().zip(features.row(r)).zip(means.row(l)) {
            *o = x - m;
        }
    }
    let sigma_w = within_dev.t_matmul(&within_dev).scaled(1.0 / n as f64);
    let sigma_b = centered.t_matmul(&centered).scaled(1.0 / c as f64);
    let sigma_b_pinv = pinv(&sigma_b, 1e-10)?;
    let nc1 = sigma_w
        .as_slice()
        .iter()
        .zip(sigma_b_pinv.transpose().as_slice())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / c as f64;

    let mean_rows: Vec<Vec<f64>> = (0..c).map(|k| centered.row(k).to_vec()).collect();
    let clf_rows: Vec<Vec<f64>> = (0..c).map(|k| classifier.weight.row(k).to_vec()).collect();

    let self_duality = (0..c).map(|k| cosine(&clf_rows[k], &mean_rows[k])).sum::<f64>() / c as f64;

    let mut agree = 0usize;
    for r in 0..n {
        let h = features.row(r);
        let nearest = (0..c)
            .map(|k| {
                let dist: f64 = h.iter().zip(means.row(k)).map(|(a, b)| (a - b).powi(2)).sum();
                (k, dist)
            })
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        let logits = classifier.apply(h);
        let predicted = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| if *v > best.1 { (k, *v) } else { best })
            .0;
        if nearest == predicted {
            agree += 1;
        }
    }

    Ok(NcReport {
        nc1,
        equinorm_cv: norm_cv(&mean_rows),
        equiangularity: equiangularity(&mean_rows),
        classifier_equinorm_cv: norm_cv(&clf_rows),
        classifier_equiangularity: equiangularity(&clf_rows),
        self_duality,
        ncc_agreement: agree as f64 / n as f64,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let den = norm2(a) * norm2(b);
    if den == 0.0 {
        0.0
    } else {
        dot(a, b) / den
    }
}

fn norm_cv(rows: &[Vec<f64>]) -> f64 {
    let norms: Vec<f64> = rows.iter().map(|r| norm2(r)).collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn equiangularity(rows: &[Vec<f64>]) -> f64 {
    let c = rows.len();
    let target = 1.0 / (c as f64 - 1.0);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..c {
        for b in a + 1..c {
            total += (cosine(&rows[a], &rows[b]) + target).abs();
            pairs += 1;
        }
    }
    total / pairs as f64
}
