use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resalign::data::load_dataset;
use resalign::linalg::DenseMatrix;
use resalign::rametrics::{
    analyze, nc_metrics, project2d, trajectory, AlignmentVariant, NcReport, RaReport, Trajectory,
};
use resalign::resnet::{final_features, load_checkpoint};

use super::provenance;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::svg::{emit_svg_heatmap, emit_svg_lines, LineChart, Series};
use crate::table::{Table, Value};

pub struct MetricsOutput {
    pub report: RaReport,
    /// `None` when `heldout = 0`.
    pub nc: Option<NcReport>,
    pub files: Vec<PathBuf>,
}

const VARIANTS: [AlignmentVariant; 2] = [AlignmentVariant::Ujv, AlignmentVariant::Vju];

/// Measures RA1–RA4 at `metrics.inputs` seeded training samples and the
/// Neural Collapse statistics on the first `metrics.heldout` test samples,
/// writing CSV tables and SVG figures into `out_dir`.
pub fn cmd_metrics(checkpoint: &Path, cfg: &ExperimentConfig, out_dir: &Path) -> Result<MetricsOutput> {
    let (params, model) = load_checkpoint(checkpoint)?;
    let data = load_dataset(&cfg.dataset_spec())?;
    if data.train.dim() != model.input_dim || data.train.class_count != model.classes {
        return Err(CliError::invalid(format!(
            "checkpoint expects {} features and {} classes, the dataset has {} and {}",
            model.input_dim,
            model.classes,
            data.train.dim(),
            data.train.class_count
        )));
    }
    let count = cfg.metrics.inputs.min(data.train.len());
    let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(cfg.seed), data.train.len(), count).into_vec();
    picked.sort_unstable();
    let inputs: Vec<Vec<f64>> = picked.iter().map(|&i| data.train.inputs.row(i).to_vec()).collect();
    let report = analyze(&params, &model, &inputs, &cfg.ra_options())?;

    let nc = if cfg.metrics.heldout > 0 {
        let n = cfg.metrics.heldout.min(data.test.len());
        let rows: Vec<usize> = (0..n).collect();
        let held = data.test.select(&rows);
        let features = final_features(&params, &model, &held.inputs)?;
        Some(nc_metrics(&features, &held.labels, &params.classifier)?)
    } else {
        None
    };

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::file(out_dir, e))?;
    let comments = provenance("metrics", cfg.seed, &cfg.to_toml());
    let mut files = Vec::new();
    let mut out = |name: &str| {
        let p = out_dir.join(name);
        files.push(p.clone());
        p
    };

    let k = report.k;
    let mut header = vec!["block".to_string()];
    header.extend((1..=k).map(|j| format!("sigma_{j}")));
    header.push("ra3_gap".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut blocks = Table::new(&header);
    for (b, svals) in report.singular_values.iter().enumerate() {
        let mut row: Vec<Value> = vec![(b + 1).into()];
        row.extend(svals.iter().map(|s| Value::Real(*s)));
        row.push(report.ra3[b].map_or(Value::Text(String::new()), Value::Real));
        blocks.push(row);
    }
    blocks.write(&out("ra_blocks.csv"), &comments)?;

    let mut pairs = Table::new(&["probed", "basis", "ujv", "vju"]);
    for i in 0..report.blocks {
        for j in 0..report.blocks {
            let score = |v| report.pair_score(i, j, v).unwrap_or(f64::NAN);
            pairs.push(vec![(i + 1).into(), (j + 1).into(), score(AlignmentVariant::Ujv).into(), score(AlignmentVariant::Vju).into()]);
        }
    }
    pairs.write(&out("ra_pairs.csv"), &comments)?;

    let mut summary = Table::new(&["metric", "value"]);
    let mut add = |name: &str, v: Value| summary.push(vec![name.into(), v]);
    add("inputs", report.inputs.into());
    add("k", k.into());
    add("ra1_collinearity", report.ra1.collinearity.into());
    add("ra1_equispacing_cv", report.ra1.equispacing_cv.into());
    for v in VARIANTS {
        let name = v.as_str().to_lowercase();
        add(&format!("ra2_mean_{name}"), report.mean_pair_score(v, 0).into());
        add(&format!("ra2_later_half_{name}"), report.later_half_pair_score(v).into());
    }
    add("ra4_start_depth", report.start_depth.into());
    add("ra4_slope", report.ra4.slope.into());
    add("ra4_intercept", report.ra4.intercept.into());
    add("ra4_r2", report.ra4.r2.into());
    if let Some(nc) = &nc {
        add("nc1", nc.nc1.into());
        add("nc2_equinorm_cv", nc.equinorm_cv.into());
        add("nc2_equiangularity", nc.equiangularity.into());
        add("nc2_classifier_equinorm_cv", nc.classifier_equinorm_cv.into());
        add("nc2_classifier_equiangularity", nc.classifier_equiangularity.into());
        add("nc3_self_duality", nc.self_duality.into());
        add("nc4_ncc_agreement", nc.ncc_agreement.into());
    }
    summary.write(&out("ra_summary.csv"), &comments)?;

    for v in VARIANTS {
        let name = v.as_str().to_lowercase();
        let l = report.blocks;
        let mut grid = DenseMatrix::zeros(l * k, l * k);
        for m in report.maps.iter().filter(|m| m.variant == v) {
            for r in 0..k {
                for c in 0..k {
                    grid[(m.probed * k + r, m.basis * k + c)] = m.matrix[(r, c)];
                }
            }
        }
        let title = format!("{} alignment maps, row block = probed, column block = basis", v.as_str());
        emit_svg_heatmap(&grid, &title, &out(&format!("alignment_{name}.svg")))?;
        let scores = DenseMatrix::from_fn(l, l, |i, j| report.pair_score(i, j, v).unwrap_or(0.0));
        emit_svg_heatmap(&scores, &format!("{} pair scores", v.as_str()), &out(&format!("ra2_{name}.svg")))?;
    }

    let sv_series: Vec<Series> = report
        .singular_values
        .iter()
        .enumerate()
        .map(|(b, s)| Series {
            name: format!("block {}", b + 1),
            points: s.iter().enumerate().map(|(j, v)| [(j + 1) as f64, *v]).collect(),
        })
        .collect();
    let sv_chart = LineChart {
        title: "Residual Jacobian singular values".into(),
        x_label: "index".into(),
        y_label: "singular value".into(),
        markers: true,
    };
    emit_svg_lines(&sv_series, &sv_chart, &out("singular_values.svg"))?;

    let tops = report.top_singular_values();
    let mut ra4_series = vec![Series {
        name: "1/sigma_1".into(),
        points: tops.iter().enumerate().map(|(i, s)| [(i + 1) as f64, 1.0 / s]).collect(),
    }];
    ra4_series.push(Series {
        name: format!("fit r2={:.3}", report.ra4.r2),
        points: [report.start_depth, report.blocks]
            .iter()
            .map(|&d| [d as f64, report.ra4.intercept + report.ra4.slope * d as f64])
            .collect(),
    });
    let ra4_chart = LineChart {
        title: "Inverse top singular value by depth".into(),
        x_label: "block".into(),
        y_label: "1 / sigma_1".into(),
        markers: true,
    };
    emit_svg_lines(&ra4_series, &ra4_chart, &out("ra4.svg"))?;

    let trajs = picked
        .iter()
        .zip(&inputs)
        .map(|(&i, x)| {
            let mut t = trajectory(&params, &model, x)?;
            t.label = Some(data.train.labels[i]);
            t.input_id = Some(i);
            Ok(t)
        })
        .collect::<resalign::Result<Vec<Trajectory>>>()?;
    let projected = project2d(&trajs, cfg.seed)?;
    let traj_series: Vec<Series> = trajs
        .iter()
        .zip(projected)
        .map(|(t, pts)| Series {
            name: format!("input {} class {}", t.input_id.unwrap_or(0), t.label.unwrap_or(0)),
            points: pts,
        })
        .collect();
    let traj_chart = LineChart {
        title: "Representations projected on two random directions".into(),
        x_label: "projection 1".into(),
        y_label: "projection 2".into(),
        markers: true,
    };
    emit_svg_lines(&traj_series, &traj_chart, &out("trajectory.svg"))?;

    Ok(MetricsOutput { report, nc, files })
}
