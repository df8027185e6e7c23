use std::path::{Path, PathBuf};

use resalign::data::{load_dataset, TrainTest};
use resalign::resnet::{save_checkpoint, train, EpochRecord, ModelConfig, ModelParams};

use super::{prepare_run_dir, provenance, write_text};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::table::Table;

pub struct TrainOutput {
    pub run_dir: PathBuf,
    pub params: ModelParams,
    pub model: ModelConfig,
    pub history: Vec<EpochRecord>,
    pub data: TrainTest,
}

/// Trains the configured model and writes `model.ckpt`, `history.csv` and
/// `config.toml` (the resolved configuration) into the run directory.
pub fn cmd_train(cfg: &ExperimentConfig, run_dir: Option<&Path>) -> Result<TrainOutput> {
    let data = load_dataset(&cfg.dataset_spec())?;
    let model = cfg.model_config(data.train.dim(), data.train.class_count);
    let (params, history) = train(&model, &cfg.train_config(), &data.train)?;

    let resolved = cfg.to_toml();
    let run_dir = prepare_run_dir(&cfg.output_dir, &cfg.hash(), run_dir)?;
    write_text(&run_dir.join("config.toml"), &resolved)?;
    save_checkpoint(&params, &model, run_dir.join("model.ckpt"))?;
    let mut table = Table::new(&["epoch", "lr", "loss", "train_accuracy"]);
    for r in &history {
        table.push(vec![r.epoch.into(), r.lr.into(), r.loss.into(), r.train_accuracy.into()]);
    }
    table.write(&run_dir.join("history.csv"), &provenance("train", cfg.seed, &resolved))?;
    Ok(TrainOutput {
        run_dir,
        params,
        model,
        history,
        data,
    })
}
