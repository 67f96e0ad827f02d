use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use polypos_core::encoder::EncoderModel;
use polypos_core::trainer::{self, write_log_csv, Adam, EpochLog};

use crate::config::ExperimentConfig;
use crate::grid::{Cell, Variant};
use crate::prepare::{load_split, Layout};

/// Marker written once a cell has finished all epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoneMarker {
    pub cell: String,
    pub training_hash: String,
    pub epochs: usize,
    pub parameters: usize,
}

pub const CHECKPOINT: &str = "checkpoint";
const STAGING: &str = "checkpoint.tmp";

pub fn read_done(dir: &Path) -> Option<DoneMarker> {
    serde_json::from_str(&fs::read_to_string(dir.join("done.json")).ok()?).ok()
}

/// True when the cell's model is complete for the current training settings.
pub fn is_done(cfg: &ExperimentConfig, cell: &Cell) -> bool {
    let dir = Layout::new(cfg).model_dir(cell);
    read_done(&dir).is_some_and(|d| d.training_hash == cfg.training_hash())
}

fn write_checkpoint(dir: &Path, model: &EncoderModel, opt: &Adam, seed: u64, log: &[EpochLog]) -> Result<()> {
    // stage then swap, so an interrupted save never leaves a torn checkpoint
    let staging = dir.join(STAGING);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    trainer::save_training_state(&staging, model, opt, seed, log)?;
    let target = dir.join(CHECKPOINT);
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    fs::rename(&staging, &target)?;
    Ok(())
}

/// Trains one cell, resuming from its last checkpoint unless `fresh`.
/// Finished cells are left untouched and return their stored log.
pub fn train_cell(cfg: &ExperimentConfig, cell: &Cell, fresh: bool) -> Result<Vec<EpochLog>> {
    let dir = Layout::new(cfg).model_dir(cell);
    let ckpt = dir.join(CHECKPOINT);
    let mut train_cfg = cfg.train.clone();
    train_cfg.monolingual = cell.variant == Variant::Monolingual;

    if !fresh && is_done(cfg, cell) {
        log::info!("{cell}: already trained");
        let (_, _, _, log) = trainer::load_training_state(&ckpt, &train_cfg)?;
        return Ok(log);
    }
    if fresh && dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("done.json"));

    let corpus = load_split(cfg, &cell.language, "train")?;
    let val = load_split(cfg, &cell.language, "val")?;
    let enc = cfg.encoder_config(cell.kind, corpus.total_vocab(), cell.ablation())?;

    let resumable = dir.join("hash.txt");
    let hash = cfg.training_hash();
    let same_settings = fs::read_to_string(&resumable).is_ok_and(|h| h.trim() == hash);
    let (mut model, mut opt, mut log) = if same_settings && ckpt.join("manifest.json").exists() {
        let (model, opt, _, log) = trainer::load_training_state(&ckpt, &train_cfg)
            .with_context(|| format!("loading partial checkpoint of {cell}"))?;
        log::info!("{cell}: resuming after epoch {}", log.last().map_or(0, |e| e.epoch));
        (model, opt, log)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cell.seed);
        let model = EncoderModel::init(enc, &mut rng)?;
        let opt = Adam::new(&model, &train_cfg);
        (model, opt, Vec::new())
    };
    fs::write(&resumable, &hash)?;

    let start = log.last().map_or(0, |e| e.epoch);
    let every = cfg.checkpoint_every;
    let seed = cell.seed;
    let epochs = train_cfg.epochs;
    let mut sofar = log.clone();
    let mut hook = |e: &EpochLog, m: &EncoderModel, o: &Adam| -> polypos_core::Result<()> {
        sofar.push(e.clone());
        if e.epoch % every == 0 || e.epoch == epochs {
            write_checkpoint(&dir, m, o, seed, &sofar).map_err(|err| polypos_core::Error::Io(std::io::Error::other(err.to_string())))?;
        }
        Ok(())
    };
    let new = trainer::train_from(&mut model, &mut opt, start, &corpus, &val, &train_cfg, seed, &mut hook)?;
    log.extend(new);
    if start == epochs {
        write_checkpoint(&dir, &model, &opt, seed, &log)?;
    }
    write_log_csv(fs::File::create(dir.join("log.csv"))?, &log)?;
    let done = DoneMarker {
        cell: cell.to_string(),
        training_hash: hash,
        epochs,
        parameters: model.num_parameters(),
    };
    fs::write(dir.join("done.json"), serde_json::to_string_pretty(&done)?)?;
    Ok(log)
}

/// Loads the trained model of a finished cell.
pub fn load_cell_model(cfg: &ExperimentConfig, cell: &Cell) -> Result<EncoderModel> {
    if !is_done(cfg, cell) {
        anyhow::bail!("{cell} has not finished training with the current settings");
    }
    let dir = Layout::new(cfg).model_dir(cell).join(CHECKPOINT);
    Ok(EncoderModel::load(&dir)?.0)
}
