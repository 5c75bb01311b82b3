//! `train`: fit a model on the train split and report held-out metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use ladderforge::dataset::{build_training_matrix, make_split, parse_encode_log, SplitManifest, SplitRole};
use ladderforge::gsm_vif::io::read_tensor_csv;
use ladderforge::gsm_vif::VifFeatureTensor;
use ladderforge::regressor::{r_squared, save_model, spearman, train};
use ladderforge::write_atomic;
use serde::Serialize;

use crate::config::{sibling, RunConfig};
use crate::failure::CmdResult;

#[derive(Serialize)]
struct SplitMetrics {
    videos: usize,
    rows: usize,
    r2: f64,
    spearman: f64,
}

#[derive(Serialize)]
struct Metrics {
    approach: u8,
    seed: u64,
    train_videos: usize,
    train_rows: usize,
    validation: Option<SplitMetrics>,
}

pub fn read_tensors(path: &Path) -> anyhow::Result<BTreeMap<String, VifFeatureTensor>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (id, t) in read_tensor_csv(file).with_context(|| format!("reading {}", path.display()))? {
        if out.insert(id.clone(), t).is_some() {
            bail!("video {id:?} appears twice in {}", path.display());
        }
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, features: &Path, log_path: &Path, split: Option<&Path>, out: &Path) -> CmdResult {
    let resolutions = cfg.resolution_list()?;
    let tensors = read_tensors(features)?;
    let log = parse_encode_log(log_path, &resolutions).with_context(|| format!("reading {}", log_path.display()))?;
    let videos: BTreeSet<&str> = log.iter().map(|r| r.video_id.as_str()).collect();

    let manifest = match split {
        Some(p) => SplitManifest::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("split manifest {}", p.display()))?,
        None => make_split(&videos.iter().collect::<Vec<_>>(), cfg.seed, cfg.split_fractions)?,
    };
    for v in &videos {
        if manifest.role_of(v).is_none() {
            return Err(anyhow!("video {v:?} in the encode log is not assigned to any split").into());
        }
    }

    let rows_for = |role: SplitRole| {
        let records: Vec<_> = log.iter().filter(|r| manifest.role_of(&r.video_id) == Some(role)).cloned().collect();
        let rows = build_training_matrix(&records, &tensors, cfg.approach())?;
        anyhow::Ok((records, rows))
    };
    let (train_records, train_rows) = rows_for(SplitRole::Train)?;
    let model = train(&train_rows, &cfg.regressor, cfg.seed)?;

    let (val_records, val_rows) = rows_for(SplitRole::Validation)?;
    let validation = if val_rows.is_empty() {
        None
    } else {
        let y: Vec<f64> = val_rows.iter().map(|r| r.target.expect("targets set")).collect();
        let p = model.predict_batch(&val_rows)?;
        let vids: BTreeSet<&str> = val_records.iter().map(|r| r.video_id.as_str()).collect();
        Some(SplitMetrics {
            videos: vids.len(),
            rows: y.len(),
            r2: r_squared(&y, &p),
            spearman: spearman(&y, &p),
        })
    };
    let train_videos: BTreeSet<&str> = train_records.iter().map(|r| r.video_id.as_str()).collect();
    let metrics = Metrics {
        approach: cfg.approach,
        seed: cfg.seed,
        train_videos: train_videos.len(),
        train_rows: train_rows.len(),
        validation,
    };

    save_model(&model, out).with_context(|| format!("writing {}", out.display()))?;
    write_atomic(&sibling(out, "split.toml"), manifest.to_toml().as_bytes())?;
    write_atomic(&sibling(out, "metrics.json"), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    cfg.write_beside(out)?;
    if let Some(v) = &metrics.validation {
        println!("validation: R^2 {:.4}, Spearman {:.4} over {} videos", v.r2, v.spearman, v.videos);
    }
    Ok(())
}
