//! `ladder`: predicted ladder for one video, optionally with the fixed and
//! reference ladders realized against the same encode log.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ladderforge::dataset::{parse_encode_log, EncodeRecord};
use ladderforge::ladder::{
    fixed_ladder, predict_quality_grid, predicted_ladder, reference_ladder, write_ladder_csv, FixedLadderConfig, Ladder,
    LadderSummary,
};
use ladderforge::regressor::load_model;
use ladderforge::write_atomic;

use crate::config::{sibling, RunConfig};
use crate::failure::{usage, CmdResult};
use crate::train::read_tensors;

pub struct Args {
    pub model: PathBuf,
    pub features: PathBuf,
    pub encode_log: PathBuf,
    pub video: Option<String>,
    pub out: PathBuf,
    pub correct: bool,
    pub fixed: Option<PathBuf>,
    pub reference: bool,
}

fn write_ladder(path: &Path, ladder: &Ladder) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_ladder_csv(&mut buf, ladder)?;
    write_atomic(path, &buf).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cfg: &RunConfig, a: &Args) -> CmdResult {
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let tensors = read_tensors(&a.features)?;
    let video = match &a.video {
        Some(v) => v.clone(),
        None if tensors.len() == 1 => tensors.keys().next().expect("one entry").clone(),
        None => return Err(usage(anyhow!("{} holds several videos; pass --video", a.features.display()))),
    };
    let tensor = tensors
        .get(&video)
        .ok_or_else(|| anyhow!("no features for video {video:?} in {}", a.features.display()))?;
    let log: Vec<EncodeRecord> = parse_encode_log(&a.encode_log, &[])
        .with_context(|| format!("reading {}", a.encode_log.display()))?
        .into_iter()
        .filter(|r| r.video_id == video)
        .collect();
    if log.is_empty() {
        return Err(anyhow!("encode log has no records for video {video:?}").into());
    }

    let rungs = cfg.rung_spec()?;
    let resolutions = cfg.resolution_list()?;
    let grid = predict_quality_grid(&model, tensor, &resolutions, &rungs)?;
    let predicted = predicted_ladder(&grid, &log, a.correct).with_context(|| format!("realizing ladder for {video}"))?;
    write_ladder(&a.out, &predicted)?;

    let mut summaries: Vec<LadderSummary> = vec![predicted.summary(&video, a.correct)];
    let fixed_path = a.fixed.clone().or_else(|| cfg.fixed_ladder.clone());
    if let Some(p) = fixed_path {
        let table = FixedLadderConfig::load(&p).with_context(|| format!("loading fixed ladder {}", p.display()))?;
        let fixed = fixed_ladder(&table, &log).with_context(|| format!("realizing fixed ladder for {video}"))?;
        write_ladder(&sibling(&a.out, "fixed.csv"), &fixed)?;
        summaries.push(fixed.summary(&video, false));
    }
    if a.reference {
        let reference = reference_ladder(&log, &rungs, a.correct)?;
        write_ladder(&sibling(&a.out, "reference.csv"), &reference)?;
        summaries.push(reference.summary(&video, a.correct));
    }
    write_atomic(&sibling(&a.out, "summary.json"), serde_json::to_string_pretty(&summaries)?.as_bytes())?;

    let mut resolved = cfg.clone();
    resolved.approach = model.layout.approach.map(|x| x.id()).unwrap_or(cfg.approach);
    resolved.write_beside(&a.out)?;
    Ok(())
}
