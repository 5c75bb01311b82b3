//! `extract`: one feature-tensor row per input video.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ladderforge::gsm_vif::io::write_tensor_csv;
use ladderforge::gsm_vif::{extract_video, VifFeatureTensor};
use ladderforge::media_io::Y4mReader;
use ladderforge::write_atomic;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{sibling, RunConfig};
use crate::failure::{usage, CmdResult};

#[derive(Serialize)]
struct VideoReport {
    video_id: String,
    path: String,
    frames: usize,
    warnings: Vec<String>,
}

fn video_id(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| anyhow!("cannot derive a video id from {}", path.display()))
}

fn extract_one(cfg: &RunConfig, path: &Path) -> anyhow::Result<VifFeatureTensor> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = Y4mReader::new(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    extract_video(reader, &cfg.vif).with_context(|| format!("extracting {}", path.display()))
}

pub fn run(cfg: &RunConfig, videos: &[PathBuf], out: &Path, id: Option<String>) -> CmdResult {
    if id.is_some() && videos.len() != 1 {
        return Err(usage(anyhow!("--id needs exactly one input video")));
    }
    let ids: Vec<String> = match id {
        Some(id) => vec![id],
        None => videos.iter().map(|p| video_id(p)).collect::<anyhow::Result<_>>().map_err(usage)?,
    };
    let mut seen = BTreeMap::new();
    for (i, v) in ids.iter().zip(videos) {
        if let Some(prev) = seen.insert(i.clone(), v) {
            return Err(usage(anyhow!(
                "video id {i:?} used by both {} and {}",
                prev.display(),
                v.display()
            )));
        }
    }

    let tensors: Vec<VifFeatureTensor> = videos
        .par_iter()
        .map(|p| extract_one(cfg, p))
        .collect::<anyhow::Result<_>>()?;

    let approach = cfg.approach();
    let mut rows: Vec<(String, VifFeatureTensor)> = ids.iter().cloned().zip(tensors).collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let reports: Vec<VideoReport> = rows
        .iter()
        .map(|(id, t)| {
            let mut warnings = Vec::new();
            if !t.has_temporal() {
                warnings.push(format!(
                    "single-frame video: frame-difference features absent{}",
                    if approach.needs_temporal() {
                        format!(", approach {approach} cannot be assembled")
                    } else {
                        String::new()
                    }
                ));
            }
            for w in &warnings {
                eprintln!("warning: {id}: {w}");
            }
            VideoReport {
                video_id: id.clone(),
                path: seen[id].display().to_string(),
                frames: t.frame_count,
                warnings,
            }
        })
        .collect();

    let mut buf = Vec::new();
    write_tensor_csv(&mut buf, &rows)?;
    write_atomic(out, &buf).with_context(|| format!("writing {}", out.display()))?;
    let report_path = sibling(out, "report.json");
    write_atomic(&report_path, serde_json::to_string_pretty(&reports)?.as_bytes())?;
    cfg.write_beside(out)?;
    Ok(())
}
