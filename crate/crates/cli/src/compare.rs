//! `compare`: BD report for one pair of ladders or a corpus of pairs.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ladderforge::bd_metrics::{aggregate, compare, write_report_csv, ReportRow, RqCurve};
use ladderforge::ladder::{read_ladder_csv, Provenance};
use ladderforge::write_atomic;
use serde::{Deserialize, Serialize};

use crate::config::sibling;
use crate::failure::{usage, CmdResult};

fn label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn curve(path: &Path) -> anyhow::Result<RqCurve> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ladder = read_ladder_csv(f, Provenance::Predicted).with_context(|| format!("reading {}", path.display()))?;
    RqCurve::new(&ladder.rq_points()).with_context(|| format!("ladder {}", path.display()))
}

#[derive(Deserialize)]
struct Pair {
    video_id: String,
    test: PathBuf,
    anchor: PathBuf,
}

#[derive(Serialize)]
struct Summary {
    pairs: usize,
    with_bd_rate: usize,
    with_bd_vmaf: usize,
    bd_rate_mean: Option<f64>,
    bd_rate_std: Option<f64>,
    bd_vmaf_mean: Option<f64>,
    bd_vmaf_std: Option<f64>,
    table: Option<String>,
}

pub fn run(test: Option<PathBuf>, anchor: Option<PathBuf>, pairs: Option<PathBuf>, video: String, out: &Path) -> CmdResult {
    let jobs: Vec<Pair> = match (test, anchor, pairs) {
        (Some(test), Some(anchor), None) => vec![Pair {
            video_id: video,
            test,
            anchor,
        }],
        (None, None, Some(list)) => {
            let base = list.parent().map(Path::to_path_buf).unwrap_or_default();
            let f = File::open(&list).with_context(|| format!("opening {}", list.display()))?;
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
            let mut v = Vec::new();
            for p in r.deserialize::<Pair>() {
                let p = p.with_context(|| format!("reading {}", list.display()))?;
                v.push(Pair {
                    video_id: p.video_id,
                    test: base.join(p.test),
                    anchor: base.join(p.anchor),
                });
            }
            v
        }
        _ => return Err(usage(anyhow!("pass TEST and ANCHOR ladders, or --pairs"))),
    };
    if jobs.is_empty() {
        return Err(anyhow!("no ladder pairs to compare").into());
    }

    let mut rows = Vec::with_capacity(jobs.len());
    for j in &jobs {
        let result = compare(&curve(&j.test)?, &curve(&j.anchor)?)?;
        for w in &result.warnings {
            eprintln!("warning: {}: {w}", j.video_id);
        }
        rows.push(ReportRow {
            video_id: j.video_id.clone(),
            test: label(&j.test),
            anchor: label(&j.anchor),
            result,
        });
    }
    let mut buf = Vec::new();
    write_report_csv(&mut buf, &rows)?;
    write_atomic(out, &buf).with_context(|| format!("writing {}", out.display()))?;

    let results: Vec<_> = rows.iter().map(|r| r.result.clone()).collect();
    let agg = aggregate(&results).ok();
    let summary = Summary {
        pairs: rows.len(),
        with_bd_rate: results.iter().filter(|r| r.bd_rate_percent.is_some()).count(),
        with_bd_vmaf: results.iter().filter(|r| r.bd_quality.is_some()).count(),
        bd_rate_mean: agg.map(|a| a.bd_rate.mean),
        bd_rate_std: agg.map(|a| a.bd_rate.std),
        bd_vmaf_mean: agg.map(|a| a.bd_quality.mean),
        bd_vmaf_std: agg.map(|a| a.bd_quality.std),
        table: agg.map(|a| format!("BD-rate {}%  BD-VMAF {}", a.bd_rate, a.bd_quality)),
    };
    match &summary.table {
        Some(t) => println!("{t}"),
        None => eprintln!("warning: no pair produced both metrics; summary left empty"),
    }
    write_atomic(&sibling(out, "summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(())
}
