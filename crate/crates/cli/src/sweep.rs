//! `encode-sweep`: runs an external encoder over every (resolution, crf)
//! cell and collects the results into an encode log.
//!
//! The command template is run with `sh -c` after substituting `{input}`,
//! `{output}`, `{width}`, `{height}`, `{crf}`. Paths are substituted
//! single-quoted. The command must print `bitrate_bps=<n> vmaf=<x>` on a
//! line of stdout; the last such line wins.
//!
//! The log is rewritten after every finished cell, so an interrupted sweep
//! resumes where it stopped. Cells that fail are listed in
//! `<out>.failures.json` and the command exits with the external-failure
//! code once the remaining cells are done.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use ladderforge::dataset::{parse_encode_log, write_encode_log, EncodeRecord, CRF_MAX, CRF_MIN};
use ladderforge::{write_atomic, Resolution};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{sibling, RunConfig};
use crate::failure::{data, external, usage, CmdResult};

pub const REQUIRED_PLACEHOLDERS: [&str; 4] = ["{input}", "{width}", "{height}", "{crf}"];
const COMMAND_COMMENT: &str = "command: ";

pub struct Args {
    pub video: PathBuf,
    pub id: Option<String>,
    pub out: PathBuf,
    pub command: Option<String>,
    pub workers: Option<usize>,
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CellFailure {
    width: u32,
    height: u32,
    crf: u32,
    status: Option<i32>,
    reason: String,
    stderr: String,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

pub fn validate_template(t: &str) -> anyhow::Result<()> {
    let missing: Vec<&str> = REQUIRED_PLACEHOLDERS.iter().copied().filter(|p| !t.contains(p)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("encoder command template is missing {}", missing.join(", ")))
    }
}

fn render(t: &str, input: &Path, output: &Path, res: Resolution, crf: u32) -> String {
    t.replace("{input}", &shell_quote(&input.to_string_lossy()))
        .replace("{output}", &shell_quote(&output.to_string_lossy()))
        .replace("{width}", &res.width.to_string())
        .replace("{height}", &res.height.to_string())
        .replace("{crf}", &crf.to_string())
}

/// `(bitrate_bps, vmaf)` from the last line of `stdout` carrying both keys.
pub fn parse_measurement(stdout: &str) -> Option<(f64, f64)> {
    stdout.lines().rev().find_map(|line| {
        let mut bitrate = None;
        let mut vmaf = None;
        for tok in line.split_whitespace() {
            if let Some(v) = tok.strip_prefix("bitrate_bps=") {
                bitrate = v.parse::<f64>().ok();
            } else if let Some(v) = tok.strip_prefix("vmaf=") {
                vmaf = v.parse::<f64>().ok();
            }
        }
        Some((bitrate?, vmaf?))
    })
}

/// Template recorded in an existing log's header comments.
fn recorded_template(path: &Path) -> anyhow::Result<Option<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim_start().strip_prefix(COMMAND_COMMENT).map(String::from)))
}

fn run_cell(template: &str, input: &Path, work_dir: &Path, id: &str, res: Resolution, crf: u32) -> Result<EncodeRecord, CellFailure> {
    let output = work_dir.join(format!("{id}_{}x{}_crf{crf}", res.width, res.height));
    let cmd = render(template, input, &output, res, crf);
    let fail = |status, reason: String, stderr: String| CellFailure {
        width: res.width,
        height: res.height,
        crf,
        status,
        reason,
        stderr,
    };
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| fail(None, format!("could not start sh: {e}"), String::new()))?;
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    if !out.status.success() {
        return Err(fail(out.status.code(), "command failed".into(), stderr));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let Some((bitrate_bps, vmaf)) = parse_measurement(&stdout) else {
        return Err(fail(out.status.code(), "no bitrate_bps=/vmaf= line on stdout".into(), stderr));
    };
    if !(bitrate_bps > 0.0 && bitrate_bps.is_finite()) || !(0.0..=100.0).contains(&vmaf) {
        return Err(fail(
            out.status.code(),
            format!("measurement out of range: bitrate_bps={bitrate_bps} vmaf={vmaf}"),
            stderr,
        ));
    }
    Ok(EncodeRecord {
        video_id: id.to_string(),
        width: res.width,
        height: res.height,
        crf,
        bitrate_bps,
        vmaf,
    })
}

fn write_log(out: &Path, template: &str, records: &mut [EncodeRecord], order: &[Resolution]) -> anyhow::Result<()> {
    let rank = |r: &EncodeRecord| order.iter().position(|x| *x == r.resolution()).unwrap_or(usize::MAX);
    records.sort_by(|a, b| (rank(a), a.crf).cmp(&(rank(b), b.crf)));
    let mut buf = Vec::new();
    let comments = ["ladderforge encode-sweep".to_string(), format!("{COMMAND_COMMENT}{template}")];
    write_encode_log(&mut buf, records, &comments)?;
    write_atomic(out, &buf).with_context(|| format!("writing {}", out.display()))
}

pub fn run(cfg: &RunConfig, args: &Args) -> CmdResult {
    let template = args
        .command
        .clone()
        .or_else(|| cfg.encoder.command.clone())
        .ok_or_else(|| usage(anyhow!("no encoder command: set [encoder] command in the config or pass --command")))?;
    validate_template(&template).map_err(usage)?;
    if template.contains('\n') {
        return Err(usage(anyhow!("encoder command template must be a single line")));
    }
    let (crf_min, crf_max) = (cfg.encoder.crf_min, cfg.encoder.crf_max);
    if crf_min < CRF_MIN || crf_max > CRF_MAX || crf_min > crf_max {
        return Err(usage(anyhow!("crf range {crf_min}..={crf_max} must lie within {CRF_MIN}..={CRF_MAX}")));
    }
    let workers = args.workers.unwrap_or(cfg.encoder.workers);
    if workers == 0 {
        return Err(usage(anyhow!("workers must be at least 1")));
    }
    if !args.video.is_file() {
        return Err(data(anyhow!("input video {} not found", args.video.display())));
    }
    let id = match &args.id {
        Some(id) => id.clone(),
        None => args
            .video
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| usage(anyhow!("cannot derive a video id from {}", args.video.display())))?,
    };
    let resolutions = cfg.resolution_list().map_err(usage)?;

    let mut records = Vec::new();
    if args.out.exists() {
        if let Some(prev) = recorded_template(&args.out)? {
            if prev != template {
                return Err(usage(anyhow!(
                    "{} was produced by a different command template: {prev}",
                    args.out.display()
                )));
            }
        }
        records = parse_encode_log(&args.out, &resolutions).with_context(|| format!("resuming {}", args.out.display()))?;
        if let Some(other) = records.iter().find(|r| r.video_id != id) {
            return Err(data(anyhow!("{} holds video {}, not {id}", args.out.display(), other.video_id)));
        }
    }
    let done: BTreeSet<(u32, u32, u32)> = records.iter().map(|r| (r.width, r.height, r.crf)).collect();
    let pending: Vec<(Resolution, u32)> = resolutions
        .iter()
        .flat_map(|&res| (crf_min..=crf_max).map(move |crf| (res, crf)))
        .filter(|(res, crf)| !done.contains(&(res.width, res.height, *crf)))
        .collect();

    let work_dir = args.work_dir.clone().unwrap_or_else(|| sibling(&args.out, "work"));
    fs::create_dir_all(&work_dir).with_context(|| format!("creating {}", work_dir.display()))?;
    let input = fs::canonicalize(&args.video)?;
    cfg.write_beside(&args.out)?;
    write_log(&args.out, &template, &mut records, &resolutions)?;
    eprintln!("{} cells done, {} to run with {workers} workers", done.len(), pending.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| data(anyhow!(e)))?;
    let state = Mutex::new((records, Vec::<CellFailure>::new(), None::<anyhow::Error>));
    pool.install(|| {
        pending.par_iter().for_each(|&(res, crf)| {
            let result = run_cell(&template, &input, &work_dir, &id, res, crf);
            let mut guard = state.lock().expect("sweep state lock");
            let (records, failures, write_err) = &mut *guard;
            match result {
                Ok(rec) => {
                    records.push(rec);
                    if let Err(e) = write_log(&args.out, &template, records, &resolutions) {
                        write_err.get_or_insert(e);
                    }
                }
                Err(f) => {
                    eprintln!("cell {}x{} crf {} failed: {}", f.width, f.height, f.crf, f.reason);
                    failures.push(f);
                }
            }
        })
    });
    let (_, mut failures, write_err) = state.into_inner().expect("sweep state lock");
    if let Some(e) = write_err {
        return Err(data(e));
    }

    let sidecar = sibling(&args.out, "failures.json");
    if failures.is_empty() {
        if sidecar.exists() {
            fs::remove_file(&sidecar)?;
        }
        return Ok(());
    }
    failures.sort_by_key(|f| (f.width, f.height, f.crf));
    write_atomic(&sidecar, serde_json::to_string_pretty(&failures)?.as_bytes())?;
    Err(external(anyhow!(
        "{} of {} cells failed; see {}",
        failures.len(),
        pending.len(),
        sidecar.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_needs_all_placeholders() {
        assert!(validate_template("enc {input} {width} {height} {crf}").is_ok());
        let err = validate_template("enc {input} {width} {height}").unwrap_err();
        assert!(err.to_string().contains("{crf}"));
    }

    #[test]
    fn substitution_quotes_paths() {
        let s = render(
            "x {input} -s {width}x{height} -q {crf} -o {output}",
            Path::new("/a b/it's.y4m"),
            Path::new("/w/o"),
            Resolution::new(640, 360),
            23,
        );
        assert_eq!(s, r"x '/a b/it'\''s.y4m' -s 640x360 -q 23 -o '/w/o'");
    }

    #[test]
    fn measurement_parsing() {
        assert_eq!(parse_measurement("noise\nbitrate_bps=1200 vmaf=87.5\n"), Some((1200.0, 87.5)));
        assert_eq!(
            parse_measurement("bitrate_bps=1 vmaf=2\nvmaf=3 bitrate_bps=4\ntrailer"),
            Some((4.0, 3.0))
        );
        assert_eq!(parse_measurement("bitrate_bps=1200"), None);
        assert_eq!(parse_measurement("bitrate_bps=abc vmaf=1"), None);
    }
}
