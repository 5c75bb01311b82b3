//! Bitrate ladders: predicted (argmax of a quality grid plus monotonic
//! correction), fixed (a configured table) and reference (exhaustive
//! encoding), all realized against a measured encode log.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::EncodeRecord;
use crate::error::{Error, Result};
use crate::feature_assembly::{assemble, EncodeMeta};
use crate::gsm_vif::VifFeatureTensor;
use crate::regressor::ExtraTreesModel;
use crate::resolution::Resolution;

/// Default rung bitrates in bits per second.
pub const DEFAULT_RUNGS_BPS: [f64; 12] = [
    250_000.0,
    500_000.0,
    1_000_000.0,
    2_000_000.0,
    3_000_000.0,
    4_000_000.0,
    5_000_000.0,
    6_000_000.0,
    7_000_000.0,
    8_000_000.0,
    9_000_000.0,
    10_500_000.0,
];

pub const LADDER_CSV_HEADER: [&str; 6] = ["rung_bps", "width", "height", "crf", "realized_bps", "vmaf"];

/// Target bitrates, strictly increasing and positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RungSpec(Vec<f64>);

impl RungSpec {
    pub fn new(bitrates_bps: Vec<f64>) -> Result<Self> {
        if bitrates_bps.is_empty() {
            return Err(Error::Range("rung list is empty".into()));
        }
        if let Some(b) = bitrates_bps.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::NonpositiveBitrate(*b));
        }
        if bitrates_bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Range("rung bitrates must be strictly increasing".into()));
        }
        Ok(Self(bitrates_bps))
    }

    pub fn bitrates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for RungSpec {
    fn default() -> Self {
        Self(DEFAULT_RUNGS_BPS.to_vec())
    }
}

impl TryFrom<Vec<f64>> for RungSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RungSpec> for Vec<f64> {
    fn from(r: RungSpec) -> Self {
        r.0
    }
}

/// Predicted quality (VMAF / 100) for every resolution and rung.
/// Resolutions are held in ascending order; `values[r][i]` is resolution
/// `r` at rung `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityGrid {
    pub resolutions: Vec<Resolution>,
    pub rungs: RungSpec,
    pub values: Vec<Vec<f64>>,
}

impl QualityGrid {
    /// Builds a grid, sorting resolutions ascending together with their rows.
    pub fn new(resolutions: Vec<Resolution>, rungs: RungSpec, values: Vec<Vec<f64>>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::Range("no resolutions".into()));
        }
        if values.len() != resolutions.len() || values.iter().any(|r| r.len() != rungs.len()) {
            return Err(Error::ShapeMismatch(format!(
                "grid must be {} x {}",
                resolutions.len(),
                rungs.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Range("non-finite grid value".into()));
        }
        let mut rows: Vec<(Resolution, Vec<f64>)> = resolutions.into_iter().zip(values).collect();
        rows.sort_by_key(|(r, _)| *r);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateKey("resolution listed twice".into()));
        }
        let (resolutions, values) = rows.into_iter().unzip();
        Ok(Self {
            resolutions,
            rungs,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            resolutions: self.resolutions.clone(),
            rungs: self.rungs.clone(),
            values: self.values.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect(),
        }
    }
}

/// Predicts quality for every (resolution, rung) pair from one video's
/// feature tensor.
pub fn predict_quality_grid(
    model: &ExtraTreesModel,
    vif: &VifFeatureTensor,
    resolutions: &[Resolution],
    rungs: &RungSpec,
) -> Result<QualityGrid> {
    let approach = model.layout.approach.ok_or_else(|| {
        Error::LayoutMismatch("model was not trained on an approach layout".into())
    })?;
    if resolutions.is_empty() {
        return Err(Error::Range("no resolutions".into()));
    }
    let values = resolutions
        .iter()
        .map(|res| {
            rungs
                .bitrates()
                .iter()
                .map(|&bitrate_bps| {
                    let meta = EncodeMeta {
                        bitrate_bps,
                        width: res.width,
                        height: res.height,
                    };
                    model.predict(&assemble(approach, vif, &meta)?)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    QualityGrid::new(resolutions.to_vec(), rungs.clone(), values)
}

/// Per rung, the resolution with the highest predicted quality; ties go to
/// the smaller resolution.
pub fn select_ladder(grid: &QualityGrid) -> Vec<Resolution> {
    (0..grid.rungs.len())
        .map(|i| {
            let mut best = 0;
            for r in 1..grid.resolutions.len() {
                if grid.values[r][i] > grid.values[best][i] {
                    best = r;
                }
            }
            grid.resolutions[best]
        })
        .collect()
}

/// Scans from the highest rung down, capping each choice at the corrected
/// choice of the rung above it.
pub fn monotonic_correct(choices: &[Resolution]) -> Vec<Resolution> {
    let mut out = choices.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].min(out[i + 1]);
    }
    out
}

pub fn is_monotone(choices: &[Resolution]) -> bool {
    choices.windows(2).all(|w| w[0] <= w[1])
}

/// A measured rate-quality point from the encode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub width: u32,
    pub height: u32,
    pub crf: u32,
    pub bitrate_bps: f64,
    pub vmaf: f64,
}

impl RdPoint {
    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.width, self.height)
    }
}

impl From<&EncodeRecord> for RdPoint {
    fn from(r: &EncodeRecord) -> Self {
        Self {
            width: r.width,
            height: r.height,
            crf: r.crf,
            bitrate_bps: r.bitrate_bps,
            vmaf: r.vmaf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub rung_bps: f64,
    pub point: RdPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Predicted,
    Fixed,
    Reference,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Predicted => "predicted",
            Provenance::Fixed => "fixed",
            Provenance::Reference => "reference",
        })
    }
}

/// Rungs ascending by target bitrate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub provenance: Provenance,
    pub rungs: Vec<LadderRung>,
}

impl Ladder {
    pub fn resolutions(&self) -> Vec<Resolution> {
        self.rungs.iter().map(|r| r.point.resolution()).collect()
    }

    pub fn is_monotone(&self) -> bool {
        is_monotone(&self.resolutions())
    }

    /// Realized `(bitrate_bps, vmaf)` pairs.
    pub fn rq_points(&self) -> Vec<(f64, f64)> {
        self.rungs
            .iter()
            .map(|r| (r.point.bitrate_bps, r.point.vmaf))
            .collect()
    }

    pub fn summary(&self, video_id: &str, corrected: bool) -> LadderSummary {
        let n = self.rungs.len().max(1) as f64;
        LadderSummary {
            video_id: video_id.to_string(),
            provenance: self.provenance,
            rungs: self.rungs.len(),
            monotone: self.is_monotone(),
            corrected,
            mean_vmaf: self.rungs.iter().map(|r| r.point.vmaf).sum::<f64>() / n,
            resolutions: self.resolutions().iter().map(|r| r.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSummary {
    pub video_id: String,
    pub provenance: Provenance,
    pub rungs: usize,
    pub monotone: bool,
    pub corrected: bool,
    pub mean_vmaf: f64,
    pub resolutions: Vec<String>,
}

fn single_video(log: &[EncodeRecord]) -> Result<()> {
    if let Some(first) = log.first() {
        if let Some(other) = log.iter().find(|r| r.video_id != first.video_id) {
            return Err(Error::Schema(format!(
                "encode log mixes videos {:?} and {:?}",
                first.video_id, other.video_id
            )));
        }
    }
    Ok(())
}

/// The record at `res` whose bitrate is closest to `target_bps` in log2
/// distance; ties go to the lower bitrate.
pub fn closest_point(log: &[EncodeRecord], res: Resolution, target_bps: f64) -> Option<&EncodeRecord> {
    let t = target_bps.log2();
    log.iter()
        .filter(|r| r.resolution() == res)
        .min_by(|a, b| {
            let da = (a.bitrate_bps.log2() - t).abs();
            let db = (b.bitrate_bps.log2() - t).abs();
            da.total_cmp(&db)
                .then(a.bitrate_bps.total_cmp(&b.bitrate_bps))
                .then(a.crf.cmp(&b.crf))
        })
}

/// Maps each rung's chosen resolution to its closest measured point.
pub fn realize_ladder(
    choices: &[Resolution],
    rungs: &RungSpec,
    log: &[EncodeRecord],
    provenance: Provenance,
) -> Result<Ladder> {
    if choices.len() != rungs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} choices for {} rungs",
            choices.len(),
            rungs.len()
        )));
    }
    single_video(log)?;
    let rungs = choices
        .iter()
        .zip(rungs.bitrates())
        .map(|(&res, &rung_bps)| {
            let rec = closest_point(log, res, rung_bps).ok_or(Error::NoPointsForResolution {
                rung_bps,
                width: res.width,
                height: res.height,
            })?;
            Ok(LadderRung {
                rung_bps,
                point: rec.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ladder { provenance, rungs })
}

/// Distinct resolutions present in the log, ascending.
pub fn log_resolutions(log: &[EncodeRecord]) -> Vec<Resolution> {
    let mut v: Vec<Resolution> = log.iter().map(EncodeRecord::resolution).collect();
    v.sort();
    v.dedup();
    v
}

/// Per rung, the resolution whose closest point has the highest measured
/// VMAF (ties to the smaller resolution), before any correction.
pub fn reference_choices(log: &[EncodeRecord], rungs: &RungSpec) -> Result<Vec<Resolution>> {
    single_video(log)?;
    let resolutions = log_resolutions(log);
    if resolutions.is_empty() {
        return Err(Error::EmptyInput("encode log has no records".into()));
    }
    Ok(rungs
        .bitrates()
        .iter()
        .map(|&b| {
            let mut best: Option<(Resolution, f64)> = None;
            for &res in &resolutions {
                let vmaf = closest_point(log, res, b).map(|r| r.vmaf).unwrap_or(f64::NEG_INFINITY);
                if best.is_none_or(|(_, v)| vmaf > v) {
                    best = Some((res, vmaf));
                }
            }
            best.expect("at least one resolution").0
        })
        .collect())
}

/// The exhaustive-encoding ladder; `correct` applies monotonic correction
/// before realizing.
pub fn reference_ladder(log: &[EncodeRecord], rungs: &RungSpec, correct: bool) -> Result<Ladder> {
    let mut choices = reference_choices(log, rungs)?;
    if correct {
        choices = monotonic_correct(&choices);
    }
    realize_ladder(&choices, rungs, log, Provenance::Reference)
}

/// The full predicted-ladder pipeline for one video.
pub fn predicted_ladder(grid: &QualityGrid, log: &[EncodeRecord], correct: bool) -> Result<Ladder> {
    let mut choices = select_ladder(grid);
    if correct {
        choices = monotonic_correct(&choices);
    }
    realize_ladder(&choices, &grid.rungs, log, Provenance::Predicted)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedRung {
    pub bitrate_bps: f64,
    pub width: u32,
    pub height: u32,
}

/// A fixed bitrate/resolution table, read from TOML:
///
/// ```toml
/// name = "hls"
/// [[rung]]
/// bitrate_bps = 6000000
/// width = 1920
/// height = 1080
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedLadderConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, rename = "rung")]
    pub rungs: Vec<FixedRung>,
}

impl FixedLadderConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("fixed ladder config serializes")
    }

    /// Every rung at one resolution.
    pub fn uniform(rungs: &RungSpec, res: Resolution) -> Self {
        Self {
            name: format!("uniform {res}"),
            source: String::new(),
            rungs: rungs
                .bitrates()
                .iter()
                .map(|&bitrate_bps| FixedRung {
                    bitrate_bps,
                    width: res.width,
                    height: res.height,
                })
                .collect(),
        }
    }

    pub fn rung_spec(&self) -> Result<RungSpec> {
        RungSpec::new(self.rungs.iter().map(|r| r.bitrate_bps).collect())
    }

    pub fn choices(&self) -> Vec<Resolution> {
        self.rungs.iter().map(|r| Resolution::new(r.width, r.height)).collect()
    }
}

pub fn fixed_ladder(config: &FixedLadderConfig, log: &[EncodeRecord]) -> Result<Ladder> {
    if config.rungs.is_empty() {
        return Err(Error::ConfigMissing("fixed ladder config has no rungs".into()));
    }
    realize_ladder(&config.choices(), &config.rung_spec()?, log, Provenance::Fixed)
}

pub fn write_ladder_csv<W: Write>(out: W, ladder: &Ladder) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LADDER_CSV_HEADER)?;
    for r in &ladder.rungs {
        w.write_record([
            r.rung_bps.to_string(),
            r.point.width.to_string(),
            r.point.height.to_string(),
            r.point.crf.to_string(),
            r.point.bitrate_bps.to_string(),
            r.point.vmaf.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct LadderRow {
    rung_bps: f64,
    width: u32,
    height: u32,
    crf: u32,
    realized_bps: f64,
    vmaf: f64,
}

pub fn read_ladder_csv<R: Read>(input: R, provenance: Provenance) -> Result<Ladder> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != LADDER_CSV_HEADER {
        return Err(Error::Schema(format!(
            "ladder header {header:?}, expected {LADDER_CSV_HEADER:?}"
        )));
    }
    let mut rungs = Vec::new();
    for row in r.deserialize::<LadderRow>() {
        let row = row.map_err(|e| Error::Schema(e.to_string()))?;
        if !(row.realized_bps > 0.0) || !(0.0..=100.0).contains(&row.vmaf) {
            return Err(Error::Range(format!(
                "ladder row at rung {}: bitrate {} vmaf {}",
                row.rung_bps, row.realized_bps, row.vmaf
            )));
        }
        rungs.push(LadderRung {
            rung_bps: row.rung_bps,
            point: RdPoint {
                width: row.width,
                height: row.height,
                crf: row.crf,
                bitrate_bps: row.realized_bps,
                vmaf: row.vmaf,
            },
        });
    }
    if rungs.windows(2).any(|w| w[0].rung_bps >= w[1].rung_bps) {
        return Err(Error::Schema("ladder rungs must be strictly increasing".into()));
    }
    Ok(Ladder { provenance, rungs })
}
