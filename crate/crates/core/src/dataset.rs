//! Encode logs, train/validation/test splits and training matrices.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_assembly::{assemble, Approach, EncodeMeta, FeatureVector};
use crate::gsm_vif::VifFeatureTensor;
use crate::resolution::Resolution;

pub const CRF_MIN: u32 = 18;
pub const CRF_MAX: u32 = 50;
pub const ENCODE_LOG_HEADER: [&str; 6] = ["video_id", "width", "height", "crf", "bitrate_bps", "vmaf"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeRecord {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub crf: u32,
    pub bitrate_bps: f64,
    pub vmaf: f64,
}

impl EncodeRecord {
    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.width, self.height)
    }

    pub fn meta(&self) -> EncodeMeta {
        EncodeMeta {
            bitrate_bps: self.bitrate_bps,
            width: self.width,
            height: self.height,
        }
    }

    fn key(&self) -> (String, u32, u32, u32) {
        (self.video_id.clone(), self.width, self.height, self.crf)
    }

    fn validate(&self, resolutions: &[Resolution], line: u64) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::Schema(format!("line {line}: empty video_id")));
        }
        if !resolutions.is_empty() && !resolutions.contains(&self.resolution()) {
            return Err(Error::Range(format!(
                "line {line}: resolution {} not in the configured set",
                self.resolution()
            )));
        }
        if !(CRF_MIN..=CRF_MAX).contains(&self.crf) {
            return Err(Error::Range(format!(
                "line {line}: crf {} outside {CRF_MIN}..={CRF_MAX}",
                self.crf
            )));
        }
        if !(0.0..=100.0).contains(&self.vmaf) {
            return Err(Error::Range(format!(
                "line {line}: vmaf {} outside [0, 100]",
                self.vmaf
            )));
        }
        if !(self.bitrate_bps > 0.0 && self.bitrate_bps.is_finite()) {
            return Err(Error::Range(format!(
                "line {line}: bitrate {} must be positive",
                self.bitrate_bps
            )));
        }
        Ok(())
    }
}

/// Parses an encode log. Lines starting with `#` are comments. When
/// `resolutions` is empty any resolution is accepted.
pub fn read_encode_log<R: Read>(input: R, resolutions: &[Resolution]) -> Result<Vec<EncodeRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != ENCODE_LOG_HEADER {
        return Err(Error::Schema(format!(
            "encode log header {header:?}, expected {ENCODE_LOG_HEADER:?}"
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in r.deserialize::<EncodeRecord>() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let line = out.len() as u64 + 2;
        rec.validate(resolutions, line)?;
        if !seen.insert(rec.key()) {
            return Err(Error::DuplicateKey(format!(
                "{} {}x{} crf {}",
                rec.video_id, rec.width, rec.height, rec.crf
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_encode_log(path: &Path, resolutions: &[Resolution]) -> Result<Vec<EncodeRecord>> {
    read_encode_log(BufReader::new(File::open(path)?), resolutions)
}

/// Writes an encode log; each `comments` entry becomes a `# ` line above the
/// header.
pub fn write_encode_log<W: Write>(mut out: W, records: &[EncodeRecord], comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(ENCODE_LOG_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups records by video id, preserving file order within each group.
pub fn group_by_video(records: &[EncodeRecord]) -> BTreeMap<String, Vec<EncodeRecord>> {
    let mut out: BTreeMap<String, Vec<EncodeRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.video_id.clone()).or_default().push(r.clone());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.1, 0.2];

impl SplitManifest {
    /// Checks pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, set) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            for id in set {
                if let Some(prev) = owner.insert(id, name) {
                    return Err(Error::InvalidSplit(format!(
                        "video {id:?} is in both {prev} and {name}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn role_of(&self, id: &str) -> Option<SplitRole> {
        let has = |v: &Vec<String>| v.iter().any(|x| x == id);
        if has(&self.train) {
            Some(SplitRole::Train)
        } else if has(&self.validation) {
            Some(SplitRole::Validation)
        } else if has(&self.test) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    /// Validation and test videos together.
    pub fn evaluation(&self) -> Vec<String> {
        let mut v: Vec<String> = self.validation.iter().chain(&self.test).cloned().collect();
        v.sort();
        v
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest is plain data")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let m: Self = toml::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Deterministic video-level split. Ids are sorted, shuffled with a seeded
/// ChaCha8 stream, then cut. Validation and test sizes are
/// `floor(n * fraction)`; the remainder goes to train.
pub fn make_split<S: AsRef<str>>(video_ids: &[S], seed: u64, fractions: [f64; 3]) -> Result<SplitManifest> {
    let mut ids: Vec<String> = video_ids
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < 3 {
        return Err(Error::TooFewVideos(ids.len()));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit(format!(
            "fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let n = ids.len();
    let take = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
    let n_val = take(fractions[1]);
    let n_test = take(fractions[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = n - n_val - n_test;
    let sorted = |s: &[String]| {
        let mut v = s.to_vec();
        v.sort();
        v
    };
    Ok(SplitManifest {
        seed,
        fractions,
        train: sorted(&ids[..n_train]),
        validation: sorted(&ids[n_train..n_train + n_val]),
        test: sorted(&ids[n_train + n_val..]),
    })
}

/// One feature row per record, with `target = vmaf / 100`.
pub fn build_training_matrix(
    records: &[EncodeRecord],
    tensors: &BTreeMap<String, VifFeatureTensor>,
    approach: Approach,
) -> Result<Vec<FeatureVector>> {
    records
        .iter()
        .map(|r| {
            let t = tensors
                .get(&r.video_id)
                .ok_or_else(|| Error::MissingTensor(r.video_id.clone()))?;
            let mut fv = assemble(approach, t, &r.meta())?;
            fv.target = Some(r.vmaf / 100.0);
            Ok(fv)
        })
        .collect()
}

/// Writes assembled feature rows with a versioned header
/// (`video_id`, feature columns, `target`).
pub fn write_feature_matrix_csv<W: Write>(
    out: W,
    approach: Approach,
    rows: &[(String, FeatureVector)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![format!("video_id@approach{approach}-v1")];
    header.extend(approach.column_names());
    header.push("target".into());
    w.write_record(&header)?;
    for (id, fv) in rows {
        if fv.approach != approach {
            return Err(Error::InconsistentLayout(format!(
                "row for {id} has approach {}",
                fv.approach
            )));
        }
        let mut rec = vec![id.clone()];
        rec.extend(fv.values.iter().map(|v| format!("{v:?}")));
        rec.push(fv.target.map(|t| format!("{t:?}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
