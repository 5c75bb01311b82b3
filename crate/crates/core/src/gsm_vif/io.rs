//! Tensor CSV rows and JSON sidecars.
//!
//! CSV column order: 84 frame features (`f_*`), 84 difference features
//! (`d_*`, empty for single-frame videos), `motion`, then the identifiers
//! `video_id`, `frame_count`, `layout`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FrameVifFeatures, VifConfig, VifFeatureTensor, FRAME_FEATURE_LEN};
use crate::error::{Error, Result};

pub const TENSOR_LAYOUT: &str = "vif-tensor-v1";
const SIDECAR_FORMAT: &str = "ladderforge-vif";
const SIDECAR_VERSION: u32 = 1;

pub fn tensor_csv_header() -> Vec<String> {
    let mut h = FrameVifFeatures::column_names("f");
    h.extend(FrameVifFeatures::column_names("d"));
    h.extend(["motion", "video_id", "frame_count", "layout"].map(String::from));
    h
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_tensor_csv<W: Write>(out: W, rows: &[(String, VifFeatureTensor)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(tensor_csv_header())?;
    for (id, t) in rows {
        let mut rec: Vec<String> = t.frame_feats.to_vec().into_iter().map(fmt_f64).collect();
        match &t.diff_feats {
            Some(d) => rec.extend(d.to_vec().into_iter().map(fmt_f64)),
            None => rec.extend(std::iter::repeat_n(String::new(), FRAME_FEATURE_LEN)),
        }
        rec.push(fmt_f64(t.motion));
        rec.push(id.clone());
        rec.push(t.frame_count.to_string());
        rec.push(TENSOR_LAYOUT.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor_csv<R: Read>(input: R) -> Result<Vec<(String, VifFeatureTensor)>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != tensor_csv_header() {
        return Err(Error::Schema(format!(
            "feature CSV columns do not match layout {TENSOR_LAYOUT}"
        )));
    }
    let parse = |s: &str, line: u64| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Schema(format!("line {line}: bad number {s:?}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let layout = &rec[2 * FRAME_FEATURE_LEN + 3];
        if layout != TENSOR_LAYOUT {
            return Err(Error::Schema(format!("line {line}: layout {layout:?}")));
        }
        let frame: Vec<f64> = (0..FRAME_FEATURE_LEN)
            .map(|i| parse(&rec[i], line))
            .collect::<Result<_>>()?;
        let diff_cells = &rec.iter().collect::<Vec<_>>()[FRAME_FEATURE_LEN..2 * FRAME_FEATURE_LEN];
        let diff = if diff_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let v: Vec<f64> = diff_cells
                .iter()
                .map(|c| parse(c, line))
                .collect::<Result<_>>()?;
            Some(FrameVifFeatures::from_slice(&v)?)
        };
        let motion = parse(&rec[2 * FRAME_FEATURE_LEN], line)?;
        let id = rec[2 * FRAME_FEATURE_LEN + 1].to_string();
        let frame_count = rec[2 * FRAME_FEATURE_LEN + 2]
            .parse()
            .map_err(|_| Error::Schema(format!("line {line}: bad frame_count")))?;
        out.push((
            id,
            VifFeatureTensor {
                frame_count,
                frame_feats: FrameVifFeatures::from_slice(&frame)?,
                diff_feats: diff,
                motion,
            },
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSidecar {
    pub format: String,
    pub version: u32,
    pub video_id: String,
    pub config: VifConfig,
    pub tensor: VifFeatureTensor,
}

impl TensorSidecar {
    pub fn new(video_id: &str, config: VifConfig, tensor: VifFeatureTensor) -> Self {
        Self {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            video_id: video_id.into(),
            config,
            tensor,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Self = serde_json::from_str(s)?;
        if v.format != SIDECAR_FORMAT || v.version != SIDECAR_VERSION {
            return Err(Error::Schema(format!(
                "sidecar {} v{} (expected {SIDECAR_FORMAT} v{SIDECAR_VERSION})",
                v.format, v.version
            )));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(seed: f64, diff: bool) -> VifFeatureTensor {
        let v: Vec<f64> = (0..FRAME_FEATURE_LEN).map(|i| seed + i as f64 / 7.0).collect();
        VifFeatureTensor {
            frame_count: if diff { 16 } else { 1 },
            frame_feats: FrameVifFeatures::from_slice(&v).unwrap(),
            diff_feats: diff.then(|| FrameVifFeatures::from_slice(&v).unwrap()),
            motion: if diff { seed * 0.1 } else { 0.0 },
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ("bee".to_string(), tensor(0.1, true)),
            ("still".to_string(), tensor(3.3, false)),
        ];
        let mut buf = Vec::new();
        write_tensor_csv(&mut buf, &rows).unwrap();
        let header_cols = String::from_utf8_lossy(&buf).lines().next().unwrap().split(',').count();
        assert_eq!(header_cols, 2 * FRAME_FEATURE_LEN + 1 + 3);
        assert_eq!(read_tensor_csv(&buf[..]).unwrap(), rows);
        let mut again = Vec::new();
        write_tensor_csv(&mut again, &read_tensor_csv(&buf[..]).unwrap()).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(
            read_tensor_csv(&b"a,b\n1,2\n"[..]),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn sidecar_round_trip() {
        let s = TensorSidecar::new("bee", VifConfig::default(), tensor(1.0, true));
        let back = TensorSidecar::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = s.to_json().unwrap().replace("\"version\": 1", "\"version\": 0");
        assert!(TensorSidecar::from_json(&bad).is_err());
    }
}
