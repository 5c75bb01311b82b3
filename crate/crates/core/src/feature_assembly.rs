//! The nine regression feature sets.
//!
//! Every set is `[vif features of F_i] [temporal terms] [log2 b, w/3840, h/3840]`
//! where the spatial granularity cycles per-scale / per-band / per-eigenvector
//! and the temporal terms grow from none, to mean `|D_i|`, to mean `|D_i|` plus
//! the same-granularity features of `D_i`:
//!
//! | approach | spatial | temporal | length |
//! |---|---|---|---|
//! | 1 | `I_k` | - | 7 |
//! | 2 | `I_{k,b}` | - | 11 |
//! | 3 | `I_{k,b}^j` | - | 75 |
//! | 4 | `I_k` | `|D|` | 8 |
//! | 5 | `I_{k,b}` | `|D|` | 12 |
//! | 6 | `I_{k,b}^j` | `|D|` | 76 |
//! | 7 | `I_k` | `|D|`, `I_k[D]` | 12 |
//! | 8 | `I_{k,b}` | `|D|`, `I_{k,b}[D]` | 20 |
//! | 9 | `I_{k,b}^j` | `|D|`, `I_{k,b}^j[D]` | 148 |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm_vif::{FrameVifFeatures, VifFeatureTensor, BLOCK_DIM};
use crate::pyramid::{NUM_BANDS, NUM_SCALES};

/// Width and height are divided by this.
pub const REFERENCE_DIM: f64 = 3840.0;
const MAX_WIDTH: u32 = 3840;
const MAX_HEIGHT: u32 = 2160;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Granularity {
    Scale,
    Band,
    Eigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Temporal {
    None,
    Motion,
    MotionAndDiff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Approach(u8);

impl Approach {
    pub const ALL: [Approach; 9] = [
        Approach(1),
        Approach(2),
        Approach(3),
        Approach(4),
        Approach(5),
        Approach(6),
        Approach(7),
        Approach(8),
        Approach(9),
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=9).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::UnknownApproach(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    fn granularity(self) -> Granularity {
        match (self.0 - 1) % 3 {
            0 => Granularity::Scale,
            1 => Granularity::Band,
            _ => Granularity::Eigen,
        }
    }

    fn temporal(self) -> Temporal {
        match (self.0 - 1) / 3 {
            0 => Temporal::None,
            1 => Temporal::Motion,
            _ => Temporal::MotionAndDiff,
        }
    }

    /// Whether the set needs frame differences (motion or diff features).
    pub fn needs_temporal(self) -> bool {
        self.temporal() != Temporal::None
    }

    fn spatial_len(self) -> usize {
        match self.granularity() {
            Granularity::Scale => NUM_SCALES,
            Granularity::Band => NUM_SCALES * NUM_BANDS,
            Granularity::Eigen => NUM_SCALES * NUM_BANDS * BLOCK_DIM,
        }
    }

    pub fn feature_len(self) -> usize {
        let s = self.spatial_len();
        let t = match self.temporal() {
            Temporal::None => 0,
            Temporal::Motion => 1,
            Temporal::MotionAndDiff => 1 + s,
        };
        s + t + 3
    }

    /// Column names in assembly order.
    pub fn column_names(self) -> Vec<String> {
        let spatial = |prefix: &str| -> Vec<String> {
            let mut v = Vec::new();
            match self.granularity() {
                Granularity::Scale => {
                    for k in 1..=NUM_SCALES {
                        v.push(format!("{prefix}_scale_k{k}"));
                    }
                }
                Granularity::Band => {
                    for k in 1..=NUM_SCALES {
                        for b in 1..=NUM_BANDS {
                            v.push(format!("{prefix}_band_k{k}_b{b}"));
                        }
                    }
                }
                Granularity::Eigen => {
                    for k in 1..=NUM_SCALES {
                        for b in 1..=NUM_BANDS {
                            for j in 1..=BLOCK_DIM {
                                v.push(format!("{prefix}_eig_k{k}_b{b}_j{j}"));
                            }
                        }
                    }
                }
            }
            v
        };
        let mut cols = spatial("f");
        match self.temporal() {
            Temporal::None => {}
            Temporal::Motion => cols.push("motion".into()),
            Temporal::MotionAndDiff => {
                cols.push("motion".into());
                cols.extend(spatial("d"));
            }
        }
        cols.extend(["log2_bitrate".into(), "width_norm".into(), "height_norm".into()]);
        cols
    }

    fn push_spatial(self, out: &mut Vec<f64>, f: &FrameVifFeatures) {
        match self.granularity() {
            Granularity::Scale => out.extend_from_slice(&f.per_scale),
            Granularity::Band => f.per_band.iter().for_each(|k| out.extend_from_slice(k)),
            Granularity::Eigen => f
                .per_eig
                .iter()
                .flatten()
                .for_each(|b| out.extend_from_slice(b)),
        }
    }
}

impl TryFrom<u8> for Approach {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Approach::new(v)
    }
}

impl From<Approach> for u8 {
    fn from(a: Approach) -> u8 {
        a.0
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeMeta {
    pub bitrate_bps: f64,
    pub width: u32,
    pub height: u32,
}

/// `(log2(bitrate_bps), width / 3840, height / 3840)`.
pub fn normalize_meta(meta: &EncodeMeta) -> Result<[f64; 3]> {
    if !(meta.bitrate_bps > 0.0) || !meta.bitrate_bps.is_finite() {
        return Err(Error::NonpositiveBitrate(meta.bitrate_bps));
    }
    if meta.width == 0 || meta.height == 0 || meta.width > MAX_WIDTH || meta.height > MAX_HEIGHT {
        return Err(Error::InvalidMeta(format!(
            "{}x{} outside 1..={MAX_WIDTH} x 1..={MAX_HEIGHT}",
            meta.width, meta.height
        )));
    }
    Ok([
        meta.bitrate_bps.log2(),
        f64::from(meta.width) / REFERENCE_DIM,
        f64::from(meta.height) / REFERENCE_DIM,
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub approach: Approach,
    pub values: Vec<f64>,
    /// VMAF / 100 when known.
    pub target: Option<f64>,
}

pub fn assemble(approach: Approach, vif: &VifFeatureTensor, meta: &EncodeMeta) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(approach.feature_len());
    approach.push_spatial(&mut values, &vif.frame_feats);
    match approach.temporal() {
        Temporal::None => {}
        Temporal::Motion | Temporal::MotionAndDiff => {
            let diff = vif
                .diff_feats
                .as_ref()
                .ok_or(Error::MissingDiffFeatures(approach.id()))?;
            values.push(vif.motion);
            if approach.temporal() == Temporal::MotionAndDiff {
                approach.push_spatial(&mut values, diff);
            }
        }
    }
    values.extend(normalize_meta(meta)?);
    debug_assert_eq!(values.len(), approach.feature_len());
    Ok(FeatureVector {
        approach,
        values,
        target: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm_vif::FRAME_FEATURE_LEN;

    fn tensor(with_diff: bool) -> VifFeatureTensor {
        let f: Vec<f64> = (0..FRAME_FEATURE_LEN).map(|i| i as f64).collect();
        let d: Vec<f64> = (0..FRAME_FEATURE_LEN).map(|i| 1000.0 + i as f64).collect();
        VifFeatureTensor {
            frame_count: if with_diff { 2 } else { 1 },
            frame_feats: FrameVifFeatures::from_slice(&f).unwrap(),
            diff_feats: with_diff.then(|| FrameVifFeatures::from_slice(&d).unwrap()),
            motion: if with_diff { 7.5 } else { 0.0 },
        }
    }

    const META: EncodeMeta = EncodeMeta {
        bitrate_bps: 2_097_152.0,
        width: 1920,
        height: 1080,
    };

    #[test]
    fn lengths_match_table() {
        let want = [7, 11, 75, 8, 12, 76, 12, 20, 148];
        for (a, n) in Approach::ALL.iter().zip(want) {
            assert_eq!(a.feature_len(), n);
            assert_eq!(a.column_names().len(), n);
            assert_eq!(assemble(*a, &tensor(true), &META).unwrap().values.len(), n);
        }
    }

    #[test]
    fn unknown_approach() {
        assert!(matches!(Approach::new(0), Err(Error::UnknownApproach(0))));
        assert!(matches!(Approach::new(10), Err(Error::UnknownApproach(10))));
    }

    #[test]
    fn meta_normalization() {
        let [lb, w, h] = normalize_meta(&META).unwrap();
        assert_eq!(lb, 21.0);
        assert_eq!(w, 0.5);
        assert_eq!(h, 0.28125);
        let m = EncodeMeta {
            bitrate_bps: 2_000_000.0,
            ..META
        };
        let lb = normalize_meta(&m).unwrap()[0];
        // 2e6 = 2^21 * 0.95367431640625
        assert!((lb - (21.0 + 0.95367431640625f64.ln() / 2f64.ln())).abs() < 1e-12);
        assert!((lb - 20.9316).abs() < 1e-4);
        assert!(matches!(
            normalize_meta(&EncodeMeta {
                bitrate_bps: 0.0,
                ..META
            }),
            Err(Error::NonpositiveBitrate(_))
        ));
        assert!(normalize_meta(&EncodeMeta {
            width: 4096,
            ..META
        })
        .is_err());
    }

    #[test]
    fn temporal_sets_need_diffs() {
        for a in Approach::ALL {
            let r = assemble(a, &tensor(false), &META);
            if a.needs_temporal() {
                assert!(matches!(r, Err(Error::MissingDiffFeatures(_))));
            } else {
                assert!(r.is_ok());
            }
        }
    }

    #[test]
    fn slots_come_from_documented_inputs() {
        let t = tensor(true);
        let v8 = assemble(Approach(8), &t, &META).unwrap().values;
        assert_eq!(&v8[..8], &[72.0, 73.0, 74.0, 75.0, 76.0, 77.0, 78.0, 79.0]);
        assert_eq!(v8[8], 7.5);
        assert_eq!(v8[9], 1072.0);
        assert_eq!(&v8[17..], &[21.0, 0.5, 0.28125]);
        let v1 = assemble(Approach(1), &t, &META).unwrap().values;
        assert_eq!(&v1[..4], &[80.0, 81.0, 82.0, 83.0]);
        let v9 = assemble(Approach(9), &t, &META).unwrap().values;
        assert_eq!(v9[..72], (0..72).map(f64::from).collect::<Vec<_>>()[..]);
        assert_eq!(v9[73], 1000.0);
        let names = Approach(8).column_names();
        assert_eq!(names[8], "motion");
        assert_eq!(names[9], "d_band_k1_b1");
        assert_eq!(names[19], "height_norm");
    }

    #[test]
    fn meta_changes_leave_vif_slots_alone() {
        let t = tensor(true);
        let other = EncodeMeta {
            bitrate_bps: 300_000.0,
            width: 640,
            height: 360,
        };
        for a in Approach::ALL {
            let x = assemble(a, &t, &META).unwrap().values;
            let y = assemble(a, &t, &other).unwrap().values;
            let n = x.len() - 3;
            assert!(x[..n]
                .iter()
                .zip(&y[..n])
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
