//! Procedural test material: textured moving clips whose complexity is set by
//! a content parameter `kappa` in `[0, 1]`, and encode logs drawn from a
//! planted rate-quality surface that depends on the same parameter.
//!
//! The planted quality of resolution `r` at log2-rate `L` is
//! `100 * sigmoid(c_r - D * softplus(L_r - L))`, where both the ceiling `c_r`
//! and the knee `L_r` grow with pixel count and the knee also grows with
//! `kappa`. Because the knees share one slope, the per-rate best resolution
//! never decreases with rate.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{EncodeRecord, CRF_MAX, CRF_MIN};
use crate::error::Result;
use crate::media_io::{Chroma, FrameRate, VideoHeader, Y4mWriter};
use crate::resolution::Resolution;

const UHD_PIXELS: f64 = 3840.0 * 2160.0;
const GRATINGS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSpec {
    pub id: String,
    pub kappa: f64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
}

impl ClipSpec {
    pub fn new(id: impl Into<String>, kappa: f64, seed: u64) -> Self {
        Self {
            id: id.into(),
            kappa: kappa.clamp(0.0, 1.0),
            width: 160,
            height: 96,
            frames: 16,
            seed,
        }
    }

    pub fn header(&self) -> VideoHeader {
        VideoHeader {
            width: self.width,
            height: self.height,
            frame_rate: FrameRate { num: 30, den: 1 },
            bit_depth: 8,
            chroma: Chroma::C420,
        }
    }
}

/// `n` clips with stratified `kappa` values in a seed-dependent order.
pub fn corpus(n: usize, seed: u64) -> Vec<ClipSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kappas: Vec<f64> = (0..n).map(|i| (i as f64 + rng.gen::<f64>()) / n as f64).collect();
    for i in (1..n).rev() {
        kappas.swap(i, rng.gen_range(0..=i));
    }
    kappas
        .into_iter()
        .enumerate()
        .map(|(i, k)| ClipSpec::new(format!("clip{i:02}"), k, seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect()
}

struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
}

/// 8-bit luma code values, one vector per frame.
pub fn render_clip(spec: &ClipSpec) -> Vec<Vec<u16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.kappa;
    let gratings: Vec<Grating> = (0..GRATINGS)
        .map(|_| {
            let f = rng.gen_range(0.02..0.06 + 0.2 * k);
            let theta = rng.gen_range(0.0..TAU);
            Grating {
                fx: f * theta.cos(),
                fy: f * theta.sin(),
                phase: rng.gen_range(0.0..TAU),
            }
        })
        .collect();
    let amp = (0.04 + 0.3 * k) / (GRATINGS as f64).sqrt();
    let noise = 0.01 + 0.05 * k;
    let dir = rng.gen_range(0.0..TAU);
    let speed = 0.5 + 2.5 * k;
    let (vx, vy) = (speed * dir.cos(), speed * dir.sin());

    (0..spec.frames)
        .map(|t| {
            let (ox, oy) = (vx * t as f64, vy * t as f64);
            let mut codes = Vec::with_capacity(spec.width * spec.height);
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (px, py) = (x as f64 - ox, y as f64 - oy);
                    let s: f64 = gratings
                        .iter()
                        .map(|g| (TAU * (g.fx * px + g.fy * py) + g.phase).sin())
                        .sum();
                    let v = 0.5 + amp * s + noise * rng.gen_range(-1.0..1.0);
                    codes.push((v.clamp(0.0, 1.0) * 255.0).round() as u16);
                }
            }
            codes
        })
        .collect()
}

pub fn write_clip_y4m<W: Write>(spec: &ClipSpec, out: W) -> Result<W> {
    let mut w = Y4mWriter::new(out, spec.header())?;
    for frame in render_clip(spec) {
        w.write_frame(&frame)?;
    }
    Ok(w.into_inner())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn log_pixel_ratio(res: Resolution) -> f64 {
    (res.pixels() as f64 / UHD_PIXELS).log2().max(-6.0)
}

/// Planted VMAF for content `kappa` at `res` and `bitrate_bps`.
pub fn planted_vmaf(kappa: f64, res: Resolution, bitrate_bps: f64) -> f64 {
    let p = log_pixel_ratio(res);
    let ceiling = 3.6 + 0.4 * p;
    let knee = 20.5 + 0.8 * p + 1.8 * kappa;
    let h = ceiling - 1.2 * softplus(knee - bitrate_bps.log2());
    100.0 / (1.0 + (-h).exp())
}

/// Bitrate at `crf` under the planted rate model, in bits per second.
pub fn planted_bitrate(kappa: f64, res: Resolution, crf: u32) -> f64 {
    let top = 40e6f64.log2() + 0.75 * log_pixel_ratio(res) + kappa;
    (top - 0.18 * f64::from(crf - CRF_MIN)).exp2()
}

/// A full resolution x CRF sweep. Bitrates carry a small seeded jitter;
/// VMAF is the planted value at the jittered bitrate.
pub fn encode_log(spec: &ClipSpec, resolutions: &[Resolution]) -> Vec<EncodeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_10c0);
    let mut out = Vec::new();
    for &res in resolutions {
        for crf in CRF_MIN..=CRF_MAX {
            let bitrate = (planted_bitrate(spec.kappa, res, crf) * rng.gen_range(0.985..1.015)).round();
            out.push(EncodeRecord {
                video_id: spec.id.clone(),
                width: res.width,
                height: res.height,
                crf,
                bitrate_bps: bitrate,
                vmaf: planted_vmaf(spec.kappa, res, bitrate),
            });
        }
    }
    out
}

/// A log whose every resolution is measured at exactly `bitrates`, so each
/// rung realizes at the same rate for all resolutions. At most 33 rates.
pub fn grid_log(id: &str, kappa: f64, resolutions: &[Resolution], bitrates: &[f64]) -> Vec<EncodeRecord> {
    assert!(bitrates.len() <= (CRF_MAX - CRF_MIN + 1) as usize);
    let mut out = Vec::new();
    for &res in resolutions {
        for (i, &b) in bitrates.iter().enumerate() {
            out.push(EncodeRecord {
                video_id: id.to_string(),
                width: res.width,
                height: res.height,
                crf: CRF_MAX - i as u32,
                bitrate_bps: b,
                vmaf: planted_vmaf(kappa, res, b),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::{is_monotone, reference_choices, RungSpec};
    use crate::media_io::Y4mReader;
    use crate::resolution::DEFAULT_RESOLUTIONS;

    #[test]
    fn clips_are_deterministic_and_sized() {
        let spec = ClipSpec::new("a", 0.4, 7);
        let a = render_clip(&spec);
        assert_eq!(a, render_clip(&spec));
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|f| f.len() == 160 * 96 && f.iter().all(|&v| v <= 255)));
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn y4m_round_trip() {
        let mut spec = ClipSpec::new("a", 0.9, 3);
        spec.frames = 3;
        let bytes = write_clip_y4m(&spec, Vec::new()).unwrap();
        let mut r = Y4mReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.header(), &spec.header());
        let codes = render_clip(&spec);
        for want in codes {
            let f = r.read_luma_frame().unwrap().unwrap();
            assert_eq!(f.to_code_values(8), want);
        }
        assert!(r.read_luma_frame().unwrap().is_none());
    }

    #[test]
    fn texture_grows_with_kappa() {
        let energy = |k: f64| {
            let f = &render_clip(&ClipSpec::new("x", k, 11))[0];
            let m = f.iter().map(|&v| f64::from(v)).sum::<f64>() / f.len() as f64;
            f.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / f.len() as f64
        };
        assert!(energy(0.1) < energy(0.5) && energy(0.5) < energy(0.9));
    }

    #[test]
    fn corpus_is_stratified() {
        let c = corpus(12, 1);
        let mut k: Vec<f64> = c.iter().map(|s| s.kappa).collect();
        k.sort_by(f64::total_cmp);
        for (i, v) in k.iter().enumerate() {
            assert!(*v >= i as f64 / 12.0 && *v < (i + 1) as f64 / 12.0);
        }
        assert_eq!(corpus(12, 1), c);
    }

    #[test]
    fn planted_surface_properties() {
        for k in [0.0, 0.5, 1.0] {
            for res in DEFAULT_RESOLUTIONS {
                let mut prev = 0.0;
                for i in 0..60 {
                    let q = planted_vmaf(k, res, 1e5 * 1.15f64.powi(i));
                    assert!(q > prev && q < 100.0);
                    prev = q;
                }
            }
            let log = grid_log("g", k, &DEFAULT_RESOLUTIONS, &crate::ladder::DEFAULT_RUNGS_BPS);
            let choices = reference_choices(&log, &RungSpec::default()).unwrap();
            assert!(is_monotone(&choices));
        }
        // complex content moves the crossovers to higher rates
        let best = |k: f64| {
            let log = grid_log("g", k, &DEFAULT_RESOLUTIONS, &crate::ladder::DEFAULT_RUNGS_BPS);
            reference_choices(&log, &RungSpec::default()).unwrap()
        };
        assert!(best(1.0).iter().zip(best(0.0)).all(|(a, b)| *a <= b));
        assert_ne!(best(1.0), best(0.0));
    }

    #[test]
    fn encode_log_is_valid() {
        let spec = ClipSpec::new("v", 0.3, 2);
        let log = encode_log(&spec, &DEFAULT_RESOLUTIONS);
        assert_eq!(log.len(), 8 * 33);
        let mut buf = Vec::new();
        crate::dataset::write_encode_log(&mut buf, &log, &[]).unwrap();
        let back = crate::dataset::read_encode_log(buf.as_slice(), &DEFAULT_RESOLUTIONS).unwrap();
        assert_eq!(back, log);
    }
}
