//! Four-scale binomial pyramid with two oriented Haar-style detail subbands
//! per scale.
//!
//! Scale 1 is the input at full resolution. Each further scale low-passes the
//! previous one with the separable 5-tap binomial kernel `[1, 4, 6, 4, 1] / 16`
//! (edge replication) and keeps even rows and columns. At every scale the two
//! subbands are
//!
//! * band 1, horizontal detail: `[-1, 1] / 2` along rows, `[1, 1] / 2` along
//!   columns;
//! * band 2, vertical detail: the transposed arrangement.
//!
//! Subbands use valid-support cropping, so a `w x h` level yields
//! `(w - 1) x (h - 1)` coefficients.

use crate::error::{Error, Result};
use crate::media_io::MIN_DIM;
use crate::plane::Plane;

pub const NUM_SCALES: usize = 4;
pub const NUM_BANDS: usize = 2;

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Clone, Debug)]
pub struct ScaleStack {
    levels: Vec<Plane>,
}

impl ScaleStack {
    /// Level `k` (1-based).
    pub fn level(&self, k: usize) -> &Plane {
        &self.levels[k - 1]
    }

    pub fn levels(&self) -> &[Plane] {
        &self.levels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Band {
    Horizontal = 1,
    Vertical = 2,
}

impl Band {
    pub const ALL: [Band; NUM_BANDS] = [Band::Horizontal, Band::Vertical];

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

#[derive(Clone, Debug)]
pub struct SubbandPlane {
    pub scale: usize,
    pub band: Band,
    pub coeffs: Plane,
}

pub fn build_scale_stack(frame: &Plane) -> Result<ScaleStack> {
    if frame.width() < MIN_DIM || frame.height() < MIN_DIM {
        return Err(Error::FrameTooSmall(format!(
            "{}x{} (need at least {MIN_DIM}x{MIN_DIM})",
            frame.width(),
            frame.height()
        )));
    }
    let mut levels = Vec::with_capacity(NUM_SCALES);
    levels.push(frame.clone());
    for _ in 1..NUM_SCALES {
        let next = blur_decimate(levels.last().unwrap());
        levels.push(next);
    }
    Ok(ScaleStack { levels })
}

/// Binomial low-pass followed by keeping even-indexed rows and columns.
/// Only the retained samples are computed.
pub fn blur_decimate(p: &Plane) -> Plane {
    let (w, h) = (p.width(), p.height());
    let (ow, oh) = (w / 2, h / 2);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // horizontal pass on every row, even columns only
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = p.row(y);
        for ox in 0..ow {
            let cx = 2 * ox as isize;
            let mut acc = 0.0;
            for (t, &wt) in BINOMIAL.iter().enumerate() {
                acc += wt * row[clamp(cx + t as isize - 2, w)];
            }
            tmp[y * ow + ox] = acc;
        }
    }
    // vertical pass, even rows only
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        let cy = 2 * oy as isize;
        for (t, &wt) in BINOMIAL.iter().enumerate() {
            let src = clamp(cy + t as isize - 2, h);
            let src_row = &tmp[src * ow..(src + 1) * ow];
            let dst = &mut out[oy * ow..(oy + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    Plane::new(ow, oh, out).expect("dimensions computed above")
}

pub fn subband_decompose(level: &Plane, scale: usize) -> Result<[SubbandPlane; NUM_BANDS]> {
    let (w, h) = (level.width(), level.height());
    if w < 2 || h < 2 {
        return Err(Error::FrameTooSmall(format!(
            "scale {scale} level is {w}x{h}, subbands need 2x2"
        )));
    }
    let (ow, oh) = (w - 1, h - 1);
    let mut horiz = Vec::with_capacity(ow * oh);
    let mut vert = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let r0 = level.row(y);
        let r1 = level.row(y + 1);
        for x in 0..ow {
            let (a, b, c, d) = (r0[x], r0[x + 1], r1[x], r1[x + 1]);
            horiz.push(0.25 * ((b - a) + (d - c)));
            vert.push(0.25 * ((c - a) + (d - b)));
        }
    }
    Ok([
        SubbandPlane {
            scale,
            band: Band::Horizontal,
            coeffs: Plane::new(ow, oh, horiz)?,
        },
        SubbandPlane {
            scale,
            band: Band::Vertical,
            coeffs: Plane::new(ow, oh, vert)?,
        },
    ])
}
