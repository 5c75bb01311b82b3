//! YUV4MPEG2 (Y4M) ingest.
//!
//! Only the luma plane is kept. Samples are normalized to `[0, 1]` by dividing
//! code values by `2^bit_depth - 1`, so everything downstream is bit-depth
//! agnostic. Chroma planes are read and dropped.

use std::fmt;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::util::pairwise_sum;

const MAGIC: &str = "YUV4MPEG2";
const FRAME_MAGIC: &[u8] = b"FRAME";
const MAX_HEADER_LEN: usize = 4096;

/// Smallest frame dimension that still leaves 2x2 samples at the fourth scale.
pub const MIN_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    /// Total chroma samples per frame for a `width x height` picture.
    fn samples(self, width: usize, height: usize) -> usize {
        let (cw, ch) = (width.div_ceil(2), height.div_ceil(2));
        match self {
            Chroma::C420 => 2 * cw * ch,
            Chroma::C422 => 2 * cw * height,
            Chroma::C444 => 2 * width * height,
            Chroma::Mono => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoHeader {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub bit_depth: u8,
    pub chroma: Chroma,
}

impl VideoHeader {
    fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    pub fn luma_bytes(&self) -> usize {
        self.width * self.height * self.bytes_per_sample()
    }

    pub fn chroma_bytes(&self) -> usize {
        self.chroma.samples(self.width, self.height) * self.bytes_per_sample()
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    /// Serializes the header line, including the trailing newline.
    pub fn to_line(&self) -> String {
        let c = match (self.chroma, self.bit_depth) {
            (Chroma::C420, 8) => "420jpeg".to_string(),
            (Chroma::C422, 8) => "422".to_string(),
            (Chroma::C444, 8) => "444".to_string(),
            (Chroma::Mono, 8) => "mono".to_string(),
            (Chroma::C420, d) => format!("420p{d}"),
            (Chroma::C422, d) => format!("422p{d}"),
            (Chroma::C444, d) => format!("444p{d}"),
            (Chroma::Mono, d) => format!("mono{d}"),
        };
        format!(
            "{MAGIC} W{} H{} F{} Ip A1:1 C{c}\n",
            self.width, self.height, self.frame_rate
        )
    }
}

fn parse_chroma(tag: &str) -> Result<(Chroma, u8)> {
    let out = match tag {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => (Chroma::C420, 8),
        "422" => (Chroma::C422, 8),
        "444" => (Chroma::C444, 8),
        "mono" => (Chroma::Mono, 8),
        "420p10" => (Chroma::C420, 10),
        "422p10" => (Chroma::C422, 10),
        "444p10" => (Chroma::C444, 10),
        "mono10" => (Chroma::Mono, 10),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "colorspace C{other} (only 8- and 10-bit 420/422/444/mono are accepted)"
            )))
        }
    };
    Ok(out)
}

/// Parses a Y4M stream header. `stream_prefix` must start with the magic token
/// and contain the complete header line.
pub fn parse_y4m_header(stream_prefix: &[u8]) -> Result<VideoHeader> {
    let end = stream_prefix
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("no newline after header".into()))?;
    let line = std::str::from_utf8(&stream_prefix[..end])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    parse_header_line(line)
}

fn parse_header_line(line: &str) -> Result<VideoHeader> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(Error::MalformedHeader(format!("missing {MAGIC} magic")));
    }
    let mut width = None;
    let mut height = None;
    let mut frame_rate = FrameRate { num: 0, den: 1 };
    let mut chroma = (Chroma::C420, 8);
    for tok in tokens {
        let (key, val) = tok.split_at(1);
        match key {
            "W" => width = val.parse::<usize>().ok(),
            "H" => height = val.parse::<usize>().ok(),
            "F" => {
                let (n, d) = val
                    .split_once(':')
                    .ok_or_else(|| Error::MalformedHeader(format!("frame rate {val:?}")))?;
                frame_rate = FrameRate {
                    num: n
                        .parse()
                        .map_err(|_| Error::MalformedHeader(format!("frame rate {val:?}")))?,
                    den: d
                        .parse()
                        .map_err(|_| Error::MalformedHeader(format!("frame rate {val:?}")))?,
                };
            }
            "I" => {
                if val != "p" && val != "?" {
                    return Err(Error::UnsupportedFormat(format!(
                        "interlacing I{val}; only progressive video is accepted"
                    )));
                }
            }
            "C" => chroma = parse_chroma(val)?,
            // pixel aspect, extensions
            "A" | "X" => {}
            _ => {
                return Err(Error::MalformedHeader(format!("unknown token {tok:?}")));
            }
        }
    }
    let width = width.ok_or_else(|| Error::MalformedHeader("missing or invalid W".into()))?;
    let height = height.ok_or_else(|| Error::MalformedHeader("missing or invalid H".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("{width}x{height}")));
    }
    Ok(VideoHeader {
        width,
        height,
        frame_rate,
        bit_depth: chroma.1,
        chroma: chroma.0,
    })
}

/// One frame's luma plane, normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LumaFrame {
    pub index: usize,
    plane: Plane,
}

impl LumaFrame {
    /// Wraps an already-normalized plane. Samples must lie in `[0, 1]`.
    pub fn new(index: usize, plane: Plane) -> Result<Self> {
        if let Some(v) = plane.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("luma sample {v} outside [0, 1]")));
        }
        Ok(Self { index, plane })
    }

    pub fn from_code_values(
        index: usize,
        width: usize,
        height: usize,
        codes: &[u16],
        bit_depth: u8,
    ) -> Result<Self> {
        let max = (1u32 << bit_depth) - 1;
        if let Some(&v) = codes.iter().find(|&&v| u32::from(v) > max) {
            return Err(Error::InvalidSample {
                index,
                value: v,
                bit_depth,
            });
        }
        let scale = 1.0 / f64::from(max);
        let data = codes.iter().map(|&v| f64::from(v) * scale).collect();
        Ok(Self {
            index,
            plane: Plane::new(width, height, data)?,
        })
    }

    /// Re-quantizes to integer code values at `bit_depth`.
    pub fn to_code_values(&self, bit_depth: u8) -> Vec<u16> {
        let max = f64::from((1u32 << bit_depth) - 1);
        self.plane
            .data()
            .iter()
            .map(|&s| (s * max).round() as u16)
            .collect()
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }
}

/// `D_i = F_i - F_{i-1}`, samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffFrame {
    pub index: usize,
    plane: Plane,
}

impl DiffFrame {
    pub fn plane(&self) -> &Plane {
        &self.plane
    }
}

pub fn frame_diff(curr: &LumaFrame, prev: &LumaFrame) -> Result<DiffFrame> {
    if !curr.plane.same_shape(&prev.plane) {
        return Err(Error::ShapeMismatch(format!(
            "frame {} is {}x{} but frame {} is {}x{}",
            curr.index,
            curr.width(),
            curr.height(),
            prev.index,
            prev.width(),
            prev.height()
        )));
    }
    if curr.index != prev.index + 1 {
        return Err(Error::ShapeMismatch(format!(
            "frames {} and {} are not consecutive",
            prev.index, curr.index
        )));
    }
    let data = curr
        .plane
        .data()
        .iter()
        .zip(prev.plane.data())
        .map(|(c, p)| c - p)
        .collect();
    Ok(DiffFrame {
        index: curr.index,
        plane: Plane::new(curr.width(), curr.height(), data)?,
    })
}

/// Mean absolute frame difference in 8-bit-equivalent luma units.
pub fn mean_abs_luma_diff(diff: &DiffFrame) -> f64 {
    let abs: Vec<f64> = diff.plane.data().iter().map(|v| v.abs()).collect();
    255.0 * pairwise_sum(&abs) / abs.len() as f64
}

/// Sequential frame reader over a Y4M byte stream.
pub struct Y4mReader<R> {
    inner: R,
    header: VideoHeader,
    next_index: usize,
    scratch: Vec<u8>,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut line = Vec::new();
        (&mut inner)
            .take(MAX_HEADER_LEN as u64)
            .read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            if !line.starts_with(MAGIC.as_bytes()) {
                return Err(Error::MalformedHeader(format!("missing {MAGIC} magic")));
            }
            return Err(Error::MalformedHeader("unterminated header line".into()));
        }
        let header = parse_y4m_header(&line)?;
        Ok(Self {
            inner,
            header,
            next_index: 0,
            scratch: Vec::new(),
        })
    }

    pub fn header(&self) -> &VideoHeader {
        &self.header
    }

    /// Reads the next frame, or `None` at a clean end of stream.
    pub fn read_luma_frame(&mut self) -> Result<Option<LumaFrame>> {
        let index = self.next_index;
        let mut marker = Vec::new();
        self.inner
            .by_ref()
            .take(MAX_HEADER_LEN as u64)
            .read_until(b'\n', &mut marker)?;
        if marker.is_empty() {
            return Ok(None);
        }
        if !marker.starts_with(FRAME_MAGIC) || marker.last() != Some(&b'\n') {
            return Err(Error::TruncatedFrame {
                index,
                expected: FRAME_MAGIC.len() + 1,
                got: marker.len(),
            });
        }
        let h = &self.header;
        let luma_len = h.luma_bytes();
        self.scratch.resize(luma_len, 0);
        read_exact_counted(&mut self.inner, &mut self.scratch, index, luma_len)?;
        let codes: Vec<u16> = if h.bytes_per_sample() == 2 {
            self.scratch
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect()
        } else {
            self.scratch.iter().map(|&b| u16::from(b)).collect()
        };
        let chroma_len = h.chroma_bytes();
        let skipped = io::copy(
            &mut self.inner.by_ref().take(chroma_len as u64),
            &mut io::sink(),
        )? as usize;
        if skipped != chroma_len {
            return Err(Error::TruncatedFrame {
                index,
                expected: luma_len + chroma_len,
                got: luma_len + skipped,
            });
        }
        self.next_index += 1;
        LumaFrame::from_code_values(index, h.width, h.height, &codes, h.bit_depth).map(Some)
    }

    pub fn frames(self) -> Frames<R> {
        Frames { reader: self }
    }
}

fn read_exact_counted<R: Read>(r: &mut R, buf: &mut [u8], index: usize, expected: usize) -> Result<()> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(Error::TruncatedFrame {
                    index,
                    expected,
                    got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub struct Frames<R> {
    reader: Y4mReader<R>,
}

impl<R: BufRead> Iterator for Frames<R> {
    type Item = Result<LumaFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.reader.read_luma_frame().transpose()
    }
}

/// Minimal Y4M writer: luma from code values, chroma filled with mid-grey.
pub struct Y4mWriter<W> {
    inner: W,
    header: VideoHeader,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, header: VideoHeader) -> Result<Self> {
        inner.write_all(header.to_line().as_bytes())?;
        Ok(Self { inner, header })
    }

    pub fn write_frame(&mut self, luma_codes: &[u16]) -> Result<()> {
        let h = &self.header;
        if luma_codes.len() != h.width * h.height {
            return Err(Error::ShapeMismatch(format!(
                "{} luma samples for a {}x{} frame",
                luma_codes.len(),
                h.width,
                h.height
            )));
        }
        let mut buf = Vec::with_capacity(6 + h.luma_bytes() + h.chroma_bytes());
        buf.extend_from_slice(b"FRAME\n");
        let mid = 1u16 << (h.bit_depth - 1);
        let wide = h.bytes_per_sample() == 2;
        let push = |buf: &mut Vec<u8>, v: u16| {
            if wide {
                buf.extend_from_slice(&v.to_le_bytes());
            } else {
                buf.push(v as u8);
            }
        };
        for &v in luma_codes {
            push(&mut buf, v);
        }
        for _ in 0..h.chroma.samples(h.width, h.height) {
            push(&mut buf, mid);
        }
        self.inner.write_all(&buf)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
