//! Bjontegaard delta metrics between two rate-quality curves.
//!
//! Both metrics interpolate with PCHIP over the shared interval and integrate
//! the interpolants exactly. BD-rate integrates log2-rate as a function of
//! quality and reports `(2^mean_diff - 1) * 100`; BD-quality integrates
//! quality as a function of log2-rate and reports the mean difference.

mod pchip;

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use pchip::Pchip;

use crate::error::{Error, Result};

/// Overlaps narrower than this fraction of either curve's span get a warning.
pub const MIN_OVERLAP_FRACTION: f64 = 0.1;

/// A rate-quality curve with strictly increasing log2-rate and strictly
/// increasing quality.
#[derive(Clone, Debug, PartialEq)]
pub struct RqCurve {
    log_rates: Vec<f64>,
    quality: Vec<f64>,
}

impl RqCurve {
    /// Builds a curve from `(bitrate_bps, quality)` pairs in any order,
    /// dropping every point that some lower-rate point matches or beats.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if let Some(p) = points.iter().find(|(r, q)| !(*r > 0.0 && r.is_finite() && q.is_finite())) {
            return Err(Error::DegenerateCurve(format!("invalid point {p:?}")));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut log_rates = Vec::with_capacity(pts.len());
        let mut quality: Vec<f64> = Vec::with_capacity(pts.len());
        for (r, q) in pts {
            if quality.last().is_none_or(|&best| q > best) {
                log_rates.push(r.log2());
                quality.push(q);
            }
        }
        if log_rates.len() < 2 {
            return Err(Error::DegenerateCurve(format!(
                "{} point(s) left after removing dominated points",
                log_rates.len()
            )));
        }
        Ok(Self { log_rates, quality })
    }

    pub fn log_rates(&self) -> &[f64] {
        &self.log_rates
    }

    pub fn quality(&self) -> &[f64] {
        &self.quality
    }

    pub fn len(&self) -> usize {
        self.log_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_rates.is_empty()
    }

    fn rate_span(&self) -> (f64, f64) {
        (self.log_rates[0], self.log_rates[self.len() - 1])
    }

    fn quality_span(&self) -> (f64, f64) {
        (self.quality[0], self.quality[self.len() - 1])
    }
}

fn overlap(a: (f64, f64), b: (f64, f64), what: &str) -> Result<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi > lo {
        Ok((lo, hi))
    } else {
        Err(Error::NoOverlap(format!(
            "{what} ranges [{}, {}] and [{}, {}] are disjoint",
            a.0, a.1, b.0, b.1
        )))
    }
}

fn mean_difference(test: &Pchip, anchor: &Pchip, (lo, hi): (f64, f64)) -> Result<f64> {
    if test == anchor {
        return Ok(0.0);
    }
    Ok((test.integral(lo, hi)? - anchor.integral(lo, hi)?) / (hi - lo))
}

/// Percent rate change of `test` relative to `anchor` at equal quality;
/// negative means `test` needs less rate.
pub fn bd_rate(test: &RqCurve, anchor: &RqCurve) -> Result<f64> {
    let span = overlap(test.quality_span(), anchor.quality_span(), "quality")?;
    let t = Pchip::new(&test.quality, &test.log_rates)?;
    let a = Pchip::new(&anchor.quality, &anchor.log_rates)?;
    let d = mean_difference(&t, &a, span)?;
    Ok((d.exp2() - 1.0) * 100.0)
}

/// Mean quality difference `test - anchor` at equal log2-rate.
pub fn bd_quality(test: &RqCurve, anchor: &RqCurve) -> Result<f64> {
    let span = overlap(test.rate_span(), anchor.rate_span(), "rate")?;
    let t = Pchip::new(&test.log_rates, &test.quality)?;
    let a = Pchip::new(&anchor.log_rates, &anchor.quality)?;
    mean_difference(&t, &a, span)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    pub bd_rate_percent: Option<f64>,
    pub bd_quality: Option<f64>,
    /// Shared quality interval used for BD-rate.
    pub quality_overlap: Option<(f64, f64)>,
    /// Shared log2-rate interval used for BD-quality.
    pub rate_overlap: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn narrow(span: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let w = span.1 - span.0;
    w < MIN_OVERLAP_FRACTION * (a.1 - a.0) || w < MIN_OVERLAP_FRACTION * (b.1 - b.0)
}

/// Both metrics; a missing overlap becomes a warning with no value.
pub fn compare(test: &RqCurve, anchor: &RqCurve) -> Result<BdResult> {
    let mut warnings = Vec::new();
    let (qa, qb) = (test.quality_span(), anchor.quality_span());
    let (ra, rb) = (test.rate_span(), anchor.rate_span());

    let quality_overlap = overlap(qa, qb, "quality");
    let bd_rate_percent = match &quality_overlap {
        Ok(span) => {
            if narrow(*span, qa, qb) {
                warnings.push("quality overlap under 10% of a curve's span".to_string());
            }
            Some(bd_rate(test, anchor)?)
        }
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    let rate_overlap = overlap(ra, rb, "rate");
    let bd_quality = match &rate_overlap {
        Ok(span) => {
            if narrow(*span, ra, rb) {
                warnings.push("rate overlap under 10% of a curve's span".to_string());
            }
            Some(self::bd_quality(test, anchor)?)
        }
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    Ok(BdResult {
        bd_rate_percent,
        bd_quality,
        quality_overlap: quality_overlap.ok(),
        rate_overlap: rate_overlap.ok(),
        warnings,
    })
}

/// Arithmetic mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}/{:.3}", self.mean, self.std)
    }
}

pub fn mean_std(values: &[f64]) -> Result<Stats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Stats {
        mean,
        std: var.sqrt(),
        count: values.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub bd_rate: Stats,
    pub bd_quality: Stats,
}

/// Corpus statistics over results that carry a value; results without a
/// value (no overlap) are skipped.
pub fn aggregate(results: &[BdResult]) -> Result<Aggregate> {
    let rates: Vec<f64> = results.iter().filter_map(|r| r.bd_rate_percent).collect();
    let quals: Vec<f64> = results.iter().filter_map(|r| r.bd_quality).collect();
    Ok(Aggregate {
        bd_rate: mean_std(&rates)?,
        bd_quality: mean_std(&quals)?,
    })
}

pub const REPORT_HEADER: [&str; 10] = [
    "video_id",
    "test",
    "anchor",
    "bd_rate_percent",
    "bd_vmaf",
    "quality_lo",
    "quality_hi",
    "log2_rate_lo",
    "log2_rate_hi",
    "warnings",
];

/// One row of a BD report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub video_id: String,
    pub test: String,
    pub anchor: String,
    pub result: BdResult,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        let q = r.result.quality_overlap;
        let l = r.result.rate_overlap;
        w.write_record([
            r.video_id.clone(),
            r.test.clone(),
            r.anchor.clone(),
            opt(r.result.bd_rate_percent),
            opt(r.result.bd_quality),
            opt(q.map(|q| q.0)),
            opt(q.map(|q| q.1)),
            opt(l.map(|l| l.0)),
            opt(l.map(|l| l.1)),
            r.result.warnings.join("; "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != REPORT_HEADER {
        return Err(Error::Schema(format!(
            "report header {header:?}, expected {REPORT_HEADER:?}"
        )));
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Schema(format!("line {line}: bad number {s:?}")))
        }
    };
    let pair = |a: Option<f64>, b: Option<f64>| a.zip(b);
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |k: usize| rec.get(k).unwrap_or("");
        rows.push(ReportRow {
            video_id: f(0).to_string(),
            test: f(1).to_string(),
            anchor: f(2).to_string(),
            result: BdResult {
                bd_rate_percent: num(f(3), line)?,
                bd_quality: num(f(4), line)?,
                quality_overlap: pair(num(f(5), line)?, num(f(6), line)?),
                rate_overlap: pair(num(f(7), line)?, num(f(8), line)?),
                warnings: f(9)
                    .split("; ")
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            },
        });
    }
    Ok(rows)
}
