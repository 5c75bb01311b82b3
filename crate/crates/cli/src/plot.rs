//! SVG plots, each with a CSV twin holding the plotted numbers.
//!
//! Histograms use Freedman–Diaconis bins: width `2 * IQR / n^(1/3)`, with
//! quartiles by linear interpolation. When the IQR is zero all values go in
//! one bin.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ladderforge::bd_metrics::read_report_csv;
use ladderforge::ladder::{read_ladder_csv, Provenance};
use ladderforge::write_atomic;

use crate::failure::{usage, CmdResult};
use crate::Metric;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn twin_path(out: &Path) -> CmdResult<PathBuf> {
    match out.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("svg") => Ok(out.with_extension("csv")),
        _ => Err(usage(anyhow!("plot output {} must end in .svg", out.display()))),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// `(lo, hi, count)` per bin.
pub fn fd_histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    let k = if width > 0.0 && hi > lo {
        ((hi - lo) / width).ceil().max(1.0) as usize
    } else {
        1
    };
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let step = (hi - lo) / k as f64;
    let mut bins: Vec<(f64, f64, usize)> = (0..k).map(|i| (lo + i as f64 * step, lo + (i + 1) as f64 * step, 0)).collect();
    bins[k - 1].1 = hi;
    for x in v {
        let i = (((x - lo) / step).floor() as usize).min(k - 1);
        bins[i].2 += 1;
    }
    bins
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn axes(s: &mut String, xlabel: &str, ylabel: &str) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} V{y0} H{x1}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(s: &mut String, x: Option<f64>, y: Option<f64>, label: &str) {
    if let Some(x) = x {
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, H - BOTTOM + 17.0);
    }
    if let Some(y) = y {
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
}

pub fn hist(report: &Path, metric: Metric, out: &Path) -> CmdResult {
    let twin = twin_path(out)?;
    let f = File::open(report).with_context(|| format!("opening {}", report.display()))?;
    let rows = read_report_csv(f).with_context(|| format!("reading {}", report.display()))?;
    let values: Vec<f64> = rows
        .iter()
        .filter_map(|r| match metric {
            Metric::BdRate => r.result.bd_rate_percent,
            Metric::BdVmaf => r.result.bd_quality,
        })
        .collect();
    if values.is_empty() {
        return Err(anyhow!("{} has no values to plot", report.display()).into());
    }
    let bins = fd_histogram(&values);
    let (name, unit) = match metric {
        Metric::BdRate => ("BD-rate", "BD-rate (%)"),
        Metric::BdVmaf => ("BD-VMAF", "BD-VMAF"),
    };

    let mut csv_out = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, c) in &bins {
        let _ = writeln!(csv_out, "{lo},{hi},{c}");
    }

    let max_count = bins.iter().map(|b| b.2).max().unwrap_or(1).max(1) as f64;
    let (lo, hi) = (bins[0].0, bins[bins.len() - 1].1);
    let sx = |x: f64| LEFT + (x - lo) / (hi - lo) * (W - LEFT - RIGHT);
    let sy = |c: f64| H - BOTTOM - c / max_count * (H - TOP - BOTTOM);
    let mut s = svg_open(&format!("Distribution of {name} (n = {})", values.len()));
    for (b_lo, b_hi, c) in &bins {
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c78a8" stroke="white"/>"##,
            sx(*b_lo),
            sy(*c as f64),
            sx(*b_hi) - sx(*b_lo),
            sy(0.0) - sy(*c as f64)
        );
    }
    axes(&mut s, unit, "count");
    let every = bins.len().div_ceil(8);
    for (i, (b_lo, _, _)) in bins.iter().enumerate().step_by(every) {
        let _ = i;
        tick(&mut s, Some(sx(*b_lo)), None, &format!("{b_lo:.2}"));
    }
    tick(&mut s, Some(sx(hi)), None, &format!("{hi:.2}"));
    let ystep = (max_count / 5.0).ceil().max(1.0);
    let mut c = 0.0;
    while c <= max_count {
        tick(&mut s, None, Some(sy(c)), &format!("{c}"));
        c += ystep;
    }
    s.push_str("</svg>\n");

    write_atomic(out, s.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
    write_atomic(&twin, csv_out.as_bytes()).with_context(|| format!("writing {}", twin.display()))?;
    Ok(())
}

pub fn hulls(ladders: &[PathBuf], out: &Path, title: Option<String>) -> CmdResult {
    let twin = twin_path(out)?;
    let mut series = Vec::new();
    for p in ladders {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let l = read_ladder_csv(f, Provenance::Predicted).with_context(|| format!("reading {}", p.display()))?;
        if l.rungs.is_empty() {
            return Err(anyhow!("{} has no rungs", p.display()).into());
        }
        let mut pts: Vec<(f64, f64, u32, u32)> =
            l.rungs.iter().map(|r| (r.point.bitrate_bps, r.point.vmaf, r.point.width, r.point.height)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        series.push((label, pts));
    }

    let mut csv_out = String::from("label,bitrate_bps,vmaf,width,height\n");
    for (label, pts) in &series {
        for (b, q, w, h) in pts {
            let _ = writeln!(csv_out, "{label},{b},{q},{w},{h}");
        }
    }

    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (b, q, _, _) in all {
        xlo = xlo.min(b.log2());
        xhi = xhi.max(b.log2());
        ylo = ylo.min(*q);
        yhi = yhi.max(*q);
    }
    let (xlo, xhi) = (xlo.floor(), xhi.ceil().max(xlo.floor() + 1.0));
    let (ylo, yhi) = ((ylo / 10.0).floor() * 10.0, ((yhi / 10.0).ceil() * 10.0).max((ylo / 10.0).floor() * 10.0 + 10.0));
    let sx = |b: f64| LEFT + (b.log2() - xlo) / (xhi - xlo) * (W - LEFT - RIGHT);
    let sy = |q: f64| H - BOTTOM - (q - ylo) / (yhi - ylo) * (H - TOP - BOTTOM);

    let mut s = svg_open(title.as_deref().unwrap_or("Rate-quality curves"));
    axes(&mut s, "bitrate (Mbps, log scale)", "VMAF");
    let mut e = xlo;
    while e <= xhi {
        let mbps = e.exp2() / 1e6;
        let label = if mbps >= 1.0 { format!("{mbps:.0}") } else { format!("{mbps:.3}") };
        tick(&mut s, Some(sx(e.exp2())), None, &label);
        e += 1.0;
    }
    let mut q = ylo;
    while q <= yhi {
        tick(&mut s, None, Some(sy(q)), &format!("{q:.0}"));
        q += 10.0;
    }
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(b, q, _, _)| format!("{:.2},{:.2}", sx(*b), sy(*q))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for (b, q, _, _) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(*b), sy(*q));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = W - RIGHT - 150.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");

    write_atomic(out, s.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
    write_atomic(&twin, csv_out.as_bytes()).with_context(|| format!("writing {}", twin.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn histogram_counts_everything() {
        let values: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let bins = fd_histogram(&values);
        assert_eq!(bins.iter().map(|b| b.2).sum::<usize>(), 30);
        // n = 30: width = 2 * IQR / 30^(1/3)
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let width = 2.0 * (quantile(&v, 0.75) - quantile(&v, 0.25)) / 30f64.cbrt();
        let k = ((v[29] - v[0]) / width).ceil() as usize;
        assert_eq!(bins.len(), k);
        assert_eq!(bins[0].0, v[0]);
        assert_eq!(bins[k - 1].1, v[29]);
    }

    #[test]
    fn constant_values_make_one_bin() {
        let bins = fd_histogram(&[2.0; 5]);
        assert_eq!(bins, vec![(1.5, 2.5, 5)]);
    }
}
