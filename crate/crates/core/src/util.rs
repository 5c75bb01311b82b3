use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so results are reproducible for a fixed input order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean that returns the common value exactly when all inputs agree and is
/// otherwise clamped into `[min, max]`.
pub(crate) fn bounded_mean(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo == hi {
        return lo;
    }
    (pairwise_sum(xs) / xs.len() as f64).clamp(lo, hi)
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so a
/// failed run never leaves a partially written output behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = temp_sibling(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}
