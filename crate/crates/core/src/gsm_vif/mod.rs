//! Gaussian scale mixture fit per subband and the derived information
//! features.
//!
//! Each subband is tiled into non-overlapping 3x3 blocks, giving vectors
//! `C_i` of dimension `M = 9`. The blocks are modelled as `C_i = s_i U_i`
//! with `U_i ~ N(0, C_U)`, observed through additive noise of variance
//! `sigma_n^2`. In the eigenbasis of `C_U` the conditional mutual information
//! splits into independent per-eigenvector terms
//!
//! ```text
//! I^j   = (1/N) sum_i log2(1 + s_i^2 lambda_j / sigma_n^2)
//! I_band = sum_j I^j
//! I_k   = (I_{k,1} + I_{k,2}) / 2
//! ```
//!
//! which are the per-eigenvector, per-subband and per-scale features.

pub mod io;
mod jacobi;

use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use jacobi::{jacobi_eigen, SymEigen};

use crate::error::{Error, Result};
use crate::media_io::{frame_diff, mean_abs_luma_diff, LumaFrame, Y4mReader};
use crate::plane::Plane;
use crate::pyramid::{build_scale_stack, subband_decompose, NUM_BANDS, NUM_SCALES};
use crate::util::{bounded_mean, pairwise_sum};

/// Block vector dimension (3x3 neighbourhoods).
pub const BLOCK_DIM: usize = 9;
const BLOCK_SIDE: usize = 3;

/// Convergence threshold for the Jacobi sweeps, relative to `trace(C_U)`.
pub const JACOBI_REL_TOL: f64 = 1e-12;
/// Eigenvalues at or below `RANK_REL_TOL * lambda_max` are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Number of scalars in one [`FrameVifFeatures`] (72 + 8 + 4).
pub const FRAME_FEATURE_LEN: usize = NUM_SCALES * NUM_BANDS * BLOCK_DIM + NUM_SCALES * NUM_BANDS + NUM_SCALES;

pub type BlockVector = [f64; BLOCK_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VifConfig {
    /// HVS noise variance `sigma_n^2`.
    pub noise_var: f64,
    /// Gain applied to subband coefficients before the fit. 255 expresses
    /// them in 8-bit-equivalent units, the scale `noise_var` is defined in.
    pub signal_gain: f64,
    /// Remove the sample mean from block vectors before fitting `C_U`.
    pub center_blocks: bool,
}

impl Default for VifConfig {
    fn default() -> Self {
        Self {
            noise_var: 2.0,
            signal_gain: 255.0,
            center_blocks: true,
        }
    }
}

/// Tiles `plane` into non-overlapping 3x3 blocks in raster order; each block
/// is vectorized row-major. Trailing rows/columns that do not fill a tile are
/// dropped.
pub fn extract_block_vectors(plane: &Plane) -> Result<Vec<BlockVector>> {
    let (bw, bh) = (plane.width() / BLOCK_SIDE, plane.height() / BLOCK_SIDE);
    if bw == 0 || bh == 0 {
        return Err(Error::FrameTooSmall(format!(
            "{}x{} subband has no 3x3 block",
            plane.width(),
            plane.height()
        )));
    }
    let mut out = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut v = [0.0; BLOCK_DIM];
            for dy in 0..BLOCK_SIDE {
                let row = plane.row(by * BLOCK_SIDE + dy);
                v[dy * BLOCK_SIDE..(dy + 1) * BLOCK_SIDE]
                    .copy_from_slice(&row[bx * BLOCK_SIDE..(bx + 1) * BLOCK_SIDE]);
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Sample covariance of the block vectors and its eigendecomposition.
#[derive(Clone, Debug)]
pub struct CovarianceFit {
    pub mean: BlockVector,
    pub covariance: [[f64; BLOCK_DIM]; BLOCK_DIM],
    /// Sorted descending; values at or below `RANK_REL_TOL * lambda_max` are zeroed.
    pub eigenvalues: [f64; BLOCK_DIM],
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: [[f64; BLOCK_DIM]; BLOCK_DIM],
}

impl CovarianceFit {
    pub fn trace(&self) -> f64 {
        (0..BLOCK_DIM).map(|i| self.covariance[i][i]).sum()
    }

    fn centered(&self, v: &BlockVector) -> BlockVector {
        std::array::from_fn(|i| v[i] - self.mean[i])
    }
}

pub fn fit_covariance(vectors: &[BlockVector], center: bool) -> Result<CovarianceFit> {
    if vectors.is_empty() {
        return Err(Error::DegenerateInput("no block vectors".into()));
    }
    let n = vectors.len() as f64;
    let mut mean = [0.0; BLOCK_DIM];
    if center {
        let mut col = vec![0.0; vectors.len()];
        for (i, m) in mean.iter_mut().enumerate() {
            for (c, v) in col.iter_mut().zip(vectors) {
                *c = v[i];
            }
            *m = bounded_mean(&col);
        }
    }
    let mut cov = [[0.0; BLOCK_DIM]; BLOCK_DIM];
    for v in vectors {
        let d: BlockVector = std::array::from_fn(|i| v[i] - mean[i]);
        for i in 0..BLOCK_DIM {
            for j in i..BLOCK_DIM {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..BLOCK_DIM {
        for j in i..BLOCK_DIM {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    let eig = jacobi_eigen(cov, JACOBI_REL_TOL);
    let floor = eig.values[0].max(0.0) * RANK_REL_TOL;
    Ok(CovarianceFit {
        mean,
        covariance: cov,
        eigenvalues: eig.values.map(|l| if l > floor { l } else { 0.0 }),
        eigenvectors: eig.vectors,
    })
}

/// Maximum-likelihood multipliers `s_i^2 = c_i^T C_U^+ c_i / M` for centered
/// blocks `c_i`, with the pseudo-inverse taken in the eigenbasis.
pub fn estimate_multipliers(vectors: &[BlockVector], fit: &CovarianceFit) -> Vec<f64> {
    let lambda_max = fit.eigenvalues[0];
    if lambda_max <= 0.0 {
        return vec![0.0; vectors.len()];
    }
    let cutoff = RANK_REL_TOL * lambda_max;
    let active: Vec<usize> = (0..BLOCK_DIM)
        .filter(|&j| fit.eigenvalues[j] > cutoff)
        .collect();
    vectors
        .iter()
        .map(|v| {
            let c = fit.centered(v);
            let q: f64 = active
                .iter()
                .map(|&j| {
                    let proj: f64 = (0..BLOCK_DIM).map(|i| fit.eigenvectors[i][j] * c[i]).sum();
                    proj * proj / fit.eigenvalues[j]
                })
                .sum();
            (q / BLOCK_DIM as f64).max(0.0)
        })
        .collect()
}

/// Fitted GSM statistics of one subband.
#[derive(Clone, Debug)]
pub struct GsmSubbandModel {
    pub fit: CovarianceFit,
    pub multipliers: Vec<f64>,
    pub noise_var: f64,
}

pub fn fit_gsm(vectors: &[BlockVector], config: &VifConfig) -> Result<GsmSubbandModel> {
    if config.noise_var <= 0.0 || config.noise_var.is_nan() {
        return Err(Error::InvalidNoiseVariance(config.noise_var));
    }
    let fit = fit_covariance(vectors, config.center_blocks)?;
    let multipliers = estimate_multipliers(vectors, &fit);
    Ok(GsmSubbandModel {
        fit,
        multipliers,
        noise_var: config.noise_var,
    })
}

/// Per-eigenvector information `I^j` and their sum for one subband.
pub fn subband_information(
    multipliers: &[f64],
    eigenvalues: &[f64],
    noise_var: f64,
) -> Result<(Vec<f64>, f64)> {
    if noise_var <= 0.0 || noise_var.is_nan() {
        return Err(Error::InvalidNoiseVariance(noise_var));
    }
    if multipliers.is_empty() {
        return Err(Error::DegenerateInput("no multipliers".into()));
    }
    let n = multipliers.len() as f64;
    let mut terms = vec![0.0; multipliers.len()];
    let per_eig: Vec<f64> = eigenvalues
        .iter()
        .map(|&lambda| {
            let snr = lambda / noise_var;
            for (t, &s2) in terms.iter_mut().zip(multipliers) {
                *t = (s2 * snr).ln_1p() * std::f64::consts::LOG2_E;
            }
            pairwise_sum(&terms) / n
        })
        .collect();
    let band = per_eig.iter().sum();
    Ok((per_eig, band))
}

/// Information features of one frame (or frame difference).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameVifFeatures {
    /// `I_{k,b}^j`, indexed `[k][b][j]` (0-based).
    pub per_eig: [[[f64; BLOCK_DIM]; NUM_BANDS]; NUM_SCALES],
    /// `I_{k,b}`, indexed `[k][b]`.
    pub per_band: [[f64; NUM_BANDS]; NUM_SCALES],
    /// `I_k`.
    pub per_scale: [f64; NUM_SCALES],
}

impl FrameVifFeatures {
    /// Flattened as per-eigenvector (k, b, j), then per-band (k, b), then
    /// per-scale (k).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FRAME_FEATURE_LEN);
        for k in &self.per_eig {
            for b in k {
                v.extend_from_slice(b);
            }
        }
        for k in &self.per_band {
            v.extend_from_slice(k);
        }
        v.extend_from_slice(&self.per_scale);
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != FRAME_FEATURE_LEN {
            return Err(Error::ShapeMismatch(format!(
                "{} frame features, expected {FRAME_FEATURE_LEN}",
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut f = Self::default();
        for k in f.per_eig.iter_mut() {
            for b in k.iter_mut() {
                for j in b.iter_mut() {
                    *j = it.next().unwrap();
                }
            }
        }
        for k in f.per_band.iter_mut() {
            for b in k.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        for k in f.per_scale.iter_mut() {
            *k = it.next().unwrap();
        }
        Ok(f)
    }

    /// Column names matching [`Self::to_vec`], with `prefix` prepended.
    pub fn column_names(prefix: &str) -> Vec<String> {
        let mut names = Vec::with_capacity(FRAME_FEATURE_LEN);
        for k in 1..=NUM_SCALES {
            for b in 1..=NUM_BANDS {
                for j in 1..=BLOCK_DIM {
                    names.push(format!("{prefix}_eig_k{k}_b{b}_j{j}"));
                }
            }
        }
        for k in 1..=NUM_SCALES {
            for b in 1..=NUM_BANDS {
                names.push(format!("{prefix}_band_k{k}_b{b}"));
            }
        }
        for k in 1..=NUM_SCALES {
            names.push(format!("{prefix}_scale_k{k}"));
        }
        names
    }
}

/// Computes all 84 features of one plane. Scales whose subbands are too small
/// to hold a 3x3 block contribute zeros; only a failure at scale 1 is an
/// error.
pub fn frame_vif_features(plane: &Plane, config: &VifConfig) -> Result<FrameVifFeatures> {
    if config.noise_var <= 0.0 || config.noise_var.is_nan() {
        return Err(Error::InvalidNoiseVariance(config.noise_var));
    }
    let stack = build_scale_stack(plane)?;
    let mut out = FrameVifFeatures::default();
    for (k, level) in stack.levels().iter().enumerate() {
        if level.width() < 2 || level.height() < 2 {
            continue;
        }
        for sb in subband_decompose(level, k + 1)? {
            let b = sb.band.index();
            let coeffs = sb.coeffs.map(|c| c * config.signal_gain);
            let vectors = match extract_block_vectors(&coeffs) {
                Ok(v) => v,
                Err(e) if k == 0 => return Err(e),
                Err(_) => continue,
            };
            let gsm = fit_gsm(&vectors, config)?;
            let (per_eig, band) =
                subband_information(&gsm.multipliers, &gsm.fit.eigenvalues, config.noise_var)?;
            out.per_eig[k][b].copy_from_slice(&per_eig);
            out.per_band[k][b] = band;
        }
        out.per_scale[k] = 0.5 * (out.per_band[k][0] + out.per_band[k][1]);
    }
    Ok(out)
}

/// Temporally pooled features of one source video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VifFeatureTensor {
    pub frame_count: usize,
    /// Mean of the per-frame features of `F_i`.
    pub frame_feats: FrameVifFeatures,
    /// Mean of the per-difference features of `D_i`; absent for 1-frame video.
    pub diff_feats: Option<FrameVifFeatures>,
    /// Mean `|D_i|` in 8-bit-equivalent units; 0 when there are no diffs.
    pub motion: f64,
}

impl VifFeatureTensor {
    pub fn has_temporal(&self) -> bool {
        self.diff_feats.is_some()
    }
}

fn mean_features(list: &[FrameVifFeatures]) -> FrameVifFeatures {
    let rows: Vec<Vec<f64>> = list.iter().map(FrameVifFeatures::to_vec).collect();
    let mut col = vec![0.0; rows.len()];
    let means: Vec<f64> = (0..FRAME_FEATURE_LEN)
        .map(|i| {
            for (c, r) in col.iter_mut().zip(&rows) {
                *c = r[i];
            }
            pairwise_sum(&col) / rows.len() as f64
        })
        .collect();
    FrameVifFeatures::from_slice(&means).expect("fixed length")
}

pub fn pool_video(
    frames: &[FrameVifFeatures],
    diffs: &[FrameVifFeatures],
    motions: &[f64],
) -> Result<VifFeatureTensor> {
    if frames.is_empty() {
        return Err(Error::EmptyVideo);
    }
    let expected = frames.len() - 1;
    if diffs.len() != expected || motions.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} frames need {expected} diffs and motions, got {} and {}",
            frames.len(),
            diffs.len(),
            motions.len()
        )));
    }
    let (diff_feats, motion) = if diffs.is_empty() {
        (None, 0.0)
    } else {
        (
            Some(mean_features(diffs)),
            pairwise_sum(motions) / motions.len() as f64,
        )
    };
    Ok(VifFeatureTensor {
        frame_count: frames.len(),
        frame_feats: mean_features(frames),
        diff_feats,
        motion,
    })
}

/// Per-frame results kept in frame order for pooling.
struct FrameResult {
    frame: FrameVifFeatures,
    diff: Option<(FrameVifFeatures, f64)>,
}

/// Streams frames, computes features for each frame and each consecutive
/// difference, and pools them. Frames are processed in parallel batches;
/// the reduction order is fixed, so the result does not depend on the
/// thread count.
pub fn extract_frames<I>(frames: I, config: &VifConfig) -> Result<VifFeatureTensor>
where
    I: IntoIterator<Item = Result<LumaFrame>>,
{
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut results: Vec<FrameResult> = Vec::new();
    let mut prev: Option<LumaFrame> = None;
    let mut pending: Vec<(LumaFrame, Option<LumaFrame>)> = Vec::with_capacity(batch);
    let mut frames = frames.into_iter();
    loop {
        let next = frames.next().transpose()?;
        let done = next.is_none();
        if let Some(f) = next {
            pending.push((f.clone(), prev.replace(f)));
        }
        if pending.len() >= batch || (done && !pending.is_empty()) {
            let computed: Vec<Result<FrameResult>> = pending
                .par_iter()
                .map(|(curr, before)| {
                    let frame = frame_vif_features(curr.plane(), config)?;
                    let diff = match before {
                        Some(p) => {
                            let d = frame_diff(curr, p)?;
                            Some((
                                frame_vif_features(d.plane(), config)?,
                                mean_abs_luma_diff(&d),
                            ))
                        }
                        None => None,
                    };
                    Ok(FrameResult { frame, diff })
                })
                .collect();
            for r in computed {
                results.push(r?);
            }
            pending.clear();
        }
        if done {
            break;
        }
    }
    let frames: Vec<_> = results.iter().map(|r| r.frame).collect();
    let (diffs, motions): (Vec<_>, Vec<_>) = results.iter().filter_map(|r| r.diff).unzip();
    pool_video(&frames, &diffs, &motions)
}

pub fn extract_video<R: BufRead>(reader: Y4mReader<R>, config: &VifConfig) -> Result<VifFeatureTensor> {
    extract_frames(reader.frames(), config)
}

#[cfg(test)]
mod tests;
