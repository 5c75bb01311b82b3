use super::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> VifConfig {
    VifConfig::default()
}

fn noise_plane(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |_, _| rng.gen::<f64>())
}

#[test]
fn block_tiling_counts() {
    assert_eq!(extract_block_vectors(&Plane::filled(6, 6, 0.0)).unwrap().len(), 4);
    assert_eq!(extract_block_vectors(&Plane::filled(8, 7, 0.0)).unwrap().len(), 4);
    let p = Plane::from_fn(3, 3, |x, y| (y * 3 + x + 1) as f64);
    let v = extract_block_vectors(&p).unwrap();
    assert_eq!(v, vec![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]]);
    assert!(matches!(
        extract_block_vectors(&Plane::filled(2, 9, 0.0)),
        Err(Error::FrameTooSmall(_))
    ));
}

#[test]
fn block_tiling_is_raster_order() {
    let p = Plane::from_fn(6, 3, |x, _| x as f64);
    let v = extract_block_vectors(&p).unwrap();
    assert_eq!(v[0][..3], [0.0, 1.0, 2.0]);
    assert_eq!(v[1][..3], [3.0, 4.0, 5.0]);
}

#[test]
fn identical_vectors_give_zero_covariance() {
    let fit = fit_covariance(&vec![[0.4; BLOCK_DIM]; 7], true).unwrap();
    assert!(fit.covariance.iter().flatten().all(|&c| c == 0.0));
    assert!(fit.eigenvalues.iter().all(|&l| l == 0.0));
    assert!(estimate_multipliers(&[[0.4; BLOCK_DIM]], &fit)
        .iter()
        .all(|&s| s == 0.0));
}

#[test]
fn empty_vectors_are_degenerate() {
    assert!(matches!(
        fit_covariance(&[], true),
        Err(Error::DegenerateInput(_))
    ));
}

/// +-3 e_i for every axis: zero mean, covariance exactly the identity.
fn identity_sample() -> Vec<BlockVector> {
    let mut v = Vec::new();
    for i in 0..BLOCK_DIM {
        for s in [3.0, -3.0] {
            let mut e = [0.0; BLOCK_DIM];
            e[i] = s;
            v.push(e);
        }
    }
    v
}

#[test]
fn identity_covariance_sample() {
    let fit = fit_covariance(&identity_sample(), true).unwrap();
    for l in fit.eigenvalues {
        assert!((l - 1.0).abs() < 1e-14);
    }
    let mut block = [0.0; BLOCK_DIM];
    block[0] = 3.0;
    let s2 = estimate_multipliers(&[block], &fit);
    assert!((s2[0] - 1.0).abs() < 1e-14);
}

#[test]
fn eigenvalues_sum_to_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vectors: Vec<BlockVector> = (0..200)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
        .collect();
    let fit = fit_covariance(&vectors, true).unwrap();
    let sum: f64 = fit.eigenvalues.iter().sum();
    assert!((sum - fit.trace()).abs() <= 1e-8 * fit.trace());
    assert!(fit.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn eigenvalues_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let vectors: Vec<BlockVector> = (0..50)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let fit = fit_covariance(&vectors, true).unwrap();
        let m = DMatrix::from_fn(9, 9, |i, j| fit.covariance[i][j]);
        let mut want: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in fit.eigenvalues.iter().zip(&want) {
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-12));
        }
    }
}

/// Log-likelihood of a centered block under `N(0, s2 C)`, constants dropped,
/// with the quadratic form supplied by an independent Cholesky solve.
fn block_loglik(quad: f64, s2: f64) -> f64 {
    if s2 <= 0.0 {
        return if quad == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -0.5 * (BLOCK_DIM as f64 * s2.ln() + quad / s2)
}

fn grid_search_s2(quad: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, quad.max(1e-12));
    for _ in 0..40 {
        let steps = 200;
        let h = (hi - lo) / steps as f64;
        let (mut best, mut best_ll) = (lo, f64::NEG_INFINITY);
        for i in 0..=steps {
            let s2 = lo + h * i as f64;
            let ll = block_loglik(quad, s2);
            if ll > best_ll {
                best_ll = ll;
                best = s2;
            }
        }
        lo = (best - 2.0 * h).max(0.0);
        hi = best + 2.0 * h;
    }
    0.5 * (lo + hi)
}

#[test]
fn multipliers_maximize_block_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // correlated gaussian field scaled by known multipliers
    let mix: [[f64; BLOCK_DIM]; BLOCK_DIM] =
        std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
    let vectors: Vec<BlockVector> = (0..100)
        .map(|_| {
            let s: f64 = rng.gen_range(0.2..3.0);
            let z: [f64; BLOCK_DIM] = std::array::from_fn(|_| {
                rand_distr_normal(&mut rng)
            });
            std::array::from_fn(|i| s * (0..BLOCK_DIM).map(|k| mix[i][k] * z[k]).sum::<f64>())
        })
        .collect();
    let fit = fit_covariance(&vectors, true).unwrap();
    let s2 = estimate_multipliers(&vectors, &fit);
    let cov = DMatrix::from_fn(9, 9, |i, j| fit.covariance[i][j]);
    let chol = cov.cholesky().expect("full rank");
    for (v, &est) in vectors.iter().zip(&s2) {
        let c = nalgebra::DVector::from_fn(9, |i, _| v[i] - fit.mean[i]);
        let quad = c.dot(&chol.solve(&c));
        assert!((grid_search_s2(quad) - est).abs() < 1e-6);
    }
}

fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[test]
fn information_closed_forms() {
    let (eig, band) = subband_information(&[0.0; 5], &[1.0; 9], 2.0).unwrap();
    assert!(eig.iter().all(|&i| i == 0.0));
    assert_eq!(band, 0.0);
    let (eig, band) = subband_information(&[3.0], &[2.0], 2.0).unwrap();
    assert!((eig[0] - 2.0).abs() < 1e-15);
    assert!((band - 2.0).abs() < 1e-15);
    assert!(matches!(
        subband_information(&[1.0], &[1.0], 0.0),
        Err(Error::InvalidNoiseVariance(_))
    ));
}

#[test]
fn information_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s2: Vec<f64> = (0..321).map(|_| rng.gen_range(0.0..4.0)).collect();
    let lambda: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..50.0)).collect();
    let (eig, band) = subband_information(&s2, &lambda, 2.0).unwrap();
    let mut total = 0.0;
    for (j, &l) in lambda.iter().enumerate() {
        let mut acc = 0.0;
        for &s in &s2 {
            acc += (1.0 + s * l / 2.0).log2();
        }
        assert!((eig[j] - acc / s2.len() as f64).abs() < 1e-10);
        total += acc;
    }
    assert!((band - total / s2.len() as f64).abs() < 1e-10);
}

#[test]
fn constant_frame_has_zero_features() {
    let f = frame_vif_features(&Plane::filled(64, 48, 0.6), &cfg()).unwrap();
    assert!(f.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn minimum_frame_zero_fills_coarsest_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = frame_vif_features(&noise_plane(&mut rng, 16, 16), &cfg()).unwrap();
    assert!(f.per_scale[0] > 0.0);
    assert_eq!(f.per_scale[3], 0.0);
    assert!(matches!(
        frame_vif_features(&Plane::filled(12, 40, 0.0), &cfg()),
        Err(Error::FrameTooSmall(_))
    ));
}

fn assert_identities(f: &FrameVifFeatures) {
    for k in 0..NUM_SCALES {
        for b in 0..NUM_BANDS {
            let s: f64 = f.per_eig[k][b].iter().sum();
            assert!((f.per_band[k][b] - s).abs() < 1e-9);
        }
        let half = 0.5 * (f.per_band[k][0] + f.per_band[k][1]);
        assert!((f.per_scale[k] - half).abs() < 1e-9);
    }
}

/// Independent straight-line pipeline: direct 2-D convolution pyramid, direct
/// subband filters, nalgebra eigensolver and pseudo-inverse, plain double sum.
fn reference_features(p: &Plane, cfg: &VifConfig) -> Vec<f64> {
    let k5 = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut level = p.clone();
    let mut per_eig = vec![];
    let mut per_band = vec![];
    let mut per_scale = vec![];
    for k in 0..NUM_SCALES {
        if k > 0 {
            let (w, h) = (level.width() as isize, level.height() as isize);
            let prev = level.clone();
            level = Plane::from_fn(level.width() / 2, level.height() / 2, |x, y| {
                let mut acc = 0.0;
                for dy in -2..=2isize {
                    for dx in -2..=2isize {
                        let sx = (2 * x as isize + dx).clamp(0, w - 1) as usize;
                        let sy = (2 * y as isize + dy).clamp(0, h - 1) as usize;
                        acc += k5[(dx + 2) as usize] * k5[(dy + 2) as usize] * prev.get(sx, sy);
                    }
                }
                acc / 256.0
            });
        }
        let mut bands = [0.0; 2];
        for (b, band) in bands.iter_mut().enumerate() {
            let sb = Plane::from_fn(level.width() - 1, level.height() - 1, |x, y| {
                let (a, bb, c, d) = (
                    level.get(x, y),
                    level.get(x + 1, y),
                    level.get(x, y + 1),
                    level.get(x + 1, y + 1),
                );
                let v = if b == 0 { bb - a + d - c } else { c - a + d - bb };
                cfg.signal_gain * v / 4.0
            });
            let (nbx, nby) = (sb.width() / 3, sb.height() / 3);
            if nbx == 0 || nby == 0 {
                per_eig.extend([0.0; 9]);
                continue;
            }
            let n = nbx * nby;
            let mut blocks = DMatrix::zeros(9, n);
            for by in 0..nby {
                for bx in 0..nbx {
                    for t in 0..9 {
                        blocks[(t, by * nbx + bx)] = sb.get(bx * 3 + t % 3, by * 3 + t / 3);
                    }
                }
            }
            let mean = blocks.column_mean();
            for mut c in blocks.column_iter_mut() {
                c -= &mean;
            }
            let cov = &blocks * blocks.transpose() / n as f64;
            let eig = SymmetricEigen::new(cov.clone());
            let mut lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            lambdas.sort_by(|a, b| b.total_cmp(a));
            let lmax = lambdas[0];
            let s2: Vec<f64> = if lmax <= 0.0 {
                vec![0.0; n]
            } else {
                let pinv = cov.pseudo_inverse(RANK_REL_TOL * lmax).unwrap();
                blocks
                    .column_iter()
                    .map(|c| (c.transpose() * &pinv * c)[(0, 0)].max(0.0) / 9.0)
                    .collect()
            };
            for &l in &lambdas {
                let mut acc = 0.0;
                for &s in &s2 {
                    acc += (1.0 + s * l / cfg.noise_var).log2();
                }
                per_eig.push(acc / n as f64);
                *band += acc / n as f64;
            }
        }
        per_band.extend(bands);
        per_scale.push(0.5 * (bands[0] + bands[1]));
    }
    per_eig.into_iter().chain(per_band).chain(per_scale).collect()
}

#[test]
fn white_noise_matches_reference_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (w, h) in [(64, 64), (50, 37), (16, 16)] {
        let p = noise_plane(&mut rng, w, h);
        let f = frame_vif_features(&p, &cfg()).unwrap();
        assert!(f.per_scale[0] > 0.0);
        assert_identities(&f);
        let want = reference_features(&p, &cfg());
        for (i, (a, b)) in f.to_vec().iter().zip(&want).enumerate() {
            assert!((a - b).abs() < 1e-9, "{w}x{h} feature {i}: {a} vs {b}");
        }
    }
}

#[test]
fn flatten_round_trip_and_names() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v: Vec<f64> = (0..FRAME_FEATURE_LEN).map(|_| rng.gen()).collect();
    assert_eq!(FrameVifFeatures::from_slice(&v).unwrap().to_vec(), v);
    let names = FrameVifFeatures::column_names("f");
    assert_eq!(names.len(), FRAME_FEATURE_LEN);
    assert_eq!(names[0], "f_eig_k1_b1_j1");
    assert_eq!(names[72], "f_band_k1_b1");
    assert_eq!(names[83], "f_scale_k4");
}

fn feats_from(seed: u64) -> FrameVifFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..FRAME_FEATURE_LEN).map(|_| rng.gen_range(0.0..5.0)).collect();
    FrameVifFeatures::from_slice(&v).unwrap()
}

#[test]
fn pooling_single_and_pair() {
    let a = feats_from(1);
    let t = pool_video(&[a], &[], &[]).unwrap();
    assert_eq!(t.frame_feats, a);
    assert!(t.diff_feats.is_none());
    assert_eq!(t.motion, 0.0);
    assert!(!t.has_temporal());

    let b = feats_from(2);
    let d = feats_from(3);
    let t = pool_video(&[a, b], &[d], &[4.0]).unwrap();
    for ((p, x), y) in t.frame_feats.to_vec().iter().zip(a.to_vec()).zip(b.to_vec()) {
        assert!((p - (x + y) / 2.0).abs() < 1e-15);
    }
    assert_eq!(t.diff_feats, Some(d));
    assert_eq!(t.motion, 4.0);

    assert!(matches!(pool_video(&[], &[], &[]), Err(Error::EmptyVideo)));
    assert!(pool_video(&[a, b], &[], &[]).is_err());
}

#[test]
fn pooling_64_frames_matches_running_sum() {
    let frames: Vec<_> = (0..64).map(feats_from).collect();
    let diffs: Vec<_> = (100..163).map(feats_from).collect();
    let motions: Vec<f64> = (0..63).map(|i| i as f64 * 0.25).collect();
    let t = pool_video(&frames, &diffs, &motions).unwrap();
    let pooled = t.frame_feats.to_vec();
    for i in 0..FRAME_FEATURE_LEN {
        let mut acc = 0.0;
        for f in &frames {
            acc += f.to_vec()[i];
        }
        assert!((pooled[i] - acc / 64.0).abs() < 1e-12);
    }
    let mut m = 0.0;
    for x in &motions {
        m += x;
    }
    assert!((t.motion - m / 63.0).abs() < 1e-12);
}

#[test]
fn extract_frames_pools_frames_and_diffs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let planes: Vec<Plane> = (0..5).map(|_| noise_plane(&mut rng, 32, 32)).collect();
    let frames: Vec<Result<LumaFrame>> = planes
        .iter()
        .enumerate()
        .map(|(i, p)| LumaFrame::new(i, p.clone()))
        .collect();
    let t = extract_frames(frames, &cfg()).unwrap();
    assert_eq!(t.frame_count, 5);
    let per: Vec<_> = planes
        .iter()
        .map(|p| frame_vif_features(p, &cfg()).unwrap())
        .collect();
    let want = pool_video(&per, &pool_diffs(&planes), &pool_motion(&planes)).unwrap();
    assert_eq!(t.frame_count, want.frame_count);
    assert_eq!(t.frame_feats, want.frame_feats);
    assert_eq!(t.diff_feats, want.diff_feats);
    assert!((t.motion - want.motion).abs() < 1e-12);
}

fn pool_diffs(planes: &[Plane]) -> Vec<FrameVifFeatures> {
    planes
        .windows(2)
        .map(|w| {
            let d = Plane::from_fn(w[0].width(), w[0].height(), |x, y| w[1].get(x, y) - w[0].get(x, y));
            frame_vif_features(&d, &cfg()).unwrap()
        })
        .collect()
}

fn pool_motion(planes: &[Plane]) -> Vec<f64> {
    planes
        .windows(2)
        .map(|w| {
            let s: f64 = w[1]
                .data()
                .iter()
                .zip(w[0].data())
                .map(|(a, b)| (a - b).abs())
                .sum();
            255.0 * s / w[0].data().len() as f64
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn features_nonnegative_and_consistent(seed in any::<u64>(), w in 16usize..80, h in 16usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = noise_plane(&mut rng, w, h);
        let f = frame_vif_features(&p, &cfg()).unwrap();
        prop_assert!(f.to_vec().iter().all(|&v| v >= 0.0));
        assert_identities(&f);
    }

    #[test]
    fn more_noise_means_less_information(seed in any::<u64>(), bump in 1.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = noise_plane(&mut rng, 40, 40);
        let lo = frame_vif_features(&p, &cfg()).unwrap();
        let noisier = VifConfig { noise_var: 2.0 * bump, ..cfg() };
        let hi = frame_vif_features(&p, &noisier).unwrap();
        for (a, b) in lo.to_vec().iter().zip(hi.to_vec()) {
            if *a > 0.0 {
                prop_assert!(b < *a);
            }
        }
    }

    #[test]
    fn contrast_gain_never_loses_information(seed in any::<u64>(), alpha in 1.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Plane::from_fn(40, 36, |_, _| rng.gen::<f64>() / alpha);
        let base = frame_vif_features(&p, &cfg()).unwrap();
        let scaled = frame_vif_features(&p.map(|v| v * alpha), &cfg()).unwrap();
        for (a, b) in base.to_vec().iter().zip(scaled.to_vec()) {
            prop_assert!(b >= *a);
        }
    }
}

#[test]
fn extraction_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = noise_plane(&mut rng, 70, 45);
    let a = frame_vif_features(&p, &cfg()).unwrap().to_vec();
    let b = frame_vif_features(&p, &cfg()).unwrap().to_vec();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

