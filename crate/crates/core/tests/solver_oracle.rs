//! The closed-form solver against a dense KKT solve and the properties it
//! must satisfy.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsr_core::pattern::{best_for, candidate, identity3};
use tsr_core::sensor::{capture_frame, CameraConfig, ChannelFrame, IlluminationModel, NoiseModel};
use tsr_core::solver::{
    block_code, build_m_spatial, build_m_temporal, reconstruct, reconstruct_spatial, Reconstructor, SpatialCoupling,
    SpatialPatch,
};
use tsr_core::FlickerPattern;

/// Solves [[M, −S], [Sᵀ, 0]] [I; λ] = [0; C] directly.
fn kkt(m: &DMatrix<f64>, s: &DMatrix<f64>, c: &[f64]) -> Vec<f64> {
    let (n, k) = s.shape();
    let mut a = DMatrix::zeros(n + k, n + k);
    a.view_mut((0, 0), (n, n)).copy_from(m);
    a.view_mut((0, n), (n, k)).copy_from(&(-s));
    a.view_mut((n, 0), (k, n)).copy_from(&s.transpose());
    let mut b = DVector::zeros(n + k);
    b.rows_mut(n, k).copy_from(&DVector::from_column_slice(c));
    let x = a.lu().solve(&b).expect("KKT system is non-singular");
    x.rows(0, n).iter().copied().collect()
}

fn random_pattern(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FlickerPattern {
    loop {
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let p = FlickerPattern::from_rows(&rows).unwrap();
        if p.is_full_rank() {
            return p;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn matches_kkt_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=n.min(4));
        let p = random_pattern(&mut rng, n, m);
        let c: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let got = Reconstructor::new(&p).unwrap().solve_normalized(&c).unwrap();
        let want = kkt(build_m_temporal(n).unwrap().entries(), &p.to_matrix(), &c);
        assert!(max_diff(&got, &want) <= 1e-9 * norm(&want).max(1.0), "{p:?}");
        let sti = p.to_matrix().transpose() * DVector::from_column_slice(&got);
        assert!(max_diff(sti.as_slice(), &c) <= 1e-9 * norm(&c).max(1.0));
    }
}

#[test]
fn n4_candidate_pattern_matches_oracle() {
    let p = candidate(4, 1).unwrap();
    let truth = [0.3, 1.7, -0.4, 2.2];
    let c: Vec<f64> = (0..3)
        .map(|m| (0..4).map(|n| p.get(n, m) as f64 * truth[n]).sum())
        .collect();
    let got = Reconstructor::new(&p).unwrap().solve_normalized(&c).unwrap();
    let want = kkt(build_m_temporal(4).unwrap().entries(), &p.to_matrix(), &c);
    assert!(max_diff(&got, &want) < 1e-9);
}

#[test]
fn returned_point_minimises_the_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(3..=8);
        let p = random_pattern(&mut rng, n, 3);
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let i = Reconstructor::new(&p).unwrap().solve_normalized(&c).unwrap();
        let mm = build_m_temporal(n).unwrap();
        let base = mm.quadratic_form(&i);
        // Projector onto the null space of Sᵀ.
        let s = p.to_matrix();
        let st = s.transpose();
        let gram_inv = (&st * &s).try_inverse().unwrap();
        let proj = DMatrix::identity(n, n) - &s * gram_inv * &st;
        for _ in 0..50 {
            let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let v = &proj * r;
            assert!((&st * &v).amax() < 1e-9);
            for eps in [1e-3, -1e-3, 1.0, -1.0] {
                let moved: Vec<f64> = i.iter().zip(v.iter()).map(|(a, b)| a + eps * b).collect();
                assert!(mm.quadratic_form(&moved) >= base - 1e-9 * base.abs().max(1.0));
            }
        }
    }
}

#[test]
fn square_code_ignores_smoothness() {
    let p = FlickerPattern::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]).unwrap();
    let c = [3.0, 5.0, 4.0];
    let got = Reconstructor::new(&p).unwrap().solve_normalized(&c).unwrap();
    let s = p.to_matrix().transpose();
    let want = s.lu().solve(&DVector::from_column_slice(&c)).unwrap();
    assert!(max_diff(&got, want.as_slice()) < 1e-12);
}

#[test]
fn temporal_m_positive_definite_up_to_64() {
    for n in 2..=64 {
        let eig = build_m_temporal(n).unwrap().entries().clone().symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "n = {n}");
    }
}

#[test]
fn environment_law_on_reconstruction() {
    let cam = CameraConfig::new(10.0, 4).unwrap();
    let p = best_for(4).unwrap().pattern;
    let i = [0.4, 1.3, 0.9, 2.0];
    let clean = capture_frame(&i, &p, &IlluminationModel::ideal(3), &NoiseModel::off(), &cam, 0).unwrap();
    let base = reconstruct(&clean, &p, &[1.0; 3]).unwrap();
    for alpha in [1.0, 2.0, 10.0] {
        let illum = IlluminationModel::new(1.0, 1.0 / alpha, vec![1.0; 3]).unwrap();
        let f = capture_frame(&i, &p, &illum, &NoiseModel::off(), &cam, 0).unwrap();
        let with_env = reconstruct(&f, &p, &[1.0; 3]).unwrap();
        for (a, b) in with_env.iter().zip(&base) {
            let delta = a - b;
            assert!((delta - b / alpha).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }
}

fn patch(frames: Vec<Vec<f64>>, w_t: f64, w_s: f64) -> SpatialPatch {
    let frames = frames.into_iter().map(|c| ChannelFrame::new(c, 0).unwrap()).collect();
    SpatialPatch::new(frames, w_t, w_s).unwrap()
}

#[test]
fn spatial_matches_kkt_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in [3, 4, 6] {
        let p = best_for(n).unwrap().pattern;
        let frames: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..4.0)).collect())
            .collect();
        let got = reconstruct_spatial(&patch(frames.clone(), 3.0, 1.0), &p, &[1.0; 3]).unwrap();
        let c: Vec<f64> = frames.concat();
        let m = build_m_spatial(n, 3.0, 1.0, SpatialCoupling::Literal).unwrap();
        let want = kkt(m.entries(), &block_code(&p), &c);
        assert!(max_diff(&got.concat(), &want) < 1e-9 * norm(&want), "n = {n}");
    }
}

#[test]
fn spatial_without_ws_decouples_pixels() {
    let p = best_for(4).unwrap().pattern;
    let block = build_m_spatial(4, 1.0, 0.0, SpatialCoupling::Literal).unwrap();
    let single =
        tsr_core::solver::SmoothnessMatrix::from_entries(block.entries().view((0, 0), (4, 4)).into_owned()).unwrap();
    let solo = Reconstructor::with_matrix(&p, &single).unwrap();
    let frames: Vec<Vec<f64>> = (0..5).map(|k| vec![1.0 + k as f64, 2.0, 0.5 * k as f64]).collect();
    let joint = reconstruct_spatial(&patch(frames.clone(), 1.0, 0.0), &p, &[1.0; 3]).unwrap();
    for (px, c) in joint.iter().zip(&frames) {
        assert!(max_diff(px, &solo.solve_normalized(c).unwrap()) < 1e-9);
    }
}

#[test]
fn identical_pixels_reconstruct_identically() {
    for n in [3, 4, 6] {
        let p = best_for(n).unwrap().pattern;
        let c = vec![1.0, 2.5, 0.7];
        let out = reconstruct_spatial(&patch(vec![c; 5], 3.0, 1.0), &p, &[1.0; 3]).unwrap();
        for px in &out[1..] {
            assert!(max_diff(px, &out[0]) < 1e-9);
        }
    }
}

#[test]
fn literal_spatial_coupling_degenerates_at_n5() {
    // With five sub-steps per pixel every same-index sub-step pair is a
    // multiple of 5 apart, and the literal case list leaves no unique solution.
    let p = best_for(5).unwrap().pattern;
    let c = vec![1.0, 2.5, 0.7];
    let err = reconstruct_spatial(&patch(vec![c; 5], 3.0, 1.0), &p, &[1.0; 3]).unwrap_err();
    assert!(matches!(err, tsr_core::TsrError::Singular(_)));
}

#[test]
fn identity_sequence_is_constant_for_constant_scene() {
    let p = identity3();
    let out = reconstruct(&ChannelFrame::new(vec![2.0; 3], 0).unwrap(), &p, &[1.0; 3]).unwrap();
    assert!(max_diff(&out, &[2.0; 3]) < 1e-12);
}

proptest! {
    #[test]
    fn scale_equivariance(c in prop::collection::vec(-100.0..100.0f64, 3), k in -50.0..50.0f64) {
        let solver = Reconstructor::new(&best_for(5).unwrap().pattern).unwrap();
        let a = solver.solve_normalized(&c).unwrap();
        let kc: Vec<f64> = c.iter().map(|v| k * v).collect();
        let b = solver.solve_normalized(&kc).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((k * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn constraints_hold_for_random_codes(bits in prop::collection::vec(0u8..2, 24), c in prop::collection::vec(-10.0..10.0f64, 3)) {
        let rows: Vec<Vec<u8>> = bits.chunks(3).map(<[u8]>::to_vec).collect();
        let p = FlickerPattern::from_rows(&rows).unwrap();
        prop_assume!(p.is_full_rank());
        let i = Reconstructor::new(&p).unwrap().solve_normalized(&c).unwrap();
        let sti = p.to_matrix().transpose() * DVector::from_column_slice(&i);
        for (a, b) in sti.iter().zip(&c) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
