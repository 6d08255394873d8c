//! Camera model: integration of a fine-grid scene into sub-step averages,
//! flicker-coded channel accumulation, environment light, per-channel
//! reflectivity and the sensor noise model.
//!
//! Intensities are in arbitrary linear units. Only ratios (α, SNR ratios) are
//! physically meaningful; when the shot-noise term is enabled the channel
//! values are read as electron counts.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TsrError};
use crate::pattern::FlickerPattern;
use crate::signals::{FineSignal, Sampled};

const GRID_TOL: f64 = 1e-6;

/// Frame rate, up-sample factor and exposure fill of the simulated camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub fps: f64,
    pub n_factor: usize,
    /// Fraction of the frame period that is integrated.
    pub exposure_fill: f64,
}

impl CameraConfig {
    pub fn new(fps: f64, n_factor: usize) -> Result<Self> {
        Self::with_fill(fps, n_factor, 1.0)
    }

    pub fn with_fill(fps: f64, n_factor: usize, exposure_fill: f64) -> Result<Self> {
        let cam = Self {
            fps,
            n_factor,
            exposure_fill,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.n_factor < 1 {
            return Err(invalid("n_factor must be >= 1"));
        }
        if !(self.exposure_fill > 0.0 && self.exposure_fill <= 1.0) {
            return Err(invalid(format!(
                "exposure_fill must be in (0, 1], got {}",
                self.exposure_fill
            )));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.fps
    }

    /// Integration time T.
    pub fn exposure(&self) -> f64 {
        self.exposure_fill / self.fps
    }

    /// Sub-step duration T / N.
    pub fn substep(&self) -> f64 {
        self.exposure() / self.n_factor as f64
    }

    /// Rate of the reconstructed trace, fps · N.
    pub fn trace_rate(&self) -> f64 {
        self.fps * self.n_factor as f64
    }

    pub fn with_n(&self, n_factor: usize) -> Self {
        Self { n_factor, ..*self }
    }
}

/// How environment light reaches a channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvCoupling {
    /// Environment light is collected only while the channel's flicker is
    /// lit, so every channel gains exactly `1/α` of its flicker signal.
    #[default]
    Gated,
    /// Environment light is collected over the whole exposure regardless of
    /// the code.
    Continuous,
}

/// Flicker and environment light levels and the scene's per-channel
/// reflectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationModel {
    pub flicker_intensity: f64,
    pub env_intensity: f64,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub env_coupling: EnvCoupling,
}

impl IlluminationModel {
    pub fn new(flicker_intensity: f64, env_intensity: f64, gammas: Vec<f64>) -> Result<Self> {
        let illum = Self {
            flicker_intensity,
            env_intensity,
            gammas,
            env_coupling: EnvCoupling::Gated,
        };
        illum.validate()?;
        Ok(illum)
    }

    /// Unit flicker, no environment light, white scene.
    pub fn ideal(m: usize) -> Self {
        Self {
            flicker_intensity: 1.0,
            env_intensity: 0.0,
            gammas: vec![1.0; m],
            env_coupling: EnvCoupling::Gated,
        }
    }

    /// Environment level set from `alpha = flicker / env`.
    pub fn with_alpha(alpha: f64, flicker_intensity: f64, gammas: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(invalid(format!("alpha must be > 0, got {alpha}")));
        }
        let env = if alpha.is_infinite() {
            0.0
        } else {
            flicker_intensity / alpha
        };
        Self::new(flicker_intensity, env, gammas)
    }

    pub fn coupling(mut self, coupling: EnvCoupling) -> Self {
        self.env_coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flicker_intensity > 0.0 && self.flicker_intensity.is_finite()) {
            return Err(invalid(format!(
                "flicker_intensity must be > 0, got {}",
                self.flicker_intensity
            )));
        }
        if !(self.env_intensity >= 0.0 && self.env_intensity.is_finite()) {
            return Err(invalid(format!(
                "env_intensity must be >= 0, got {}",
                self.env_intensity
            )));
        }
        if self.gammas.is_empty() {
            return Err(TsrError::Empty("gammas"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(invalid(format!("gamma must be in (0, 1], got {g}")));
        }
        Ok(())
    }

    /// `flicker / env`, infinite without environment light.
    pub fn alpha(&self) -> f64 {
        if self.env_intensity > 0.0 {
            self.flicker_intensity / self.env_intensity
        } else {
            f64::INFINITY
        }
    }

    pub fn min_gamma(&self) -> f64 {
        self.gammas.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Dark current D (e⁻/s), read noise N_r (e⁻ RMS) and the shot-noise switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dark_coeff: f64,
    pub read_noise: f64,
    pub shot_noise_on: bool,
}

impl NoiseModel {
    pub fn new(dark_coeff: f64, read_noise: f64, shot_noise_on: bool) -> Result<Self> {
        let nm = Self {
            dark_coeff,
            read_noise,
            shot_noise_on,
        };
        nm.validate()?;
        Ok(nm)
    }

    pub fn off() -> Self {
        Self {
            dark_coeff: 0.0,
            read_noise: 0.0,
            shot_noise_on: false,
        }
    }

    pub fn shot_only() -> Self {
        Self {
            shot_noise_on: true,
            ..Self::off()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dark_coeff >= 0.0) {
            return Err(invalid(format!("dark_coeff must be >= 0, got {}", self.dark_coeff)));
        }
        if !(self.read_noise >= 0.0) {
            return Err(invalid(format!("read_noise must be >= 0, got {}", self.read_noise)));
        }
        Ok(())
    }

    /// Variance added to a clean value over an exposure of `exposure_s`.
    pub fn variance(&self, clean: f64, exposure_s: f64) -> f64 {
        let shot = if self.shot_noise_on { clean.max(0.0) } else { 0.0 };
        shot + self.dark_coeff * exposure_s + self.read_noise * self.read_noise
    }

    pub fn is_silent(&self) -> bool {
        !self.shot_noise_on && self.dark_coeff == 0.0 && self.read_noise == 0.0
    }
}

/// The M channel values measured for one exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFrame {
    pub c_values: Vec<f64>,
    pub frame_index: i64,
}

impl ChannelFrame {
    pub fn new(c_values: Vec<f64>, frame_index: i64) -> Result<Self> {
        if c_values.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!("frame {frame_index} has non-finite channel values")));
        }
        Ok(Self { c_values, frame_index })
    }
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn grid_index(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if (x - r).abs() > GRID_TOL {
        return Err(invalid(format!("fine grid does not align with {what}")));
    }
    Ok(r.max(0.0) as usize)
}

/// Mean scene intensity in each of the N sub-steps of exposure `frame`.
///
/// Frame `k` starts at `k / fps` (absolute time). Each mean is the
/// trapezoidal integral of the fine samples over the sub-step divided by its
/// length, so the grid must place a sample on every sub-step boundary.
pub fn substep_averages(sig: &FineSignal, cam: &CameraConfig, frame: i64) -> Result<Vec<f64>> {
    let rate = sig.grid_rate();
    let per_sub = grid_index(rate * cam.substep(), "the sub-step length")?;
    if per_sub == 0 {
        return Err(invalid("fine grid is coarser than one sub-step"));
    }
    let start = frame as f64 / cam.fps;
    let offset = (start - sig.t0()) * rate;
    let end = offset + (per_sub * cam.n_factor) as f64;
    if offset < -GRID_TOL || end > (sig.len() - 1) as f64 + GRID_TOL {
        return Err(TsrError::SpanNotCovered(format!(
            "exposure of frame {frame} ([{start}, {}] s)",
            start + cam.exposure()
        )));
    }
    let a = grid_index(offset, "the frame start")?;
    let x = sig.samples();
    Ok((0..cam.n_factor)
        .map(|n| {
            let lo = a + n * per_sub;
            let hi = lo + per_sub;
            let inner: f64 = x[lo + 1..hi].iter().sum();
            (0.5 * (x[lo] + x[hi]) + inner) / per_sub as f64
        })
        .collect())
}

/// Indices of the frames whose whole exposure lies inside the signal span.
pub fn frame_range(sig: &FineSignal, cam: &CameraConfig) -> Range<i64> {
    let tol = 1e-9;
    let first = (sig.t0() * cam.fps - tol).ceil() as i64;
    let last_start = (sig.end_time() - cam.exposure()) * cam.fps + tol;
    let last = last_start.floor() as i64;
    if last < first {
        first..first
    } else {
        first..last + 1
    }
}

/// Noise-free channel values for sub-step intensities `i_vec`.
pub fn clean_channels(
    i_vec: &[f64],
    pattern: &FlickerPattern,
    illum: &IlluminationModel,
    cam: &CameraConfig,
) -> Result<Vec<f64>> {
    let n = pattern.n_substeps();
    let m = pattern.n_channels();
    if i_vec.len() != n {
        return Err(TsrError::LengthMismatch {
            left: i_vec.len(),
            right: n,
        });
    }
    if illum.gammas.len() != m {
        return Err(TsrError::LengthMismatch {
            left: illum.gammas.len(),
            right: m,
        });
    }
    let dt = cam.exposure() / n as f64;
    let total: f64 = i_vec.iter().sum();
    Ok((0..m)
        .map(|ch| {
            let lit: f64 = (0..n).map(|k| pattern.get(k, ch) as f64 * i_vec[k]).sum();
            let env_seen = match illum.env_coupling {
                EnvCoupling::Gated => lit,
                EnvCoupling::Continuous => total,
            };
            illum.gammas[ch] * dt * (illum.flicker_intensity * lit + illum.env_intensity * env_seen)
        })
        .collect())
}

/// Channel value a unit-intensity sub-step contributes under flicker alone;
/// dividing a reconstruction by it returns scene units.
pub fn flicker_scale(illum: &IlluminationModel, cam: &CameraConfig) -> f64 {
    illum.flicker_intensity * cam.substep()
}

/// Adds Gaussian noise with variance `clean + D·T + N_r²` (shot term only when
/// enabled) to each value, deterministically for a given seed.
pub fn apply_noise(clean: &[f64], noise: &NoiseModel, exposure_s: f64, rng_seed: u64) -> Vec<f64> {
    if noise.is_silent() {
        return clean.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    clean
        .iter()
        .map(|&c| {
            let sd = noise.variance(c, exposure_s).sqrt();
            if sd > 0.0 {
                let d = Normal::new(0.0, sd).expect("finite positive sd");
                c + d.sample(&mut rng)
            } else {
                c
            }
        })
        .collect()
}

/// Measures one exposure: code-weighted accumulation of the sub-step
/// intensities under flicker and environment light, then sensor noise.
pub fn capture_frame(
    i_vec: &[f64],
    pattern: &FlickerPattern,
    illum: &IlluminationModel,
    noise: &NoiseModel,
    cam: &CameraConfig,
    rng_seed: u64,
) -> Result<ChannelFrame> {
    let clean = clean_channels(i_vec, pattern, illum, cam)?;
    ChannelFrame::new(apply_noise(&clean, noise, cam.exposure(), rng_seed), 0)
}

/// Simulates every whole exposure contained in the signal span.
///
/// Frame `k` uses the noise seed `derive_seed(seed, k)`.
pub fn simulate_sequence(
    sig: &FineSignal,
    cam: &CameraConfig,
    pattern: &FlickerPattern,
    illum: &IlluminationModel,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<ChannelFrame>> {
    simulate_with(sig, cam, illum, noise, seed, |_| pattern)
}

/// Like [`simulate_sequence`] but the code may change from frame to frame.
pub fn simulate_with<'p>(
    sig: &FineSignal,
    cam: &CameraConfig,
    illum: &IlluminationModel,
    noise: &NoiseModel,
    seed: u64,
    pattern_for: impl Fn(i64) -> &'p FlickerPattern,
) -> Result<Vec<ChannelFrame>> {
    cam.validate()?;
    let frames = frame_range(sig, cam);
    if frames.is_empty() {
        return Err(TsrError::SpanNotCovered(format!(
            "one exposure ({} s); signal lasts {} s",
            cam.exposure(),
            sig.duration()
        )));
    }
    frames
        .map(|k| {
            let pattern = pattern_for(k);
            if pattern.n_substeps() != cam.n_factor {
                return Err(invalid(format!(
                    "pattern has {} sub-steps but camera N is {}",
                    pattern.n_substeps(),
                    cam.n_factor
                )));
            }
            let i_vec = substep_averages(sig, cam, k)?;
            let mut frame =
                capture_frame(&i_vec, pattern, illum, noise, cam, derive_seed(seed, k as u64)).map_err(|e| {
                    TsrError::Frame {
                        index: k,
                        source: Box::new(e),
                    }
                })?;
            frame.frame_index = k;
            Ok(frame)
        })
        .collect()
}

/// Ground-truth sub-step averages of every simulated frame, concatenated.
pub fn substep_truth(sig: &FineSignal, cam: &CameraConfig) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in frame_range(sig, cam) {
        out.extend(substep_averages(sig, cam, k)?);
    }
    Ok(out)
}

/// Per-exposure means: what a plain camera at `fps` would record.
pub fn exposure_means(sig: &FineSignal, cam: &CameraConfig) -> Result<Vec<f64>> {
    let plain = cam.with_n(1);
    frame_range(sig, &plain)
        .map(|k| substep_averages(sig, &plain, k).map(|v| v[0]))
        .collect()
}

/// Reflectivity factors estimated from a flicker-free image of the scene and
/// of a white reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub gammas: Vec<f64>,
    /// Channels whose measured ratio exceeded 1 and were clamped.
    pub over_unity: Vec<usize>,
}

pub fn estimate_gammas(reference: &ChannelFrame, white: &ChannelFrame) -> Result<GammaEstimate> {
    if reference.c_values.len() != white.c_values.len() {
        return Err(TsrError::LengthMismatch {
            left: reference.c_values.len(),
            right: white.c_values.len(),
        });
    }
    let mut over_unity = Vec::new();
    let mut gammas = Vec::with_capacity(white.c_values.len());
    for (m, (r, w)) in reference.c_values.iter().zip(&white.c_values).enumerate() {
        if !(*w > 0.0) {
            return Err(TsrError::Calibration(format!(
                "white reference channel {m} is {w}, must be > 0"
            )));
        }
        let ratio = r / w;
        if !(ratio > 0.0) {
            return Err(TsrError::Calibration(format!(
                "channel {m} reflectivity ratio {ratio} is not positive"
            )));
        }
        if ratio > 1.0 {
            over_unity.push(m);
        }
        gammas.push(ratio.min(1.0));
    }
    Ok(GammaEstimate { gammas, over_unity })
}

/// `[(1 + α) · min γ]^{3/2}`, the SNR-improvement bound stated for flicker
/// illumination.
pub fn snr_ratio_bound(illum: &IlluminationModel) -> f64 {
    ((1.0 + illum.alpha()) * illum.min_gamma()).powf(1.5)
}

impl Sampled for ChannelFrame {
    fn samples(&self) -> &[f64] {
        &self.c_values
    }

    fn sample_rate(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::identity3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_cam(n: usize) -> CameraConfig {
        CameraConfig::new(10.0, n).unwrap()
    }

    /// Flicker intensity such that flicker · T / N = 1.
    fn unit_illum(cam: &CameraConfig, m: usize) -> IlluminationModel {
        IlluminationModel::new(1.0 / cam.substep(), 0.0, vec![1.0; m]).unwrap()
    }

    #[test]
    fn constant_signal_averages() {
        let sig = FineSignal::from_fn(1.0, 3000.0, 0.0, |_| 5.0).unwrap();
        let v = substep_averages(&sig, &unit_cam(3), 2).unwrap();
        for x in v {
            assert_relative_eq!(x, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ramp_halves() {
        // Ramp 0 -> 1 over the first exposure (0.1 s).
        let sig = FineSignal::from_fn(0.1, 1000.0, 0.0, |t| t / 0.1).unwrap();
        let v = substep_averages(&sig, &unit_cam(2), 0).unwrap();
        assert_relative_eq!(v[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(v[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn sine_matches_closed_form_integral() {
        let f = 6.0;
        let cam = unit_cam(3);
        let sig = FineSignal::from_fn(0.5, 30_000.0, 0.0, |t| (2.0 * PI * f * t).sin()).unwrap();
        let v = substep_averages(&sig, &cam, 0).unwrap();
        let d = cam.substep();
        for (n, got) in v.iter().enumerate() {
            let (a, b) = (n as f64 * d, (n + 1) as f64 * d);
            let exact = ((2.0 * PI * f * a).cos() - (2.0 * PI * f * b).cos()) / (2.0 * PI * f * d);
            assert!((got - exact).abs() < 1e-6, "sub-step {n}: {got} vs {exact}");
        }
    }

    #[test]
    fn span_errors() {
        let sig = FineSignal::from_fn(0.25, 3000.0, 0.0, |_| 1.0).unwrap();
        let cam = unit_cam(3);
        assert!(substep_averages(&sig, &cam, 1).is_ok());
        assert!(matches!(
            substep_averages(&sig, &cam, 2),
            Err(TsrError::SpanNotCovered(_))
        ));
        assert!(matches!(
            substep_averages(&sig, &cam, -1),
            Err(TsrError::SpanNotCovered(_))
        ));
        let odd = FineSignal::from_fn(1.0, 1000.0, 0.0, |_| 1.0).unwrap();
        assert!(substep_averages(&odd, &cam, 0).is_err());
    }

    #[test]
    fn identity_capture() {
        let cam = unit_cam(3);
        let f = capture_frame(
            &[2.0, 5.0, 3.0],
            &identity3(),
            &unit_illum(&cam, 3),
            &NoiseModel::off(),
            &cam,
            1,
        )
        .unwrap();
        for (a, b) in f.c_values.iter().zip([2.0, 5.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gated_environment_adds_one_over_alpha() {
        let cam = unit_cam(4);
        let p = crate::pattern::candidate(4, 1).unwrap();
        let i = [0.3, 1.7, -0.2, 0.9];
        let base = clean_channels(&i, &p, &IlluminationModel::ideal(3), &cam).unwrap();
        for alpha in [0.5, 1.0, 2.0, 10.0] {
            let lit = IlluminationModel::with_alpha(alpha, 1.0, vec![1.0; 3]).unwrap();
            let c = clean_channels(&i, &p, &lit, &cam).unwrap();
            for (a, b) in c.iter().zip(&base) {
                assert!((a - b * (1.0 + 1.0 / alpha)).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn continuous_environment_sees_whole_exposure() {
        let cam = unit_cam(3);
        let lit = IlluminationModel::new(1.0 / cam.substep(), 2.0 / cam.substep(), vec![1.0; 3])
            .unwrap()
            .coupling(EnvCoupling::Continuous);
        let c = clean_channels(&[1.0, 2.0, 3.0], &identity3(), &lit, &cam).unwrap();
        assert_relative_eq!(c[0], 1.0 + 2.0 * 6.0, epsilon = 1e-12);
        assert_relative_eq!(c[2], 3.0 + 2.0 * 6.0, epsilon = 1e-12);
    }

    #[test]
    fn shot_noise_follows_sqrt_law() {
        let cam = unit_cam(3);
        let noise = NoiseModel::shot_only();
        let trials = 10_000;
        let draws: Vec<f64> = (0..trials)
            .map(|s| apply_noise(&[100.0], &noise, cam.exposure(), s)[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / trials as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 10.0).abs() / 10.0 < 0.05, "sd {sd}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let noise = NoiseModel::new(5.0, 3.0, true).unwrap();
        let a = apply_noise(&[10.0, 20.0], &noise, 0.1, 42);
        let b = apply_noise(&[10.0, 20.0], &noise, 0.1, 42);
        let c = apply_noise(&[10.0, 20.0], &noise, 0.1, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_relative_eq!(noise.variance(10.0, 0.1), 10.0 + 0.5 + 9.0);
    }

    #[test]
    fn sequence_counts_and_errors() {
        let cam = unit_cam(3);
        let sig = FineSignal::from_fn(5.0, 3000.0, 0.0, |t| (2.0 * PI * t).sin()).unwrap();
        let frames = simulate_sequence(
            &sig,
            &cam,
            &identity3(),
            &IlluminationModel::ideal(3),
            &NoiseModel::off(),
            7,
        )
        .unwrap();
        assert_eq!(frames.len(), 50);
        assert_eq!(frames[49].frame_index, 49);

        let short = FineSignal::from_fn(0.05, 3000.0, 0.0, |_| 1.0).unwrap();
        assert!(matches!(
            simulate_sequence(
                &short,
                &cam,
                &identity3(),
                &IlluminationModel::ideal(3),
                &NoiseModel::off(),
                7
            ),
            Err(TsrError::SpanNotCovered(_))
        ));
    }

    #[test]
    fn constant_scene_gives_identical_frames() {
        let cam = unit_cam(3);
        let sig = FineSignal::from_fn(1.0, 3000.0, 0.0, |_| 2.5).unwrap();
        let frames = simulate_sequence(
            &sig,
            &cam,
            &identity3(),
            &IlluminationModel::ideal(3),
            &NoiseModel::off(),
            0,
        )
        .unwrap();
        for f in &frames[1..] {
            for (a, b) in f.c_values.iter().zip(&frames[0].c_values) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn windowed_signal_keeps_frame_numbers() {
        let cam = unit_cam(3);
        let sig = FineSignal::from_fn(2.0, 3000.0, 0.0, |t| t).unwrap();
        let w = sig.window(0.5, 1.0).unwrap();
        assert_eq!(frame_range(&w, &cam), 5..10);
    }

    #[test]
    fn gamma_estimates() {
        let white = ChannelFrame::new(vec![10.0, 20.0, 40.0], 0).unwrap();
        let same = estimate_gammas(&white, &white).unwrap();
        assert_eq!(same.gammas, vec![1.0; 3]);

        let half = ChannelFrame::new(vec![5.0, 10.0, 20.0], 0).unwrap();
        assert_eq!(estimate_gammas(&half, &white).unwrap().gammas, vec![0.5; 3]);

        let mixed = ChannelFrame::new(vec![8.0, 20.0, 24.0], 0).unwrap();
        let g = estimate_gammas(&mixed, &white).unwrap();
        assert_relative_eq!(g.gammas[0], 0.8);
        assert_relative_eq!(g.gammas[1], 1.0);
        assert_relative_eq!(g.gammas[2], 0.6);

        let hot = ChannelFrame::new(vec![12.0, 20.0, 40.0], 0).unwrap();
        let g = estimate_gammas(&hot, &white).unwrap();
        assert_eq!(g.gammas[0], 1.0);
        assert_eq!(g.over_unity, vec![0]);

        let dead = ChannelFrame::new(vec![10.0, 0.0, 40.0], 0).unwrap();
        assert!(matches!(estimate_gammas(&white, &dead), Err(TsrError::Calibration(_))));
    }

    #[test]
    fn bound_arithmetic() {
        let b = |alpha: f64, g: Vec<f64>| snr_ratio_bound(&IlluminationModel::with_alpha(alpha, 1.0, g).unwrap());
        assert_relative_eq!(b(1.0, vec![1.0; 3]), 2.0_f64.powf(1.5), epsilon = 1e-12);
        assert_relative_eq!(b(1.0, vec![1.0; 3]), 2.828, epsilon = 1e-3);
        assert_relative_eq!(b(1e-12, vec![1.0; 3]), 1.0, epsilon = 1e-9);
        assert_relative_eq!(b(10.0, vec![0.5, 1.0, 1.0]), 5.5_f64.powf(1.5), epsilon = 1e-12);
        assert_relative_eq!(b(10.0, vec![0.5, 1.0, 1.0]), 12.899, epsilon = 1e-3);
    }

    #[test]
    fn illumination_validation() {
        assert!(IlluminationModel::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(IlluminationModel::new(1.0, -1.0, vec![1.0]).is_err());
        assert!(IlluminationModel::new(1.0, 0.0, vec![1.2]).is_err());
        assert!(IlluminationModel::new(1.0, 0.0, vec![0.0]).is_err());
        assert_eq!(IlluminationModel::ideal(3).alpha(), f64::INFINITY);
        assert_relative_eq!(IlluminationModel::new(2.0, 4.0, vec![1.0]).unwrap().alpha(), 0.5);
        assert!(CameraConfig::new(0.0, 3).is_err());
        assert!(CameraConfig::new(10.0, 0).is_err());
        assert!(CameraConfig::with_fill(10.0, 3, 1.5).is_err());
        assert!(NoiseModel::new(-1.0, 0.0, true).is_err());
    }

    proptest! {
        #[test]
        fn capture_is_linear(
            i in prop::collection::vec(-5.0..5.0f64, 4),
            j in prop::collection::vec(-5.0..5.0f64, 4),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            env in 0.0..2.0f64,
        ) {
            let cam = unit_cam(4);
            let p = crate::pattern::candidate(4, 3).unwrap();
            let illum = IlluminationModel::new(1.0, env, vec![0.9, 0.5, 1.0]).unwrap();
            let mix: Vec<f64> = i.iter().zip(&j).map(|(x, y)| a * x + b * y).collect();
            let ci = clean_channels(&i, &p, &illum, &cam).unwrap();
            let cj = clean_channels(&j, &p, &illum, &cam).unwrap();
            let cm = clean_channels(&mix, &p, &illum, &cam).unwrap();
            for k in 0..3 {
                prop_assert!((cm[k] - (a * ci[k] + b * cj[k])).abs() < 1e-9);
            }
        }
    }
}
