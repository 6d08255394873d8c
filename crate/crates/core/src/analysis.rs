//! Reconstruction quality: similarity metrics, exhaustive pattern
//! enumeration, ensemble error profiles over tone frequency, per-band winners
//! and the flicker-to-environment (α) sweep.

use std::borrow::Cow;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TsrError};
use crate::pattern::{FlickerPattern, NamedPattern};
use crate::sensor::{
    apply_noise, clean_channels, derive_seed, exposure_means, flicker_scale, simulate_with, snr_ratio_bound,
    CameraConfig, EnvCoupling, IlluminationModel, NoiseModel,
};
use crate::signals::{fft_in_place, FineSignal, Sampled, Tone};
use crate::solver::{reconstruct_sequence_with, Reconstructor};

/// Largest `n · m` handled by [`enumerate_patterns`].
pub const EXHAUSTIVE_LIMIT: usize = 36;

const RATE_TOL: f64 = 1e-6;

fn integer_ratio(hi: f64, lo: f64) -> Result<usize> {
    let r = hi / lo;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > RATE_TOL {
        return Err(invalid(format!(
            "sample rates {hi} and {lo} Hz are not integer multiples"
        )));
    }
    Ok(k as usize)
}

/// Repeats every sample `factor` times.
pub fn resample_zoh(values: &[f64], factor: usize) -> Vec<f64> {
    values.iter().flat_map(|v| std::iter::repeat_n(*v, factor)).collect()
}

/// Two sequences on a common grid, and that grid's rate.
type Aligned<'a> = (Cow<'a, [f64]>, Cow<'a, [f64]>, f64);

/// Brings two sampled sequences to the finer of their rates by zero-order
/// hold and checks that the lengths then agree.
fn aligned<'a, A, B>(a: &'a A, b: &'a B) -> Result<Aligned<'a>>
where
    A: Sampled + ?Sized,
    B: Sampled + ?Sized,
{
    let (ra, rb) = (a.sample_rate(), b.sample_rate());
    let (xa, xb, rate): (Cow<[f64]>, Cow<[f64]>, f64) = if (ra - rb).abs() <= RATE_TOL * ra.max(rb) {
        (Cow::Borrowed(a.samples()), Cow::Borrowed(b.samples()), ra)
    } else if ra > rb {
        let k = integer_ratio(ra, rb)?;
        (Cow::Borrowed(a.samples()), Cow::Owned(resample_zoh(b.samples(), k)), ra)
    } else {
        let k = integer_ratio(rb, ra)?;
        (Cow::Owned(resample_zoh(a.samples(), k)), Cow::Borrowed(b.samples()), rb)
    };
    if xa.len() != xb.len() {
        return Err(TsrError::LengthMismatch {
            left: xa.len(),
            right: xb.len(),
        });
    }
    Ok((xa, xb, rate))
}

/// `sqrt(Σ (a − b)² · dt)` over equal-length sequences.
pub fn l2_distance(a: &[f64], b: &[f64], dt: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TsrError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss * dt).sqrt())
}

/// Angle between two equal-length sequences, radians.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TsrError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(TsrError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0).acos())
}

/// Euclidean distance between two sampled signals, the coarser one held to
/// the finer grid first.
pub fn l2_error<A: Sampled + ?Sized, B: Sampled + ?Sized>(f1: &A, f2: &B) -> Result<f64> {
    let (a, b, rate) = aligned(f1, f2)?;
    l2_distance(&a, &b, 1.0 / rate)
}

/// Angle between two sampled signals, the coarser one held to the finer grid
/// first.
pub fn cosine_error<A: Sampled + ?Sized, B: Sampled + ?Sized>(f1: &A, f2: &B) -> Result<f64> {
    let (a, b, _) = aligned(f1, f2)?;
    cosine_distance(&a, &b)
}

/// How a coarse trace of interval averages is drawn on the fine grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Render {
    /// Trigonometric interpolation through the interval centres.
    #[default]
    BandLimited,
    /// Each value held over its interval.
    Zoh,
}

/// Draws `values` (sampled at `rate`, sample `k` the mean over
/// `[k, k + 1) / rate`) on a grid `fine_rate / rate` times denser.
pub fn render_trace(values: &[f64], rate: f64, fine_rate: f64, mode: Render) -> Result<Vec<f64>> {
    let q = integer_ratio(fine_rate, rate)?;
    match mode {
        Render::Zoh => Ok(resample_zoh(values, q)),
        Render::BandLimited => Ok(band_limited(values, q)),
    }
}

fn band_limited(values: &[f64], q: usize) -> Vec<f64> {
    let l = values.len();
    if l == 0 {
        return Vec::new();
    }
    let mut y: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut y, false);
    let out_len = l * q;
    let mut z = vec![Complex64::new(0.0, 0.0); out_len];
    // Sample k sits at the centre of its interval, half a coarse step after
    // the fine sample that starts the interval.
    let shift = |k: usize| Complex64::from_polar(1.0, PI * k as f64 / l as f64);
    let half = l / 2;
    for k in 0..=half {
        let nyquist = l.is_multiple_of(2) && k == half;
        if k == 0 {
            z[0] = y[0];
            continue;
        }
        let mut v = y[k] * shift(k).conj();
        if nyquist {
            v *= 0.5;
        }
        if q == 1 && nyquist {
            z[k] = Complex64::new((2.0 * v).re, 0.0);
            continue;
        }
        z[k] += v;
        z[out_len - k] += v.conj();
    }
    fft_in_place(&mut z, true);
    z.into_iter().map(|c| c.re / l as f64).collect()
}

/// Which binary patterns [`enumerate_patterns`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConstraints {
    pub full_rank: bool,
    pub no_zero_row: bool,
}

impl Default for PatternConstraints {
    fn default() -> Self {
        Self {
            full_rank: true,
            no_zero_row: true,
        }
    }
}

impl PatternConstraints {
    pub fn accepts(&self, p: &FlickerPattern) -> bool {
        (!self.full_rank || p.is_full_rank()) && (!self.no_zero_row || !p.has_zero_row())
    }
}

/// Every binary `n × m` matrix meeting `constraints`, in increasing order of
/// its bit encoding.
pub fn enumerate_patterns(n: usize, m: usize, constraints: PatternConstraints) -> Result<Vec<FlickerPattern>> {
    if m == 0 || n < m {
        return Err(invalid(format!("need n >= m >= 1, got n={n} m={m}")));
    }
    if n * m > EXHAUSTIVE_LIMIT {
        return Err(TsrError::OutOfExhaustiveRange {
            n,
            m,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    Ok((0u64..1 << (n * m))
        .map(|bits| FlickerPattern::from_bits(n, m, bits))
        .filter(|p| constraints.accepts(p))
        .collect())
}

/// `count` random patterns meeting `constraints`, drawn by rejection; the
/// fallback when `n · m` is beyond the exhaustive range.
pub fn sample_patterns(
    n: usize,
    m: usize,
    count: usize,
    constraints: PatternConstraints,
    seed: u64,
) -> Result<Vec<FlickerPattern>> {
    if m == 0 || n < m || n * m > 64 {
        return Err(invalid(format!("need n >= m >= 1 and n*m <= 64, got n={n} m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = if n * m == 64 { u64::MAX } else { (1u64 << (n * m)) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count.max(1) {
            return Err(invalid(
                "pattern sampler found too few patterns meeting the constraints",
            ));
        }
        let p = FlickerPattern::from_bits(n, m, rng.random::<u64>() & mask);
        if constraints.accepts(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// A set of random single-tone scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_trials: usize,
    pub freq_range_hz: (f64, f64),
    pub duration_s: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Constant added to every scene (keeps intensities non-negative when
    /// shot noise is simulated).
    #[serde(default)]
    pub offset: f64,
}

impl EnsembleSpec {
    pub fn new(n_trials: usize, freq_range_hz: (f64, f64), duration_s: f64, amplitude: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            n_trials,
            freq_range_hz,
            duration_s,
            amplitude,
            seed,
            offset: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(invalid("n_trials must be >= 1"));
        }
        let (lo, hi) = self.freq_range_hz;
        if !(lo >= 0.0 && lo < hi) {
            return Err(invalid(format!(
                "frequency range must satisfy 0 <= lo < hi, got ({lo}, {hi})"
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(invalid(format!("duration_s must be > 0, got {}", self.duration_s)));
        }
        if !(self.amplitude > 0.0) {
            return Err(invalid(format!("amplitude must be > 0, got {}", self.amplitude)));
        }
        if !self.offset.is_finite() {
            return Err(invalid("offset must be finite"));
        }
        Ok(())
    }

    /// Tone of trial `i`: frequency uniform over the range, phase uniform.
    pub fn tone(&self, i: usize) -> Tone {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, i as u64));
        let (lo, hi) = self.freq_range_hz;
        let f = rng.random_range(lo..hi);
        let phase = rng.random_range(0.0..2.0 * PI);
        Tone::new(self.amplitude, f, phase)
    }

    pub fn scene(&self, i: usize, fine_rate: f64) -> Result<(Tone, FineSignal)> {
        let tone = self.tone(i);
        let offset = self.offset;
        let sig = FineSignal::from_fn(self.duration_s, fine_rate, 0.0, |t| offset + tone.value_at(t))?;
        Ok((tone, sig))
    }

    fn trial_seed(&self, i: usize, stream: u64) -> u64 {
        derive_seed(derive_seed(self.seed, i as u64), stream)
    }
}

/// Smallest multiple of `base_rate` at or above `100 × max_freq_hz`.
pub fn default_fine_rate(max_freq_hz: f64, base_rate: f64) -> f64 {
    let target = 100.0 * max_freq_hz.max(base_rate / 100.0);
    (target / base_rate - 1e-9).ceil() * base_rate
}

/// Options shared by the ensemble evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Fine grid rate; [`default_fine_rate`] of the band edge when unset.
    #[serde(default)]
    pub fine_rate: Option<f64>,
    #[serde(default)]
    pub render: Render,
    #[serde(default)]
    pub baseline_render: Render,
    #[serde(default = "one")]
    pub bin_width_hz: f64,
    /// Light model; unit flicker on a white scene when unset.
    #[serde(default)]
    pub illum: Option<IlluminationModel>,
    #[serde(default = "NoiseModel::off")]
    pub noise: NoiseModel,
    /// Pool for [`PatternMode::RandomPerFrame`].
    #[serde(default = "full_rank_only")]
    pub random_pool: PatternConstraints,
}

fn full_rank_only() -> PatternConstraints {
    PatternConstraints {
        full_rank: true,
        no_zero_row: false,
    }
}

fn one() -> f64 {
    1.0
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            fine_rate: None,
            render: Render::BandLimited,
            baseline_render: Render::BandLimited,
            bin_width_hz: 1.0,
            illum: None,
            noise: NoiseModel::off(),
            random_pool: full_rank_only(),
        }
    }
}

/// Fixed code for every frame, or a fresh random valid code per frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternMode {
    #[default]
    Fixed,
    RandomPerFrame,
}

/// Mean errors per frequency bin for one (N, pattern) over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub label: String,
    pub pattern_id: u32,
    pub n_factor: usize,
    pub freq_bins: Vec<(f64, f64)>,
    pub mean_l2: Vec<f64>,
    pub mean_cosine: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ErrorProfile {
    fn from_trials(
        label: String,
        pattern_id: u32,
        n_factor: usize,
        spec: &EnsembleSpec,
        bin_width: f64,
        trials: &[(f64, f64, f64)],
    ) -> Self {
        let (lo, hi) = spec.freq_range_hz;
        let n_bins = ((hi - lo) / bin_width - 1e-9).ceil().max(1.0) as usize;
        let mut l2 = vec![0.0; n_bins];
        let mut cos = vec![0.0; n_bins];
        let mut counts = vec![0usize; n_bins];
        for &(f, e, c) in trials {
            let b = (((f - lo) / bin_width).floor() as usize).min(n_bins - 1);
            l2[b] += e;
            cos[b] += c;
            counts[b] += 1;
        }
        for b in 0..n_bins {
            if counts[b] > 0 {
                l2[b] /= counts[b] as f64;
                cos[b] /= counts[b] as f64;
            }
        }
        let freq_bins = (0..n_bins)
            .map(|b| {
                let a = lo + b as f64 * bin_width;
                (a, (a + bin_width).min(hi))
            })
            .collect();
        Self {
            label,
            pattern_id,
            n_factor,
            freq_bins,
            mean_l2: l2,
            mean_cosine: cos,
            counts,
        }
    }

    fn band_mean(&self, values: &[f64], f_lo: f64, f_hi: f64) -> Option<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for (b, &(a, z)) in self.freq_bins.iter().enumerate() {
            if a >= f_lo - 1e-9 && z <= f_hi + 1e-9 {
                sum += values[b] * self.counts[b] as f64;
                count += self.counts[b];
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// Trial-weighted mean L2 error over the bins lying inside `[f_lo, f_hi]`.
    pub fn band_mean_l2(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        self.band_mean(&self.mean_l2, f_lo, f_hi)
    }

    pub fn band_mean_cosine(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        self.band_mean(&self.mean_cosine, f_lo, f_hi)
    }
}

struct Prepared {
    fine_rate: f64,
    illum: IlluminationModel,
}

fn prepare(spec: &EnsembleSpec, cam: &CameraConfig, m: usize, opts: &EvalOptions) -> Result<Prepared> {
    spec.validate()?;
    cam.validate()?;
    if (cam.exposure_fill - 1.0).abs() > 1e-12 {
        return Err(invalid("ensemble evaluation needs exposure_fill = 1"));
    }
    if !(opts.bin_width_hz > 0.0) {
        return Err(invalid(format!("bin width must be > 0, got {}", opts.bin_width_hz)));
    }
    let base = cam.trace_rate();
    let fine_rate = opts
        .fine_rate
        .unwrap_or_else(|| default_fine_rate(spec.freq_range_hz.1, base));
    integer_ratio(fine_rate, base)?;
    let illum = opts.illum.clone().unwrap_or_else(|| IlluminationModel::ideal(m));
    illum.validate()?;
    if illum.gammas.len() != m {
        return Err(TsrError::LengthMismatch {
            left: illum.gammas.len(),
            right: m,
        });
    }
    Ok(Prepared { fine_rate, illum })
}

/// L2 and cosine error of a rendered trace against the fine scene over the
/// span the trace covers.
fn trial_errors(sig: &FineSignal, values: &[f64], rate: f64, fine_rate: f64, render: Render) -> Result<(f64, f64)> {
    let drawn = render_trace(values, rate, fine_rate, render)?;
    let truth = sig.samples().get(..drawn.len()).ok_or(TsrError::LengthMismatch {
        left: drawn.len(),
        right: sig.len(),
    })?;
    let l2 = l2_distance(&drawn, truth, 1.0 / fine_rate)?;
    let cos = cosine_distance(&drawn, truth).unwrap_or(0.0);
    Ok((l2, cos))
}

fn pick_index(seed: u64, frame: i64, len: usize) -> usize {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, frame as u64)).random_range(0..len)
}

/// Ensemble error profile of one pattern at `cam`'s frame rate and N.
///
/// Every trial simulates a single-tone scene, reconstructs it, draws the
/// trace on the fine grid (see [`Render`]) and compares it with the scene.
/// In [`PatternMode::RandomPerFrame`] each frame instead uses a code drawn
/// uniformly from the patterns of the same shape that meet
/// [`EvalOptions::random_pool`] (all full-rank patterns by default).
pub fn evaluate_pattern(
    pattern: &NamedPattern,
    spec: &EnsembleSpec,
    cam: &CameraConfig,
    mode: PatternMode,
    opts: &EvalOptions,
) -> Result<ErrorProfile> {
    let p = &pattern.pattern;
    if p.n_substeps() != cam.n_factor {
        return Err(invalid(format!(
            "pattern has {} sub-steps but camera N is {}",
            p.n_substeps(),
            cam.n_factor
        )));
    }
    let prep = prepare(spec, cam, p.n_channels(), opts)?;
    let solvers: Vec<Reconstructor> = match mode {
        PatternMode::Fixed => vec![Reconstructor::new(p)?],
        PatternMode::RandomPerFrame => {
            let pool = if p.n_substeps() * p.n_channels() <= 16 {
                enumerate_patterns(p.n_substeps(), p.n_channels(), opts.random_pool)?
            } else {
                sample_patterns(p.n_substeps(), p.n_channels(), 4096, opts.random_pool, spec.seed)?
            };
            pool.iter().map(Reconstructor::new).collect::<Result<_>>()?
        }
    };
    let trials: Vec<(f64, f64, f64)> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let (tone, sig) = spec.scene(i, prep.fine_rate)?;
            let pick_seed = spec.trial_seed(i, 2);
            let choose = |k: i64| match mode {
                PatternMode::Fixed => &solvers[0],
                PatternMode::RandomPerFrame => &solvers[pick_index(pick_seed, k, solvers.len())],
            };
            let frames = simulate_with(&sig, cam, &prep.illum, &opts.noise, spec.trial_seed(i, 1), |k| {
                choose(k).pattern()
            })?;
            let trace = reconstruct_sequence_with(&frames, &prep.illum.gammas, cam, choose)?;
            let scale = flicker_scale(&prep.illum, cam);
            let values: Vec<f64> = trace.values().iter().map(|v| v / scale).collect();
            let (l2, cos) = trial_errors(&sig, &values, trace.rate(), prep.fine_rate, opts.render)?;
            Ok((tone.freq_hz, l2, cos))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorProfile::from_trials(
        pattern.label.clone(),
        pattern.id,
        cam.n_factor,
        spec,
        opts.bin_width_hz,
        &trials,
    ))
}

/// Error profile of a plain camera at `fps` (per-exposure means), over the
/// same ensemble.
pub fn baseline_profile(spec: &EnsembleSpec, fps: f64, opts: &EvalOptions) -> Result<ErrorProfile> {
    let cam = CameraConfig::new(fps, 1)?;
    let fine_rate = opts
        .fine_rate
        .unwrap_or_else(|| default_fine_rate(spec.freq_range_hz.1, fps));
    let prep = prepare(
        spec,
        &cam,
        1,
        &EvalOptions {
            fine_rate: Some(fine_rate),
            illum: None,
            ..opts.clone()
        },
    )?;
    let trials: Vec<(f64, f64, f64)> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let (tone, sig) = spec.scene(i, prep.fine_rate)?;
            let means = exposure_means(&sig, &cam)?;
            let (l2, cos) = trial_errors(&sig, &means, fps, prep.fine_rate, opts.baseline_render)?;
            Ok((tone.freq_hz, l2, cos))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorProfile::from_trials(
        "baseline".to_string(),
        0,
        1,
        spec,
        opts.bin_width_hz,
        &trials,
    ))
}

/// Lowest-error (N, pattern) in one frequency band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandWinner {
    pub f_lo: f64,
    pub f_hi: f64,
    pub n_factor: usize,
    pub pattern_id: u32,
    pub label: String,
    pub mean_l2: f64,
}

/// Bands `[fps/2, N₁·fps/2], [N₁·fps/2, N₂·fps/2], …` for ascending N.
pub fn default_bands(n_factors: &[usize], fps: f64) -> Vec<(f64, f64)> {
    let mut ns: Vec<usize> = n_factors.iter().copied().filter(|n| *n > 1).collect();
    ns.sort_unstable();
    ns.dedup();
    let half = fps / 2.0;
    let mut lo = half;
    ns.into_iter()
        .map(|n| {
            let band = (lo, n as f64 * half);
            lo = band.1;
            band
        })
        .collect()
}

/// Per-band argmin of the mean L2 error over `profiles`, bands from
/// [`default_bands`]. Ties go to the lower N, then the lower pattern id.
pub fn band_winner_table(profiles: &[ErrorProfile], fps: f64) -> Result<Vec<BandWinner>> {
    let ns: Vec<usize> = profiles.iter().map(|p| p.n_factor).collect();
    band_winners_in(profiles, &default_bands(&ns, fps))
}

/// Per-band argmin over explicit bands.
pub fn band_winners_in(profiles: &[ErrorProfile], bands: &[(f64, f64)]) -> Result<Vec<BandWinner>> {
    if profiles.is_empty() {
        return Err(TsrError::Empty("error profiles"));
    }
    let mut out = Vec::with_capacity(bands.len());
    for &(lo, hi) in bands {
        let best = profiles
            .iter()
            .filter_map(|p| p.band_mean_l2(lo, hi).map(|e| (p, e)))
            .min_by(|(pa, ea), (pb, eb)| {
                ea.total_cmp(eb)
                    .then(pa.n_factor.cmp(&pb.n_factor))
                    .then(pa.pattern_id.cmp(&pb.pattern_id))
            });
        if let Some((p, e)) = best {
            out.push(BandWinner {
                f_lo: lo,
                f_hi: hi,
                n_factor: p.n_factor,
                pattern_id: p.pattern_id,
                label: p.label.clone(),
                mean_l2: e,
            });
        }
    }
    if out.is_empty() {
        return Err(TsrError::Empty("profiles covering the bands"));
    }
    Ok(out)
}

/// Light levels and sensor settings of an α sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    #[serde(default)]
    pub eval: EvalOptions,
    /// Electrons per sub-step that environment light alone contributes for a
    /// unit-intensity white scene; flicker adds `α` times this.
    #[serde(default = "default_env_photons")]
    pub env_photons: f64,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub env_coupling: EnvCoupling,
    #[serde(default)]
    pub dark_coeff: f64,
    #[serde(default)]
    pub read_noise: f64,
    /// Monte-Carlo draws for the SNR ratio.
    #[serde(default = "default_snr_trials")]
    pub snr_trials: usize,
}

fn default_env_photons() -> f64 {
    100.0
}

fn default_gammas() -> Vec<f64> {
    vec![1.0; 3]
}

fn default_snr_trials() -> usize {
    10_000
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            eval: EvalOptions::default(),
            env_photons: default_env_photons(),
            gammas: default_gammas(),
            env_coupling: EnvCoupling::Gated,
            dark_coeff: 0.0,
            read_noise: 0.0,
            snr_trials: default_snr_trials(),
        }
    }
}

/// One row of an α sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    /// Mean cosine error of noisy reconstructions over the ensemble.
    pub mean_cosine: f64,
    /// Measured channel SNR with flicker over SNR without it.
    pub snr_ratio: f64,
    /// Monte-Carlo standard error of `snr_ratio`.
    pub snr_ratio_sigma: f64,
    /// Mean clean channel value with flicker over without it.
    pub signal_ratio: f64,
    /// `[(1 + α) · min γ]^{3/2}`.
    pub bound: f64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Channel SNR of a static unit white scene, with and without flicker.
///
/// Without flicker a channel collects environment light only, over the same
/// sub-steps as it would under the given coupling.
fn measure_snr(
    pattern: &FlickerPattern,
    illum: &IlluminationModel,
    noise: &NoiseModel,
    cam: &CameraConfig,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let n = pattern.n_substeps();
    let m = pattern.n_channels();
    let ones = vec![1.0; n];
    let with = clean_channels(&ones, pattern, illum, cam)?;
    let dt = cam.substep();
    let without: Vec<f64> = (0..m)
        .map(|ch| {
            let reach = match illum.env_coupling {
                EnvCoupling::Gated => (0..n).filter(|&k| pattern.get(k, ch) == 1).count(),
                EnvCoupling::Continuous => n,
            };
            illum.gammas[ch] * dt * illum.env_intensity * reach as f64
        })
        .collect();
    let draws = |clean: &[f64], stream: u64| -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                apply_noise(
                    clean,
                    noise,
                    cam.exposure(),
                    derive_seed(derive_seed(seed, stream), t as u64),
                )
            })
            .collect();
        (0..m).map(|ch| rows.iter().map(|r| r[ch]).collect()).collect()
    };
    let d_with = draws(&with, 1);
    let d_without = draws(&without, 2);
    let nt = trials as f64;
    let (mut ratio_sum, mut rel_var_sum) = (0.0, 0.0);
    for ch in 0..m {
        let (m1, s1) = mean_sd(&d_with[ch]);
        let (m0, s0) = mean_sd(&d_without[ch]);
        let (snr1, snr0) = (m1 / s1, m0 / s0);
        ratio_sum += snr1 / snr0;
        // Delta-method variance of an estimated mean/sd ratio.
        let rel1 = 1.0 / (nt * snr1 * snr1) + 1.0 / (2.0 * nt);
        let rel0 = 1.0 / (nt * snr0 * snr0) + 1.0 / (2.0 * nt);
        rel_var_sum += (snr1 / snr0).powi(2) * (rel1 + rel0);
    }
    let ratio = ratio_sum / m as f64;
    let sigma = rel_var_sum.sqrt() / m as f64;
    let signal_ratio = with.iter().sum::<f64>() / without.iter().sum::<f64>();
    Ok((ratio, sigma, signal_ratio))
}

/// Cosine error and SNR ratio as the flicker-to-environment ratio varies.
///
/// Environment light is held fixed at `env_photons` per sub-step and the
/// flicker is set to `α` times it, so a larger α means more light overall.
/// The reconstruction uses the measured channels as they are, without
/// subtracting the environment contribution.
pub fn alpha_sweep(
    alphas: &[f64],
    pattern: &NamedPattern,
    spec: &EnsembleSpec,
    cam: &CameraConfig,
    opts: &SweepOptions,
) -> Result<Vec<AlphaPoint>> {
    if alphas.is_empty() {
        return Err(TsrError::Empty("alpha list"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(invalid(format!("alpha must be finite and > 0, got {a}")));
    }
    if opts.snr_trials < 2 {
        return Err(invalid("snr_trials must be >= 2"));
    }
    if !(opts.env_photons > 0.0) {
        return Err(invalid(format!("env_photons must be > 0, got {}", opts.env_photons)));
    }
    let noise = NoiseModel::new(opts.dark_coeff, opts.read_noise, true)?;
    let env = opts.env_photons / cam.substep();
    alphas
        .iter()
        .enumerate()
        .map(|(idx, &alpha)| {
            let illum = IlluminationModel::new(alpha * env, env, opts.gammas.clone())?.coupling(opts.env_coupling);
            let eval = EvalOptions {
                illum: Some(illum.clone()),
                noise,
                ..opts.eval.clone()
            };
            let profile = evaluate_pattern(pattern, spec, cam, PatternMode::Fixed, &eval)?;
            let total: usize = profile.counts.iter().sum();
            let mean_cosine = profile
                .mean_cosine
                .iter()
                .zip(&profile.counts)
                .map(|(c, n)| c * *n as f64)
                .sum::<f64>()
                / total as f64;
            let (snr_ratio, snr_ratio_sigma, signal_ratio) = measure_snr(
                &pattern.pattern,
                &illum,
                &noise,
                cam,
                opts.snr_trials,
                derive_seed(spec.seed, 1000 + idx as u64),
            )?;
            Ok(AlphaPoint {
                alpha,
                mean_cosine,
                snr_ratio,
                snr_ratio_sigma,
                signal_ratio,
                bound: snr_ratio_bound(&illum),
            })
        })
        .collect()
}
