//! Test-signal generators and the spectral primitives used by scanning and
//! analysis.
//!
//! Spectra are stored one-sided (DC up to the Nyquist bin) and normalized by
//! the transform length, so a cosine of amplitude `A` shows up as `A/2` in its
//! bin regardless of how many samples were transformed. That normalization is
//! what lets spectra of traces recorded at different rates be compared and
//! averaged bin by bin.

use std::cell::RefCell;
use std::f64::consts::PI;

pub use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TsrError};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Anything that is a uniformly sampled real sequence.
pub trait Sampled {
    fn samples(&self) -> &[f64];
    fn sample_rate(&self) -> f64;
}

/// Scene intensity on a fine uniform time grid.
///
/// Sample `k` is the intensity at `t0 + k / grid_rate`. Generators emit both
/// end points, so a signal of duration `d` has `d * grid_rate + 1` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSignal {
    samples: Vec<f64>,
    grid_rate: f64,
    t0: f64,
}

impl FineSignal {
    pub fn new(samples: Vec<f64>, grid_rate: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(TsrError::Empty("fine signal samples"));
        }
        if !(grid_rate > 0.0 && grid_rate.is_finite()) {
            return Err(invalid(format!("grid_rate must be > 0, got {grid_rate}")));
        }
        if !t0.is_finite() {
            return Err(invalid("t0 must be finite"));
        }
        Ok(Self { samples, grid_rate, t0 })
    }

    /// Samples `f(t)` on `[t0, t0 + duration_s]`, both ends included.
    pub fn from_fn(duration_s: f64, grid_rate: f64, t0: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(duration_s > 0.0) {
            return Err(invalid(format!("duration must be > 0, got {duration_s}")));
        }
        if !(grid_rate > 0.0) {
            return Err(invalid(format!("grid_rate must be > 0, got {grid_rate}")));
        }
        let n = (duration_s * grid_rate).round() as usize + 1;
        let samples = (0..n).map(|k| f(t0 + k as f64 / grid_rate)).collect();
        Self::new(samples, grid_rate, t0)
    }

    pub fn grid_rate(&self) -> f64 {
        self.grid_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.grid_rate
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> f64 {
        self.time_at(self.samples.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.grid_rate
    }

    /// Pointwise sum; both signals must share grid, start and length.
    pub fn add(&self, other: &FineSignal) -> Result<FineSignal> {
        if self.samples.len() != other.samples.len() {
            return Err(TsrError::LengthMismatch {
                left: self.samples.len(),
                right: other.samples.len(),
            });
        }
        if (self.grid_rate - other.grid_rate).abs() > 1e-12 * self.grid_rate || (self.t0 - other.t0).abs() > 1e-12 {
            return Err(invalid("signals are on different grids"));
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect();
        FineSignal::new(samples, self.grid_rate, self.t0)
    }

    pub fn scaled(&self, k: f64) -> FineSignal {
        FineSignal {
            samples: self.samples.iter().map(|v| v * k).collect(),
            grid_rate: self.grid_rate,
            t0: self.t0,
        }
    }

    /// Sub-signal covering `[start_s, end_s]`, both end samples included.
    pub fn window(&self, start_s: f64, end_s: f64) -> Result<FineSignal> {
        if end_s <= start_s {
            return Err(invalid(format!("empty window [{start_s}, {end_s}]")));
        }
        let to_index = |t: f64| (t - self.t0) * self.grid_rate;
        let (a, b) = (to_index(start_s), to_index(end_s));
        let tol = 1e-6;
        if a < -tol || b > (self.samples.len() - 1) as f64 + tol {
            return Err(TsrError::SpanNotCovered(format!(
                "window [{start_s}, {end_s}] s (signal spans [{}, {}] s)",
                self.t0,
                self.end_time()
            )));
        }
        let (a, b) = (a.round() as usize, b.round() as usize);
        FineSignal::new(self.samples[a..=b].to_vec(), self.grid_rate, self.time_at(a))
    }
}

impl Sampled for FineSignal {
    fn samples(&self) -> &[f64] {
        &self.samples
    }

    fn sample_rate(&self) -> f64 {
        self.grid_rate
    }
}

/// One sinusoidal component `amplitude * sin(2π freq_hz t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub freq_hz: f64,
    pub phase: f64,
}

impl Tone {
    pub fn new(amplitude: f64, freq_hz: f64, phase: f64) -> Self {
        Self {
            amplitude,
            freq_hz,
            phase,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.freq_hz * t + self.phase).sin()
    }
}

/// Sum of sinusoids sampled from `t = 0`.
pub fn gen_sinusoid_mix(components: &[Tone], duration_s: f64, grid_rate: f64) -> Result<FineSignal> {
    if components.is_empty() {
        return Err(TsrError::NoComponents);
    }
    let f_top = components.iter().map(|c| c.freq_hz.abs()).fold(0.0_f64, f64::max);
    if grid_rate < 10.0 * f_top {
        return Err(invalid(format!(
            "grid rate {grid_rate} Hz is below 10x the highest component ({f_top} Hz)"
        )));
    }
    FineSignal::from_fn(duration_s, grid_rate, 0.0, |t| {
        components.iter().map(|c| c.value_at(t)).sum()
    })
}

/// `sgn(sin(2π f t))` with `sgn(0) = 0`.
///
/// Zero crossings are detected from the phase fraction rather than the value
/// of `sin`, so samples that land exactly on a half period come out as 0.
pub fn gen_square_wave(freq_hz: f64, duration_s: f64, grid_rate: f64) -> Result<FineSignal> {
    if !(freq_hz > 0.0) {
        return Err(invalid(format!("square-wave frequency must be > 0, got {freq_hz}")));
    }
    if grid_rate < 10.0 * freq_hz {
        return Err(invalid(format!(
            "grid rate {grid_rate} Hz is below 10x the square-wave frequency ({freq_hz} Hz)"
        )));
    }
    FineSignal::from_fn(duration_s, grid_rate, 0.0, |t| square_value(freq_hz, t))
}

fn square_value(freq_hz: f64, t: f64) -> f64 {
    let cycles = freq_hz * t;
    let half_periods = 2.0 * cycles;
    if (half_periods - half_periods.round()).abs() <= 1e-9 * half_periods.abs().max(1.0) {
        return 0.0;
    }
    if cycles - cycles.floor() < 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Sum of unit square waves, e.g. `SW_12 + SW_19 + SW_23 + SW_27`.
pub fn gen_square_mix(freqs_hz: &[f64], duration_s: f64, grid_rate: f64) -> Result<FineSignal> {
    let (first, rest) = freqs_hz.split_first().ok_or(TsrError::NoComponents)?;
    let mut acc = gen_square_wave(*first, duration_s, grid_rate)?;
    for f in rest {
        acc = acc.add(&gen_square_wave(*f, duration_s, grid_rate)?)?;
    }
    Ok(acc)
}

/// One-sided, length-normalized complex spectrum of a real sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumView {
    bins: Vec<Complex64>,
    df: f64,
    n_samples: usize,
}

impl SpectrumView {
    /// `bins` must hold `n_samples / 2 + 1` one-sided values.
    pub fn from_parts(bins: Vec<Complex64>, df: f64, n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(invalid("a spectrum needs at least 2 samples"));
        }
        if bins.len() != n_samples / 2 + 1 {
            return Err(TsrError::LengthMismatch {
                left: bins.len(),
                right: n_samples / 2 + 1,
            });
        }
        if !(df > 0.0) {
            return Err(invalid(format!("df must be > 0, got {df}")));
        }
        Ok(Self { bins, df, n_samples })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn f_max(&self) -> f64 {
        self.df * (self.bins.len() - 1) as f64
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.df * self.n_samples as f64
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    /// Nearest bin to `f`, if it lies on the axis.
    pub fn bin_index(&self, f: f64) -> Option<usize> {
        let k = (f / self.df).round();
        (k >= 0.0 && (k as usize) < self.bins.len()).then_some(k as usize)
    }

    /// Peak amplitude of the real sinusoid carried by bin `k`.
    pub fn amplitude(&self, k: usize) -> f64 {
        bin_weight(k, self.n_samples) * self.bins[k].norm()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.bins.len()).map(|k| self.amplitude(k)).collect()
    }

    /// Contribution of bin `k` to the time-domain energy `Σ x²`.
    pub fn bin_energy(&self, k: usize) -> f64 {
        let w = bin_weight(k, self.n_samples);
        self.n_samples as f64 * w * self.bins[k].norm_sqr()
    }

    /// Time-domain energy `Σ x²` recovered from the bins (Parseval).
    pub fn energy(&self) -> f64 {
        (0..self.bins.len()).map(|k| self.bin_energy(k)).sum()
    }

    /// Inverse transform back to `n_samples` real values.
    pub fn to_samples(&self) -> Vec<f64> {
        let n = self.n_samples;
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for (k, b) in self.bins.iter().enumerate() {
            full[k] = *b;
            if k > 0 && n - k != k {
                full[n - k] = b.conj();
            }
        }
        if n.is_multiple_of(2) {
            full[n / 2].im = 0.0;
        }
        full[0].im = 0.0;
        PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut full));
        full.into_iter().map(|c| c.re).collect()
    }

    pub(crate) fn with_bins(&self, bins: Vec<Complex64>) -> SpectrumView {
        debug_assert_eq!(bins.len(), self.bins.len());
        SpectrumView {
            bins,
            df: self.df,
            n_samples: self.n_samples,
        }
    }

    /// Indices of the `count` largest local maxima, strongest first.
    pub fn top_peaks(&self, count: usize, skip_dc: bool) -> Vec<usize> {
        let amp = self.amplitudes();
        let last = amp.len() - 1;
        let mut peaks: Vec<usize> = (0..amp.len())
            .filter(|&k| !(skip_dc && k == 0))
            .filter(|&k| {
                let left = if k == 0 { f64::NEG_INFINITY } else { amp[k - 1] };
                let right = if k == last { f64::NEG_INFINITY } else { amp[k + 1] };
                amp[k] > 0.0 && amp[k] >= left && amp[k] > right
            })
            .collect();
        peaks.sort_by(|&a, &b| amp[b].total_cmp(&amp[a]).then(a.cmp(&b)));
        peaks.truncate(count);
        peaks
    }
}

/// One-sided weight: interior bins stand for a conjugate pair.
fn bin_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// Unnormalized in-place FFT.
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        };
        plan.process(buf);
    });
}

/// Forward DFT of `samples` returning `n/2 + 1` bins divided by `norm`.
pub(crate) fn one_sided_dft(samples: &[f64], norm: f64) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    buf.truncate(n / 2 + 1);
    for b in &mut buf {
        *b /= norm;
    }
    buf
}

/// Spectrum of raw samples at `sample_rate`. DC is retained.
pub fn spectrum_of(samples: &[f64], sample_rate: f64) -> Result<SpectrumView> {
    let n = samples.len();
    if n < 2 {
        return Err(invalid("spectrum needs at least 2 samples"));
    }
    if !(sample_rate > 0.0) {
        return Err(invalid(format!("sample rate must be > 0, got {sample_rate}")));
    }
    let bins = one_sided_dft(samples, n as f64);
    SpectrumView::from_parts(bins, sample_rate / n as f64, n)
}

/// Spectrum of any sampled signal or trace.
pub fn spectrum<S: Sampled + ?Sized>(sig: &S) -> Result<SpectrumView> {
    spectrum_of(sig.samples(), sig.sample_rate())
}

/// Ideal brick-wall band-pass keeping bins with `f_min <= f < f_max`.
///
/// The one-sided layout means the negative-frequency mirror of every kept bin
/// is kept with it. Band edges past the end of the axis are clipped.
pub fn band_pass(sv: &SpectrumView, f_min: f64, f_max: f64) -> Result<SpectrumView> {
    if !(f_min >= 0.0) || !(f_min < f_max) {
        return Err(invalid(format!("inverted or negative band [{f_min}, {f_max})")));
    }
    let eps = 1e-9 * sv.df;
    let bins = sv
        .bins
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let f = sv.freq(k);
            if f >= f_min - eps && f < f_max - eps {
                *b
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(sv.with_bins(bins))
}

/// Mirror the spectrum about `f_pivot`: content at `f` moves to `2 f_pivot - f`.
///
/// Each moved bin is conjugated, which is exactly the image a real tone at `f`
/// leaves when sampled at `2 f_pivot`. Bins whose mirror falls outside
/// `[0, f_max]` are dropped.
pub fn rotate_spectrum(sv: &SpectrumView, f_pivot: f64) -> Result<SpectrumView> {
    let tol = 1e-9 * sv.df;
    if f_pivot < -tol || f_pivot > sv.f_max() + tol {
        return Err(invalid(format!("pivot {f_pivot} Hz outside [0, {}] Hz", sv.f_max())));
    }
    let twice = (2.0 * f_pivot / sv.df).round() as i64;
    let last = sv.bins.len() as i64 - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); sv.bins.len()];
    for (k, b) in sv.bins.iter().enumerate() {
        let j = twice - k as i64;
        if (0..=last).contains(&j) {
            out[j as usize] += b.conj();
        }
    }
    out[0].im = 0.0;
    if sv.n_samples.is_multiple_of(2) {
        out[last as usize].im = 0.0;
    }
    Ok(sv.with_bins(out))
}

/// Zero every bin whose magnitude is below `fraction` of the strongest bin.
pub fn threshold_noise_floor(sv: &SpectrumView, fraction: f64) -> Result<SpectrumView> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(invalid(format!("threshold fraction must be in [0, 1), got {fraction}")));
    }
    let peak = sv.bins.iter().map(|b| b.norm()).fold(0.0_f64, f64::max);
    let floor = fraction * peak;
    let bins = sv
        .bins
        .iter()
        .map(|b| if b.norm() < floor { Complex64::new(0.0, 0.0) } else { *b })
        .collect();
    Ok(sv.with_bins(bins))
}
