//! Scanning mode: consecutive temporal windows at different up-sample
//! factors, a spectrum stitched band by band from the windows that resolve
//! each band with the smallest N, and the alias-subtraction pass.
//!
//! Window spectra are zero-padded to a common duration so every window shares
//! one frequency spacing, rescaled to the unpadded length so amplitudes stay
//! comparable, and phase-referenced to absolute time so windows recorded at
//! different moments average coherently.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TsrError};
use crate::pattern::FlickerPattern;
use crate::sensor::{simulate_sequence, CameraConfig, IlluminationModel, NoiseModel};
use crate::signals::{band_pass, one_sided_dft, rotate_spectrum, FineSignal, SpectrumView};
use crate::solver::{reconstruct_sequence, ReconstructedTrace};

const TOL: f64 = 1e-9;

/// One window of the scan: its up-sample factor and time span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub n_factor: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl WindowPlan {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Splits `total_s` into equal windows, one per entry of `n_sequence`.
///
/// Each window holds the same whole number of frames; frames left over at
/// the end are not used.
pub fn plan_windows(n_sequence: &[usize], total_s: f64, fps: f64) -> Result<Vec<WindowPlan>> {
    if n_sequence.is_empty() {
        return Err(TsrError::Empty("N sequence"));
    }
    if let Some(n) = n_sequence.iter().find(|n| **n < 1) {
        return Err(invalid(format!("window N must be >= 1, got {n}")));
    }
    if !(fps > 0.0) || !(total_s > 0.0) {
        return Err(invalid(format!(
            "need fps > 0 and total_s > 0, got {fps} and {total_s}"
        )));
    }
    let total_frames = (total_s * fps + TOL).floor() as usize;
    let per_window = total_frames / n_sequence.len();
    if per_window == 0 {
        return Err(invalid(format!(
            "{} windows over {total_s} s at {fps} fps are shorter than one frame",
            n_sequence.len()
        )));
    }
    Ok(n_sequence
        .iter()
        .enumerate()
        .map(|(w, &n)| WindowPlan {
            n_factor: n,
            start_s: (w * per_window) as f64 / fps,
            end_s: ((w + 1) * per_window) as f64 / fps,
        })
        .collect())
}

/// Common padded duration for windows of at most `max_duration_s`.
///
/// Whole seconds are preferred (integer-Hz tones then sit on bins); the band
/// edges, multiples of `fps / 2`, must land on bins in either case.
pub fn default_pad(max_duration_s: f64, fps: f64) -> f64 {
    let whole = (max_duration_s - TOL).ceil().max(1.0);
    let edges = whole * fps / 2.0;
    if (edges - edges.round()).abs() < TOL {
        whole
    } else {
        (max_duration_s * fps / 2.0 - TOL).ceil() * 2.0 / fps
    }
}

/// Spectrum of `trace` zero-padded to `pad_s` seconds, amplitudes scaled to
/// the unpadded length and phases referenced to absolute time.
pub fn window_spectrum(trace: &ReconstructedTrace, pad_s: f64) -> Result<SpectrumView> {
    let rate = trace.rate();
    let n_pad = (pad_s * rate).round() as usize;
    if n_pad < trace.len() || ((n_pad as f64) - pad_s * rate).abs() > 1e-6 {
        return Err(invalid(format!(
            "pad of {pad_s} s is not a whole number of samples at {rate} Hz covering {} samples",
            trace.len()
        )));
    }
    let mut x = trace.values().to_vec();
    x.resize(n_pad, 0.0);
    let df = rate / n_pad as f64;
    let bins = one_sided_dft(&x, trace.len() as f64)
        .into_iter()
        .enumerate()
        .map(|(k, b)| b * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * df * trace.t0()))
        .collect();
    SpectrumView::from_parts(bins, df, n_pad)
}

/// A reconstructed window and its padded spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWindow {
    pub n_factor: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub trace: ReconstructedTrace,
    pub spectrum: SpectrumView,
}

impl TemporalWindow {
    pub fn new(plan: WindowPlan, trace: ReconstructedTrace, pad_s: f64) -> Result<Self> {
        if trace.n_factor() != plan.n_factor {
            return Err(invalid(format!(
                "trace N={} does not match window N={}",
                trace.n_factor(),
                plan.n_factor
            )));
        }
        let spectrum = window_spectrum(&trace, pad_s)?;
        Ok(Self {
            n_factor: plan.n_factor,
            start_s: plan.start_s,
            end_s: plan.end_s,
            trace,
            spectrum,
        })
    }

    pub fn nyquist(&self) -> f64 {
        self.trace.rate() / 2.0
    }
}

/// Camera, light and noise settings shared by all windows of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSetup {
    pub fps: f64,
    pub exposure_fill: f64,
    pub illum: IlluminationModel,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Padded window duration; [`default_pad`] when `None`.
    pub pad_s: Option<f64>,
}

/// Simulates and reconstructs every planned window of `sig`.
pub fn scan_windows<F>(
    sig: &FineSignal,
    plans: &[WindowPlan],
    setup: &ScanSetup,
    pattern_for: F,
) -> Result<Vec<TemporalWindow>>
where
    F: Fn(usize) -> Result<FlickerPattern> + Sync,
{
    if plans.is_empty() {
        return Err(TsrError::Empty("window plan"));
    }
    let max_dur = plans.iter().map(WindowPlan::duration).fold(0.0, f64::max);
    let pad_s = setup.pad_s.unwrap_or_else(|| default_pad(max_dur, setup.fps));
    plans
        .par_iter()
        .map(|plan| {
            let cam = CameraConfig::with_fill(setup.fps, plan.n_factor, setup.exposure_fill)?;
            let pattern = pattern_for(plan.n_factor)?;
            let part = sig.window(plan.start_s, plan.end_s)?;
            let frames = simulate_sequence(&part, &cam, &pattern, &setup.illum, &setup.noise, setup.seed)?;
            let trace = reconstruct_sequence(&frames, &pattern, &setup.illum.gammas, &cam)?;
            TemporalWindow::new(*plan, trace, pad_s)
        })
        .collect()
}

/// How windows feeding the same band are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StitchAveraging {
    /// Bin-wise mean of the complex values.
    #[default]
    Complex,
    /// Mean magnitude, with the phase of the complex mean.
    Magnitude,
}

/// A contiguous frequency range and the windows that supply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchBand {
    pub f_lo: f64,
    pub f_hi: f64,
    pub n_factor: usize,
    pub windows: Vec<usize>,
}

impl StitchBand {
    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_lo - TOL && f < self.f_hi - TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchedSpectrum {
    pub bands: Vec<StitchBand>,
    pub combined: SpectrumView,
    pub fps: f64,
}

impl StitchedSpectrum {
    pub fn band_of(&self, f: f64) -> Option<&StitchBand> {
        self.bands.iter().find(|b| b.contains(f))
    }

    /// Distinct up-sample factors, ascending.
    pub fn n_factors(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.bands.iter().map(|b| b.n_factor).collect();
        ns.dedup();
        ns
    }
}

/// Band assignment for a set of window N factors: unit band
/// `[(k−1)·fps/2, k·fps/2)` goes to the smallest N ≥ k, and neighbouring unit
/// bands with the same N are merged.
pub fn band_plan(n_sequence: &[usize], fps: f64) -> Result<Vec<StitchBand>> {
    let mut ns: Vec<usize> = n_sequence.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let max_n = *ns.last().ok_or(TsrError::Empty("N sequence"))?;
    let half = fps / 2.0;
    let mut bands: Vec<StitchBand> = Vec::new();
    for k in 1..=max_n {
        let n = *ns.iter().find(|n| **n >= k).expect("max_n >= k");
        match bands.last_mut() {
            Some(b) if b.n_factor == n => b.f_hi = k as f64 * half,
            _ => bands.push(StitchBand {
                f_lo: (k - 1) as f64 * half,
                f_hi: k as f64 * half,
                n_factor: n,
                windows: n_sequence
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w == n)
                    .map(|(i, _)| i)
                    .collect(),
            }),
        }
    }
    Ok(bands)
}

/// Builds one spectrum over `[0, max N · fps/2)` from the window spectra.
pub fn stitch(windows: &[TemporalWindow], fps: f64, averaging: StitchAveraging) -> Result<StitchedSpectrum> {
    let first = windows.first().ok_or(TsrError::Empty("windows"))?;
    let df = first.spectrum.df();
    if let Some(w) = windows.iter().find(|w| (w.spectrum.df() - df).abs() > TOL * df) {
        return Err(invalid(format!(
            "window spectra must share one bin spacing ({} vs {} Hz)",
            w.spectrum.df(),
            df
        )));
    }
    let ns: Vec<usize> = windows.iter().map(|w| w.n_factor).collect();
    let bands = band_plan(&ns, fps)?;
    let top = windows.iter().max_by_key(|w| w.n_factor).expect("non-empty");
    let n_samples = top.spectrum.n_samples();
    let mut bins = vec![Complex64::new(0.0, 0.0); n_samples / 2 + 1];
    for (k, bin) in bins.iter_mut().enumerate() {
        let f = k as f64 * df;
        let Some(band) = bands.iter().find(|b| b.contains(f)) else {
            continue;
        };
        let vals: Vec<Complex64> = band
            .windows
            .iter()
            .filter_map(|&w| windows[w].spectrum.bins().get(k).copied())
            .collect();
        if vals.is_empty() {
            continue;
        }
        let count = vals.len() as f64;
        let mean = vals.iter().sum::<Complex64>() / count;
        *bin = match averaging {
            StitchAveraging::Complex => mean,
            StitchAveraging::Magnitude => {
                let mag = vals.iter().map(|v| v.norm()).sum::<f64>() / count;
                let arg = if mean.norm() > 0.0 { mean.arg() } else { vals[0].arg() };
                Complex64::from_polar(mag, arg)
            }
        };
    }
    Ok(StitchedSpectrum {
        bands,
        combined: SpectrumView::from_parts(bins, df, n_samples)?,
        fps,
    })
}

/// Reading of the alias-subtraction loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AaMode {
    /// Band-pass the next higher band, mirror it about its lower edge,
    /// subtract.
    #[default]
    Composition,
    /// Mirror the whole current spectrum about the same edge, subtract.
    Literal,
}

/// Subtracts, for each window N below the largest, the mirror image of the
/// next higher band from N's band. Bands are processed from the top down on
/// the progressively corrected spectrum; the topmost band is never changed.
pub fn anti_alias(stitched: &StitchedSpectrum, mode: AaMode) -> Result<StitchedSpectrum> {
    let half = stitched.fps / 2.0;
    let mut combined = stitched.combined.clone();
    let ns = stitched.n_factors();
    for pair in ns.windows(2).rev() {
        let (n_lo, n_hi) = (pair[0], pair[1]);
        let pivot = (n_hi - 1) as f64 * half;
        let source = match mode {
            AaMode::Composition => band_pass(&combined, pivot, n_hi as f64 * half)?,
            AaMode::Literal => combined.clone(),
        };
        let mirror = rotate_spectrum(&source, pivot)?;
        let target = stitched
            .bands
            .iter()
            .find(|b| b.n_factor == n_lo)
            .expect("band for every N");
        let bins = combined
            .bins()
            .iter()
            .zip(mirror.bins())
            .enumerate()
            .map(|(k, (c, a))| if target.contains(combined.freq(k)) { c - a } else { *c })
            .collect();
        combined = SpectrumView::from_parts(bins, combined.df(), combined.n_samples())?;
    }
    Ok(StitchedSpectrum {
        bands: stitched.bands.clone(),
        combined,
        fps: stitched.fps,
    })
}

/// Energy each window's spectrum holds in each unit band `fps/2` wide.
pub fn window_band_energies(windows: &[TemporalWindow], fps: f64) -> Vec<Vec<f64>> {
    let half = fps / 2.0;
    windows
        .iter()
        .map(|w| {
            let sv = &w.spectrum;
            let units = ((sv.f_max() / half - TOL).ceil() as usize).max(1);
            let mut e = vec![0.0; units];
            for k in 0..sv.len() {
                let u = (((sv.freq(k) / half) + TOL).floor() as usize).min(units - 1);
                e[u] += sv.bin_energy(k);
            }
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Tone;
    use approx::assert_relative_eq;

    fn tone_window(n: usize, plan: WindowPlan, fps: f64, tones: &[Tone], pad_s: f64) -> TemporalWindow {
        let rate = fps * n as f64;
        let len = (plan.duration() * rate).round() as usize;
        let values = (0..len)
            .map(|k| {
                let t = plan.start_s + k as f64 / rate;
                tones.iter().map(|c| c.value_at(t)).sum()
            })
            .collect();
        let trace = ReconstructedTrace::new(values, n, fps, plan.start_s).unwrap();
        TemporalWindow::new(plan, trace, pad_s).unwrap()
    }

    #[test]
    fn plan_splits_evenly() {
        let p = plan_windows(&[3, 4, 5, 6], 10.0, 10.0).unwrap();
        assert_eq!(p.len(), 4);
        for (i, w) in p.iter().enumerate() {
            assert_relative_eq!(w.duration(), 2.5, epsilon = 1e-12);
            assert_relative_eq!(w.start_s, 2.5 * i as f64, epsilon = 1e-12);
        }
        let one = plan_windows(&[3], 5.0, 10.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_relative_eq!(one[0].duration(), 5.0);
        assert!(plan_windows(&[3, 4, 5], 0.2, 10.0).is_err());
        assert!(plan_windows(&[], 1.0, 10.0).is_err());
    }

    #[test]
    fn bands_follow_minimum_n() {
        let b = band_plan(&[3, 4, 5, 5], 10.0).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!((b[0].f_lo, b[0].f_hi, b[0].n_factor), (0.0, 15.0, 3));
        assert_eq!(b[0].windows, vec![0]);
        assert_eq!((b[1].f_lo, b[1].f_hi, b[1].n_factor), (15.0, 20.0, 4));
        assert_eq!(b[1].windows, vec![1]);
        assert_eq!((b[2].f_lo, b[2].f_hi, b[2].n_factor), (20.0, 25.0, 5));
        assert_eq!(b[2].windows, vec![2, 3]);

        let gap = band_plan(&[3, 5], 10.0).unwrap();
        assert_eq!((gap[1].f_lo, gap[1].f_hi), (15.0, 25.0));
    }

    #[test]
    fn pad_lands_band_edges_on_bins() {
        assert_relative_eq!(default_pad(2.5, 10.0), 3.0);
        assert_relative_eq!(default_pad(5.0, 10.0), 5.0);
        let p = default_pad(2.5, 3.0);
        assert!(((p * 1.5) - (p * 1.5).round()).abs() < 1e-9);
    }

    #[test]
    fn window_spectrum_keeps_amplitude_and_absolute_phase() {
        let fps = 10.0;
        let tone = Tone::new(1.0, 4.0, 0.3);
        let a = tone_window(
            3,
            WindowPlan {
                n_factor: 3,
                start_s: 0.0,
                end_s: 2.0,
            },
            fps,
            &[tone],
            4.0,
        );
        let b = tone_window(
            3,
            WindowPlan {
                n_factor: 3,
                start_s: 2.0,
                end_s: 4.0,
            },
            fps,
            &[tone],
            4.0,
        );
        let k = a.spectrum.bin_index(4.0).unwrap();
        assert_relative_eq!(a.spectrum.amplitude(k), 1.0, epsilon = 1e-9);
        assert!((a.spectrum.bins()[k] - b.spectrum.bins()[k]).norm() < 1e-9);
    }

    #[test]
    fn single_window_stitch_truncates() {
        let fps = 10.0;
        let plan = WindowPlan {
            n_factor: 3,
            start_s: 0.0,
            end_s: 2.0,
        };
        let w = tone_window(3, plan, fps, &[Tone::new(1.0, 4.0, 0.0), Tone::new(0.5, 9.0, 1.0)], 2.0);
        let s = stitch(std::slice::from_ref(&w), fps, StitchAveraging::Complex).unwrap();
        assert_eq!(s.bands.len(), 1);
        assert_eq!(s.combined.len(), w.spectrum.len());
        for k in 0..s.combined.len() {
            let f = s.combined.freq(k);
            let want = if f < 15.0 - 1e-9 {
                w.spectrum.bins()[k]
            } else {
                Complex64::new(0.0, 0.0)
            };
            assert!((s.combined.bins()[k] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn identical_windows_average_to_themselves() {
        let fps = 10.0;
        let tone = [Tone::new(1.0, 17.0, 0.4)];
        let plan_a = WindowPlan {
            n_factor: 4,
            start_s: 0.0,
            end_s: 2.0,
        };
        let plan_b = WindowPlan {
            n_factor: 4,
            start_s: 2.0,
            end_s: 4.0,
        };
        let a = tone_window(4, plan_a, fps, &tone, 2.0);
        let b = tone_window(4, plan_b, fps, &tone, 2.0);
        for avg in [StitchAveraging::Complex, StitchAveraging::Magnitude] {
            let s = stitch(&[a.clone(), b.clone()], fps, avg).unwrap();
            for k in 0..s.combined.len() {
                assert!((s.combined.bins()[k] - a.spectrum.bins()[k]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn worked_example_band_sources() {
        let fps = 10.0;
        let plans = plan_windows(&[3, 4, 5, 5], 8.0, fps).unwrap();
        let tones = [
            Tone::new(1.0, 7.0, 0.0),
            Tone::new(1.0, 17.0, 0.0),
            Tone::new(1.0, 22.0, 0.0),
        ];
        let windows: Vec<_> = plans
            .iter()
            .map(|p| tone_window(p.n_factor, *p, fps, &tones, 2.0))
            .collect();
        let s = stitch(&windows, fps, StitchAveraging::Complex).unwrap();
        assert_eq!(s.band_of(7.0).unwrap().windows, vec![0]);
        assert_eq!(s.band_of(17.0).unwrap().windows, vec![1]);
        assert_eq!(s.band_of(22.0).unwrap().windows, vec![2, 3]);
        assert!(s.band_of(25.0).is_none());
        for f in [7.0, 17.0, 22.0] {
            let k = s.combined.bin_index(f).unwrap();
            assert_relative_eq!(s.combined.amplitude(k), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn anti_alias_leaves_low_content_alone() {
        let fps = 10.0;
        let plans = plan_windows(&[3, 4, 5, 6], 8.0, fps).unwrap();
        let tones = [Tone::new(1.0, 3.0, 0.2), Tone::new(0.4, 11.0, 1.0)];
        let windows: Vec<_> = plans
            .iter()
            .map(|p| tone_window(p.n_factor, *p, fps, &tones, 2.0))
            .collect();
        let s = stitch(&windows, fps, StitchAveraging::Complex).unwrap();
        let aa = anti_alias(&s, AaMode::Composition).unwrap();
        for (a, b) in aa.combined.bins().iter().zip(s.combined.bins()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn anti_alias_removes_exact_mirror_and_spares_top_band() {
        let fps = 10.0;
        // A spectrum with a tone at 18 Hz and its conjugate mirror at 12 Hz.
        let n = 120;
        let mut bins = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
        let df = 40.0 / n as f64;
        let k18 = (18.0 / df) as usize;
        let k12 = (12.0 / df) as usize;
        bins[k18] = Complex64::new(0.3, 0.2);
        bins[k12] = bins[k18].conj();
        let combined = SpectrumView::from_parts(bins, df, n).unwrap();
        let stitched = StitchedSpectrum {
            bands: band_plan(&[3, 4], fps).unwrap(),
            combined,
            fps,
        };
        for mode in [AaMode::Composition, AaMode::Literal] {
            let aa = anti_alias(&stitched, mode).unwrap();
            assert!(aa.combined.bins()[k12].norm() < 1e-12);
            assert_eq!(aa.combined.bins()[k18], stitched.combined.bins()[k18]);
        }
    }

    #[test]
    fn band_energies_split_by_half_fps() {
        let fps = 10.0;
        let plan = WindowPlan {
            n_factor: 3,
            start_s: 0.0,
            end_s: 2.0,
        };
        let w = tone_window(3, plan, fps, &[Tone::new(1.0, 7.0, 0.0)], 2.0);
        let e = window_band_energies(std::slice::from_ref(&w), fps);
        assert_eq!(e[0].len(), 3);
        assert!(e[0][0].abs() < 1e-9 && e[0][2].abs() < 1e-9);
        let total: f64 = w.trace.values().iter().map(|v| v * v).sum();
        assert_relative_eq!(e[0][1], total, max_relative = 1e-9);
    }
}
