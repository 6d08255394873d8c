use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use tsr_core::analysis::{alpha_sweep, band_winners_in, baseline_profile, default_bands, evaluate_pattern};
use tsr_core::pattern::{best_for, demo_for};
use tsr_core::scanning::{anti_alias, plan_windows, scan_windows, stitch, window_band_energies, ScanSetup};
use tsr_core::sensor::{exposure_means, flicker_scale, simulate_sequence};
use tsr_core::signals::{spectrum, spectrum_of, threshold_noise_floor, Sampled};
use tsr_core::solver::{reconstruct_sequence, reconstruct_spatial, Reconstructor};
use tsr_core::{
    CameraConfig, ChannelFrame, EnsembleSpec, ErrorProfile, EvalOptions, FlickerPattern, NamedPattern, PatternMode,
    ReconstructedTrace, SpatialPatch, SpectrumView, StitchedSpectrum, SweepOptions, TsrError,
};

use crate::config::{Config, PatternSource, ProfileRequest};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::output::{num, Outputs};
use crate::svg::{Plot, Series};

/// What a command produced: its files plus values worth recording in the
/// manifest.
pub struct Run {
    pub outputs: Outputs,
    pub notes: BTreeMap<String, Value>,
}

impl Run {
    fn new() -> Self {
        Self {
            outputs: Outputs::new(),
            notes: BTreeMap::new(),
        }
    }
}

fn channel_header(m: usize) -> Vec<String> {
    std::iter::once("frame_index".to_string())
        .chain((1..=m).map(|i| format!("C_{i}")))
        .collect()
}

fn frame_rows(frames: &[ChannelFrame]) -> Vec<Vec<String>> {
    frames
        .iter()
        .map(|f| {
            std::iter::once(f.frame_index.to_string())
                .chain(f.c_values.iter().map(|v| num(*v)))
                .collect()
        })
        .collect()
}

fn spectrum_rows(sv: &SpectrumView) -> Vec<Vec<String>> {
    sv.bins()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                num(sv.freq(k)),
                num(sv.amplitude(k)),
                num(if c.norm() > 0.0 { c.arg() } else { 0.0 }),
            ]
        })
        .collect()
}

const SPECTRUM_HEADER: [&str; 3] = ["freq_hz", "magnitude", "phase_rad"];

fn not_full_rank(label: &str, p: &FlickerPattern) -> CliError {
    CliError::compute(format!("pattern {label} ({p}) is not full rank"))
}

fn solver_error(np: &NamedPattern) -> impl Fn(TsrError) -> CliError + '_ {
    move |e| match e {
        TsrError::PatternNotFullRank => not_full_rank(&np.label, &np.pattern),
        TsrError::Frame { index, source } if matches!(*source, TsrError::PatternNotFullRank) => CliError::compute(
            format!("frame {index}: pattern {} ({}) is not full rank", np.label, np.pattern),
        ),
        other => other.into(),
    }
}

pub fn simulate(cfg: &Config) -> CliResult<Run> {
    let cam = cfg.camera()?;
    let np = cfg.named_pattern()?;
    let illum = cfg.illumination()?;
    let sig = cfg.signal(&[cam.n_factor])?;
    let frames = simulate_sequence(&sig, &cam, &np.pattern, &illum, &cfg.noise()?, cfg.seed)?;
    let mut run = Run::new();
    let header = channel_header(np.pattern.n_channels());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.outputs.csv("frames.csv", &header, frame_rows(&frames))?;
    run.outputs.csv(
        "truth.csv",
        &["time_s", "intensity"],
        sig.samples()
            .iter()
            .enumerate()
            .map(|(k, v)| vec![num(sig.time_at(k)), num(*v)]),
    )?;
    if cfg.output.format.svg() {
        let series = (0..np.pattern.n_channels())
            .map(|m| Series {
                label: np.pattern.channel_names().get(m).map_or("C", String::as_str),
                points: frames
                    .iter()
                    .map(|f| (f.frame_index as f64 / cam.fps, f.c_values[m]))
                    .collect(),
            })
            .collect();
        let plot = Plot {
            title: "Channel values per frame",
            x_label: "time (s)",
            y_label: "C",
            log_x: false,
            series,
        };
        run.outputs.text("frames.svg", plot.render());
    }
    run.notes.insert("pattern".into(), json!(np.label));
    run.notes.insert("pattern_code".into(), json!(np.pattern.to_string()));
    run.notes.insert("frames".into(), json!(frames.len()));
    run.notes.insert("grid_rate_hz".into(), json!(sig.grid_rate()));
    Ok(run)
}

/// Reads `frame_index,C_1..C_M`.
pub fn read_frames(path: &Path, m: usize) -> CliResult<Vec<ChannelFrame>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::new(ErrorKind::Input, format!("{name}: {e}")))?;
    let expected = channel_header(m);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::at(ErrorKind::Input, &name, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != expected {
        return Err(CliError::at(
            ErrorKind::Input,
            &name,
            1,
            format!("header must be {} for this pattern", expected.join(",")),
        ));
    }
    let mut frames = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| CliError::at(ErrorKind::Input, &name, line, e.to_string()))?;
        let bad = |what: &str| CliError::at(ErrorKind::Input, &name, line, what.to_string());
        let index: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad("frame_index must be an integer"))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("channel values must be numbers"))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        frames.push(ChannelFrame::new(values, index).map_err(|e| bad(&e.to_string()))?);
    }
    if frames.is_empty() {
        return Err(CliError::at(ErrorKind::Input, &name, 1, "no frames"));
    }
    for (i, w) in frames.windows(2).enumerate() {
        if w[1].frame_index != w[0].frame_index + 1 {
            return Err(CliError::at(
                ErrorKind::Input,
                &name,
                i + 3,
                "frame indices must be consecutive",
            ));
        }
    }
    Ok(frames)
}

/// Reads `frame_index,pixel,C_1..C_M`, five pixels per frame.
pub fn read_patches(path: &Path, m: usize) -> CliResult<Vec<(i64, Vec<ChannelFrame>)>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::new(ErrorKind::Input, format!("{name}: {e}")))?;
    let mut expected = vec!["frame_index".to_string(), "pixel".to_string()];
    expected.extend((1..=m).map(|i| format!("C_{i}")));
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::at(ErrorKind::Input, &name, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != expected {
        return Err(CliError::at(
            ErrorKind::Input,
            &name,
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut by_frame: BTreeMap<i64, Vec<Option<ChannelFrame>>> = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| CliError::at(ErrorKind::Input, &name, line, e.to_string()))?;
        let bad = |what: &str| CliError::at(ErrorKind::Input, &name, line, what.to_string());
        let index: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad("frame_index must be an integer"))?;
        let pixel: usize = rec[1].trim().parse().map_err(|_| bad("pixel must be 0..=4"))?;
        if pixel >= tsr_core::solver::PATCH_PIXELS {
            return Err(bad("pixel must be 0..=4"));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("channel values must be numbers"))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let slot = &mut by_frame.entry(index).or_insert_with(|| vec![None; 5])[pixel];
        if slot.is_some() {
            return Err(bad("duplicate pixel for this frame"));
        }
        *slot = Some(ChannelFrame::new(values, index).map_err(|e| bad(&e.to_string()))?);
    }
    if by_frame.is_empty() {
        return Err(CliError::at(ErrorKind::Input, &name, 1, "no rows"));
    }
    by_frame
        .into_iter()
        .map(|(k, px)| {
            let px: Option<Vec<ChannelFrame>> = px.into_iter().collect();
            px.map(|v| (k, v)).ok_or_else(|| {
                CliError::new(
                    ErrorKind::Input,
                    format!("{name}: frame {k} lacks some of pixels 0..=4"),
                )
            })
        })
        .collect()
}

fn trace_rows(trace: &ReconstructedTrace) -> Vec<Vec<String>> {
    trace
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| vec![num(trace.time_at(k)), num(*v)])
        .collect()
}

pub fn reconstruct(cfg: &Config, frames_path: Option<&Path>, patch_path: Option<&Path>) -> CliResult<Run> {
    let cam = cfg.camera()?;
    let np = cfg.named_pattern()?;
    let illum = cfg.illumination()?;
    let m = np.pattern.n_channels();
    Reconstructor::new(&np.pattern).map_err(solver_error(&np))?;
    let mut run = Run::new();
    run.notes.insert("pattern".into(), json!(np.label));
    run.notes.insert("pattern_code".into(), json!(np.pattern.to_string()));
    run.notes
        .insert("scene_scale".into(), json!(flicker_scale(&illum, &cam)));

    if let Some(path) = patch_path {
        let patches = read_patches(path, m)?;
        let mut per_pixel: Vec<Vec<f64>> = vec![Vec::new(); 5];
        for (_, frames) in &patches {
            let patch = SpatialPatch {
                frames: frames.clone(),
                w_t: cfg.spatial.w_t,
                w_s: cfg.spatial.w_s,
                coupling: cfg.spatial.coupling,
            };
            let out = reconstruct_spatial(&patch, &np.pattern, &illum.gammas).map_err(solver_error(&np))?;
            for (p, v) in out.into_iter().enumerate() {
                per_pixel[p].extend(v);
            }
        }
        for (p, values) in per_pixel.into_iter().enumerate() {
            let t0 = patches[0].0 as f64 / cam.fps;
            let trace = ReconstructedTrace::new(values, cam.n_factor, cam.fps, t0)?;
            run.outputs
                .csv(&format!("trace_p{p}.csv"), &["time_s", "intensity"], trace_rows(&trace))?;
        }
        run.notes.insert("frames".into(), json!(patches.len()));
        return Ok(run);
    }

    let (frames, sig) = match frames_path {
        Some(path) => (read_frames(path, m)?, None),
        None => {
            let sig = cfg.signal(&[cam.n_factor])?;
            let frames = simulate_sequence(&sig, &cam, &np.pattern, &illum, &cfg.noise()?, cfg.seed)?;
            (frames, Some(sig))
        }
    };
    let trace = reconstruct_sequence(&frames, &np.pattern, &illum.gammas, &cam).map_err(solver_error(&np))?;
    run.outputs
        .csv("trace.csv", &["time_s", "intensity"], trace_rows(&trace))?;
    let sv = spectrum(&trace)?;
    run.outputs.csv("spectrum.csv", &SPECTRUM_HEADER, spectrum_rows(&sv))?;
    run.notes.insert("frames".into(), json!(frames.len()));

    let Some(sig) = sig else {
        return Ok(run);
    };
    let plain = CameraConfig::with_fill(cam.fps, 1, cam.exposure_fill)?;
    let base = exposure_means(&sig, &plain)?;
    let base_t0 = tsr_core::sensor::frame_range(&sig, &plain).start as f64 / cam.fps;
    run.outputs.csv(
        "baseline.csv",
        &["time_s", "intensity"],
        base.iter()
            .enumerate()
            .map(|(k, v)| vec![num(base_t0 + k as f64 / cam.fps), num(*v)]),
    )?;
    let base_sv = spectrum_of(&base, cam.fps)?;
    run.outputs
        .csv("baseline_spectrum.csv", &SPECTRUM_HEADER, spectrum_rows(&base_sv))?;

    if cfg.output.format.svg() {
        let scale = flicker_scale(&illum, &cam);
        let span = 2.0_f64.min(sig.duration());
        let step = (sig.grid_rate() / (cam.trace_rate() * 8.0)).max(1.0) as usize;
        let truth: Vec<(f64, f64)> = sig
            .samples()
            .iter()
            .enumerate()
            .step_by(step)
            .map(|(k, v)| (sig.time_at(k), *v))
            .filter(|p| p.0 <= span)
            .collect();
        let mut held = Vec::new();
        for (k, v) in base.iter().enumerate() {
            let t = base_t0 + k as f64 / cam.fps;
            if t < span {
                held.push((t, *v));
                held.push((t + 1.0 / cam.fps, *v));
            }
        }
        let mut tsr = Vec::new();
        for (k, v) in trace.values().iter().enumerate() {
            let t = trace.time_at(k);
            if t < span {
                tsr.push((t, v / scale));
                tsr.push((t + 1.0 / trace.rate(), v / scale));
            }
        }
        let overlay = Plot {
            title: "Scene, camera and TSR reconstruction",
            x_label: "time (s)",
            y_label: "intensity",
            log_x: false,
            series: vec![
                Series {
                    label: "original",
                    points: truth,
                },
                Series {
                    label: "camera (no TSR)",
                    points: held,
                },
                Series {
                    label: "TSR",
                    points: tsr,
                },
            ],
        };
        run.outputs.text("overlay.svg", overlay.render());
        let spec_plot = Plot {
            title: "Magnitude spectra",
            x_label: "frequency (Hz)",
            y_label: "magnitude",
            log_x: false,
            series: vec![
                Series {
                    label: "camera (no TSR)",
                    points: (0..base_sv.len())
                        .map(|k| (base_sv.freq(k), base_sv.amplitude(k)))
                        .collect(),
                },
                Series {
                    label: "TSR",
                    points: (0..sv.len()).map(|k| (sv.freq(k), sv.amplitude(k) / scale)).collect(),
                },
            ],
        };
        run.outputs.text("spectrum.svg", spec_plot.render());
    }
    Ok(run)
}

fn stitched_rows(st: &StitchedSpectrum) -> Vec<Vec<String>> {
    let sv = &st.combined;
    spectrum_rows(sv)
        .into_iter()
        .enumerate()
        .map(|(k, mut row)| {
            let f = sv.freq(k);
            match st.bands.iter().position(|b| b.contains(f)) {
                Some(b) => {
                    row.push(b.to_string());
                    row.push(st.bands[b].n_factor.to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            row
        })
        .collect()
}

pub fn scan(cfg: &Config) -> CliResult<Run> {
    let fps = cfg.camera.fps;
    let ns = &cfg.scan.n_sequence;
    let sig = cfg.signal(ns)?;
    let plans = plan_windows(ns, cfg.signal.duration_s, fps)?;
    let setup = ScanSetup {
        fps,
        exposure_fill: cfg.camera.exposure_fill,
        illum: cfg.illumination()?,
        noise: cfg.noise()?,
        seed: cfg.seed,
        pad_s: cfg.scan.pad_s,
    };
    let source = cfg.scan.patterns;
    let windows = scan_windows(&sig, &plans, &setup, |n| match source {
        PatternSource::Best => best_for(n).map(|b| b.pattern),
        PatternSource::Demo => demo_for(n),
    })?;
    let stitched = stitch(&windows, fps, cfg.scan.averaging)?;
    let cleaned = anti_alias(&stitched, cfg.scan.aa_mode)?;

    let mut run = Run::new();
    run.outputs.csv(
        "windows.csv",
        &["window", "n_factor", "start_s", "end_s"],
        windows
            .iter()
            .enumerate()
            .map(|(i, w)| vec![i.to_string(), w.n_factor.to_string(), num(w.start_s), num(w.end_s)]),
    )?;
    let mut rows = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        for row in spectrum_rows(&w.spectrum) {
            rows.push([vec![i.to_string(), w.n_factor.to_string()], row].concat());
        }
    }
    run.outputs.csv(
        "window_spectra.csv",
        &["window", "n_factor", "freq_hz", "magnitude", "phase_rad"],
        rows,
    )?;
    let half = fps / 2.0;
    let mut rows = Vec::new();
    for (i, e) in window_band_energies(&windows, fps).iter().enumerate() {
        for (u, v) in e.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                windows[i].n_factor.to_string(),
                num(u as f64 * half),
                num((u + 1) as f64 * half),
                num(*v),
            ]);
        }
    }
    run.outputs.csv(
        "band_energies.csv",
        &["window", "n_factor", "f_lo_hz", "f_hi_hz", "energy"],
        rows,
    )?;
    run.outputs.csv(
        "bands.csv",
        &["band", "f_lo_hz", "f_hi_hz", "n_factor", "windows"],
        stitched.bands.iter().enumerate().map(|(i, b)| {
            let ws: Vec<String> = b.windows.iter().map(usize::to_string).collect();
            vec![
                i.to_string(),
                num(b.f_lo),
                num(b.f_hi),
                b.n_factor.to_string(),
                ws.join(";"),
            ]
        }),
    )?;
    let header = ["freq_hz", "magnitude", "phase_rad", "band", "n_factor"];
    run.outputs.csv("stitched.csv", &header, stitched_rows(&stitched))?;
    run.outputs.csv("anti_aliased.csv", &header, stitched_rows(&cleaned))?;
    if let Some(t) = cfg.scan.threshold {
        let th = threshold_noise_floor(&cleaned.combined, t)?;
        run.outputs
            .csv("thresholded.csv", &SPECTRUM_HEADER, spectrum_rows(&th))?;
    }
    if cfg.output.format.svg() {
        let mag = |sv: &SpectrumView| (0..sv.len()).map(|k| (sv.freq(k), sv.amplitude(k))).collect::<Vec<_>>();
        let plot = Plot {
            title: "Stitched spectrum before and after anti-aliasing",
            x_label: "frequency (Hz)",
            y_label: "magnitude",
            log_x: false,
            series: vec![
                Series {
                    label: "stitched",
                    points: mag(&stitched.combined),
                },
                Series {
                    label: "anti-aliased",
                    points: mag(&cleaned.combined),
                },
            ],
        };
        run.outputs.text("scan.svg", plot.render());
    }
    run.notes.insert("aa_mode".into(), json!(cfg.scan.aa_mode));
    run.notes.insert("grid_rate_hz".into(), json!(sig.grid_rate()));
    run.notes.insert("window_count".into(), json!(windows.len()));
    Ok(run)
}

struct Evaluated {
    profile: ErrorProfile,
    mode: PatternMode,
    code: String,
}

pub fn patterns(cfg: &Config) -> CliResult<Run> {
    let a = &cfg.analysis;
    let fps = cfg.camera.fps;
    let requests = crate::config::profile_requests(cfg).map_err(CliError::compute)?;
    let spec = EnsembleSpec {
        n_trials: a.n_trials,
        freq_range_hz: (a.freq_range_hz[0], a.freq_range_hz[1]),
        duration_s: a.duration_s,
        amplitude: a.amplitude,
        seed: cfg.seed,
        offset: a.offset,
    };
    let opts = EvalOptions {
        fine_rate: a.fine_rate,
        render: a.render,
        baseline_render: a.baseline_render,
        bin_width_hz: a.bin_width_hz,
        illum: Some(cfg.illumination()?),
        noise: cfg.noise()?,
        random_pool: a.random_pool,
    };
    let cam_for = |n: usize| CameraConfig::with_fill(fps, n, cfg.camera.exposure_fill);

    let mut evaluated: Vec<Evaluated> = Vec::new();
    let mut listing: Vec<Vec<String>> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    for req in &requests {
        match req {
            ProfileRequest::Baseline => evaluated.push(Evaluated {
                profile: baseline_profile(&spec, fps, &opts)?,
                mode: PatternMode::Fixed,
                code: String::new(),
            }),
            ProfileRequest::Fixed(np) => {
                let p = &np.pattern;
                let ok = p.is_full_rank();
                listing.push(vec![
                    np.label.clone(),
                    p.n_substeps().to_string(),
                    np.id.to_string(),
                    p.to_string(),
                    ok.to_string(),
                    p.has_zero_row().to_string(),
                    ok.to_string(),
                ]);
                if !ok {
                    skipped.push(np.label.clone());
                    continue;
                }
                evaluated.push(Evaluated {
                    profile: evaluate_pattern(np, &spec, &cam_for(p.n_substeps())?, PatternMode::Fixed, &opts)?,
                    mode: PatternMode::Fixed,
                    code: p.to_string(),
                });
            }
            ProfileRequest::Random(n) => {
                let seed_pattern = NamedPattern {
                    id: 0,
                    label: format!("n{n}-random"),
                    pattern: best_for(*n)?.pattern,
                };
                evaluated.push(Evaluated {
                    profile: evaluate_pattern(&seed_pattern, &spec, &cam_for(*n)?, PatternMode::RandomPerFrame, &opts)?,
                    mode: PatternMode::RandomPerFrame,
                    code: "random".into(),
                });
            }
        }
    }

    let mut run = Run::new();
    let mode_name = |m: PatternMode| match m {
        PatternMode::Fixed => "fixed",
        PatternMode::RandomPerFrame => "random-per-frame",
    };
    let mut rows = Vec::new();
    for e in &evaluated {
        let p = &e.profile;
        for (b, &(lo, hi)) in p.freq_bins.iter().enumerate() {
            rows.push(vec![
                p.label.clone(),
                p.n_factor.to_string(),
                p.pattern_id.to_string(),
                mode_name(e.mode).to_string(),
                num(lo),
                num(hi),
                p.counts[b].to_string(),
                num(p.mean_l2[b]),
                num(p.mean_cosine[b]),
            ]);
        }
    }
    run.outputs.csv(
        "profiles.csv",
        &[
            "label",
            "n_factor",
            "pattern_id",
            "mode",
            "f_lo_hz",
            "f_hi_hz",
            "count",
            "mean_l2",
            "mean_cosine_rad",
        ],
        rows,
    )?;
    run.outputs.csv(
        "patterns.csv",
        &[
            "label",
            "n_factor",
            "pattern_id",
            "code",
            "full_rank",
            "dark_substep",
            "evaluated",
        ],
        listing,
    )?;

    let contenders: Vec<ErrorProfile> = evaluated
        .iter()
        .filter(|e| e.profile.n_factor > 1)
        .map(|e| e.profile.clone())
        .collect();
    let bands: Vec<(f64, f64)> = match &a.bands {
        Some(b) => b.iter().map(|r| (r[0], r[1])).collect(),
        None => {
            let ns: Vec<usize> = contenders.iter().map(|p| p.n_factor).collect();
            default_bands(&ns, fps)
                .into_iter()
                .map(|(lo, hi)| (lo.max(a.freq_range_hz[0]), hi.min(a.freq_range_hz[1])))
                .filter(|(lo, hi)| lo < hi)
                .collect()
        }
    };
    let mut text = String::new();
    if !contenders.is_empty() && !bands.is_empty() {
        let winners = band_winners_in(&contenders, &bands)?;
        run.outputs.csv(
            "winners.csv",
            &["f_lo_hz", "f_hi_hz", "n_factor", "pattern_id", "label", "mean_l2"],
            winners.iter().map(|w| {
                vec![
                    num(w.f_lo),
                    num(w.f_hi),
                    w.n_factor.to_string(),
                    w.pattern_id.to_string(),
                    w.label.clone(),
                    num(w.mean_l2),
                ]
            }),
        )?;
        for &(lo, hi) in &bands {
            let _ = writeln!(text, "band {lo}-{hi} Hz");
            let mut ranked: Vec<(&ErrorProfile, f64)> = evaluated
                .iter()
                .filter_map(|e| e.profile.band_mean_l2(lo, hi).map(|v| (&e.profile, v)))
                .collect();
            ranked.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.n_factor.cmp(&y.0.n_factor)));
            for (rank, (p, v)) in ranked.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "  {:>2}. {:<14} N={} mean L2 {v:.6}",
                    rank + 1,
                    p.label,
                    p.n_factor
                );
            }
        }
    }
    if let Some(ranges) = &a.ranges {
        let mut rows = Vec::new();
        let mut reference = None;
        for r in ranges {
            let n = r[0] as usize;
            let best = contenders
                .iter()
                .filter(|p| p.n_factor == n)
                .filter_map(|p| p.band_mean_l2(r[1], r[2]).map(|v| (p, v)))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            let Some((p, v)) = best else {
                return Err(CliError::compute(format!(
                    "analysis.ranges: no evaluated N={n} profile covers {}-{} Hz",
                    r[1], r[2]
                )));
            };
            let base = *reference.get_or_insert(v);
            rows.push(vec![
                n.to_string(),
                p.label.clone(),
                num(r[1]),
                num(r[2]),
                num(v),
                num(v / base),
            ]);
        }
        let _ = writeln!(text, "normalized error");
        for row in &rows {
            let _ = writeln!(
                text,
                "  N={} {}-{} Hz {:<14} {} ({})",
                row[0], row[2], row[3], row[1], row[4], row[5]
            );
        }
        run.outputs.csv(
            "table.csv",
            &["n_factor", "label", "f_lo_hz", "f_hi_hz", "mean_l2", "normalized"],
            rows,
        )?;
    }
    if !text.is_empty() {
        run.outputs.text("winners.txt", text);
    }
    if cfg.output.format.svg() {
        let series = evaluated
            .iter()
            .map(|e| Series {
                label: &e.profile.label,
                points: e
                    .profile
                    .freq_bins
                    .iter()
                    .zip(&e.profile.mean_l2)
                    .zip(&e.profile.counts)
                    .filter(|(_, c)| **c > 0)
                    .map(|((b, v), _)| ((b.0 + b.1) / 2.0, *v))
                    .collect(),
            })
            .collect();
        let plot = Plot {
            title: "Mean L2 error against tone frequency",
            x_label: "frequency (Hz)",
            y_label: "L2 error",
            log_x: false,
            series,
        };
        run.outputs.text("profiles.svg", plot.render());
    }
    run.notes.insert("skipped_not_full_rank".into(), json!(skipped));
    run.notes.insert(
        "profiles".into(),
        json!(evaluated
            .iter()
            .map(|e| json!({"label": e.profile.label, "code": e.code}))
            .collect::<Vec<_>>()),
    );
    Ok(run)
}

pub fn snr(cfg: &Config) -> CliResult<Run> {
    let cam = cfg.camera()?;
    let np = cfg.named_pattern()?;
    Reconstructor::new(&np.pattern).map_err(solver_error(&np))?;
    let s = &cfg.snr;
    let spec = EnsembleSpec {
        n_trials: s.n_trials,
        freq_range_hz: (s.freq_range_hz[0], s.freq_range_hz[1]),
        duration_s: s.duration_s,
        amplitude: s.amplitude,
        seed: cfg.seed,
        offset: s.offset,
    };
    let opts = SweepOptions {
        eval: EvalOptions {
            fine_rate: cfg.analysis.fine_rate,
            render: cfg.analysis.render,
            baseline_render: cfg.analysis.baseline_render,
            bin_width_hz: cfg.analysis.bin_width_hz,
            ..EvalOptions::default()
        },
        env_photons: s.env_photons,
        gammas: cfg.illumination.gammas.clone(),
        env_coupling: cfg.illumination.env_coupling,
        dark_coeff: cfg.noise.dark_coeff,
        read_noise: cfg.noise.read_noise,
        snr_trials: s.snr_trials,
    };
    let points = alpha_sweep(&s.alphas, &np, &spec, &cam, &opts)?;
    let mut run = Run::new();
    run.outputs.csv(
        "snr.csv",
        &[
            "alpha",
            "snr_ratio",
            "snr_ratio_sigma",
            "bound",
            "signal_ratio",
            "cosine_error_rad",
        ],
        points.iter().map(|p| {
            vec![
                num(p.alpha),
                num(p.snr_ratio),
                num(p.snr_ratio_sigma),
                num(p.bound),
                num(p.signal_ratio),
                num(p.mean_cosine),
            ]
        }),
    )?;
    if cfg.output.format.svg() {
        let snr_plot = Plot {
            title: "SNR with flicker over SNR without",
            x_label: "alpha (log scale)",
            y_label: "SNR ratio",
            log_x: true,
            series: vec![
                Series {
                    label: "measured",
                    points: points.iter().map(|p| (p.alpha, p.snr_ratio)).collect(),
                },
                Series {
                    label: "bound",
                    points: points.iter().map(|p| (p.alpha, p.bound)).collect(),
                },
            ],
        };
        run.outputs.text("snr.svg", snr_plot.render());
        let cos_plot = Plot {
            title: "Cosine error against alpha",
            x_label: "alpha (log scale)",
            y_label: "cosine error (rad)",
            log_x: true,
            series: vec![Series {
                label: &np.label,
                points: points.iter().map(|p| (p.alpha, p.mean_cosine)).collect(),
            }],
        };
        run.outputs.text("cosine.svg", cos_plot.render());
    }
    run.notes.insert("pattern".into(), json!(np.label));
    Ok(run)
}
