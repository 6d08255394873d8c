//! Campaign configuration: a TOML file (or an embedded preset) with one
//! table per concern. Every table and key is optional; unknown keys are
//! rejected with the file and line they appear on.

use serde::{Deserialize, Serialize};
use tsr_core::analysis::{default_fine_rate, PatternConstraints};
use tsr_core::pattern::{best_for, candidate, candidates, demo_for, identity3};
use tsr_core::signals::{gen_sinusoid_mix, gen_square_mix};
use tsr_core::{
    AaMode, CameraConfig, EnvCoupling, FineSignal, FlickerPattern, IlluminationModel, NamedPattern, NoiseModel, Render,
    SpatialCoupling, StitchAveraging, Tone,
};

use crate::error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct Config {
    pub seed: u64,
    pub camera: CameraSection,
    pub signal: SignalSection,
    pub pattern: PatternSection,
    pub illumination: IlluminationSection,
    pub noise: NoiseSection,
    pub spatial: SpatialSection,
    pub scan: ScanSection,
    pub analysis: AnalysisSection,
    pub snr: SnrSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub fps: f64,
    /// Up-sample factor N.
    pub n: usize,
    pub exposure_fill: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            fps: 10.0,
            n: 3,
            exposure_fill: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    #[default]
    Sines,
    Squares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub amplitude: f64,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub kind: SignalKind,
    /// Components of a `sines` signal.
    pub tones: Vec<ToneSpec>,
    /// Fundamentals of a `squares` signal (unit amplitude each).
    pub freqs_hz: Vec<f64>,
    pub duration_s: f64,
    /// Fine grid rate; 100× the highest frequency, rounded up to a multiple
    /// of every `fps · N` in use, when unset.
    pub grid_rate: Option<f64>,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            kind: SignalKind::Sines,
            tones: vec![ToneSpec {
                amplitude: 1.0,
                freq_hz: 1.0,
                phase_rad: 0.0,
            }],
            freqs_hz: Vec::new(),
            duration_s: 5.0,
            grid_rate: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternSection {
    /// `best`, `demo`, `identity`, `n3-identity` or `n{N}-p{id}`.
    pub preset: Option<String>,
    /// Explicit code, one 0/1 list of length N per channel.
    pub channels: Option<Vec<Vec<u8>>>,
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlluminationSection {
    pub flicker_intensity: f64,
    pub env_intensity: f64,
    /// Sets `env_intensity = flicker_intensity / alpha` when given.
    pub alpha: Option<f64>,
    pub gammas: Vec<f64>,
    pub env_coupling: EnvCoupling,
}

impl Default for IlluminationSection {
    fn default() -> Self {
        Self {
            flicker_intensity: 1.0,
            env_intensity: 0.0,
            alpha: None,
            gammas: vec![1.0; 3],
            env_coupling: EnvCoupling::Gated,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub dark_coeff: f64,
    pub read_noise: f64,
    pub shot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialSection {
    pub w_t: f64,
    pub w_s: f64,
    pub coupling: SpatialCoupling,
}

impl Default for SpatialSection {
    fn default() -> Self {
        Self {
            w_t: 3.0,
            w_s: 1.0,
            coupling: SpatialCoupling::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternSource {
    #[default]
    Best,
    Demo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub n_sequence: Vec<usize>,
    pub patterns: PatternSource,
    pub aa_mode: AaMode,
    pub averaging: StitchAveraging,
    /// Padded window length in seconds; chosen so band edges land on bins
    /// when unset.
    pub pad_s: Option<f64>,
    /// Peak-relative noise floor applied to an extra thresholded output.
    pub threshold: Option<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            n_sequence: vec![3, 4, 5, 6],
            patterns: PatternSource::Best,
            aa_mode: AaMode::Composition,
            averaging: StitchAveraging::Complex,
            pad_s: None,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub n_trials: usize,
    pub freq_range_hz: [f64; 2],
    pub duration_s: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Profiles to evaluate, see [`ProfileRequest`].
    pub profiles: Vec<String>,
    /// Winner-table bands; `((N−1)·fps/2, N·fps/2)` for each N evaluated
    /// when unset (the lowest band starting at the range start).
    pub bands: Option<Vec<[f64; 2]>>,
    /// Rows `[N, f_lo, f_hi]` of a normalized error table.
    pub ranges: Option<Vec<[f64; 3]>>,
    pub bin_width_hz: f64,
    pub render: Render,
    pub baseline_render: Render,
    pub fine_rate: Option<f64>,
    pub random_pool: PatternConstraints,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            freq_range_hz: [5.0, 30.0],
            duration_s: 5.0,
            amplitude: 1.0,
            offset: 0.0,
            profiles: vec![
                "baseline".into(),
                "best:3".into(),
                "best:4".into(),
                "best:5".into(),
                "best:6".into(),
            ],
            bands: None,
            ranges: None,
            bin_width_hz: 1.0,
            render: Render::BandLimited,
            baseline_render: Render::BandLimited,
            fine_rate: None,
            random_pool: PatternConstraints {
                full_rank: true,
                no_zero_row: false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrSection {
    pub alphas: Vec<f64>,
    /// Electrons per sub-step from environment light on a unit white scene.
    pub env_photons: f64,
    pub snr_trials: usize,
    pub n_trials: usize,
    pub freq_range_hz: [f64; 2],
    pub duration_s: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for SnrSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 2.0, 5.0, 10.0, 50.0],
            env_photons: 100.0,
            snr_trials: 10_000,
            n_trials: 100,
            freq_range_hz: [1.0, 15.0],
            duration_s: 2.0,
            amplitude: 1.0,
            offset: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "csv+svg")]
    CsvSvg,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "csv+svg" => Some(OutputFormat::CsvSvg),
            _ => None,
        }
    }

    pub fn svg(self) -> bool {
        self == OutputFormat::CsvSvg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub format: OutputFormat,
}

/// Where a config text came from, for error locations.
#[derive(Debug, Clone)]
pub struct Source {
    pub name: String,
    pub text: String,
}

impl Source {
    /// Line of `path` (`table.key` or `key`) in the text; the table header
    /// when the key is absent, else line 1.
    pub fn line_of(&self, path: &str) -> usize {
        let (table, key) = match path.rsplit_once('.') {
            Some((t, k)) => (t, k),
            None => ("", path),
        };
        let mut current = String::new();
        let mut header_line = None;
        for (idx, raw) in self.text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.starts_with('[') {
                current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if current == table {
                    header_line = Some(idx + 1);
                }
                continue;
            }
            if current == table {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim().trim_matches('"') == key {
                        return idx + 1;
                    }
                }
            }
        }
        header_line.unwrap_or(1)
    }

    pub fn error(&self, path: &str, message: impl Into<String>) -> CliError {
        CliError::at(
            ErrorKind::Config,
            &self.name,
            self.line_of(path),
            format!("{path}: {}", message.into()),
        )
    }
}

/// Parses a config, mapping syntax and unknown-key errors to their line.
pub fn parse(source: &Source) -> CliResult<Config> {
    toml::from_str::<Config>(&source.text).map_err(|e| {
        let line = e
            .span()
            .map(|s| source.text[..s.start.min(source.text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        CliError::at(ErrorKind::Config, &source.name, line, e.message())
    })
}

/// A profile named in `analysis.profiles`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileRequest {
    /// Per-exposure means, no up-sampling.
    Baseline,
    /// One fixed pattern.
    Fixed(NamedPattern),
    /// A fresh random code every frame at this N.
    Random(usize),
}

/// Parses `baseline`, `best:N`, `demo:N`, `candidates:N`, `exhaustive:N`,
/// `random:N`, `pattern` (the `[pattern]` table) or a pattern label such as
/// `n4-p1`.
pub fn profile_requests(cfg: &Config) -> Result<Vec<ProfileRequest>, String> {
    let mut out = Vec::new();
    for item in &cfg.analysis.profiles {
        let item = item.trim();
        let (head, arg) = match item.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (item, None),
        };
        let n = || -> Result<usize, String> {
            arg.ok_or_else(|| format!("`{item}` needs an N, e.g. `{head}:4`"))?
                .parse::<usize>()
                .map_err(|_| format!("bad N in `{item}`"))
        };
        match head {
            "baseline" => out.push(ProfileRequest::Baseline),
            "best" => out.push(ProfileRequest::Fixed(best_for(n()?).map_err(|e| e.to_string())?)),
            "demo" => {
                let n = n()?;
                out.push(ProfileRequest::Fixed(NamedPattern {
                    id: 0,
                    label: format!("n{n}-demo"),
                    pattern: demo_for(n).map_err(|e| e.to_string())?,
                }))
            }
            "candidates" => {
                for c in candidates(n()?).map_err(|e| e.to_string())? {
                    out.push(ProfileRequest::Fixed(c));
                }
            }
            "exhaustive" => {
                let n = n()?;
                let all = tsr_core::analysis::enumerate_patterns(n, 3, PatternConstraints::default())
                    .map_err(|e| e.to_string())?;
                for (idx, p) in all.into_iter().enumerate() {
                    out.push(ProfileRequest::Fixed(NamedPattern {
                        id: idx as u32,
                        label: format!("n{n}-x{idx}"),
                        pattern: p,
                    }));
                }
            }
            "random" => out.push(ProfileRequest::Random(n()?)),
            "pattern" => out.push(ProfileRequest::Fixed(cfg.named_pattern().map_err(|e| e.message)?)),
            label => out.push(ProfileRequest::Fixed(pattern_by_label(label)?)),
        }
    }
    Ok(out)
}

/// `n3-identity`, `identity` or `n{N}-p{id}`.
pub fn pattern_by_label(label: &str) -> Result<NamedPattern, String> {
    if label == "n3-identity" || label == "identity" {
        return Ok(NamedPattern {
            id: 0,
            label: "n3-identity".into(),
            pattern: identity3(),
        });
    }
    let parsed = label
        .strip_prefix('n')
        .and_then(|rest| rest.split_once("-p"))
        .and_then(|(n, id)| Some((n.parse::<usize>().ok()?, id.parse::<u32>().ok()?)));
    let (n, id) = parsed.ok_or_else(|| format!("unknown pattern `{label}`"))?;
    Ok(NamedPattern {
        id,
        label: label.to_string(),
        pattern: candidate(n, id).map_err(|e| e.to_string())?,
    })
}

impl Config {
    pub fn camera(&self) -> CliResult<CameraConfig> {
        Ok(CameraConfig::with_fill(
            self.camera.fps,
            self.camera.n,
            self.camera.exposure_fill,
        )?)
    }

    pub fn illumination(&self) -> CliResult<IlluminationModel> {
        let il = &self.illumination;
        let env = match il.alpha {
            Some(a) => il.flicker_intensity / a,
            None => il.env_intensity,
        };
        Ok(IlluminationModel::new(il.flicker_intensity, env, il.gammas.clone())?.coupling(il.env_coupling))
    }

    pub fn noise(&self) -> CliResult<NoiseModel> {
        Ok(NoiseModel::new(
            self.noise.dark_coeff,
            self.noise.read_noise,
            self.noise.shot,
        )?)
    }

    /// The pattern of the `[pattern]` table at the camera's N.
    pub fn named_pattern(&self) -> CliResult<NamedPattern> {
        let n = self.camera.n;
        if let Some(chans) = &self.pattern.channels {
            let refs: Vec<&[u8]> = chans.iter().map(Vec::as_slice).collect();
            let mut p = FlickerPattern::from_channels(&refs)?;
            if let Some(names) = &self.pattern.names {
                p = p.with_channel_names(names.clone())?;
            }
            return Ok(NamedPattern {
                id: 0,
                label: "custom".into(),
                pattern: p,
            });
        }
        let preset = self.pattern.preset.as_deref().unwrap_or("best");
        match preset {
            "best" => Ok(best_for(n)?),
            "demo" => Ok(NamedPattern {
                id: 0,
                label: format!("n{n}-demo"),
                pattern: demo_for(n)?,
            }),
            label => pattern_by_label(label).map_err(CliError::compute),
        }
    }

    fn max_signal_freq(&self) -> f64 {
        match self.signal.kind {
            SignalKind::Sines => self.signal.tones.iter().map(|t| t.freq_hz).fold(0.0, f64::max),
            SignalKind::Squares => self.signal.freqs_hz.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Fine grid rate for a signal consumed at the given N factors.
    pub fn grid_rate(&self, n_factors: &[usize]) -> f64 {
        if let Some(r) = self.signal.grid_rate {
            return r;
        }
        let lcm = n_factors.iter().fold(1usize, |acc, &n| lcm(acc, n.max(1)));
        let base = self.camera.fps * lcm as f64;
        let top = self
            .max_signal_freq()
            .max(self.camera.fps * *n_factors.iter().max().unwrap_or(&1) as f64 / 2.0);
        default_fine_rate(top, base)
    }

    pub fn signal(&self, n_factors: &[usize]) -> CliResult<FineSignal> {
        let rate = self.grid_rate(n_factors);
        let s = &self.signal;
        Ok(match s.kind {
            SignalKind::Sines => {
                let tones: Vec<Tone> = s
                    .tones
                    .iter()
                    .map(|t| Tone::new(t.amplitude, t.freq_hz, t.phase_rad))
                    .collect();
                gen_sinusoid_mix(&tones, s.duration_s, rate)?
            }
            SignalKind::Squares => gen_square_mix(&s.freqs_hz, s.duration_s, rate)?,
        })
    }

    /// Checks every value against the preconditions of the code that will
    /// consume it, before any work is done.
    pub fn validate(&self, src: &Source) -> CliResult<()> {
        let positive = |path: &str, v: f64| -> CliResult<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(src.error(path, format!("must be a finite number > 0, got {v}")))
            }
        };
        let non_negative = |path: &str, v: f64| -> CliResult<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(src.error(path, format!("must be a finite number >= 0, got {v}")))
            }
        };
        let range = |path: &str, r: [f64; 2]| -> CliResult<()> {
            if r[0] >= 0.0 && r[0] < r[1] && r[1].is_finite() {
                Ok(())
            } else {
                Err(src.error(path, format!("needs 0 <= lo < hi, got [{}, {}]", r[0], r[1])))
            }
        };

        positive("camera.fps", self.camera.fps)?;
        if self.camera.n < 1 {
            return Err(src.error("camera.n", "must be >= 1"));
        }
        if !(self.camera.exposure_fill > 0.0 && self.camera.exposure_fill <= 1.0) {
            return Err(src.error("camera.exposure_fill", "must lie in (0, 1]"));
        }

        positive("signal.duration_s", self.signal.duration_s)?;
        match self.signal.kind {
            SignalKind::Sines => {
                if self.signal.tones.is_empty() {
                    return Err(src.error("signal.tones", "no components"));
                }
                for t in &self.signal.tones {
                    non_negative("signal.tones", t.freq_hz)?;
                    if !t.amplitude.is_finite() || !t.phase_rad.is_finite() {
                        return Err(src.error("signal.tones", "amplitude and phase must be finite"));
                    }
                }
            }
            SignalKind::Squares => {
                if self.signal.freqs_hz.is_empty() {
                    return Err(src.error("signal.freqs_hz", "no components"));
                }
                for &f in &self.signal.freqs_hz {
                    positive("signal.freqs_hz", f)?;
                }
            }
        }
        if let Some(r) = self.signal.grid_rate {
            positive("signal.grid_rate", r)?;
            if r < 10.0 * self.max_signal_freq() {
                return Err(src.error(
                    "signal.grid_rate",
                    "must be at least 10x the highest component frequency",
                ));
            }
        }

        if let Some(chans) = &self.pattern.channels {
            if chans.is_empty() || chans.iter().any(|c| c.len() != self.camera.n) {
                return Err(src.error(
                    "pattern.channels",
                    format!("each channel needs {} entries (camera.n)", self.camera.n),
                ));
            }
            if chans.iter().flatten().any(|&b| b > 1) {
                return Err(src.error("pattern.channels", "entries must be 0 or 1"));
            }
            if let Some(names) = &self.pattern.names {
                if names.len() != chans.len() {
                    return Err(src.error("pattern.names", "one name per channel"));
                }
            }
        } else if self.pattern.names.is_some() {
            return Err(src.error("pattern.names", "names need explicit channels"));
        }
        match self.named_pattern() {
            Ok(p) if p.pattern.n_substeps() != self.camera.n => {
                return Err(src.error(
                    "pattern.preset",
                    format!(
                        "pattern {} has N={} but camera.n={}",
                        p.label,
                        p.pattern.n_substeps(),
                        self.camera.n
                    ),
                ));
            }
            Ok(p) if p.pattern.n_channels() != self.illumination.gammas.len() => {
                return Err(src.error(
                    "illumination.gammas",
                    format!(
                        "{} gammas for a {}-channel pattern",
                        self.illumination.gammas.len(),
                        p.pattern.n_channels()
                    ),
                ));
            }
            Ok(_) => {}
            Err(e) => return Err(src.error("pattern.preset", e.message)),
        }

        positive("illumination.flicker_intensity", self.illumination.flicker_intensity)?;
        non_negative("illumination.env_intensity", self.illumination.env_intensity)?;
        if let Some(a) = self.illumination.alpha {
            positive("illumination.alpha", a)?;
            if self.illumination.env_intensity != 0.0 {
                return Err(src.error("illumination.alpha", "give either alpha or env_intensity, not both"));
            }
        }
        for &g in &self.illumination.gammas {
            if !(g > 0.0 && g <= 1.0) {
                return Err(src.error("illumination.gammas", format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        non_negative("noise.dark_coeff", self.noise.dark_coeff)?;
        non_negative("noise.read_noise", self.noise.read_noise)?;

        positive("spatial.w_t", self.spatial.w_t)?;
        non_negative("spatial.w_s", self.spatial.w_s)?;

        if self.scan.n_sequence.is_empty() || self.scan.n_sequence.contains(&0) {
            return Err(src.error("scan.n_sequence", "needs at least one N >= 1"));
        }
        if self.scan.patterns == PatternSource::Best || self.scan.patterns == PatternSource::Demo {
            if let Some(n) = self.scan.n_sequence.iter().find(|n| !(3..=6).contains(*n)) {
                return Err(src.error(
                    "scan.n_sequence",
                    format!("preset patterns exist for N in 3..=6, got {n}"),
                ));
            }
        }
        if let Some(p) = self.scan.pad_s {
            positive("scan.pad_s", p)?;
        }
        if let Some(t) = self.scan.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(src.error("scan.threshold", "must lie in [0, 1]"));
            }
        }

        let a = &self.analysis;
        if a.n_trials < 1 {
            return Err(src.error("analysis.n_trials", "must be >= 1"));
        }
        range("analysis.freq_range_hz", a.freq_range_hz)?;
        positive("analysis.duration_s", a.duration_s)?;
        positive("analysis.amplitude", a.amplitude)?;
        non_negative("analysis.offset", a.offset)?;
        positive("analysis.bin_width_hz", a.bin_width_hz)?;
        if let Some(r) = a.fine_rate {
            positive("analysis.fine_rate", r)?;
        }
        if let Some(bands) = &a.bands {
            for b in bands {
                range("analysis.bands", *b)?;
            }
        }
        if let Some(rows) = &a.ranges {
            for r in rows {
                if r[0] < 1.0 || r[0].fract() != 0.0 {
                    return Err(src.error(
                        "analysis.ranges",
                        format!("row N must be a positive integer, got {}", r[0]),
                    ));
                }
                range("analysis.ranges", [r[1], r[2]])?;
            }
        }
        if a.profiles.is_empty() {
            return Err(src.error("analysis.profiles", "no profiles"));
        }
        profile_requests(self).map_err(|m| src.error("analysis.profiles", m))?;

        let s = &self.snr;
        if s.alphas.is_empty() {
            return Err(src.error("snr.alphas", "no alpha values"));
        }
        for &alpha in &s.alphas {
            positive("snr.alphas", alpha)?;
        }
        positive("snr.env_photons", s.env_photons)?;
        if s.snr_trials < 2 {
            return Err(src.error("snr.snr_trials", "must be >= 2"));
        }
        if s.n_trials < 1 {
            return Err(src.error("snr.n_trials", "must be >= 1"));
        }
        range("snr.freq_range_hz", s.freq_range_hz)?;
        positive("snr.duration_s", s.duration_s)?;
        positive("snr.amplitude", s.amplitude)?;
        non_negative("snr.offset", s.offset)?;
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
