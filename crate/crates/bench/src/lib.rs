//! Fixtures shared by the benchmarks.

use tsr_core::pattern::best_for;
use tsr_core::sensor::simulate_sequence;
use tsr_core::signals::{gen_sinusoid_mix, gen_square_mix};
use tsr_core::{CameraConfig, ChannelFrame, FineSignal, FlickerPattern, IlluminationModel, NoiseModel, Tone};

pub const FPS: f64 = 10.0;

/// Three-tone scene on a grid fine enough for N up to 6.
pub fn scene(duration_s: f64) -> FineSignal {
    let tones = [
        Tone::new(1.0, 1.0, 0.0),
        Tone::new(1.0, 6.0, 0.4),
        Tone::new(1.0, 11.0, 1.3),
    ];
    gen_sinusoid_mix(&tones, duration_s, 6000.0).expect("valid scene")
}

/// The four-square-wave scan scene.
pub fn squares(duration_s: f64) -> FineSignal {
    gen_square_mix(&[12.0, 19.0, 23.0, 27.0], duration_s, 6000.0).expect("valid scene")
}

/// Noise-free frames of [`scene`] under the best code for `n`.
pub fn frames(n: usize, duration_s: f64) -> (CameraConfig, FlickerPattern, Vec<ChannelFrame>) {
    let cam = CameraConfig::new(FPS, n).expect("valid camera");
    let pattern = best_for(n).expect("known N").pattern;
    let frames = simulate_sequence(
        &scene(duration_s),
        &cam,
        &pattern,
        &IlluminationModel::ideal(3),
        &NoiseModel::off(),
        0,
    )
    .expect("simulation");
    (cam, pattern, frames)
}
