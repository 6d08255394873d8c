//! Flicker-coded temporal super-resolution.
//!
//! A camera integrating a scene lit by binary colored flicker records, per
//! exposure, one value per color channel. Each channel sees only the
//! sub-steps in which its flicker is on, so the channel values are linear
//! measurements of the scene's sub-exposure intensity profile. This crate
//! simulates that camera, recovers the profile with a closed-form
//! smoothness-regularized solve, stitches spectra from windows recorded at
//! different up-sample factors, and measures reconstruction quality.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod pattern;
pub mod scanning;
pub mod sensor;
pub mod signals;
pub mod solver;

pub use analysis::{
    AlphaPoint, BandWinner, EnsembleSpec, ErrorProfile, EvalOptions, PatternConstraints, PatternMode, Render,
    SweepOptions,
};
pub use error::{Result, TsrError};
pub use pattern::{FlickerPattern, NamedPattern};
pub use scanning::{AaMode, StitchAveraging, StitchBand, StitchedSpectrum, TemporalWindow, WindowPlan};
pub use sensor::{CameraConfig, ChannelFrame, EnvCoupling, IlluminationModel, NoiseModel};
pub use signals::{FineSignal, Sampled, SpectrumView, Tone};
pub use solver::{ReconstructedTrace, Reconstructor, SmoothnessMatrix, SpatialCoupling, SpatialPatch};
