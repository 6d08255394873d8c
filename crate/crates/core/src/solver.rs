//! Closed-form minimum-smoothness reconstruction.
//!
//! For one exposure the solver returns the N sub-step intensities `I` that
//! minimize `IᵀMI` subject to `SᵀI = C`, which is
//! `I = M⁻¹S (SᵀM⁻¹S)⁻¹ C`. Nothing is inverted explicitly: `M⁻¹S` and the
//! final gain come from triangular solves against a factorization of `M` and
//! of the Gram matrix `SᵀM⁻¹S`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TsrError};
use crate::pattern::FlickerPattern;
use crate::sensor::{CameraConfig, ChannelFrame};
use crate::signals::Sampled;

/// Number of pixels in the spatial domain: a pixel and its four neighbours.
pub const PATCH_PIXELS: usize = 5;

/// Symmetric smoothness penalty matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessMatrix {
    entries: DMatrix<f64>,
}

impl SmoothnessMatrix {
    /// Wraps a square symmetric matrix.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(invalid("smoothness matrix must be square and nonempty"));
        }
        if entries != entries.transpose() {
            return Err(invalid("smoothness matrix must be symmetric"));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.transpose()
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.entries * &v))
    }
}

/// Tridiagonal `4 / −2` matrix, with the diagonal 4 kept in the first and
/// last rows as well.
pub fn build_m_temporal(n: usize) -> Result<SmoothnessMatrix> {
    if n < 2 {
        return Err(invalid(format!("temporal M needs n >= 2, got {n}")));
    }
    let entries = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 4.0,
        1 => -2.0,
        _ => 0.0,
    });
    Ok(SmoothnessMatrix { entries })
}

/// Which index pairs the spatial weight couples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialCoupling {
    /// Every off-diagonal pair with `|i − j| mod 5 = 0`.
    #[default]
    Literal,
    /// Only pairs with `|i − j| = 5`.
    NearestBlock,
}

/// Smoothness matrix over a 5-pixel patch, dimension `5n`.
///
/// Index `i = p·n + k` addresses sub-step `k` of pixel `p`. Entries follow
/// the case list in order: `2w_s + 2w_t` on the diagonal, `−2w_t` between
/// consecutive sub-steps of the same pixel, `−2w_s` where `|i − j|` is a
/// multiple of 5 (see [`SpatialCoupling`]), zero elsewhere.
pub fn build_m_spatial(n: usize, w_t: f64, w_s: f64, coupling: SpatialCoupling) -> Result<SmoothnessMatrix> {
    if n < 2 {
        return Err(invalid(format!("spatial M needs n >= 2, got {n}")));
    }
    if !(w_t > 0.0 && w_t.is_finite()) {
        return Err(invalid(format!("w_t must be > 0, got {w_t}")));
    }
    if !(w_s >= 0.0 && w_s.is_finite()) {
        return Err(invalid(format!("w_s must be >= 0, got {w_s}")));
    }
    let dim = PATCH_PIXELS * n;
    let entries = DMatrix::from_fn(dim, dim, |i, j| {
        let d = i.abs_diff(j);
        let spatial = match coupling {
            SpatialCoupling::Literal => d % PATCH_PIXELS == 0,
            SpatialCoupling::NearestBlock => d == PATCH_PIXELS,
        };
        if d == 0 {
            2.0 * w_s + 2.0 * w_t
        } else if d == 1 && i / n == j / n {
            -2.0 * w_t
        } else if spatial {
            -2.0 * w_s
        } else {
            0.0
        }
    });
    Ok(SmoothnessMatrix { entries })
}

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn new(a: DMatrix<f64>, what: &str) -> Result<Self> {
        if let Some(ch) = Cholesky::new(a.clone()) {
            return Ok(Factor::Cholesky(ch));
        }
        let lu = a.lu();
        let u = lu.u();
        let scale = u.diagonal().amax().max(f64::MIN_POSITIVE);
        if u.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Err(TsrError::Singular(what.to_string()));
        }
        Ok(Factor::Lu(lu))
    }

    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(ch) => ch.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("checked non-singular"),
        }
    }
}

/// Linear map `C ↦ I` for a fixed smoothness matrix and block code.
///
/// When `M` itself is singular (possible for some spatial weights) the
/// stationarity system `[[M, −S], [Sᵀ, 0]]` is solved instead, which still
/// has a unique answer if `M` is non-singular on the null space of `Sᵀ`.
fn gain_matrix(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m_fac = match Factor::new(m.clone(), "smoothness matrix M") {
        Ok(f) => f,
        Err(TsrError::Singular(_)) => return kkt_gain(m, s),
        Err(e) => return Err(e),
    };
    let y = m_fac.solve(s);
    let gram = s.transpose() * &y;
    let g_fac = Factor::new(gram, "SᵀM⁻¹S")?;
    // I = Y G⁻¹ C, so the gain is (G⁻¹ Yᵀ)ᵀ with G symmetric.
    Ok(g_fac.solve(&y.transpose()).transpose())
}

fn kkt_gain(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = s.shape();
    let mut a = DMatrix::zeros(n + k, n + k);
    a.view_mut((0, 0), (n, n)).copy_from(m);
    a.view_mut((0, n), (n, k)).copy_from(&(-s));
    a.view_mut((n, 0), (k, n)).copy_from(&s.transpose());
    let mut rhs = DMatrix::zeros(n + k, k);
    rhs.view_mut((n, 0), (k, k)).fill_with_identity();
    let fac = Factor::new(a, "stationarity system of M and S")?;
    Ok(fac.solve(&rhs).rows(0, n).into_owned())
}

/// The solve only needs `S` to have full column rank; dark sub-steps are
/// allowed here even though flicker presets avoid them.
fn check_solvable(pattern: &FlickerPattern) -> Result<()> {
    if pattern.n_channels() > pattern.n_substeps() || !pattern.is_full_rank() {
        return Err(TsrError::PatternNotFullRank);
    }
    Ok(())
}

/// Channel values divided by their reflectivity factors.
pub fn normalize_channels(c: &[f64], gammas: &[f64]) -> Result<Vec<f64>> {
    if c.len() != gammas.len() {
        return Err(TsrError::LengthMismatch {
            left: c.len(),
            right: gammas.len(),
        });
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(invalid(format!("gamma must be > 0, got {g}")));
    }
    Ok(c.iter().zip(gammas).map(|(c, g)| c / g).collect())
}

/// Per-pattern solver with the factorizations done once.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    pattern: FlickerPattern,
    gain: DMatrix<f64>,
}

impl Reconstructor {
    pub fn new(pattern: &FlickerPattern) -> Result<Self> {
        let m = build_m_temporal(pattern.n_substeps())?;
        Self::with_matrix(pattern, &m)
    }

    /// Uses a caller-supplied smoothness matrix of dimension N.
    pub fn with_matrix(pattern: &FlickerPattern, m: &SmoothnessMatrix) -> Result<Self> {
        check_solvable(pattern)?;
        if m.dim() != pattern.n_substeps() {
            return Err(TsrError::LengthMismatch {
                left: m.dim(),
                right: pattern.n_substeps(),
            });
        }
        let gain = gain_matrix(m.entries(), &pattern.to_matrix())?;
        Ok(Self {
            pattern: pattern.clone(),
            gain,
        })
    }

    pub fn pattern(&self) -> &FlickerPattern {
        &self.pattern
    }

    /// The N×M matrix `M⁻¹S (SᵀM⁻¹S)⁻¹`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Sub-step intensities from already normalized channel values.
    pub fn solve_normalized(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.gain.ncols() {
            return Err(TsrError::LengthMismatch {
                left: c.len(),
                right: self.gain.ncols(),
            });
        }
        let v = &self.gain * DVector::from_column_slice(c);
        Ok(v.iter().copied().collect())
    }

    pub fn solve(&self, c: &[f64], gammas: &[f64]) -> Result<Vec<f64>> {
        self.solve_normalized(&normalize_channels(c, gammas)?)
    }
}

/// Reconstructs the N sub-step intensities of one exposure.
pub fn reconstruct(frame: &ChannelFrame, pattern: &FlickerPattern, gammas: &[f64]) -> Result<Vec<f64>> {
    Reconstructor::new(pattern)?.solve(&frame.c_values, gammas)
}

/// Concatenated per-frame reconstructions sampled at `fps · N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedTrace {
    values: Vec<f64>,
    n_factor: usize,
    fps: f64,
    /// Start time of the first sub-step, seconds.
    t0: f64,
}

impl ReconstructedTrace {
    pub fn new(values: Vec<f64>, n_factor: usize, fps: f64, t0: f64) -> Result<Self> {
        if n_factor == 0 || !values.len().is_multiple_of(n_factor) {
            return Err(invalid(format!(
                "trace length {} is not a multiple of N={n_factor}",
                values.len()
            )));
        }
        if !(fps > 0.0) {
            return Err(invalid(format!("fps must be > 0, got {fps}")));
        }
        Ok(Self {
            values,
            n_factor,
            fps,
            t0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_factor(&self) -> usize {
        self.n_factor
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn rate(&self) -> f64 {
        self.fps * self.n_factor as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_frames(&self) -> usize {
        self.values.len() / self.n_factor
    }

    /// Start time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.rate()
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.rate()
    }
}

impl Sampled for ReconstructedTrace {
    fn samples(&self) -> &[f64] {
        &self.values
    }

    fn sample_rate(&self) -> f64 {
        self.rate()
    }
}

/// Reconstructs every frame and concatenates the results.
pub fn reconstruct_sequence(
    frames: &[ChannelFrame],
    pattern: &FlickerPattern,
    gammas: &[f64],
    cam: &CameraConfig,
) -> Result<ReconstructedTrace> {
    if pattern.n_substeps() != cam.n_factor {
        return Err(invalid(format!(
            "pattern has {} sub-steps but camera N is {}",
            pattern.n_substeps(),
            cam.n_factor
        )));
    }
    let solver = Reconstructor::new(pattern)?;
    reconstruct_sequence_with(frames, gammas, cam, |_| &solver)
}

/// Like [`reconstruct_sequence`] with the solver chosen per frame index.
pub fn reconstruct_sequence_with<'r>(
    frames: &[ChannelFrame],
    gammas: &[f64],
    cam: &CameraConfig,
    solver_for: impl Fn(i64) -> &'r Reconstructor,
) -> Result<ReconstructedTrace> {
    let first = frames.first().ok_or(TsrError::Empty("frames"))?;
    let mut values = Vec::with_capacity(frames.len() * cam.n_factor);
    for f in frames {
        let wrap = |e| TsrError::Frame {
            index: f.frame_index,
            source: Box::new(e),
        };
        let solver = solver_for(f.frame_index);
        if solver.pattern().n_substeps() != cam.n_factor {
            return Err(wrap(invalid(format!(
                "pattern has {} sub-steps but camera N is {}",
                solver.pattern().n_substeps(),
                cam.n_factor
            ))));
        }
        values.extend(solver.solve(&f.c_values, gammas).map_err(wrap)?);
    }
    ReconstructedTrace::new(values, cam.n_factor, cam.fps, first.frame_index as f64 / cam.fps)
}

/// A pixel and its four neighbours, with the smoothness weights.
///
/// `frames[0]` is the centre pixel; the neighbours follow in any fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPatch {
    pub frames: Vec<ChannelFrame>,
    pub w_t: f64,
    pub w_s: f64,
    pub coupling: SpatialCoupling,
}

impl SpatialPatch {
    pub fn new(frames: Vec<ChannelFrame>, w_t: f64, w_s: f64) -> Result<Self> {
        let patch = Self {
            frames,
            w_t,
            w_s,
            coupling: SpatialCoupling::Literal,
        };
        patch.validate()?;
        Ok(patch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != PATCH_PIXELS {
            return Err(invalid(format!(
                "a patch has exactly {PATCH_PIXELS} pixels, got {}",
                self.frames.len()
            )));
        }
        if !(self.w_t > 0.0) {
            return Err(invalid(format!("w_t must be > 0, got {}", self.w_t)));
        }
        if !(self.w_s >= 0.0) {
            return Err(invalid(format!("w_s must be >= 0, got {}", self.w_s)));
        }
        Ok(())
    }
}

/// Block-diagonal code: one copy of `S` per pixel.
pub fn block_code(pattern: &FlickerPattern) -> DMatrix<f64> {
    let (n, m) = (pattern.n_substeps(), pattern.n_channels());
    let s = pattern.to_matrix();
    let mut out = DMatrix::zeros(PATCH_PIXELS * n, PATCH_PIXELS * m);
    for p in 0..PATCH_PIXELS {
        out.view_mut((p * n, p * m), (n, m)).copy_from(&s);
    }
    out
}

/// Jointly reconstructs the five pixels of a patch; returns one N-vector per
/// pixel in patch order.
pub fn reconstruct_spatial(patch: &SpatialPatch, pattern: &FlickerPattern, gammas: &[f64]) -> Result<Vec<Vec<f64>>> {
    patch.validate()?;
    check_solvable(pattern)?;
    let n = pattern.n_substeps();
    let mut c = Vec::with_capacity(PATCH_PIXELS * pattern.n_channels());
    for f in &patch.frames {
        c.extend(normalize_channels(&f.c_values, gammas)?);
    }
    let m = build_m_spatial(n, patch.w_t, patch.w_s, patch.coupling)?;
    let gain = gain_matrix(m.entries(), &block_code(pattern))?;
    let i = gain * DVector::from_vec(c);
    Ok(i.as_slice().chunks(n).map(<[f64]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{candidate, identity3};
    use approx::assert_relative_eq;

    fn frame(c: &[f64]) -> ChannelFrame {
        ChannelFrame::new(c.to_vec(), 0).unwrap()
    }

    #[test]
    fn temporal_matrix_entries() {
        let m = build_m_temporal(3).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[4.0, -2.0, 0.0, -2.0, 4.0, -2.0, 0.0, -2.0, 4.0]);
        assert_eq!(m.entries(), &want);
        let m2 = build_m_temporal(2).unwrap();
        assert_eq!(m2.entries(), &DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 4.0]));
        assert!(build_m_temporal(1).is_err());
    }

    #[test]
    fn temporal_eigenvalues_in_range() {
        let ev = build_m_temporal(6).unwrap().entries().clone().symmetric_eigenvalues();
        assert!(ev.iter().all(|&e| e > 0.0 && e < 8.0), "{ev}");
    }

    #[test]
    fn spatial_matrix_case_list() {
        let m = build_m_spatial(2, 1.0, 1.0, SpatialCoupling::Literal).unwrap();
        assert_eq!(m.dim(), 10);
        for i in 0..10usize {
            for j in 0..10usize {
                let d = i.abs_diff(j);
                let want = if d == 0 {
                    4.0
                } else if (d == 1 && i / 2 == j / 2) || d % 5 == 0 {
                    -2.0
                } else {
                    0.0
                };
                assert_eq!(m.get(i, j), want, "({i},{j})");
            }
        }
        assert!(build_m_spatial(3, 0.0, 1.0, SpatialCoupling::Literal).is_err());
    }

    #[test]
    fn spatial_without_ws_is_block_diagonal() {
        let n = 4;
        let m = build_m_spatial(n, 1.5, 0.0, SpatialCoupling::Literal).unwrap();
        for i in 0..5 * n {
            for j in 0..5 * n {
                if i / n != j / n {
                    assert_eq!(m.get(i, j), 0.0);
                }
            }
        }
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn identity_code_returns_channels() {
        let i = reconstruct(&frame(&[2.0, 5.0, 3.0]), &identity3(), &[1.0; 3]).unwrap();
        for (a, b) in i.iter().zip([2.0, 5.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn permutation_code_returns_permuted_channels() {
        // b lit in sub-step 2, g in 0, r in 1.
        let p = FlickerPattern::from_channels(&[&[0, 0, 1], &[1, 0, 0], &[0, 1, 0]]).unwrap();
        let i = reconstruct(&frame(&[2.0, 5.0, 3.0]), &p, &[1.0; 3]).unwrap();
        for (a, b) in i.iter().zip([5.0, 3.0, 2.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gammas_normalize_channels() {
        let i = reconstruct(&frame(&[1.0, 2.5, 3.0]), &identity3(), &[0.5, 0.5, 1.0]).unwrap();
        assert_relative_eq!(i[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(i[1], 5.0, epsilon = 1e-12);
        assert!(reconstruct(&frame(&[1.0, 2.0, 3.0]), &identity3(), &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn rank_deficient_pattern_rejected() {
        let p = FlickerPattern::from_channels(&[&[1, 0, 1, 0], &[1, 0, 1, 0], &[0, 1, 0, 1]]).unwrap();
        assert_eq!(Reconstructor::new(&p).unwrap_err(), TsrError::PatternNotFullRank);
    }

    #[test]
    fn zero_channels_give_zero() {
        let p = candidate(4, 1).unwrap();
        let i = reconstruct(&frame(&[0.0; 3]), &p, &[1.0; 3]).unwrap();
        assert!(i.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sequence_concatenates() {
        let cam = CameraConfig::new(10.0, 3).unwrap();
        let frames: Vec<_> = (0..4)
            .map(|k| ChannelFrame::new(vec![1.0, 1.0, 1.0], k).unwrap())
            .collect();
        let t = reconstruct_sequence(&frames, &identity3(), &[1.0; 3], &cam).unwrap();
        assert_eq!(t.len(), 12);
        assert!(t.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_relative_eq!(t.rate(), 30.0);

        let one = reconstruct_sequence(&frames[..1], &identity3(), &[1.0; 3], &cam).unwrap();
        assert_eq!(one.len(), 3);
        assert!(matches!(
            reconstruct_sequence(&[], &identity3(), &[1.0; 3], &cam),
            Err(TsrError::Empty(_))
        ));
    }

    #[test]
    fn sequence_errors_carry_frame_index() {
        let cam = CameraConfig::new(10.0, 3).unwrap();
        let frames = vec![
            ChannelFrame::new(vec![1.0, 1.0, 1.0], 7).unwrap(),
            ChannelFrame::new(vec![1.0, 1.0], 8).unwrap(),
        ];
        match reconstruct_sequence(&frames, &identity3(), &[1.0; 3], &cam) {
            Err(TsrError::Frame { index, .. }) => assert_eq!(index, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spatial_patch_shape_checked() {
        let frames = vec![frame(&[1.0, 2.0, 3.0]); 4];
        assert!(SpatialPatch::new(frames, 3.0, 1.0).is_err());
    }
}
