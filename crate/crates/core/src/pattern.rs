//! Binary flicker code matrices and the preset patterns used in the
//! simulations.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Result, TsrError};

/// Binary N×M code matrix: entry `(n, m)` is 1 when channel `m` is lit during
/// sub-step `n` of the exposure.
///
/// Construction only checks shape and binarity. Full column rank and the
/// absence of dark sub-steps are checked by [`FlickerPattern::validate`], by
/// the solver, and at config load time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlickerPattern {
    n: usize,
    m: usize,
    // row-major, n rows of m entries
    entries: Vec<u8>,
    channel_names: Vec<String>,
}

impl FlickerPattern {
    /// Builds a pattern from its rows (one row per sub-step).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(TsrError::Empty("flicker pattern"));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(invalid("flicker pattern rows have different lengths"));
        }
        let entries: Vec<u8> = rows.iter().flatten().copied().collect();
        Self::from_entries(n, m, entries, default_names(m))
    }

    /// Builds a pattern from per-channel code vectors, e.g. `[b, g, r]`.
    pub fn from_channels(channels: &[&[u8]]) -> Result<Self> {
        let m = channels.len();
        let n = channels.first().map_or(0, |c| c.len());
        if n == 0 || m == 0 {
            return Err(TsrError::Empty("flicker pattern"));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(invalid("channel code vectors have different lengths"));
        }
        let mut entries = vec![0u8; n * m];
        for (j, c) in channels.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                entries[i * m + j] = *v;
            }
        }
        Self::from_entries(n, m, entries, default_names(m))
    }

    fn from_entries(n: usize, m: usize, entries: Vec<u8>, channel_names: Vec<String>) -> Result<Self> {
        if let Some(v) = entries.iter().find(|v| **v > 1) {
            return Err(invalid(format!("flicker pattern entries must be 0 or 1, found {v}")));
        }
        Ok(Self {
            n,
            m,
            entries,
            channel_names,
        })
    }

    /// Decodes the bit layout used by the exhaustive enumerator: bit
    /// `n_idx * m + m_idx` of `bits` is entry `(n_idx, m_idx)`.
    pub(crate) fn from_bits(n: usize, m: usize, bits: u64) -> Self {
        let entries = (0..n * m).map(|b| ((bits >> b) & 1) as u8).collect();
        Self {
            n,
            m,
            entries,
            channel_names: default_names(m),
        }
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m {
            return Err(TsrError::LengthMismatch {
                left: names.len(),
                right: self.m,
            });
        }
        self.channel_names = names;
        Ok(self)
    }

    /// Up-sample factor N (number of rows).
    pub fn n_substeps(&self) -> usize {
        self.n
    }

    /// Number of channels M (number of columns).
    pub fn n_channels(&self) -> usize {
        self.m
    }

    pub fn get(&self, n: usize, m: usize) -> u8 {
        self.entries[n * self.m + m]
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.entries[n * self.m..(n + 1) * self.m]
    }

    pub fn channel(&self, m: usize) -> Vec<u8> {
        (0..self.n).map(|n| self.get(n, m)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, j| self.get(i, j) as f64)
    }

    pub fn rank(&self) -> usize {
        binary_rank(self.n, self.m, &self.entries)
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.m
    }

    pub fn has_zero_row(&self) -> bool {
        (0..self.n).any(|n| self.row(n).iter().all(|v| *v == 0))
    }

    /// Mean number of lit channels per sub-step.
    pub fn mean_lit_channels(&self) -> f64 {
        self.entries.iter().map(|v| *v as f64).sum::<f64>() / self.n as f64
    }

    /// Checks every invariant a reconstruction pattern must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.m > self.n {
            return Err(invalid(format!(
                "pattern has more channels ({}) than sub-steps ({})",
                self.m, self.n
            )));
        }
        if !self.is_full_rank() {
            return Err(TsrError::PatternNotFullRank);
        }
        if self.has_zero_row() {
            return Err(invalid("pattern has a sub-step with no lit channel"));
        }
        Ok(())
    }
}

impl fmt::Display for FlickerPattern {
    /// Channel-wise notation, e.g. `b=(1,0,0) g=(0,1,0) r=(0,0,1)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in 0..self.m {
            if m > 0 {
                write!(f, " ")?;
            }
            let code: Vec<String> = self.channel(m).iter().map(u8::to_string).collect();
            write!(f, "{}=({})", self.channel_names[m], code.join(","))?;
        }
        Ok(())
    }
}

fn default_names(m: usize) -> Vec<String> {
    if m == 3 {
        ["b", "g", "r"].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=m).map(|i| format!("c{i}")).collect()
    }
}

/// Rank over the reals of a small 0/1 matrix by Gaussian elimination.
fn binary_rank(n: usize, m: usize, entries: &[u8]) -> usize {
    let mut a: Vec<f64> = entries.iter().map(|v| *v as f64).collect();
    let mut rank = 0;
    for col in 0..m {
        if rank == n {
            break;
        }
        let pivot = (rank..n).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()));
        let Some(p) = pivot else { break };
        if a[p * m + col].abs() < 1e-9 {
            continue;
        }
        for c in 0..m {
            a.swap(rank * m + c, p * m + c);
        }
        for i in rank + 1..n {
            let factor = a[i * m + col] / a[rank * m + col];
            if factor != 0.0 {
                for c in col..m {
                    a[i * m + c] -= factor * a[rank * m + c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A pattern with the id and label it is known by in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedPattern {
    pub id: u32,
    pub label: String,
    pub pattern: FlickerPattern,
}

// Candidate patterns (b, g, r) for N = 4, 5, 6.
const CANDIDATES_N4: [[&[u8]; 3]; 5] = [
    [&[1, 0, 0, 1], &[0, 1, 0, 0], &[0, 0, 1, 0]],
    [&[1, 0, 0, 1], &[1, 0, 1, 0], &[0, 1, 0, 1]],
    [&[1, 0, 0, 0], &[0, 1, 1, 0], &[0, 0, 0, 1]],
    [&[1, 1, 0, 0], &[0, 1, 1, 0], &[0, 0, 1, 1]],
    [&[0, 0, 1, 0], &[0, 1, 0, 0], &[1, 1, 1, 1]],
];

const CANDIDATES_N5: [[&[u8]; 3]; 5] = [
    [&[1, 0, 0, 0, 1], &[0, 1, 1, 0, 0], &[0, 0, 1, 1, 0]],
    [&[1, 0, 0, 1, 0], &[1, 0, 1, 0, 1], &[0, 1, 0, 0, 1]],
    [&[1, 0, 0, 1, 0], &[0, 0, 1, 0, 0], &[0, 1, 0, 0, 1]],
    [&[0, 1, 0, 0, 0], &[1, 0, 1, 0, 1], &[0, 0, 0, 1, 0]],
    [&[1, 1, 0, 0, 0], &[0, 1, 1, 1, 0], &[0, 0, 0, 1, 1]],
];

const CANDIDATES_N6: [[&[u8]; 3]; 5] = [
    [&[1, 0, 0, 0, 1, 0], &[0, 1, 0, 0, 0, 1], &[0, 0, 1, 1, 0, 0]],
    [&[1, 1, 0, 0, 0, 0], &[0, 0, 1, 1, 0, 0], &[0, 0, 0, 0, 1, 1]],
    [&[1, 0, 0, 1, 0, 0], &[0, 1, 1, 1, 1, 0], &[0, 0, 1, 0, 0, 1]],
    [&[1, 0, 1, 0, 1, 0], &[0, 1, 0, 1, 0, 1], &[1, 1, 1, 1, 1, 1]],
    [&[0, 1, 0, 0, 0, 0], &[1, 0, 1, 1, 0, 1], &[0, 0, 0, 0, 1, 0]],
];

/// Candidate pattern `id` (0..=4) for `n` in 4..=6.
pub fn candidate(n: usize, id: u32) -> Result<FlickerPattern> {
    let table: &[[&[u8]; 3]; 5] = match n {
        4 => &CANDIDATES_N4,
        5 => &CANDIDATES_N5,
        6 => &CANDIDATES_N6,
        _ => return Err(invalid(format!("no candidate patterns for N={n} (have 4, 5, 6)"))),
    };
    let chans = table
        .get(id as usize)
        .ok_or_else(|| invalid(format!("candidate id {id} out of range 0..=4")))?;
    FlickerPattern::from_channels(chans)
}

/// All five candidates for `n`, labelled `n{n}-p{id}`.
pub fn candidates(n: usize) -> Result<Vec<NamedPattern>> {
    (0..5)
        .map(|id| {
            Ok(NamedPattern {
                id,
                label: format!("n{n}-p{id}"),
                pattern: candidate(n, id)?,
            })
        })
        .collect()
}

/// `b=(1,0,0), g=(0,1,0), r=(0,0,1)`: each channel alone in its own sub-step.
pub fn identity3() -> FlickerPattern {
    FlickerPattern::from_channels(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]).expect("static pattern")
}

/// Pattern chosen per N for the error-vs-frequency comparison and scanning.
///
/// N = 3 uses the identity code; N = 4, 5, 6 use candidates 1, 3 and 4.
pub fn best_for(n: usize) -> Result<NamedPattern> {
    let (id, pattern) = match n {
        3 => (0, identity3()),
        4 => (1, candidate(4, 1)?),
        5 => (3, candidate(5, 3)?),
        6 => (4, candidate(6, 4)?),
        _ => return Err(invalid(format!("no preferred pattern for N={n} (have 3..=6)"))),
    };
    let label = if n == 3 {
        "n3-identity".to_string()
    } else {
        format!("n{n}-p{id}")
    };
    Ok(NamedPattern { id, label, pattern })
}

/// Patterns used for the example reconstructions of the four test signals.
pub fn demo_for(n: usize) -> Result<FlickerPattern> {
    let chans: [&[u8]; 3] = match n {
        3 => return Ok(identity3()),
        4 => [&[0, 1, 0, 0], &[1, 0, 0, 1], &[0, 0, 1, 0]],
        5 => [&[0, 1, 0, 0, 0], &[1, 0, 1, 0, 1], &[0, 0, 0, 1, 0]],
        6 => [&[1, 0, 0, 0, 0, 1], &[0, 1, 1, 0, 0, 0], &[0, 0, 0, 1, 1, 0]],
        _ => return Err(invalid(format!("no demo pattern for N={n} (have 3..=6)"))),
    };
    FlickerPattern::from_channels(&chans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channels_are_columns() {
        let p = FlickerPattern::from_channels(&[&[0, 1, 0, 0], &[1, 0, 0, 1], &[0, 0, 1, 0]]).unwrap();
        assert_eq!(p.n_substeps(), 4);
        assert_eq!(p.n_channels(), 3);
        assert_eq!(p.row(0), &[0, 1, 0]);
        assert_eq!(p.row(3), &[0, 1, 0]);
        assert_eq!(p.channel(0), vec![0, 1, 0, 0]);
        assert_eq!(p.to_string(), "b=(0,1,0,0) g=(1,0,0,1) r=(0,0,1,0)");
    }

    #[test]
    fn rejects_non_binary() {
        assert!(FlickerPattern::from_rows(&[vec![0, 2], vec![1, 0]]).is_err());
        assert!(FlickerPattern::from_rows(&[vec![0, 1], vec![1]]).is_err());
        assert!(FlickerPattern::from_rows(&[]).is_err());
    }

    #[test]
    fn rank_and_rows() {
        let dup = FlickerPattern::from_channels(&[&[1, 0, 1], &[1, 0, 1], &[0, 1, 0]]).unwrap();
        assert_eq!(dup.rank(), 2);
        assert_eq!(dup.validate(), Err(TsrError::PatternNotFullRank));

        let dark = FlickerPattern::from_channels(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 0]]).unwrap();
        assert!(dark.is_full_rank());
        assert!(dark.has_zero_row());
        assert!(dark.validate().is_err());

        assert_eq!(identity3().validate(), Ok(()));
    }

    #[test]
    fn presets_are_valid_except_n6_p3() {
        for n in 4..=6 {
            for np in candidates(n).unwrap() {
                assert_eq!(np.pattern.n_substeps(), n);
                if np.label == "n6-p3" {
                    // r = b + g, so this candidate cannot be inverted.
                    assert_eq!(np.pattern.validate(), Err(TsrError::PatternNotFullRank));
                    continue;
                }
                np.pattern.validate().unwrap_or_else(|e| panic!("{}: {e}", np.label));
            }
        }
        for n in 3..=6 {
            best_for(n).unwrap().pattern.validate().unwrap();
            demo_for(n).unwrap().validate().unwrap();
        }
        assert!(candidate(4, 5).is_err());
        assert!(candidate(7, 0).is_err());
    }

    #[test]
    fn mean_lit() {
        assert_eq!(identity3().mean_lit_channels(), 1.0);
        assert_eq!(candidate(6, 3).unwrap().mean_lit_channels(), 2.0);
    }
}
