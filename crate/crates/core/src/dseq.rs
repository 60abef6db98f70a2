//! Weight sequences `{d_i}` and the weighted norms they induce.
//!
//! A `DSequence` is an explicit head followed by a geometric tail. It drives
//! the similarity transform `D B D^{-1}` and the norms
//!
//! ```text
//! ||z||_1D = sum_k d_k | sum_{i>=k} z_i |        (weighted tail-sum norm)
//! ||z||_1E = sum_k k |z_k|                        (expectation norm)
//! ```
//!
//! together with the conversion constants `W = inf_i d_i / i` and
//! `W* = inf_k (d_1 + ... + d_k)/k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-decreasing positive weights: an explicit head (starting with
/// `d_1 = 1`) continued by a geometric tail `d_i = ratio^(i-m) d_m`.
///
/// The theorems ask for an "increasing" sequence, but the worked sequence in
/// the source material is flat (= 1) over its whole head, so non-decreasing
/// is what is actually enforced. A `tail_ratio` of exactly 1 is accepted so
/// degenerate all-ones sequences can flow through the pipeline; the norm
/// constants are then unavailable (`W` would be 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DSequenceRepr", into = "DSequenceRepr")]
pub struct DSequence {
    head: Vec<f64>,
    tail_ratio: f64,
}

/// Serialized form; also the config-file schema for a d-sequence block.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DSequenceRepr {
    head: Vec<f64>,
    tail_ratio: f64,
}

impl TryFrom<DSequenceRepr> for DSequence {
    type Error = Error;
    fn try_from(r: DSequenceRepr) -> Result<Self> {
        DSequence::new(r.head, r.tail_ratio)
    }
}

impl From<DSequence> for DSequenceRepr {
    fn from(d: DSequence) -> Self {
        DSequenceRepr { head: d.head, tail_ratio: d.tail_ratio }
    }
}

/// `W`, `W*` and the indices where the infima are attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub w: f64,
    pub w_star: f64,
    pub w_index: usize,
    pub w_star_index: usize,
}

impl DSequence {
    pub fn new(head: Vec<f64>, tail_ratio: f64) -> Result<Self> {
        if head.is_empty() {
            return Err(Error::Config("d-sequence head must be non-empty".into()));
        }
        if (head[0] - 1.0).abs() > 1e-15 {
            return Err(Error::Config(format!("d_1 must be 1, got {}", head[0])));
        }
        if head.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("d-sequence values must be finite and positive".into()));
        }
        if head.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("d-sequence must be non-decreasing".into()));
        }
        if !tail_ratio.is_finite() || tail_ratio < 1.0 {
            return Err(Error::Config(format!("tail ratio must be >= 1, got {tail_ratio}")));
        }
        Ok(DSequence { head, tail_ratio })
    }

    /// Geometric sequence `d_i = ratio^(i-1)`.
    pub fn geometric(ratio: f64) -> Result<Self> {
        DSequence::new(vec![1.0], ratio)
    }

    /// Degenerate all-ones sequence (usable in the pipeline, but with no
    /// positive `W`).
    pub fn all_ones() -> Self {
        DSequence { head: vec![1.0], tail_ratio: 1.0 }
    }

    /// The sequence used in the worked `S = 100` example:
    /// `d_i = 1` for `i <= 100`, then factors 1.05, 1.1, 1.3, 1.6, 2, and a
    /// geometric tail of ratio 2.3 from `d_105` on.
    pub fn paper_s100() -> Self {
        let mut head = vec![1.0; 100];
        for f in [1.05, 1.1, 1.3, 1.6, 2.0] {
            head.push(head.last().unwrap() * f);
        }
        DSequence { head, tail_ratio: 2.3 }
    }

    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    /// `d_i` for `i >= 1`.
    pub fn d(&self, i: usize) -> f64 {
        debug_assert!(i >= 1, "d-sequence index starts at 1");
        let m = self.head.len();
        if i <= m {
            self.head[i - 1]
        } else {
            self.head[m - 1] * self.tail_ratio.powi((i - m) as i32)
        }
    }

    /// Checked variant of [`d`](Self::d).
    pub fn d_value(&self, i: usize) -> Result<f64> {
        if i < 1 {
            return Err(Error::Domain("d-sequence index starts at 1".into()));
        }
        Ok(self.d(i))
    }

    /// Index past which the finite scans below are provably sufficient:
    /// inside the geometric tail, `d_{i+1}/(i+1) >= d_i/i` as soon as
    /// `ratio >= (i+1)/i`, i.e. for `i >= 1/(ratio-1)`.
    fn scan_horizon(&self) -> usize {
        let crossover = if self.tail_ratio > 1.0 {
            (1.0 / (self.tail_ratio - 1.0)).ceil() as usize
        } else {
            0
        };
        self.head.len() + crossover + 50
    }

    /// Computes `W` and `W*` by a finite scan, with witnesses.
    ///
    /// Errors when the tail ratio is 1: the infimum `d_i / i` is then 0 and
    /// no finite witness exists.
    pub fn constants(&self) -> Result<NormConstants> {
        if self.tail_ratio <= 1.0 {
            return Err(Error::Config(
                "norm constants need tail_ratio > 1 (otherwise W = inf d_i/i = 0)".into(),
            ));
        }
        let horizon = self.scan_horizon();
        let (mut w, mut w_index) = (f64::INFINITY, 0);
        let (mut w_star, mut w_star_index) = (f64::INFINITY, 0);
        let mut prefix = 0.0;
        for i in 1..=horizon {
            let di = self.d(i);
            prefix += di;
            let ratio = di / i as f64;
            if ratio < w {
                w = ratio;
                w_index = i;
            }
            let avg = prefix / i as f64;
            if avg < w_star {
                w_star = avg;
                w_star_index = i;
            }
        }
        // the tail term at the horizon must already sit above the minimum,
        // otherwise the scan was not long enough
        debug_assert!(self.d(horizon) / horizon as f64 >= w);
        Ok(NormConstants { w, w_star, w_index, w_star_index })
    }
}

/// `||z||_1D` for a truncated vector `z` indexed by states `1..=N`
/// (`z[0]` is the probability of state 1). Tail sums are exact partial sums
/// of the truncated vector, accumulated from the right.
pub fn norm_1d(z: &[f64], d: &DSequence) -> f64 {
    let mut tail = 0.0;
    let mut acc = 0.0;
    for k in (1..=z.len()).rev() {
        tail += z[k - 1];
        if tail != 0.0 {
            acc += d.d(k) * tail.abs();
        }
    }
    acc
}

/// `||z||_1E = sum_k k |z_k|` with the same indexing convention.
pub fn norm_1e(z: &[f64]) -> f64 {
    z.iter().enumerate().map(|(idx, v)| (idx + 1) as f64 * v.abs()).sum()
}
